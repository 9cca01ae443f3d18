#pragma once

#include "oracles.hpp"

#include <mmv/chains.hpp>
#include <mmv/model.hpp>
#include <mmv/random.hpp>
#include <mmv/synth.hpp>

namespace fixture {

/// Gaussian-bump operator: sensors and sources evenly spaced on [0, 1],
/// H(m, i) = exp(-(s_m - x_i)^2 / (2 width^2)) + jitter * N(0, 1). Nearby
/// sources have strongly correlated columns.
Eigen::MatrixXd smooth_operator(mmv::Index M, mmv::Index N, double width, double jitter, mmv::RngStream& rng);

/// Random state consistent with (fm, y): random support, amplitudes, scales.
mmv::LatentState random_state(const mmv::ForwardModel& fm, const mmv::MeasurementSet& y, mmv::RngStream& rng,
                              double p_active = 0.5);

oracle::TinyProblem to_tiny(const mmv::ForwardModel& fm, const mmv::MeasurementSet& y, const mmv::LatentState& s);

/// Problem on a fixed operator with the given support and unit-energy
/// damped sinusoids, noise at `snr_db`.
mmv::Problem problem_with_support(const Eigen::MatrixXd& H, const std::vector<mmv::Index>& support, mmv::Index T,
                                  double snr_db, std::uint64_t seed);

/// Pearson correlation of two vectors.
double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace fixture
