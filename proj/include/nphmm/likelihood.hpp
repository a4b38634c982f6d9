#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "nphmm/core.hpp"

namespace nphmm {

/// Log-likelihood with a -inf sentinel: when no state path has positive
/// density, `value` is -inf and `zero_index` names the first time step
/// (0-based) at which the forward mass vanished.
struct LogLikelihood {
  double value = -std::numeric_limits<double>::infinity();
  std::optional<std::size_t> zero_index;

  bool finite() const { return !zero_index.has_value(); }
};

/// Emission densities f_k(y_t) stored as scaled(t, k) * exp(log_scale(t)),
/// with each row's maximum scaled to one so distant observations do not
/// underflow.
struct EmissionTable {
  Matrix scaled;
  Vector log_scale;
};

EmissionTable emission_table(const HmmModel& model, std::span<const double> obs);

/// Smoothed state marginals and pairwise transition marginals.
struct Posteriors {
  Matrix state_probs;               ///< n x K, rows sum to one
  std::vector<Matrix> pair_probs;   ///< n-1 slices, K x K, each sums to one
  LogLikelihood loglik;
};

/// Sufficient statistics of one E-step without storing per-step pair
/// marginals.
struct SmoothedStatistics {
  Matrix state_probs;        ///< n x K
  Matrix transition_counts;  ///< sum over t of pair marginals, K x K
  LogLikelihood loglik;
};

/// Scaled forward recursion; sum of log normalizers.
LogLikelihood log_likelihood(const HmmModel& model, std::span<const double> obs);
LogLikelihood log_likelihood(const HmmModel& model, const ObservationSeries& series);

/// Forward recursion over a precomputed emission table.
LogLikelihood forward_log_likelihood(const Vector& initial, const Matrix& gamma,
                                     const EmissionTable& emissions);

inline constexpr double kBruteForceMaxPaths = 1e7;

/// Explicit log-sum-exp over all K^n state paths. Test oracle only; refuses
/// with GuardError when K^n exceeds 1e7.
double brute_force_log_density(const HmmModel& model, std::span<const double> obs);

Posteriors forward_backward(const HmmModel& model, const ObservationSeries& series);

SmoothedStatistics smoothed_statistics(const Vector& initial, const Matrix& gamma,
                                       const EmissionTable& emissions);

/// n^{-1} { L_n(model0) - L_n(model) } on one series of length n simulated
/// from model0. Returns +inf when model assigns the series zero density.
double kl_divergence_estimate(const HmmModel& model0, const HmmModel& model, std::size_t n,
                              std::uint64_t seed);

}  // namespace nphmm
