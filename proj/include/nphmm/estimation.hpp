#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nphmm/core.hpp"

namespace nphmm {

/// Raised when every EM run of a fit ends with a -inf likelihood.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitConfig {
  int max_iter = 500;
  double rel_tol = 1e-8;
  int restarts = 5;
  /// Minimum log-likelihood gain (nats) for accepting one more component per state.
  double component_gain_tol = 2.0;
  int max_components = 8;
  double sd_floor = kDefaultSdFloor;
  /// Parameter box; derived from the data when absent.
  std::optional<ThetaBox> theta_box;
  std::uint64_t seed = 1;

  void validate() const;
  ThetaBox box_for(std::span<const double> obs) const;
};

struct FitResult {
  HmmModel model;
  double loglik = 0.0;
  std::vector<double> loglik_trace;
  /// Accepted per-state support sizes, one entry per accepted stage.
  std::vector<std::vector<int>> m_schedule;
  /// Relabeling applied at the end: new state i was fitted state permutation[i].
  std::vector<int> permutation;
  bool converged = false;
  int iterations = 0;
  std::uint64_t series_hash = 0;
};

inline constexpr double kWeightFloor = 1e-8;

struct EmUpdate {
  HmmModel model;
  /// Log-likelihood of the input model (the E-step by-product).
  double loglik;
  /// Some component had (near) zero responsibility mass and sits on the floor.
  bool weight_floored = false;
};

/// One EM update on the augmented (state, component) chain. The initial
/// distribution is held fixed; sds and means are clamped to `box`.
EmUpdate em_step(const HmmModel& model, std::span<const double> obs, const ThetaBox& box);
/// Same, with the box derived from the series as configured.
EmUpdate em_step(const HmmModel& model, const ObservationSeries& series, const FitConfig& config = {});

/// Quantile-slice initialization. State k covers quantile levels
/// [k/K, (k+1)/K]; its components sit at evenly spaced levels inside the
/// slice, shifted by up to +-jitter/2 of a component's share. All sds start at
/// the sample sd, Gamma has 0.5 on the diagonal and the rest spread evenly.
HmmModel initialize(const ObservationSeries& series, int K, std::span<const int> m_per_state,
                    std::uint64_t seed, double jitter = 0.0);

/// Sorts states by ascending mixture mean (ties within 1e-9: ascending
/// mixture sd, then original index).
std::pair<HmmModel, std::vector<int>> canonical_relabel(const HmmModel& model);

/// Runs EM from `start` until the relative trace change drops below rel_tol
/// or max_iter steps. No relabeling.
FitResult em_run(std::span<const double> obs, const HmmModel& start, const ThetaBox& box,
                 const FitConfig& config);

/// Best of config.restarts EM runs (restart 0 unjittered), canonically relabeled.
FitResult em_fit(const ObservationSeries& series, int K, std::span<const int> m_per_state,
                 const FitConfig& config);

/// Splits the heaviest component of every state: the copy moves its mean
/// by +-offset_sd * sd and the weight is halved across the pair.
HmmModel split_heaviest(const HmmModel& model, double offset_sd = 0.5);

/// Adaptive NPMLE: starting from m = 1 (or `warm_start`), grows all states by
/// one component at a time while the gain exceeds component_gain_tol.
FitResult npmle_fit(const ObservationSeries& series, int K, const FitConfig& config,
                    const FitResult* warm_start = nullptr);

}  // namespace nphmm
