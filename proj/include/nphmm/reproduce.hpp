#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nphmm/core.hpp"
#include "nphmm/estimation.hpp"
#include "nphmm/scenarios.hpp"

namespace nphmm {

/// Mean pointwise relative errors (x100) of each estimator against the truth.
struct RelativeErrorTable {
  std::string scenario;
  std::size_t n = 0;
  int replications = 0;
  std::vector<std::string> estimators;
  std::vector<std::vector<double>> points;  ///< per state
  /// errors[e][k][i]: estimator e, state k, point i
  std::vector<std::vector<std::vector<double>>> errors;
  /// valid[e]: replications in which estimator e produced a fit
  std::vector<int> valid;

  double at(const std::string& estimator, int state, double y) const;
  /// Rows `state,label,v1,...` with a y row per state followed by one row
  /// per estimator; the last column counts replications that contributed.
  std::string to_csv() const;
};

/// Per-state mean absolute transition errors K^{-1} sum_k |a^_jk - a_jk| x100.
struct TransitionErrorTable {
  std::vector<std::string> estimators;
  std::vector<std::vector<double>> errors;  ///< errors[e][j]

  double at(const std::string& estimator, int state) const;
  std::string to_csv() const;
};

struct ReproduceResult {
  RelativeErrorTable relative;
  TransitionErrorTable transition;
};

/// Permutation p minimizing the L1 distance between the fitted densities
/// and the truth on a grid: fitted state p[k] corresponds to true state k.
std::vector<int> align_to_truth(const HmmModel& fitted, const HmmModel& truth);

/// Runs the scenario's estimators on `replications` series of length n.
ReproduceResult reproduce(const ScenarioSpec& spec, std::size_t n, int replications, std::uint64_t seed,
                          const FitConfig& config, int jobs = 0);

}  // namespace nphmm
