#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nphmm/core.hpp"

namespace nphmm {

/// A simulation truth together with the points used for relative-error tables.
struct ScenarioSpec {
  std::string name;
  HmmModel truth;
  std::size_t n = 1000;
  int replications = 50;
  /// Per-state y points of the relative-error table.
  std::vector<std::vector<double>> eval_grid;
  /// Row labels of the relative-error table, in output order.
  std::vector<std::string> estimators;
};

inline constexpr int kTruthQuadratureNodes = 96;

/// Three states: a three-component Gaussian mixture and two Beta/Uniform
/// continuous mixtures, stationary start.
ScenarioSpec scenario_a(int quadrature_nodes = kTruthQuadratureNodes);

/// Three states differing in scale; state 3 is 0.4 f_1 + 0.6 f_2.
ScenarioSpec scenario_b(int quadrature_nodes = kTruthQuadratureNodes);

/// "scenario-a" or "scenario-b"; anything else raises ValidationError.
ScenarioSpec scenario_by_name(const std::string& name);

}  // namespace nphmm
