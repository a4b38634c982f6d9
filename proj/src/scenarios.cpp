#include "nphmm/scenarios.hpp"

namespace nphmm {

namespace {

TransitionMatrix scenario_gamma() {
  Matrix g(3, 3);
  g << 0.5, 0.25, 0.25,
       0.4, 0.4, 0.2,
       0.2, 0.2, 0.6;
  return TransitionMatrix(g);
}

}  // namespace

ScenarioSpec scenario_a(int quadrature_nodes) {
  std::vector<StateDensity> densities;
  densities.emplace_back(FiniteMixtureDensity({0.33, 0.33, 0.34}, {{-10.0, 2.0}, {-7.5, 2.0}, {-4.0, 2.0}}));
  densities.emplace_back(TruthDensity(
      ContinuousMixtureTruth(BetaLaw{2.0, 2.0, 0.0, 1.0}, UniformLaw{1.0, 4.0}, quadrature_nodes)));
  densities.emplace_back(TruthDensity(
      ContinuousMixtureTruth(BetaLaw{2.0, 11.0, 5.0, 33.0}, UniformLaw{1.4, 1.6}, quadrature_nodes)));
  return ScenarioSpec{
      "scenario-a",
      HmmModel::stationary(scenario_gamma(), std::move(densities)),
      1000,
      50,
      {{-15.45, -13.77, -11.22, -9.05, -7.26, -5.3, -2.86, -0.21, 1.56},
       {-9.36, -6.36, -2.71, -0.68, 0.5, 1.67, 3.71, 7.36, 10.36},
       {2.27, 3.74, 6.0, 7.99, 9.66, 11.61, 14.93, 20.17, 22.0}},
      {"nonpar", "2-comp", "Gauss"}};
}

ScenarioSpec scenario_b(int quadrature_nodes) {
  const TruthDensity f1(
      ContinuousMixtureTruth(BetaLaw{2.0, 11.0, -3.0, 20.0}, UniformLaw{0.9, 1.5}, quadrature_nodes));
  const TruthDensity f2(
      ContinuousMixtureTruth(BetaLaw{2.0, 11.0, -3.0, 20.0}, UniformLaw{4.0, 6.0}, quadrature_nodes));
  std::vector<StateDensity> densities{f1, f2, f1.blend(f2, 0.4)};
  return ScenarioSpec{
      "scenario-b",
      HmmModel::stationary(scenario_gamma(), std::move(densities)),
      1000,
      50,
      {{-4.31, -2.62, -1.25, -0.17, 1.07, 3.12, 6.35},
       {-11.94, -6.67, -2.69, 0.07, 2.87, 7.05, 13.66},
       {-11.01, -5.06, -1.8, -0.08, 1.89, 5.57, 12.21}},
      {"nonpar", "Gauss"}};
}

ScenarioSpec scenario_by_name(const std::string& name) {
  if (name == "scenario-a") return scenario_a();
  if (name == "scenario-b") return scenario_b();
  throw ValidationError("unknown scenario '" + name + "' (expected scenario-a or scenario-b)");
}

}  // namespace nphmm
