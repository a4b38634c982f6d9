#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "nphmm/reproduce.hpp"

using namespace nphmm;

namespace {

ScenarioSpec gaussian_spec() {
  Matrix g(2, 2);
  g << 0.9, 0.1, 0.15, 0.85;
  return ScenarioSpec{"gaussian",
                      HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(-2.0, 1.0),
                                                                 FiniteMixtureDensity::gaussian(3.0, 1.0)}),
                      2000,
                      3,
                      {{-3.0, -2.0, -1.0}, {2.0, 3.0, 4.0}},
                      {"nonpar", "Gauss"}};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

FitConfig quick_config() {
  FitConfig c;
  c.restarts = 2;
  return c;
}

}  // namespace

TEST(Scenarios, TableShapes) {
  const ScenarioSpec a = scenario_a(32);
  ASSERT_EQ(a.eval_grid.size(), 3u);
  for (const auto& row : a.eval_grid) EXPECT_EQ(row.size(), 9u);
  EXPECT_EQ(a.estimators, (std::vector<std::string>{"nonpar", "2-comp", "Gauss"}));
  const ScenarioSpec b = scenario_b(32);
  ASSERT_EQ(b.eval_grid.size(), 3u);
  for (const auto& row : b.eval_grid) EXPECT_EQ(row.size(), 7u);
  EXPECT_EQ(b.estimators, (std::vector<std::string>{"nonpar", "Gauss"}));
  EXPECT_THROW(scenario_by_name("scenario-c"), ValidationError);
}

TEST(Alignment, RecoversPermutation) {
  const HmmModel truth = scenario_a(32).truth;
  const std::vector<int> perm{2, 0, 1};
  const HmmModel fitted = truth.permuted(perm);
  const std::vector<int> p = align_to_truth(fitted, truth);
  const HmmModel back = fitted.permuted(p);
  for (int k = 0; k < 3; ++k)
    for (double y : {-8.0, 0.0, 9.0}) EXPECT_NEAR(pdf(back.density(k), y), pdf(truth.density(k), y), 1e-14);
  EXPECT_LT((back.gamma().entries() - truth.gamma().entries()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Reproduce, ShapesAndCsv) {
  const ScenarioSpec spec = scenario_a(32);
  const ReproduceResult r = reproduce(spec, 300, 2, 5, quick_config(), 1);
  ASSERT_EQ(r.relative.errors.size(), 3u);
  for (const auto& e : r.relative.errors) {
    ASSERT_EQ(e.size(), 3u);
    for (const auto& row : e) EXPECT_EQ(row.size(), 9u);
  }
  for (int v : r.relative.valid) EXPECT_EQ(v, 2);
  // y row plus one row per estimator, for each state.
  EXPECT_EQ(count_lines(r.relative.to_csv()), 1u + 3u * 4u);
  EXPECT_EQ(count_lines(r.transition.to_csv()), 1u + 3u);
  EXPECT_EQ(r.relative.to_csv().substr(0, r.relative.to_csv().find('\n')),
            "state,label,v1,v2,v3,v4,v5,v6,v7,v8,v9,valid_reps");
  EXPECT_EQ(r.transition.to_csv().substr(0, r.transition.to_csv().find('\n')), "state,nonpar,2-comp,Gauss");
  EXPECT_THROW(r.relative.at("nonpar", 0, 123.0), ValidationError);
  EXPECT_THROW(r.transition.at("kernel", 0), ValidationError);
}

TEST(Reproduce, ScenarioBShape) {
  const ReproduceResult r = reproduce(scenario_b(32), 300, 1, 6, quick_config(), 1);
  EXPECT_EQ(r.relative.errors.size(), 2u);
  EXPECT_EQ(r.transition.errors.size(), 2u);
  EXPECT_EQ(r.transition.errors[0].size(), 3u);
  EXPECT_EQ(count_lines(r.relative.to_csv()), 1u + 3u * 3u);
}

TEST(Reproduce, GaussianTruthGivesSmallGaussErrors) {
  const ScenarioSpec spec = gaussian_spec();
  const ReproduceResult r = reproduce(spec, spec.n, spec.replications, 7, quick_config(), 1);
  for (int k = 0; k < 2; ++k)
    for (double y : spec.eval_grid[static_cast<std::size_t>(k)]) EXPECT_LT(r.relative.at("Gauss", k, y), 10.0);
  for (int j = 0; j < 2; ++j) EXPECT_LT(r.transition.at("Gauss", j), 3.0);
}

TEST(Reproduce, Deterministic) {
  const ScenarioSpec spec = gaussian_spec();
  const ReproduceResult a = reproduce(spec, 400, 2, 8, quick_config(), 1);
  const ReproduceResult b = reproduce(spec, 400, 2, 8, quick_config(), 1);
  EXPECT_EQ(a.relative.to_csv(), b.relative.to_csv());
  EXPECT_EQ(a.transition.to_csv(), b.transition.to_csv());
}

TEST(Reproduce, Guards) {
  EXPECT_THROW(reproduce(gaussian_spec(), 400, 0, 1, quick_config()), ValidationError);
  EXPECT_THROW(reproduce(gaussian_spec(), 1, 1, 1, quick_config()), ValidationError);
}
