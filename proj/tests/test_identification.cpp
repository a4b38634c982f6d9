#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "nphmm/identification.hpp"
#include "nphmm/scenarios.hpp"
#include "oracles.hpp"

using namespace nphmm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix scenario_gamma() {
  Matrix g(3, 3);
  g << 0.5, 0.25, 0.25, 0.4, 0.4, 0.2, 0.2, 0.2, 0.6;
  return g;
}

HmmModel toy_two_state() {
  Matrix g(2, 2);
  g << 0.8, 0.2, 0.3, 0.7;
  return HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(-1, 1),
                                                    FiniteMixtureDensity::gaussian(1.5, 1.2)});
}

EvaluationGrid random_grid(int K, int T, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-2.0, 6.0);
  auto block = [&] {
    Block b(static_cast<std::size_t>(T));
    for (auto& v : b) v = u(gen);
    return b;
  };
  EvaluationGrid g;
  g.T = T;
  for (int k = 0; k < K; ++k) {
    g.block_points_left.push_back(block());
    g.block_points_right.push_back(block());
  }
  for (int j = 0; j < K * (K - 1) / 2 + 1; ++j) g.singleton_points.push_back(u(gen));
  g.extra_left = block();
  g.extra_right = block();
  return g;
}

// pr(X_0 = k, W) / pi_k by enumeration with x_0 fixed, forward blocks.
double forward_oracle(const HmmModel& m, const std::vector<double>& z, int k) {
  double total = 0.0;
  oracle::for_each_path(m.states(), z.size(), [&](const std::vector<int>& path) {
    double w = m.gamma()(k, path[0]) * cdf(m.density(path[0]), z[0]);
    for (std::size_t t = 1; t < z.size(); ++t) w *= m.gamma()(path[t - 1], path[t]) * cdf(m.density(path[t]), z[t]);
    total += w;
  });
  return total;
}

// pr(Y_1 <= z_1, ..., Y_T <= z_T | X_{T+1} = k) under stationarity.
double backward_oracle(const HmmModel& m, const std::vector<double>& z, int k) {
  const auto pi = oracle::stationary(m.gamma());
  double total = 0.0;
  oracle::for_each_path(m.states(), z.size(), [&](const std::vector<int>& path) {
    double w = oracle::path_weight(m, pi, path);
    for (std::size_t t = 0; t < z.size(); ++t) w *= cdf(m.density(path[t]), z[t]);
    total += w * m.gamma()(path.back(), k);
  });
  return total / pi[static_cast<std::size_t>(k)];
}

}  // namespace

TEST(KruskalRank, Identity) { EXPECT_EQ(kruskal_rank(Matrix::Identity(3, 3)), 3); }

TEST(KruskalRank, DuplicatedRow) {
  Matrix m(3, 2);
  m << 1, 0, 1, 0, 0, 1;
  EXPECT_EQ(kruskal_rank(m), 1);
}

TEST(KruskalRank, ExhaustiveRationalOracle) {
  std::mt19937_64 gen(21);
  std::uniform_int_distribution<int> entry(-2, 2);
  std::uniform_int_distribution<int> coin(0, 3);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::vector<long long>> a(4, std::vector<long long>(6));
    for (auto& row : a)
      for (auto& v : row) v = entry(gen);
    // Plant dependencies in some cases so every Kruskal rank value occurs.
    if (coin(gen) == 0)
      for (int c = 0; c < 6; ++c) a[3][static_cast<std::size_t>(c)] = a[0][static_cast<std::size_t>(c)] + a[1][static_cast<std::size_t>(c)];
    if (coin(gen) == 0) a[2] = a[1];
    if (coin(gen) == 0) std::fill(a[0].begin(), a[0].end(), 0);
    Matrix m(4, 6);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j) m(i, j) = static_cast<double>(a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    EXPECT_EQ(kruskal_rank(m), oracle::exact_kruskal_rank(a)) << "case " << rep;
  }
}

TEST(TimeReversal, SymmetricUniform) {
  Matrix g(3, 3);
  g << 0.5, 0.3, 0.2, 0.3, 0.4, 0.3, 0.2, 0.3, 0.5;
  EXPECT_LT((time_reversal(TransitionMatrix(g)).entries() - g).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TimeReversal, ReversibleTwoState) {
  Matrix g(2, 2);
  g << 0.9, 0.1, 0.2, 0.8;
  EXPECT_LT((time_reversal(TransitionMatrix(g)).entries() - g).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TimeReversal, CycleIsReversed) {
  Matrix g(3, 3);
  g << 0.1, 0.9, 0.0, 0.0, 0.1, 0.9, 0.9, 0.0, 0.1;
  EXPECT_LT((time_reversal(TransitionMatrix(g)).entries() - g.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TimeReversal, PreservesStationaryLaw) {
  std::mt19937_64 gen(22);
  for (int rep = 0; rep < 50; ++rep) {
    const HmmModel m = oracle::random_gaussian_model(2 + rep % 4, gen);
    const Vector pi = stationary_distribution(m.gamma()).entries();
    const Matrix rev = time_reversal(m.gamma()).entries();
    EXPECT_LT((pi.transpose() * rev - pi.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BlockCdf, SingleStepFormula) {
  const HmmModel m = scenario_a().truth;
  const std::vector<double> z{1.7};
  for (int k = 0; k < 3; ++k) {
    double ref = 0.0;
    for (int j = 0; j < 3; ++j) ref += m.gamma()(k, j) * cdf(m.density(j), 1.7);
    EXPECT_NEAR(conditional_block_cdf(m, Direction::forward, z, k), ref, 1e-14);
  }
}

TEST(BlockCdf, InfiniteBlockHasFullMass) {
  const HmmModel m = toy_two_state();
  const std::vector<double> z{kInf, kInf, kInf};
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(conditional_block_cdf(m, Direction::forward, z, k), 1.0, 1e-14);
    EXPECT_NEAR(conditional_block_cdf(m, Direction::backward, z, k), 1.0, 1e-14);
  }
}

TEST(BlockCdf, JointLawOracle) {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(-2.0, 5.0);
  for (int rep = 0; rep < 10; ++rep) {
    const HmmModel m = oracle::random_gaussian_model(2, gen);
    const std::vector<double> z{u(gen), u(gen)};
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(conditional_block_cdf(m, Direction::forward, z, k), forward_oracle(m, z, k), 1e-13);
      EXPECT_NEAR(conditional_block_cdf(m, Direction::backward, z, k), backward_oracle(m, z, k), 1e-12);
    }
  }
}

TEST(BlockCdf, Guard) {
  const HmmModel m = toy_two_state();
  const std::vector<double> z(7, 0.0);
  EXPECT_THROW(conditional_block_cdf(m, Direction::forward, z, 0), GuardError);
}

TEST(JointCdf, MatchesEnumeration) {
  std::mt19937_64 gen(24);
  const HmmModel m = oracle::random_gaussian_model(3, gen, false);
  const std::vector<double> b{0.5, 3.0, -0.2, 4.1};
  EXPECT_NEAR(joint_cdf(m, b), oracle::joint_cdf(m, oracle::initial_of(m), b), 1e-14);
}

TEST(GridSearch, ScenarioALattice) {
  const HmmModel m = scenario_a().truth;
  std::vector<double> pool;
  for (int v = -20; v <= 25; ++v) pool.push_back(v);
  const EvaluationGrid grid = find_full_rank_grid(m, 2, pool);
  EXPECT_NO_THROW(grid.validate(3));
  EXPECT_GT(grid_quality(m, grid).sigma_min_a1, 1e-4);
  EXPECT_GT(grid_quality(m, grid).sigma_min_a2, 1e-4);
}

TEST(GridSearch, EqualDensitiesFail) {
  Matrix g(2, 2);
  g << 0.8, 0.2, 0.3, 0.7;
  const HmmModel m = HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(0, 1),
                                                                FiniteMixtureDensity::gaussian(0, 1)});
  const auto pool = default_candidate_pool(m, 1);
  EXPECT_THROW(find_full_rank_grid(m, 1, pool), GridSearchError);
}

TEST(GridSearch, SingleState) {
  Matrix g(1, 1);
  g << 1.0;
  const HmmModel m = HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(0, 1)});
  const std::vector<double> pool{0.3};
  const EvaluationGrid grid = find_full_rank_grid(m, 0, pool);
  EXPECT_EQ(grid.block_points_right.size(), 1u);
  EXPECT_TRUE(grid.block_points_right[0].empty());
  EXPECT_NEAR(grid_quality(m, grid).sigma_min_a1, 1.0, 1e-14);
}

TEST(GridSearch, RejectsShortBlocks) {
  const HmmModel m = scenario_a().truth;
  const std::vector<double> pool{0.0, 1.0};
  EXPECT_THROW(find_full_rank_grid(m, 1, pool), ValidationError);
}

TEST(ThreeWay, InfiniteGridIsAllOnes) {
  const HmmModel m = toy_two_state();
  EvaluationGrid g;
  g.T = 1;
  g.block_points_left = {{kInf}, {kInf}};
  g.block_points_right = {{kInf}, {kInf}};
  g.singleton_points = {kInf, kInf};
  g.extra_left = {kInf};
  g.extra_right = {kInf};
  const ThreeWayArray a = build_threeway(m, g);
  for (double v : a.values) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(ThreeWay, JointProbabilityOracle) {
  std::mt19937_64 gen(25);
  for (int rep = 0; rep < 5; ++rep) {
    const HmmModel m = oracle::random_gaussian_model(2, gen);
    const EvaluationGrid g = random_grid(2, 1, gen);
    const ThreeWayArray a = build_threeway(m, g);
    const auto pi = oracle::stationary(m.gamma());
    const int K = 2, m2 = 1;
    ASSERT_EQ(a.dim_i, K + 2);
    ASSERT_EQ(a.dim_j, m2 + 2);
    ASSERT_EQ(a.dim_r, 2 * K + 2);
    for (int i = 0; i < a.dim_i; ++i)
      for (int j = 0; j < a.dim_j; ++j)
        for (int r = 0; r < a.dim_r; ++r) {
          const double left = i < K ? g.block_points_left[static_cast<std::size_t>(i)][0] : i == K ? g.extra_left[0] : kInf;
          const double mid = j <= m2 ? g.singleton_points[static_cast<std::size_t>(j)] : kInf;
          std::vector<double> right{kInf, kInf};
          if (r < K) right[0] = g.block_points_right[static_cast<std::size_t>(r)][0];
          else if (r == K) right[0] = g.extra_right[0];
          else if (r > K + 1) right = {g.singleton_points.back(), g.block_points_right[static_cast<std::size_t>(r - K - 2)][0]};
          const std::vector<double> bounds{left, mid, right[0], right[1]};
          EXPECT_NEAR(a(i, j, r), oracle::joint_cdf(m, pi, bounds), 1e-12) << i << j << r;
        }
  }
}

TEST(ThreeWay, MarginalCell) {
  const HmmModel m = scenario_a().truth;
  std::mt19937_64 gen(26);
  const EvaluationGrid g = random_grid(3, 2, gen);
  const ThreeWayArray a = build_threeway(m, g);
  const Vector pi = stationary_distribution(m.gamma()).entries();
  for (int j = 0; j < 4; ++j) {
    double ref = 0.0;
    for (int k = 0; k < 3; ++k) ref += pi(k) * cdf(m.density(k), g.singleton_points[static_cast<std::size_t>(j)]);
    EXPECT_NEAR(a(4, j, 4), ref, 1e-14);
  }
}

TEST(KruskalCondition, ScenarioAGrid) {
  const HmmModel m = scenario_a().truth;
  const EvaluationGrid grid = find_full_rank_grid(m, 2, default_candidate_pool(m, 2));
  const KruskalReport r = verify_kruskal_condition(m, grid);
  EXPECT_EQ(r.rank_m1, 3);
  EXPECT_GE(r.rank_m2, 2);
  EXPECT_EQ(r.rank_m3, 3);
  EXPECT_EQ(r.required, 8);
  EXPECT_TRUE(r.holds);
}

TEST(KruskalCondition, EqualSingletonsBreakM2) {
  const HmmModel m = scenario_a().truth;
  EvaluationGrid grid = find_full_rank_grid(m, 2, default_candidate_pool(m, 2));
  for (auto& y : grid.singleton_points) y = 1e6;
  const KruskalReport r = verify_kruskal_condition(m, grid);
  EXPECT_EQ(r.rank_m2, 1);
  EXPECT_FALSE(r.holds);
  ASSERT_EQ(r.failing.size(), 1u);
  EXPECT_EQ(r.failing[0], "M2");
}

TEST(KruskalCondition, SingleStateNeverHolds) {
  Matrix g(1, 1);
  g << 1.0;
  const HmmModel m = HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(0, 1)});
  EvaluationGrid grid;
  grid.T = 0;
  grid.block_points_left = {{}};
  grid.block_points_right = {{}};
  grid.singleton_points = {0.0};
  const KruskalReport r = verify_kruskal_condition(m, grid);
  EXPECT_EQ(r.sum(), 3);
  EXPECT_EQ(r.required, 4);
  EXPECT_FALSE(r.holds);
  EXPECT_FALSE(r.note.empty());
}

TEST(TransitionRecovery, ScenarioARoundTrip) {
  const HmmModel m = scenario_a().truth;
  const EvaluationGrid grid = find_full_rank_grid(m, 2, default_candidate_pool(m, 2));
  const ThreeWayArray a = build_threeway(m, grid);
  const Matrix& m3 = a.factors->m3;
  Vector fy(3);
  for (int k = 0; k < 3; ++k) fy(k) = cdf(m.density(k), grid.singleton_points.back());
  const TransitionMatrix g = recover_transition_matrix(m3.middleCols(5, 3), m3.leftCols(3), fy);
  EXPECT_LT((g.entries() - scenario_gamma()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TransitionRecovery, SingleState) {
  Matrix a(1, 1), a1(1, 1);
  a << 0.37;
  a1 << 0.5;
  Vector fy(1);
  fy << 0.74;
  EXPECT_NEAR(recover_transition_matrix(a, a1, fy)(0, 0), 1.0, 1e-15);
}

TEST(TransitionRecovery, ConditioningBound) {
  const HmmModel m = scenario_a().truth;
  const EvaluationGrid grid = find_full_rank_grid(m, 2, default_candidate_pool(m, 2));
  const ThreeWayArray a = build_threeway(m, grid);
  const Matrix A = a.factors->m3.middleCols(5, 3);
  const Matrix A1 = a.factors->m3.leftCols(3);
  Vector fy(3);
  for (int k = 0; k < 3; ++k) fy(k) = cdf(m.density(k), grid.singleton_points.back());
  std::mt19937_64 gen(27);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double eps = 1e-8;
  Matrix E(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) E(i, j) = eps * u(gen);
  const Matrix err = recover_transition_entries(A + E, A1, fy) - recover_transition_entries(A, A1, fy);
  Eigen::JacobiSVD<Matrix> svd(A1);
  const double smin = svd.singularValues()(2);
  // |E A_1^{-1} D^{-1}|_2 <= |E|_2 / (sigma_min(A_1) min F(y)), |E|_2 <= 3 eps
  const double bound = 3.0 * eps / (smin * fy.minCoeff());
  EXPECT_LE(err.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(err.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Spectral, ToyTwoState) {
  const HmmModel m = toy_two_state();
  const EvaluationGrid grid = find_full_rank_grid(m, 1, default_candidate_pool(m, 1));
  const SpectralRecovery rec = spectral_recover(build_threeway(m, grid), 2);
  const RecoveryCheck chk = compare_recovery(rec, m, grid);
  EXPECT_LT(chk.gamma_error, 1e-8);
  EXPECT_LT(chk.f_error, 1e-8);
  EXPECT_LT(chk.pi_error, 1e-8);
}

TEST(Spectral, ScenarioA) {
  const HmmModel m = scenario_a().truth;
  const EvaluationGrid grid = find_full_rank_grid(m, 2, default_candidate_pool(m, 2));
  const SpectralRecovery rec = spectral_recover(build_threeway(m, grid), 3);
  EXPECT_LT(compare_recovery(rec, m, grid).max_error(), 1e-6);
}

TEST(Spectral, LabelsArePermuted) {
  const HmmModel m = toy_two_state();
  const std::vector<int> perm{1, 0};
  const HmmModel p = m.permuted(perm);
  const EvaluationGrid grid = find_full_rank_grid(m, 1, default_candidate_pool(m, 1));
  const SpectralRecovery rec = spectral_recover(build_threeway(m, grid), 2);
  // The recovery matches the relabelled model equally well.
  EXPECT_LT(compare_recovery(rec, m, grid).max_error(), 1e-8);
  EXPECT_LT(compare_recovery(rec, p, grid).max_error(), 1e-8);
}

TEST(Spectral, RankDeficientChainIsRefused) {
  Matrix g(2, 2);
  g << 0.8, 0.2, 0.3, 0.7;
  const auto [a, b] = rank_deficient_counterexample(
      TransitionMatrix(g), 0.3, 0.6,
      {FiniteMixtureDensity::gaussian(-3, 1), FiniteMixtureDensity::gaussian(0, 1), FiniteMixtureDensity::gaussian(3, 1)});
  std::mt19937_64 gen(28);
  const EvaluationGrid grid = random_grid(3, 2, gen);
  EXPECT_THROW(spectral_recover(build_threeway(a, grid), 3), SpectralError);
}

TEST(Spectral, WrongShapeIsValidationError) {
  const HmmModel m = toy_two_state();
  const EvaluationGrid grid = find_full_rank_grid(m, 1, default_candidate_pool(m, 1));
  EXPECT_THROW(spectral_recover(build_threeway(m, grid), 3), ValidationError);
}

TEST(Window, Values) {
  EXPECT_EQ(required_window(3), 36);
  EXPECT_EQ(required_window(2), 11);
  EXPECT_EQ(required_window(1), 4);
}

TEST(Primitivity, Cases) {
  EXPECT_TRUE(primitivity_exponent_check(TransitionMatrix(scenario_gamma())));
  Matrix g(3, 3);
  g << 0, 1, 0, 0, 0, 1, 0.5, 0.5, 0;
  EXPECT_TRUE(primitivity_exponent_check(TransitionMatrix(g)));
  Matrix p(3, 3);
  p << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  EXPECT_THROW(primitivity_exponent_check(TransitionMatrix(p)), ValidationError);
}

TEST(Primitivity, WielandtMatrixNeedsFullExponent) {
  // The Wielandt matrix attains the bound: Gamma^{t0 - 1} still has a zero.
  const int K = 4;
  Matrix w = Matrix::Zero(K, K);
  for (int i = 0; i + 1 < K; ++i) w(i, i + 1) = 1.0;
  w(K - 1, 0) = 0.5;
  w(K - 1, 1) = 0.5;
  EXPECT_TRUE(primitivity_exponent_check(TransitionMatrix(w)));
  Matrix pw = Matrix::Identity(K, K);
  const Matrix pattern = (w.array() > 0).cast<double>();
  for (int t = 0; t < K * K - 2 * K + 1; ++t) pw = ((pw * pattern).array() > 0).cast<double>();
  EXPECT_LT(pw.minCoeff(), 0.5);
}

TEST(Counterexample, Split) { EXPECT_NEAR(counterexample_split(0.3, 0.6), 0.6 / 1.3, 1e-15); }

TEST(Counterexample, MixtureIdentityAndLaws) {
  Matrix g(2, 2);
  g << 0.8, 0.2, 0.3, 0.7;
  const auto [a, b] = rank_deficient_counterexample(
      TransitionMatrix(g), 0.3, 0.6,
      {FiniteMixtureDensity::gaussian(-3, 1), FiniteMixtureDensity::gaussian(0, 1), FiniteMixtureDensity::gaussian(3, 1)});
  const double p = counterexample_split(0.3, 0.6);
  for (double y = -6.0; y <= 6.0; y += 0.25)
    EXPECT_NEAR(p * cdf(b.density(1), y) + (1 - p) * cdf(b.density(2), y),
                p * cdf(a.density(1), y) + (1 - p) * cdf(a.density(2), y), 1e-14);
  EXPECT_FALSE(validate_model(a).full_rank);
  EXPECT_FALSE(validate_model(b).full_rank);
  const std::vector<double> pts{-4.0, -1.5, 0.0, 1.5, 4.0};
  const auto pa = oracle::stationary(a.gamma());
  const auto pb = oracle::stationary(b.gamma());
  for (double u : pts)
    for (double v : pts)
      for (double w : pts) {
        const std::vector<double> bounds{u, v, w};
        EXPECT_NEAR(oracle::joint_cdf(a, pa, bounds), oracle::joint_cdf(b, pb, bounds), 1e-10);
      }
  EXPECT_LT(max_joint_cdf_gap(a, b, 3, pts), 1e-10);
  // Different F_2 and F_3 individually.
  EXPECT_GT(std::abs(cdf(a.density(1), 0.0) - cdf(b.density(1), 0.0)), 0.01);
}

TEST(Lumpability, Cases) {
  Matrix g(3, 3);
  g << 0.5, 0.2, 0.3, 0.3, 0.5, 0.2, 0.3, 0.1, 0.6;
  EXPECT_TRUE(lumpability_check(TransitionMatrix(g), {{0}, {1, 2}}));
  EXPECT_FALSE(lumpability_check(TransitionMatrix(scenario_gamma()), {{0}, {1, 2}}));
  EXPECT_TRUE(lumpability_check(TransitionMatrix(scenario_gamma()), {{0}, {1}, {2}}));
  EXPECT_THROW(lumpability_check(TransitionMatrix(g), {{0}, {1}}), ValidationError);
}
