#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nphmm/likelihood.hpp"
#include "nphmm/rng.hpp"
#include "nphmm/scenarios.hpp"
#include "oracles.hpp"

using namespace nphmm;

namespace {

std::vector<double> random_obs(std::size_t n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-3.0, 9.0);
  std::vector<double> y(n);
  for (auto& v : y) v = u(gen);
  return y;
}

}  // namespace

TEST(LogLikelihood, HandEvaluatedTwoGaussians) {
  Matrix g(2, 2);
  g << 0.7, 0.3, 0.4, 0.6;
  const HmmModel m(TransitionMatrix(g), ProbabilityVector(Vector::Constant(2, 0.5)),
                   {FiniteMixtureDensity::gaussian(0, 1), FiniteMixtureDensity::gaussian(1, 1)});
  const std::vector<double> y{0.0};
  const double ref = std::log(0.5 * 0.3989422804014327 + 0.5 * 0.24197072451914337);
  EXPECT_NEAR(log_likelihood(m, y).value, ref, 1e-14);
  EXPECT_NEAR(log_likelihood(m, y).value, -1.1381, 1e-4);
}

TEST(LogLikelihood, SingleStateIsIid) {
  Matrix g(1, 1);
  g << 1.0;
  const FiniteMixtureDensity f({0.4, 0.6}, {{0, 1}, {2, 0.5}});
  const HmmModel m = HmmModel::stationary(TransitionMatrix(g), {f});
  std::mt19937_64 gen(1);
  const auto y = random_obs(50, gen);
  double ref = 0.0;
  for (double v : y) ref += std::log(0.4 * oracle::phi(v, 0, 1) + 0.6 * oracle::phi(v, 2, 0.5));
  EXPECT_NEAR(log_likelihood(m, y).value, ref, 1e-10);
}

TEST(LogLikelihood, MatchesPathEnumeration) {
  std::mt19937_64 gen(2);
  for (int rep = 0; rep < 30; ++rep) {
    const HmmModel m = oracle::random_gaussian_model(3, gen, rep % 2 == 0);
    const auto y = random_obs(7, gen);
    EXPECT_NEAR(log_likelihood(m, y).value, oracle::log_density(m, y), 1e-10);
  }
}

TEST(LogLikelihood, FarObservationsDoNotUnderflow) {
  Matrix g(2, 2);
  g << 0.9, 0.1, 0.2, 0.8;
  const HmmModel m = HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(0, 1),
                                                                FiniteMixtureDensity::gaussian(1, 1)});
  const std::vector<double> y{40.0, -41.0, 39.5};
  const LogLikelihood ll = log_likelihood(m, y);
  ASSERT_TRUE(ll.finite());
  // Log-domain path enumeration.
  std::vector<double> terms;
  oracle::for_each_path(2, y.size(), [&](const std::vector<int>& path) {
    double lw = std::log(m.initial()[path[0]]);
    for (std::size_t t = 0; t < y.size(); ++t) {
      if (t > 0) lw += std::log(m.gamma()(path[t - 1], path[t]));
      const double mu = path[t] == 0 ? 0.0 : 1.0;
      lw += -0.5 * (y[t] - mu) * (y[t] - mu) - 0.5 * std::log(2.0 * M_PI);
    }
    terms.push_back(lw);
  });
  const double top = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += std::exp(v - top);
  EXPECT_NEAR(ll.value, top + std::log(s), 1e-9 * std::abs(ll.value));
}

TEST(LogLikelihood, ZeroDensitySentinel) {
  // Deterministic alternation from state 0: the second observation must come
  // from state 1, whose support is far away. Use an initial law on state 0
  // only and densities that cannot both explain the data.
  Matrix g(2, 2);
  g << 0.0, 1.0, 1.0, 0.0;
  Vector init(2);
  init << 1.0, 0.0;
  const HmmModel m(TransitionMatrix(g), ProbabilityVector(init),
                   {FiniteMixtureDensity::gaussian(0, 0.05), FiniteMixtureDensity::gaussian(1000, 0.05)});
  const std::vector<double> y{0.0, 0.0, 0.0};
  const LogLikelihood ll = log_likelihood(m, y);
  EXPECT_FALSE(ll.finite());
  EXPECT_EQ(ll.value, -std::numeric_limits<double>::infinity());
  ASSERT_TRUE(ll.zero_index.has_value());
  EXPECT_EQ(*ll.zero_index, 1u);
}

TEST(BruteForce, SingleObservation) {
  std::mt19937_64 gen(3);
  const HmmModel m = oracle::random_gaussian_model(3, gen, false);
  const std::vector<double> y{1.3};
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += m.initial()[k] * pdf(m.density(k), 1.3);
  EXPECT_NEAR(brute_force_log_density(m, y), std::log(s), 1e-14);
}

TEST(BruteForce, PermutationChainHasOnePath) {
  Matrix g(3, 3);
  g << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  Vector init(3);
  init << 1, 0, 0;
  const HmmModel m(TransitionMatrix(g), ProbabilityVector(init),
                   {FiniteMixtureDensity::gaussian(0, 1), FiniteMixtureDensity::gaussian(2, 1),
                    FiniteMixtureDensity::gaussian(4, 1)});
  const std::vector<double> y{0.1, 2.5, 3.0, -0.4, 1.0};
  double ref = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) ref += std::log(oracle::phi(y[t], 2.0 * static_cast<double>(t % 3), 1));
  EXPECT_NEAR(brute_force_log_density(m, y), ref, 1e-12);
  EXPECT_NEAR(log_likelihood(m, y).value, ref, 1e-12);
}

TEST(BruteForce, AgreesWithForwardOnRandomInstances) {
  std::mt19937_64 gen(4);
  for (int rep = 0; rep < 100; ++rep) {
    const int K = 1 + rep % 4;
    const HmmModel m = oracle::random_gaussian_model(K, gen, rep % 3 != 0);
    const auto y = random_obs(1 + static_cast<std::size_t>(rep % 8), gen);
    EXPECT_NEAR(brute_force_log_density(m, y), log_likelihood(m, y).value, 1e-10);
  }
}

TEST(BruteForce, Guard) {
  std::mt19937_64 gen(5);
  const HmmModel m = oracle::random_gaussian_model(4, gen);
  const auto y = random_obs(12, gen);
  EXPECT_THROW(brute_force_log_density(m, y), GuardError);
}

TEST(ForwardBackward, SingleState) {
  Matrix g(1, 1);
  g << 1.0;
  const HmmModel m = HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(0, 1)});
  ObservationSeries s;
  s.obs = {0.3, -1.0, 2.0};
  const Posteriors p = forward_backward(m, s);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(p.state_probs(t, 0), 1.0, 1e-15);
}

TEST(ForwardBackward, TwoStepEnumeration) {
  std::mt19937_64 gen(6);
  for (int rep = 0; rep < 10; ++rep) {
    const HmmModel m = oracle::random_gaussian_model(2, gen, false);
    ObservationSeries s;
    s.obs = random_obs(2, gen);
    // Direct Bayes over the four paths.
    double w[2][2], total = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        w[a][b] = m.initial()[a] * pdf(m.density(a), s.obs[0]) * m.gamma()(a, b) * pdf(m.density(b), s.obs[1]);
        total += w[a][b];
      }
    const Posteriors p = forward_backward(m, s);
    for (int a = 0; a < 2; ++a) {
      EXPECT_NEAR(p.state_probs(0, a), (w[a][0] + w[a][1]) / total, 1e-12);
      EXPECT_NEAR(p.state_probs(1, a), (w[0][a] + w[1][a]) / total, 1e-12);
      for (int b = 0; b < 2; ++b) EXPECT_NEAR(p.pair_probs[0](a, b), w[a][b] / total, 1e-12);
    }
    EXPECT_NEAR(p.loglik.value, std::log(total), 1e-12);
  }
}

TEST(ForwardBackward, UnreachableState) {
  Matrix g(3, 3);
  g << 0.5, 0.5, 0.0, 0.3, 0.7, 0.0, 0.4, 0.6, 0.0;
  const HmmModel m(TransitionMatrix(g), ProbabilityVector::uniform(3),
                   {FiniteMixtureDensity::gaussian(0, 1), FiniteMixtureDensity::gaussian(2, 1),
                    FiniteMixtureDensity::gaussian(4, 1)});
  ObservationSeries s;
  s.obs = {4.0, 4.1, 3.9, 4.2};
  const Posteriors p = forward_backward(m, s);
  for (int t = 1; t < 4; ++t) EXPECT_EQ(p.state_probs(t, 2), 0.0);
  EXPECT_GT(p.state_probs(0, 2), 0.0);
}

TEST(ForwardBackward, SmoothedStatisticsAgree) {
  std::mt19937_64 gen(7);
  const HmmModel m = oracle::random_gaussian_model(3, gen);
  const ObservationSeries s = simulate(m, 200, 8);
  const Posteriors p = forward_backward(m, s);
  const SmoothedStatistics st = smoothed_statistics(m.initial().entries(), m.gamma().entries(), emission_table(m, s.obs));
  Matrix counts = Matrix::Zero(3, 3);
  for (const auto& x : p.pair_probs) counts += x;
  EXPECT_LT((counts - st.transition_counts).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((p.state_probs - st.state_probs).cwiseAbs().maxCoeff(), 1e-12);
  for (int t = 0; t < 200; ++t) EXPECT_NEAR(p.state_probs.row(t).sum(), 1.0, 1e-12);
}

TEST(KlContrast, SameModelIsZero) {
  const HmmModel m = scenario_a().truth;
  EXPECT_EQ(kl_divergence_estimate(m, m, 2000, 1), 0.0);
}

TEST(KlContrast, LabelSwapIsNearZero) {
  std::mt19937_64 gen(9);
  const HmmModel m = oracle::random_gaussian_model(3, gen);
  const std::vector<int> perm{2, 0, 1};
  EXPECT_LT(std::abs(kl_divergence_estimate(m, m.permuted(perm), 100000, 10)), 0.01);
}

TEST(KlContrast, PerturbedGammaIsPositive) {
  Matrix g(3, 3);
  g << 0.5, 0.25, 0.25, 0.4, 0.4, 0.2, 0.2, 0.2, 0.6;
  const HmmModel m = HmmModel::stationary(TransitionMatrix(g), {FiniteMixtureDensity::gaussian(0, 1),
                                                                FiniteMixtureDensity::gaussian(2, 1),
                                                                FiniteMixtureDensity::gaussian(4, 1)});
  Matrix h = g;
  h(0, 0) -= 0.1;
  h(0, 1) += 0.1;
  EXPECT_GT(kl_divergence_estimate(m, m.with_gamma(TransitionMatrix(h)), 100000, 11), 0.001);
}
