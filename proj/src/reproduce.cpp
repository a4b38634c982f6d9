#include "nphmm/reproduce.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "nphmm/gof.hpp"
#include "nphmm/parallel.hpp"

namespace nphmm {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::size_t estimator_index(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("unknown estimator '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

struct EstimatorOutcome {
  std::vector<std::vector<double>> relative;  // [k][i]
  std::vector<double> transition;             // [j]
};

EstimatorOutcome score(const HmmModel& fitted, const ScenarioSpec& spec) {
  const HmmModel aligned = fitted.permuted(align_to_truth(fitted, spec.truth));
  const int K = spec.truth.states();
  EstimatorOutcome out;
  for (int k = 0; k < K; ++k) {
    std::vector<double> row;
    for (double y : spec.eval_grid[static_cast<std::size_t>(k)]) {
      const double f0 = pdf(spec.truth.density(k), y);
      row.push_back(std::abs(pdf(aligned.density(k), y) - f0) / f0 * 100.0);
    }
    out.relative.push_back(std::move(row));
  }
  for (int j = 0; j < K; ++j) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += std::abs(aligned.gamma()(j, k) - spec.truth.gamma()(j, k));
    out.transition.push_back(s / K * 100.0);
  }
  return out;
}

}  // namespace

double RelativeErrorTable::at(const std::string& estimator, int state, double y) const {
  const std::size_t e = estimator_index(estimators, estimator);
  const auto& pts = points.at(static_cast<std::size_t>(state));
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (std::abs(pts[i] - y) < 1e-9) return errors[e][static_cast<std::size_t>(state)][i];
  throw ValidationError("point is not on the evaluation grid");
}

std::string RelativeErrorTable::to_csv() const {
  std::size_t width = 0;
  for (const auto& p : points) width = std::max(width, p.size());
  std::ostringstream os;
  os << "state,label";
  for (std::size_t i = 0; i < width; ++i) os << ",v" << (i + 1);
  os << ",valid_reps\n";
  for (std::size_t k = 0; k < points.size(); ++k) {
    os << (k + 1) << ",y";
    for (double y : points[k]) os << ',' << fmt(y);
    for (std::size_t i = points[k].size(); i < width; ++i) os << ',';
    os << ",\n";
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      os << (k + 1) << ',' << estimators[e];
      for (double v : errors[e][k]) os << ',' << fmt(v);
      for (std::size_t i = points[k].size(); i < width; ++i) os << ',';
      os << ',' << valid[e] << '\n';
    }
  }
  return os.str();
}

double TransitionErrorTable::at(const std::string& estimator, int state) const {
  return errors[estimator_index(estimators, estimator)].at(static_cast<std::size_t>(state));
}

std::string TransitionErrorTable::to_csv() const {
  std::ostringstream os;
  os << "state";
  for (const auto& e : estimators) os << ',' << e;
  os << '\n';
  const std::size_t K = errors.empty() ? 0 : errors.front().size();
  for (std::size_t j = 0; j < K; ++j) {
    os << (j + 1);
    for (const auto& e : errors) os << ',' << fmt(e[j]);
    os << '\n';
  }
  return os.str();
}

std::vector<int> align_to_truth(const HmmModel& fitted, const HmmModel& truth) {
  const int K = truth.states();
  if (fitted.states() != K) throw ValidationError("fitted and true models have different K");
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  for (int k = 0; k < K; ++k) {
    lo = std::min(lo, mean(truth.density(k)) - 4.0 * sd(truth.density(k)));
    hi = std::max(hi, mean(truth.density(k)) + 4.0 * sd(truth.density(k)));
  }
  constexpr int kPoints = 400;
  const double dy = (hi - lo) / (kPoints - 1);
  Matrix f0(K, kPoints), f1(K, kPoints);
  for (int i = 0; i < kPoints; ++i) {
    const double y = lo + dy * i;
    for (int k = 0; k < K; ++k) {
      f0(k, i) = pdf(truth.density(k), y);
      f1(k, i) = pdf(fitted.density(k), y);
    }
  }
  Matrix cost(K, K);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j) cost(k, j) = (f0.row(k) - f1.row(j)).cwiseAbs().sum() * dy;
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int k = 0; k < K; ++k) c += cost(k, perm[static_cast<std::size_t>(k)]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

ReproduceResult reproduce(const ScenarioSpec& spec, std::size_t n, int replications, std::uint64_t seed,
                          const FitConfig& config, int jobs) {
  if (replications < 1) throw ValidationError("replications must be positive");
  if (n < 2) throw ValidationError("series length must be at least 2");
  const int K = spec.truth.states();
  const auto E = spec.estimators.size();
  using Slot = std::vector<std::optional<EstimatorOutcome>>;
  std::vector<Slot> slots(static_cast<std::size_t>(replications), Slot(E));
  const bool want_two = std::find(spec.estimators.begin(), spec.estimators.end(), "2-comp") != spec.estimators.end();

  parallel_for(slots.size(), jobs, [&](std::size_t r) {
    const ObservationSeries series = simulate(spec.truth, n, derive_seed(seed, r));
    std::optional<FitResult> gauss, two, nonpar;
    try {
      gauss = fit_null(series, K, config);
    } catch (const FitError&) {
      return;
    }
    if (want_two) {
      try {
        two = fit_two_comp(series, *gauss, config);
      } catch (const FitError&) {
      }
    }
    try {
      nonpar = npmle_fit(series, K, config, &*gauss);
    } catch (const FitError&) {
    }
    for (std::size_t e = 0; e < E; ++e) {
      const std::string& name = spec.estimators[e];
      const std::optional<FitResult>& fit = name == "Gauss" ? gauss : name == "2-comp" ? two : nonpar;
      if (fit) slots[r][e] = score(fit->model, spec);
    }
  });

  ReproduceResult out;
  RelativeErrorTable& rel = out.relative;
  rel.scenario = spec.name;
  rel.n = n;
  rel.replications = replications;
  rel.estimators = spec.estimators;
  rel.points = spec.eval_grid;
  out.transition.estimators = spec.estimators;
  for (std::size_t e = 0; e < E; ++e) {
    std::vector<std::vector<double>> sum;
    for (const auto& p : spec.eval_grid) sum.emplace_back(p.size(), 0.0);
    std::vector<double> tsum(static_cast<std::size_t>(K), 0.0);
    int valid = 0;
    for (const auto& slot : slots) {
      if (!slot[e]) continue;
      ++valid;
      for (std::size_t k = 0; k < sum.size(); ++k)
        for (std::size_t i = 0; i < sum[k].size(); ++i) sum[k][i] += slot[e]->relative[k][i];
      for (std::size_t j = 0; j < tsum.size(); ++j) tsum[j] += slot[e]->transition[j];
    }
    const double denom = valid > 0 ? valid : std::numeric_limits<double>::quiet_NaN();
    for (auto& row : sum)
      for (double& v : row) v /= denom;
    for (double& v : tsum) v /= denom;
    rel.errors.push_back(std::move(sum));
    rel.valid.push_back(valid);
    out.transition.errors.push_back(std::move(tsum));
  }
  return out;
}

}  // namespace nphmm
