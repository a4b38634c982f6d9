#include "nphmm/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nphmm/likelihood.hpp"

namespace nphmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMassEps = 1e-10;

double log_sum_exp(std::span<const double> xs) {
  double top = kNegInf;
  for (double x : xs) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

// Maximizes sum_j mass_j log a_j over the simplex with a_j >= floor.
// Returns false (and leaves `out` alone) when there is no mass at all.
bool water_fill(const std::vector<double>& mass, double floor, std::vector<double>& out,
                bool& any_floored) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0)) return false;
  std::vector<bool> floored(mass.size(), false);
  std::vector<double> a(mass.size(), floor);
  while (true) {
    double free_mass = 0.0;
    std::size_t n_floored = 0;
    for (std::size_t j = 0; j < mass.size(); ++j) {
      if (floored[j]) ++n_floored;
      else free_mass += mass[j];
    }
    const double budget = 1.0 - static_cast<double>(n_floored) * floor;
    bool changed = false;
    for (std::size_t j = 0; j < mass.size(); ++j) {
      if (floored[j]) continue;
      a[j] = free_mass > 0.0 ? budget * mass[j] / free_mass : floor;
      if (a[j] < floor) {
        floored[j] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (std::size_t j = 0; j < mass.size(); ++j) {
    if (floored[j]) {
      a[j] = floor;
      any_floored = true;
    }
  }
  out = std::move(a);
  return true;
}

}  // namespace

void FitConfig::validate() const {
  if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
  if (!(rel_tol > 0.0)) throw ValidationError("rel_tol must be positive");
  if (restarts < 1) throw ValidationError("restarts must be at least 1");
  if (!(component_gain_tol >= 0.0)) throw ValidationError("component_gain_tol must be nonnegative");
  if (max_components < 1) throw ValidationError("max_components must be at least 1");
  if (!(sd_floor > 0.0)) throw ValidationError("sd_floor must be positive");
}

ThetaBox FitConfig::box_for(std::span<const double> obs) const {
  return theta_box ? *theta_box : ThetaBox::from_data(obs, sd_floor);
}

EmUpdate em_step(const HmmModel& model, std::span<const double> obs, const ThetaBox& box) {
  const int K = model.states();
  const auto n = static_cast<Eigen::Index>(obs.size());
  if (n == 0) throw ValidationError("EM needs at least one observation");

  std::vector<int> offset(static_cast<std::size_t>(K) + 1, 0);
  for (int k = 0; k < K; ++k)
    offset[static_cast<std::size_t>(k) + 1] =
        offset[static_cast<std::size_t>(k)] + model.mixture(k).support_size();
  const int C = offset.back();

  // log a_c + log phi(y_t; theta_c) and per-state log densities.
  Matrix log_joint(n, C);
  Matrix log_f(n, K);
  std::vector<double> buf;
  for (int k = 0; k < K; ++k) {
    const auto& mix = model.mixture(k);
    const auto w = mix.weights();
    const auto comps = mix.components();
    for (Eigen::Index t = 0; t < n; ++t) {
      buf.clear();
      for (std::size_t j = 0; j < comps.size(); ++j) {
        const double v = std::log(w[j]) +
                         normal_log_pdf(obs[static_cast<std::size_t>(t)], comps[j].mean, comps[j].sd);
        log_joint(t, offset[static_cast<std::size_t>(k)] + static_cast<int>(j)) = v;
        buf.push_back(v);
      }
      log_f(t, k) = log_sum_exp(buf);
    }
  }
  EmissionTable table{Matrix(n, K), Vector(n)};
  for (Eigen::Index t = 0; t < n; ++t) {
    double top = log_f.row(t).maxCoeff();
    if (!std::isfinite(top)) top = 0.0;
    table.log_scale(t) = top;
    for (int k = 0; k < K; ++k) table.scaled(t, k) = std::exp(log_f(t, k) - top);
  }
  const SmoothedStatistics stats =
      smoothed_statistics(model.initial().entries(), model.gamma().entries(), table);
  if (!stats.loglik.finite()) return EmUpdate{model, kNegInf, false};

  Matrix g = model.gamma().entries();
  for (int j = 0; j < K; ++j) {
    const double s = stats.transition_counts.row(j).sum();
    if (s > 0.0) g.row(j) = stats.transition_counts.row(j) / s;
  }

  bool any_floored = false;
  std::vector<StateDensity> densities;
  densities.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& mix = model.mixture(k);
    const int m = mix.support_size();
    std::vector<double> mass(static_cast<std::size_t>(m), 0.0);
    std::vector<double> sum_y(static_cast<std::size_t>(m), 0.0);
    Matrix resp(n, m);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double gk = stats.state_probs(t, k);
      for (int j = 0; j < m; ++j) {
        double r = 0.0;
        if (gk > 0.0 && std::isfinite(log_f(t, k)))
          r = gk * std::exp(log_joint(t, offset[static_cast<std::size_t>(k)] + j) - log_f(t, k));
        resp(t, j) = r;
        mass[static_cast<std::size_t>(j)] += r;
        sum_y[static_cast<std::size_t>(j)] += r * obs[static_cast<std::size_t>(t)];
      }
    }
    std::vector<double> weights(mix.weights().begin(), mix.weights().end());
    water_fill(mass, kWeightFloor, weights, any_floored);
    std::vector<GaussianComponent> comps(mix.components().begin(), mix.components().end());
    for (int j = 0; j < m; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (!(mass[ju] > kMassEps)) {
        any_floored = true;
        continue;
      }
      GaussianComponent c = box.clamp({sum_y[ju] / mass[ju], comps[ju].sd});
      double ss = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        const double d = obs[static_cast<std::size_t>(t)] - c.mean;
        ss += resp(t, j) * d * d;
      }
      c.sd = std::sqrt(ss / mass[ju]);
      comps[ju] = box.clamp(c);
    }
    densities.emplace_back(FiniteMixtureDensity(std::move(weights), std::move(comps)));
  }
  HmmModel next(TransitionMatrix::normalized(std::move(g)), model.initial(), std::move(densities));
  return EmUpdate{std::move(next), stats.loglik.value, any_floored};
}

EmUpdate em_step(const HmmModel& model, const ObservationSeries& series, const FitConfig& config) {
  return em_step(model, series.obs, config.box_for(series.obs));
}

HmmModel initialize(const ObservationSeries& series, int K, std::span<const int> m_per_state,
                    std::uint64_t seed, double jitter) {
  if (K < 1) throw ValidationError("K must be at least 1");
  if (m_per_state.size() != static_cast<std::size_t>(K))
    throw ValidationError("need one support size per state");
  for (int m : m_per_state)
    if (m < 1) throw ValidationError("support sizes must be at least 1");
  if (series.size() < static_cast<std::size_t>(K))
    throw ValidationError("series is shorter than the number of states");

  std::vector<double> sorted = series.obs;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double sd = 1.0;
  if (sorted.size() > 1) {
    const double mu = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
    double ss = 0.0;
    for (double y : sorted) ss += (y - mu) * (y - mu);
    sd = std::sqrt(ss / (n - 1.0));
  }
  sd = std::max(sd, kDefaultSdFloor);

  Philox4x32 rng(seed, 0);
  std::vector<StateDensity> densities;
  for (int k = 0; k < K; ++k) {
    const int m = m_per_state[static_cast<std::size_t>(k)];
    std::vector<double> weights(static_cast<std::size_t>(m), 1.0 / m);
    std::vector<GaussianComponent> comps;
    for (int j = 0; j < m; ++j) {
      double level = (k + (j + 0.5) / m) / K;
      if (jitter > 0.0) level += jitter * (rng.uniform() - 0.5) / (static_cast<double>(K) * m);
      comps.push_back({sorted_quantile(sorted, level), sd});
    }
    densities.emplace_back(FiniteMixtureDensity(std::move(weights), std::move(comps)));
  }
  Matrix g = Matrix::Constant(K, K, K > 1 ? 0.5 / (K - 1) : 1.0);
  if (K > 1) g.diagonal().setConstant(0.5);
  return HmmModel(TransitionMatrix(std::move(g)), ProbabilityVector::uniform(K),
                  std::move(densities));
}

std::pair<HmmModel, std::vector<int>> canonical_relabel(const HmmModel& model) {
  const int K = model.states();
  std::vector<double> mu(static_cast<std::size_t>(K)), s(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    mu[static_cast<std::size_t>(k)] = mean(model.density(k));
    s[static_cast<std::size_t>(k)] = sd(model.density(k));
  }
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
    if (std::abs(mu[ua] - mu[ub]) > 1e-9) return mu[ua] < mu[ub];
    if (std::abs(s[ua] - s[ub]) > 1e-9) return s[ua] < s[ub];
    return a < b;
  });
  return {model.permuted(perm), perm};
}

FitResult em_run(std::span<const double> obs, const HmmModel& start, const ThetaBox& box,
                 const FitConfig& config) {
  config.validate();
  if (!start.all_finite_mixtures()) throw ValidationError("EM start must be a finite mixture model");
  FitResult result{start};
  HmmModel current = start;
  for (int it = 0; it < config.max_iter; ++it) {
    EmUpdate up = em_step(current, obs, box);
    if (!std::isfinite(up.loglik)) {
      std::ostringstream os;
      os << "EM reached a model with zero likelihood at iteration " << it;
      throw FitError(os.str());
    }
    result.loglik_trace.push_back(up.loglik);
    current = std::move(up.model);
    result.iterations = it + 1;
    const auto& tr = result.loglik_trace;
    if (tr.size() >= 2) {
      const double prev = tr[tr.size() - 2];
      if (std::abs(tr.back() - prev) <= config.rel_tol * std::abs(prev)) {
        result.converged = true;
        break;
      }
    }
  }
  const LogLikelihood final_ll = log_likelihood(current, obs);
  if (!final_ll.finite()) throw FitError("EM ended at a model with zero likelihood");
  result.loglik_trace.push_back(final_ll.value);
  result.loglik = final_ll.value;
  result.model = std::move(current);
  result.m_schedule = {result.model.support_sizes()};
  result.permutation.resize(static_cast<std::size_t>(start.states()));
  std::iota(result.permutation.begin(), result.permutation.end(), 0);
  return result;
}

FitResult em_fit(const ObservationSeries& series, int K, std::span<const int> m_per_state,
                 const FitConfig& config) {
  config.validate();
  if (series.size() < static_cast<std::size_t>(std::max(K, 1)))
    throw ValidationError("series is shorter than the number of states");
  const ThetaBox box = config.box_for(series.obs);
  std::optional<FitResult> best;
  std::string last_error;
  for (int r = 0; r < config.restarts; ++r) {
    const HmmModel start = initialize(series, K, m_per_state,
                                      derive_seed(config.seed, static_cast<std::uint64_t>(r)),
                                      r == 0 ? 0.0 : 1.0);
    try {
      FitResult fit = em_run(series.obs, start, box, config);
      if (!best || fit.loglik > best->loglik) best = std::move(fit);
    } catch (const FitError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw FitError("all EM restarts failed: " + last_error);
  auto [relabeled, perm] = canonical_relabel(best->model);
  best->model = std::move(relabeled);
  best->permutation = std::move(perm);
  best->series_hash = series.hash();
  return std::move(*best);
}

HmmModel split_heaviest(const HmmModel& model, double offset_sd) {
  std::vector<StateDensity> densities;
  for (int k = 0; k < model.states(); ++k) {
    const auto& mix = model.mixture(k);
    std::vector<double> w(mix.weights().begin(), mix.weights().end());
    std::vector<GaussianComponent> c(mix.components().begin(), mix.components().end());
    const auto j = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    const GaussianComponent base = c[j];
    w[j] *= 0.5;
    c[j].mean = base.mean - offset_sd * base.sd;
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(j) + 1, w[j]);
    c.insert(c.begin() + static_cast<std::ptrdiff_t>(j) + 1,
             GaussianComponent{base.mean + offset_sd * base.sd, base.sd});
    densities.emplace_back(FiniteMixtureDensity(std::move(w), std::move(c)));
  }
  return HmmModel(model.gamma(), model.initial(), std::move(densities));
}

FitResult npmle_fit(const ObservationSeries& series, int K, const FitConfig& config,
                    const FitResult* warm_start) {
  config.validate();
  const ThetaBox box = config.box_for(series.obs);
  if (warm_start != nullptr && warm_start->model.states() != K)
    throw ValidationError("warm start has the wrong K");
  const std::vector<int> ones(static_cast<std::size_t>(K), 1);
  FitResult current = warm_start != nullptr ? *warm_start : em_fit(series, K, ones, config);
  std::vector<std::vector<int>> schedule = {current.model.support_sizes()};
  const std::size_t total_cap = static_cast<std::size_t>(K) * series.size() + 1;
  while (true) {
    const auto sizes = current.model.support_sizes();
    const int widest = *std::max_element(sizes.begin(), sizes.end());
    const std::size_t total = static_cast<std::size_t>(std::accumulate(sizes.begin(), sizes.end(), 0));
    if (widest >= config.max_components || total + static_cast<std::size_t>(K) > total_cap) break;
    std::optional<FitResult> candidate;
    try {
      candidate = em_run(series.obs, split_heaviest(current.model), box, config);
    } catch (const FitError&) {
      break;
    }
    if (!(candidate->loglik - current.loglik > config.component_gain_tol)) break;
    auto [relabeled, perm] = canonical_relabel(candidate->model);
    candidate->model = std::move(relabeled);
    candidate->permutation = std::move(perm);
    schedule.push_back(candidate->model.support_sizes());
    current = std::move(*candidate);
  }
  current.m_schedule = std::move(schedule);
  current.series_hash = series.hash();
  return current;
}

}  // namespace nphmm
