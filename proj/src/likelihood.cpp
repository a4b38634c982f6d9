#include "nphmm/likelihood.hpp"

#include <cmath>
#include <sstream>

namespace nphmm {

EmissionTable emission_table(const HmmModel& model, std::span<const double> obs) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  const int K = model.states();
  EmissionTable table{Matrix(n, K), Vector(n)};
  Vector logs(K);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double y = obs[static_cast<std::size_t>(t)];
    for (int k = 0; k < K; ++k) logs(k) = log_pdf(model.density(k), y);
    double top = logs.maxCoeff();
    if (!std::isfinite(top)) top = 0.0;
    table.log_scale(t) = top;
    for (int k = 0; k < K; ++k) table.scaled(t, k) = std::exp(logs(k) - top);
  }
  return table;
}

LogLikelihood forward_log_likelihood(const Vector& initial, const Matrix& gamma,
                                     const EmissionTable& emissions) {
  const Eigen::Index n = emissions.scaled.rows();
  LogLikelihood result;
  double total = 0.0;
  Vector alpha = initial.cwiseProduct(emissions.scaled.row(0).transpose());
  for (Eigen::Index t = 0;; ++t) {
    const double c = alpha.sum();
    if (!(c > 0.0)) {
      result.zero_index = static_cast<std::size_t>(t);
      return result;
    }
    alpha /= c;
    total += std::log(c) + emissions.log_scale(t);
    if (t + 1 == n) break;
    alpha = (gamma.transpose() * alpha).cwiseProduct(emissions.scaled.row(t + 1).transpose());
  }
  result.value = total;
  return result;
}

LogLikelihood log_likelihood(const HmmModel& model, std::span<const double> obs) {
  if (obs.empty()) throw ValidationError("log-likelihood needs at least one observation");
  return forward_log_likelihood(model.initial().entries(), model.gamma().entries(),
                                emission_table(model, obs));
}

LogLikelihood log_likelihood(const HmmModel& model, const ObservationSeries& series) {
  return log_likelihood(model, std::span<const double>(series.obs));
}

double brute_force_log_density(const HmmModel& model, std::span<const double> obs) {
  const int K = model.states();
  const std::size_t n = obs.size();
  if (n == 0) throw ValidationError("brute force density needs at least one observation");
  const double paths = std::pow(static_cast<double>(K), static_cast<double>(n));
  if (paths > kBruteForceMaxPaths) {
    std::ostringstream os;
    os << "brute-force path enumeration refused: K^n = " << paths << " exceeds "
       << kBruteForceMaxPaths;
    throw GuardError(os.str());
  }
  std::vector<std::vector<double>> log_f(n, std::vector<double>(static_cast<std::size_t>(K)));
  for (std::size_t t = 0; t < n; ++t)
    for (int k = 0; k < K; ++k)
      log_f[t][static_cast<std::size_t>(k)] = std::log(pdf(model.density(k), obs[t]));
  const Matrix& g = model.gamma().entries();
  const Vector& lambda = model.initial().entries();

  // Odometer over state paths; collect log terms and combine with log-sum-exp.
  std::vector<int> path(n, 0);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(paths));
  while (true) {
    double term = std::log(lambda(path[0])) + log_f[0][static_cast<std::size_t>(path[0])];
    for (std::size_t t = 1; t < n; ++t)
      term += std::log(g(path[t - 1], path[t])) + log_f[t][static_cast<std::size_t>(path[t])];
    terms.push_back(term);
    bool exhausted = true;
    for (std::size_t pos = n; pos-- > 0;) {
      if (++path[pos] < K) {
        exhausted = false;
        break;
      }
      path[pos] = 0;
    }
    if (exhausted) break;
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double x : terms) top = std::max(top, x);
  if (!std::isfinite(top)) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double x : terms) s += std::exp(x - top);
  return top + std::log(s);
}

namespace {

// Scaled forward-backward. When `pairs` is non-null, per-step pair marginals
// are stored there; transition_counts always receives their sum.
SmoothedStatistics run_forward_backward(const Vector& initial, const Matrix& gamma,
                                        const EmissionTable& emissions,
                                        std::vector<Matrix>* pairs) {
  const Eigen::Index n = emissions.scaled.rows();
  const Eigen::Index K = gamma.rows();
  SmoothedStatistics out;
  Matrix alpha(n, K);
  Vector scale(n);
  double total = 0.0;
  Vector a = initial.cwiseProduct(emissions.scaled.row(0).transpose());
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) a = (gamma.transpose() * alpha.row(t - 1).transpose())
                       .cwiseProduct(emissions.scaled.row(t).transpose());
    const double c = a.sum();
    if (!(c > 0.0)) {
      out.loglik.zero_index = static_cast<std::size_t>(t);
      return out;
    }
    scale(t) = c;
    total += std::log(c) + emissions.log_scale(t);
    alpha.row(t) = a.transpose() / c;
  }
  out.loglik.value = total;

  out.state_probs.resize(n, K);
  out.transition_counts = Matrix::Zero(K, K);
  if (pairs != nullptr) pairs->assign(static_cast<std::size_t>(n > 0 ? n - 1 : 0), Matrix());
  Vector beta = Vector::Ones(K);
  Vector row = alpha.row(n - 1).transpose();
  out.state_probs.row(n - 1) = (row / row.sum()).transpose();
  Matrix xi(K, K);
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    const Vector weighted = emissions.scaled.row(t + 1).transpose().cwiseProduct(beta);
    for (Eigen::Index j = 0; j < K; ++j)
      for (Eigen::Index k = 0; k < K; ++k) xi(j, k) = alpha(t, j) * gamma(j, k) * weighted(k);
    xi /= xi.sum();
    out.transition_counts += xi;
    if (pairs != nullptr) (*pairs)[static_cast<std::size_t>(t)] = xi;
    beta = gamma * weighted / scale(t + 1);
    row = alpha.row(t).transpose().cwiseProduct(beta);
    out.state_probs.row(t) = (row / row.sum()).transpose();
  }
  return out;
}

}  // namespace

SmoothedStatistics smoothed_statistics(const Vector& initial, const Matrix& gamma,
                                       const EmissionTable& emissions) {
  return run_forward_backward(initial, gamma, emissions, nullptr);
}

Posteriors forward_backward(const HmmModel& model, const ObservationSeries& series) {
  if (series.obs.empty()) throw ValidationError("forward-backward needs at least one observation");
  Posteriors post;
  SmoothedStatistics stats =
      run_forward_backward(model.initial().entries(), model.gamma().entries(),
                           emission_table(model, series.obs), &post.pair_probs);
  post.loglik = stats.loglik;
  if (!stats.loglik.finite()) {
    post.pair_probs.clear();
    return post;
  }
  post.state_probs = std::move(stats.state_probs);
  return post;
}

double kl_divergence_estimate(const HmmModel& model0, const HmmModel& model, std::size_t n,
                              std::uint64_t seed) {
  const ObservationSeries series = simulate(model0, n, seed);
  const EmissionTable e0 = emission_table(model0, series.obs);
  const LogLikelihood l0 =
      forward_log_likelihood(model0.initial().entries(), model0.gamma().entries(), e0);
  const LogLikelihood l1 = log_likelihood(model, series);
  if (!l1.finite()) return std::numeric_limits<double>::infinity();
  if (!l0.finite()) throw ValidationError("reference model assigns its own sample zero density");
  return (l0.value - l1.value) / static_cast<double>(n);
}

}  // namespace nphmm
