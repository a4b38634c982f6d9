#include "nphmm/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include "nphmm/quadrature.hpp"

namespace nphmm {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

std::string describe_row_error(int row, double sum) {
  std::ostringstream os;
  os << "row " << row << " sums to " << sum << ", expected 1";
  return os.str();
}

// Draws an index from a discrete distribution given by `probs` (sums to one).
template <typename Probs>
int draw_index(const Probs& probs, int size, Philox4x32& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int k = 0; k < size - 1; ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return size - 1;
}

}  // namespace

double normal_pdf(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return kInvSqrt2Pi / sd * std::exp(-0.5 * z * z);
}

double normal_log_pdf(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

double normal_cdf(double y, double mean, double sd) {
  if (y == std::numeric_limits<double>::infinity()) return 1.0;
  if (y == -std::numeric_limits<double>::infinity()) return 0.0;
  return 0.5 * std::erfc(-(y - mean) / (sd * std::numbers::sqrt2));
}

// ---------------------------------------------------------------------------

TransitionMatrix::TransitionMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() < 1 || entries_.rows() != entries_.cols())
    throw ValidationError("transition matrix must be square with K >= 1");
  for (int j = 0; j < entries_.rows(); ++j) {
    for (int k = 0; k < entries_.cols(); ++k) {
      const double a = entries_(j, k);
      if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("transition entries must lie in [0, 1]");
    }
    const double sum = entries_.row(j).sum();
    if (std::abs(sum - 1.0) > kStochasticTol) throw ValidationError(describe_row_error(j, sum));
  }
}

TransitionMatrix TransitionMatrix::normalized(Matrix raw) {
  for (int j = 0; j < raw.rows(); ++j) {
    const double sum = raw.row(j).sum();
    if (!(sum > 0.0)) throw ValidationError("cannot normalize a zero row");
    raw.row(j) /= sum;
  }
  return TransitionMatrix(std::move(raw));
}

ProbabilityVector::ProbabilityVector(Vector entries) : entries_(std::move(entries)) {
  if (entries_.size() < 1) throw ValidationError("probability vector must be nonempty");
  if ((entries_.array() < 0.0).any()) throw ValidationError("probabilities must be nonnegative");
  if (std::abs(entries_.sum() - 1.0) > kStochasticTol)
    throw ValidationError("probability vector must sum to 1");
}

ProbabilityVector ProbabilityVector::uniform(int size) {
  return ProbabilityVector(Vector::Constant(size, 1.0 / size));
}

// ---------------------------------------------------------------------------

ThetaBox ThetaBox::from_data(std::span<const double> obs, double sd_floor) {
  if (obs.empty()) throw ValidationError("cannot derive a parameter box from no data");
  const auto [lo, hi] = std::minmax_element(obs.begin(), obs.end());
  const double n = static_cast<double>(obs.size());
  const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / n;
  double ss = 0.0;
  for (double y : obs) ss += (y - mean) * (y - mean);
  const double sample_sd = std::sqrt(ss / n);
  ThetaBox box;
  box.mean_lo = *lo - 1.0;
  box.mean_hi = *hi + 1.0;
  box.sd_lo = sd_floor;
  box.sd_hi = std::max(2.0 * sample_sd, sd_floor);
  return box;
}

bool ThetaBox::contains(const GaussianComponent& c) const {
  return c.mean >= mean_lo && c.mean <= mean_hi && c.sd >= sd_lo && c.sd <= sd_hi;
}

GaussianComponent ThetaBox::clamp(GaussianComponent c) const {
  c.mean = std::clamp(c.mean, mean_lo, mean_hi);
  c.sd = std::clamp(c.sd, sd_lo, sd_hi);
  return c;
}

// ---------------------------------------------------------------------------

FiniteMixtureDensity::FiniteMixtureDensity(std::vector<double> weights,
                                           std::vector<GaussianComponent> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (weights_.empty() || weights_.size() != components_.size())
    throw ValidationError("mixture needs matching, nonempty weights and components");
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0)) throw ValidationError("mixture weights must be strictly positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kStochasticTol) throw ValidationError("mixture weights must sum to 1");
  for (const auto& c : components_)
    if (!(c.sd > 0.0) || !std::isfinite(c.mean))
      throw ValidationError("mixture components need finite means and positive sds");
}

FiniteMixtureDensity FiniteMixtureDensity::gaussian(double mean, double sd) {
  return FiniteMixtureDensity({1.0}, {{mean, sd}});
}

double FiniteMixtureDensity::pdf(double y) const {
  double s = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j)
    s += weights_[j] * normal_pdf(y, components_[j].mean, components_[j].sd);
  return s;
}

double FiniteMixtureDensity::log_pdf(double y) const {
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(weights_.size());
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    terms[j] = std::log(weights_[j]) + normal_log_pdf(y, components_[j].mean, components_[j].sd);
    top = std::max(top, terms[j]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return top + std::log(s);
}

double FiniteMixtureDensity::cdf(double y) const {
  double s = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j)
    s += weights_[j] * normal_cdf(y, components_[j].mean, components_[j].sd);
  return s;
}

double FiniteMixtureDensity::mean() const {
  double m = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) m += weights_[j] * components_[j].mean;
  return m;
}

double FiniteMixtureDensity::sd() const {
  const double mu = mean();
  double v = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const auto& c = components_[j];
    v += weights_[j] * (c.sd * c.sd + (c.mean - mu) * (c.mean - mu));
  }
  return std::sqrt(v);
}

bool FiniteMixtureDensity::inside(const ThetaBox& box) const {
  return std::all_of(components_.begin(), components_.end(),
                     [&](const GaussianComponent& c) { return box.contains(c); });
}

FiniteMixtureDensity FiniteMixtureDensity::blend(const FiniteMixtureDensity& other,
                                                 double w) const {
  if (!(w > 0.0 && w < 1.0)) throw ValidationError("blend weight must lie in (0, 1)");
  std::vector<double> weights;
  std::vector<GaussianComponent> comps;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    weights.push_back(w * weights_[j]);
    comps.push_back(components_[j]);
  }
  for (std::size_t j = 0; j < other.weights_.size(); ++j) {
    weights.push_back((1.0 - w) * other.weights_[j]);
    comps.push_back(other.components_[j]);
  }
  // Absorb rounding so the weights sum to one within the invariant.
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& x : weights) x /= total;
  return FiniteMixtureDensity(std::move(weights), std::move(comps));
}

double FiniteMixtureDensity::sample(Philox4x32& rng) const {
  const int j = draw_index(weights_, support_size(), rng);
  std::normal_distribution<double> normal(components_[static_cast<std::size_t>(j)].mean,
                                          components_[static_cast<std::size_t>(j)].sd);
  return normal(rng);
}

// ---------------------------------------------------------------------------

ContinuousMixtureTruth::ContinuousMixtureTruth(BetaLaw mean_law, UniformLaw sd_law,
                                               int quadrature_nodes)
    : mean_law_(mean_law), sd_law_(sd_law), nodes_(quadrature_nodes) {
  if (!(mean_law_.a > 0.0 && mean_law_.b > 0.0 && mean_law_.scale > 0.0))
    throw ValidationError("Beta mean law needs a, b, scale > 0");
  if (!(sd_law_.lo > 0.0 && sd_law_.hi > sd_law_.lo))
    throw ValidationError("uniform sd law needs 0 < lo < hi");
  if (nodes_ < 16) throw ValidationError("quadrature needs at least 16 nodes");

  const double log_beta = std::lgamma(mean_law_.a) + std::lgamma(mean_law_.b) -
                          std::lgamma(mean_law_.a + mean_law_.b);
  const QuadratureRule x_rule = gauss_legendre(nodes_, 0.0, 1.0);
  for (std::size_t i = 0; i < x_rule.nodes.size(); ++i) {
    const double x = x_rule.nodes[i];
    const double dens = std::exp((mean_law_.a - 1.0) * std::log(x) +
                                 (mean_law_.b - 1.0) * std::log1p(-x) - log_beta);
    mean_nodes_.push_back(mean_law_.loc + mean_law_.scale * x);
    mean_weights_.push_back(x_rule.weights[i] * dens);
  }
  const QuadratureRule s_rule = gauss_legendre(nodes_, sd_law_.lo, sd_law_.hi);
  for (std::size_t i = 0; i < s_rule.nodes.size(); ++i) {
    sd_nodes_.push_back(s_rule.nodes[i]);
    sd_weights_.push_back(s_rule.weights[i] / (sd_law_.hi - sd_law_.lo));
  }
}

double ContinuousMixtureTruth::pdf(double y) const {
  double s = 0.0;
  for (std::size_t j = 0; j < sd_nodes_.size(); ++j) {
    const double sd = sd_nodes_[j];
    double inner = 0.0;
    for (std::size_t i = 0; i < mean_nodes_.size(); ++i)
      inner += mean_weights_[i] * normal_pdf(y, mean_nodes_[i], sd);
    s += sd_weights_[j] * inner;
  }
  return s;
}

double ContinuousMixtureTruth::cdf(double y) const {
  if (y == std::numeric_limits<double>::infinity()) return 1.0;
  if (y == -std::numeric_limits<double>::infinity()) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j < sd_nodes_.size(); ++j) {
    const double sd = sd_nodes_[j];
    double inner = 0.0;
    for (std::size_t i = 0; i < mean_nodes_.size(); ++i)
      inner += mean_weights_[i] * normal_cdf(y, mean_nodes_[i], sd);
    s += sd_weights_[j] * inner;
  }
  return s;
}

double ContinuousMixtureTruth::mean() const {
  return mean_law_.loc + mean_law_.scale * mean_law_.a / (mean_law_.a + mean_law_.b);
}

double ContinuousMixtureTruth::sd() const {
  const double a = mean_law_.a;
  const double b = mean_law_.b;
  const double beta_var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
  const double mean_var = mean_law_.scale * mean_law_.scale * beta_var;
  const double lo = sd_law_.lo;
  const double hi = sd_law_.hi;
  const double second_moment_sd = (hi * hi + hi * lo + lo * lo) / 3.0;
  return std::sqrt(mean_var + second_moment_sd);
}

double ContinuousMixtureTruth::sample(Philox4x32& rng) const {
  std::gamma_distribution<double> ga(mean_law_.a, 1.0);
  std::gamma_distribution<double> gb(mean_law_.b, 1.0);
  const double u = ga(rng);
  const double v = gb(rng);
  const double mu = mean_law_.loc + mean_law_.scale * u / (u + v);
  const double sd = sd_law_.lo + (sd_law_.hi - sd_law_.lo) * rng.uniform();
  std::normal_distribution<double> normal(mu, sd);
  return normal(rng);
}

// ---------------------------------------------------------------------------

TruthDensity::TruthDensity(ContinuousMixtureTruth law) : parts_{{1.0, std::move(law)}} {}

TruthDensity::TruthDensity(std::vector<Part> parts) : parts_(std::move(parts)) {
  if (parts_.empty()) throw ValidationError("truth density needs at least one part");
  double sum = 0.0;
  for (const auto& p : parts_) {
    if (!(p.weight > 0.0)) throw ValidationError("truth part weights must be positive");
    sum += p.weight;
  }
  if (std::abs(sum - 1.0) > kStochasticTol) throw ValidationError("truth part weights must sum to 1");
}

double TruthDensity::pdf(double y) const {
  double s = 0.0;
  for (const auto& p : parts_) s += p.weight * p.law.pdf(y);
  return s;
}

double TruthDensity::cdf(double y) const {
  double s = 0.0;
  for (const auto& p : parts_) s += p.weight * p.law.cdf(y);
  return s;
}

double TruthDensity::mean() const {
  double m = 0.0;
  for (const auto& p : parts_) m += p.weight * p.law.mean();
  return m;
}

double TruthDensity::sd() const {
  const double mu = mean();
  double v = 0.0;
  for (const auto& p : parts_) {
    const double s = p.law.sd();
    const double d = p.law.mean() - mu;
    v += p.weight * (s * s + d * d);
  }
  return std::sqrt(v);
}

double TruthDensity::sample(Philox4x32& rng) const {
  std::vector<double> w;
  for (const auto& p : parts_) w.push_back(p.weight);
  const int j = draw_index(w, static_cast<int>(w.size()), rng);
  return parts_[static_cast<std::size_t>(j)].law.sample(rng);
}

TruthDensity TruthDensity::blend(const TruthDensity& other, double w) const {
  if (!(w > 0.0 && w < 1.0)) throw ValidationError("blend weight must lie in (0, 1)");
  std::vector<Part> parts;
  for (const auto& p : parts_) parts.push_back({w * p.weight, p.law});
  for (const auto& p : other.parts_) parts.push_back({(1.0 - w) * p.weight, p.law});
  double total = 0.0;
  for (const auto& p : parts) total += p.weight;
  for (auto& p : parts) p.weight /= total;
  return TruthDensity(std::move(parts));
}

double pdf(const StateDensity& f, double y) {
  return std::visit([y](const auto& d) { return d.pdf(y); }, f);
}

double log_pdf(const StateDensity& f, double y) {
  if (const auto* m = std::get_if<FiniteMixtureDensity>(&f)) return m->log_pdf(y);
  return std::log(std::get<TruthDensity>(f).pdf(y));
}

double cdf(const StateDensity& f, double y) {
  return std::visit([y](const auto& d) { return d.cdf(y); }, f);
}

double mean(const StateDensity& f) {
  return std::visit([](const auto& d) { return d.mean(); }, f);
}

double sd(const StateDensity& f) {
  return std::visit([](const auto& d) { return d.sd(); }, f);
}

double sample(const StateDensity& f, Philox4x32& rng) {
  return std::visit([&rng](const auto& d) { return d.sample(rng); }, f);
}

// ---------------------------------------------------------------------------

HmmModel::HmmModel(TransitionMatrix gamma, ProbabilityVector initial,
                   std::vector<StateDensity> densities)
    : gamma_(std::move(gamma)), initial_(std::move(initial)), densities_(std::move(densities)) {
  if (initial_.size() != gamma_.states())
    throw ValidationError("initial distribution length must equal K");
  if (static_cast<int>(densities_.size()) != gamma_.states())
    throw ValidationError("need exactly one state density per state");
}

HmmModel HmmModel::stationary(TransitionMatrix gamma, std::vector<StateDensity> densities) {
  ProbabilityVector pi = stationary_distribution(gamma);
  return HmmModel(std::move(gamma), std::move(pi), std::move(densities));
}

bool HmmModel::all_finite_mixtures() const {
  return std::all_of(densities_.begin(), densities_.end(), [](const StateDensity& f) {
    return std::holds_alternative<FiniteMixtureDensity>(f);
  });
}

const FiniteMixtureDensity& HmmModel::mixture(int k) const {
  const auto* m = std::get_if<FiniteMixtureDensity>(&densities_[static_cast<std::size_t>(k)]);
  if (m == nullptr) throw ValidationError("state density is not a finite mixture");
  return *m;
}

std::vector<int> HmmModel::support_sizes() const {
  std::vector<int> sizes;
  for (int k = 0; k < states(); ++k) sizes.push_back(mixture(k).support_size());
  return sizes;
}

bool HmmModel::is_stationary(double tol) const {
  const Vector pi_gamma = gamma_.entries().transpose() * initial_.entries();
  return (pi_gamma - initial_.entries()).cwiseAbs().maxCoeff() <= tol;
}

HmmModel HmmModel::with_initial(ProbabilityVector initial) const {
  return HmmModel(gamma_, std::move(initial), densities_);
}

HmmModel HmmModel::with_gamma(TransitionMatrix gamma) const {
  return HmmModel(std::move(gamma), initial_, densities_);
}

HmmModel HmmModel::permuted(std::span<const int> perm) const {
  const int K = states();
  if (static_cast<int>(perm.size()) != K) throw ValidationError("permutation length must equal K");
  Matrix g(K, K);
  Vector init(K);
  std::vector<StateDensity> dens;
  for (int i = 0; i < K; ++i) {
    init(i) = initial_[perm[static_cast<std::size_t>(i)]];
    dens.push_back(densities_[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    for (int j = 0; j < K; ++j)
      g(i, j) = gamma_(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return HmmModel(TransitionMatrix(std::move(g)), ProbabilityVector(std::move(init)),
                  std::move(dens));
}

std::uint64_t ObservationSeries::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double y : obs) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &y, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

bool is_irreducible(const TransitionMatrix& gamma) {
  const int K = gamma.states();
  auto reaches_all = [&](bool transpose) {
    std::vector<char> seen(static_cast<std::size_t>(K), 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v = 0; v < K; ++v) {
        const double a = transpose ? gamma(v, u) : gamma(u, v);
        if (a > 0.0 && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          q.push(v);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reaches_all(false) && reaches_all(true);
}

int period(const TransitionMatrix& gamma) {
  const int K = gamma.states();
  std::vector<int> level(static_cast<std::size_t>(K), -1);
  std::queue<int> q;
  level[0] = 0;
  q.push(0);
  int g = 0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < K; ++v) {
      if (!(gamma(u, v) > 0.0)) continue;
      if (level[static_cast<std::size_t>(v)] < 0) {
        level[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(u)] + 1;
        q.push(v);
      } else {
        g = std::gcd(g, std::abs(level[static_cast<std::size_t>(u)] + 1 -
                                 level[static_cast<std::size_t>(v)]));
      }
    }
  }
  return g;
}

bool is_ergodic(const TransitionMatrix& gamma) {
  return is_irreducible(gamma) && period(gamma) == 1;
}

ProbabilityVector stationary_distribution(const TransitionMatrix& gamma) {
  if (!is_ergodic(gamma)) throw ValidationError("no unique stationary distribution: chain is not ergodic");
  const int K = gamma.states();
  // Solve pi (Gamma - I) = 0 with the normalization replacing one equation.
  Matrix system = gamma.entries().transpose() - Matrix::Identity(K, K);
  system.row(K - 1).setOnes();
  Vector rhs = Vector::Zero(K);
  rhs(K - 1) = 1.0;
  const Eigen::FullPivLU<Matrix> lu(system);
  Vector pi = lu.solve(rhs);
  // One step of iterative refinement keeps the residual at rounding level.
  pi += lu.solve(rhs - system * pi);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  return ProbabilityVector(std::move(pi));
}

ValidationReport validate_model(const HmmModel& model, double tol) {
  ValidationReport report;
  const int K = model.states();
  const Eigen::JacobiSVD<Matrix> svd(model.gamma().entries());
  const Vector sv = svd.singularValues();
  report.smallest_singular_value = sv(K - 1);
  report.full_rank = sv(K - 1) > tol * sv(0);
  report.irreducible = is_irreducible(model.gamma());
  report.aperiodic = report.irreducible && period(model.gamma()) == 1;
  report.ergodic = report.irreducible && report.aperiodic;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& f : model.densities()) {
    lo = std::min(lo, mean(f) - 3.0 * sd(f));
    hi = std::max(hi, mean(f) + 3.0 * sd(f));
  }
  constexpr int kGrid = 401;
  std::vector<double> grid(kGrid);
  for (int i = 0; i < kGrid; ++i) grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (kGrid - 1);
  Matrix values(K, kGrid);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < kGrid; ++i) values(k, i) = pdf(model.density(k), grid[static_cast<std::size_t>(i)]);

  report.densities_distinct = true;
  for (int i = 0; i < K; ++i) {
    for (int j = i + 1; j < K; ++j) {
      Eigen::Index arg = 0;
      const double gap = (values.row(i) - values.row(j)).cwiseAbs().maxCoeff(&arg);
      report.separation_witness.push_back(grid[static_cast<std::size_t>(arg)]);
      if (!(gap > tol)) {
        report.densities_distinct = false;
        if (!report.identical_pair) report.identical_pair = std::make_pair(i, j);
      }
    }
  }
  return report;
}

ObservationSeries simulate(const HmmModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("series length must be at least 1");
  const int K = model.states();
  Philox4x32 rng(seed, 0);
  ObservationSeries series;
  series.seed = seed;
  series.obs.resize(n);
  series.states.resize(n);
  const Matrix& g = model.gamma().entries();
  int x = draw_index(model.initial().entries(), K, rng);
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) x = draw_index(g.row(x), K, rng);
    series.states[t] = x;
    series.obs[t] = sample(model.density(x), rng);
  }
  return series;
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  p = std::clamp(p, 0.0, 1.0);
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace nphmm
