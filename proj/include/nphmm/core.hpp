#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nphmm/rng.hpp"

namespace nphmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a model or input violates a structural requirement.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an exact (enumerating) computation would exceed its size guard.
class GuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kDefaultSdFloor = 0.05;

/// Row-stochastic K x K matrix of transition probabilities.
class TransitionMatrix {
 public:
  explicit TransitionMatrix(Matrix entries);

  /// Rescales each row of a nonnegative matrix to sum to one.
  static TransitionMatrix normalized(Matrix raw);

  int states() const { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const { return entries_; }
  double operator()(int from, int to) const { return entries_(from, to); }

 private:
  Matrix entries_;
};

/// Nonnegative vector summing to one.
class ProbabilityVector {
 public:
  explicit ProbabilityVector(Vector entries);
  static ProbabilityVector uniform(int size);

  int size() const { return static_cast<int>(entries_.size()); }
  const Vector& entries() const { return entries_; }
  double operator[](int k) const { return entries_(k); }

 private:
  Vector entries_;
};

struct GaussianComponent {
  double mean = 0.0;
  double sd = 1.0;

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

double normal_pdf(double y, double mean, double sd);
double normal_log_pdf(double y, double mean, double sd);
double normal_cdf(double y, double mean, double sd);

/// Compact parameter box for Gaussian components: means in
/// [mean_lo, mean_hi], standard deviations in [sd_lo, sd_hi].
struct ThetaBox {
  double mean_lo = -1e300;
  double mean_hi = 1e300;
  double sd_lo = kDefaultSdFloor;
  double sd_hi = 1e300;

  /// Means in [min(obs) - 1, max(obs) + 1]; sd in [sd_floor, 2 * sample sd].
  static ThetaBox from_data(std::span<const double> obs, double sd_floor = kDefaultSdFloor);
  bool contains(const GaussianComponent& c) const;
  GaussianComponent clamp(GaussianComponent c) const;
};

/// Finite mixture of Gaussian densities, sum_j a_j phi(y; mean_j, sd_j).
class FiniteMixtureDensity {
 public:
  FiniteMixtureDensity(std::vector<double> weights, std::vector<GaussianComponent> components);
  static FiniteMixtureDensity gaussian(double mean, double sd);

  int support_size() const { return static_cast<int>(weights_.size()); }
  std::span<const double> weights() const { return weights_; }
  std::span<const GaussianComponent> components() const { return components_; }

  double pdf(double y) const;
  double log_pdf(double y) const;
  double cdf(double y) const;
  double mean() const;
  double sd() const;
  bool inside(const ThetaBox& box) const;

  /// Weighted union of two mixtures: w * this + (1 - w) * other.
  FiniteMixtureDensity blend(const FiniteMixtureDensity& other, double w) const;

  double sample(Philox4x32& rng) const;

 private:
  std::vector<double> weights_;
  std::vector<GaussianComponent> components_;
};

/// Location law: Beta(a, b) translated by loc and scaled by scale.
struct BetaLaw {
  double a = 2.0;
  double b = 2.0;
  double loc = 0.0;
  double scale = 1.0;
};

struct UniformLaw {
  double lo = 1.0;
  double hi = 2.0;
};

/// Continuous Gaussian mixture whose means follow a scaled Beta law and
/// whose standard deviations follow a uniform law, mean and sd independent.
/// Densities and CDFs are evaluated by tensor-product Gauss-Legendre
/// quadrature with `quadrature_nodes` nodes per dimension.
class ContinuousMixtureTruth {
 public:
  ContinuousMixtureTruth(BetaLaw mean_law, UniformLaw sd_law, int quadrature_nodes = 96);

  const BetaLaw& mean_law() const { return mean_law_; }
  const UniformLaw& sd_law() const { return sd_law_; }
  int quadrature_nodes() const { return nodes_; }

  double pdf(double y) const;
  double cdf(double y) const;
  double mean() const;
  double sd() const;
  double sample(Philox4x32& rng) const;

 private:
  BetaLaw mean_law_;
  UniformLaw sd_law_;
  int nodes_;
  // Quadrature nodes with weights already multiplied by the mixing density.
  std::vector<double> mean_nodes_, mean_weights_;
  std::vector<double> sd_nodes_, sd_weights_;
};

/// Weighted combination of continuous mixtures (a single part in the common
/// case).
class TruthDensity {
 public:
  struct Part {
    double weight;
    ContinuousMixtureTruth law;
  };

  explicit TruthDensity(ContinuousMixtureTruth law);
  explicit TruthDensity(std::vector<Part> parts);

  std::span<const Part> parts() const { return parts_; }
  double pdf(double y) const;
  double cdf(double y) const;
  double mean() const;
  double sd() const;
  double sample(Philox4x32& rng) const;
  TruthDensity blend(const TruthDensity& other, double w) const;

 private:
  std::vector<Part> parts_;
};

using StateDensity = std::variant<FiniteMixtureDensity, TruthDensity>;

double pdf(const StateDensity& f, double y);
double log_pdf(const StateDensity& f, double y);
double cdf(const StateDensity& f, double y);
double mean(const StateDensity& f);
double sd(const StateDensity& f);
double sample(const StateDensity& f, Philox4x32& rng);

/// Parameters (lambda, Gamma, f_1..f_K) of a K-state hidden Markov model.
class HmmModel {
 public:
  HmmModel(TransitionMatrix gamma, ProbabilityVector initial, std::vector<StateDensity> densities);

  /// Model started in the stationary distribution of gamma.
  static HmmModel stationary(TransitionMatrix gamma, std::vector<StateDensity> densities);

  int states() const { return gamma_.states(); }
  const TransitionMatrix& gamma() const { return gamma_; }
  const ProbabilityVector& initial() const { return initial_; }
  const std::vector<StateDensity>& densities() const { return densities_; }
  const StateDensity& density(int k) const { return densities_[static_cast<std::size_t>(k)]; }

  bool all_finite_mixtures() const;
  /// Throws ValidationError if state k is not a finite mixture.
  const FiniteMixtureDensity& mixture(int k) const;
  std::vector<int> support_sizes() const;

  bool is_stationary(double tol = 1e-10) const;

  HmmModel with_initial(ProbabilityVector initial) const;
  HmmModel with_gamma(TransitionMatrix gamma) const;
  /// New state i is old state perm[i]; Gamma, initial and densities move together.
  HmmModel permuted(std::span<const int> perm) const;

 private:
  TransitionMatrix gamma_;
  ProbabilityVector initial_;
  std::vector<StateDensity> densities_;
};

/// Observations y_1..y_n with optional hidden states (0-based internally).
struct ObservationSeries {
  std::vector<double> obs;
  std::vector<int> states;
  std::uint64_t seed = 0;

  std::size_t size() const { return obs.size(); }
  bool has_states() const { return !states.empty(); }
  /// FNV-1a hash of the observation bytes.
  std::uint64_t hash() const;
};

ProbabilityVector stationary_distribution(const TransitionMatrix& gamma);

bool is_irreducible(const TransitionMatrix& gamma);
/// Period of an irreducible chain (gcd of cycle lengths) from the support graph.
int period(const TransitionMatrix& gamma);
bool is_ergodic(const TransitionMatrix& gamma);

struct ValidationReport {
  bool full_rank = false;
  double smallest_singular_value = 0.0;
  bool irreducible = false;
  bool aperiodic = false;
  bool ergodic = false;
  bool densities_distinct = false;
  /// First pair of states whose densities agree on the whole grid.
  std::optional<std::pair<int, int>> identical_pair;
  /// For each i<j (row-major), the grid point with the largest |f_i - f_j|.
  std::vector<double> separation_witness;

  bool ok() const { return full_rank && ergodic && densities_distinct; }
};

/// Checks full rank (singular values relative to tol * sigma_max), ergodicity
/// (support-graph reachability and period) and pairwise distinctness of the
/// state densities on a 401-point grid.
ValidationReport validate_model(const HmmModel& model, double tol = 1e-8);

/// Type-7 (linear interpolation) quantile of an ascending sample.
double sorted_quantile(std::span<const double> sorted, double p);

/// Exact simulation of (X_t, Y_t), t = 1..n; pure in (model, n, seed).
ObservationSeries simulate(const HmmModel& model, std::size_t n, std::uint64_t seed);

}  // namespace nphmm
