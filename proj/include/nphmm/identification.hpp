#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nphmm/core.hpp"

namespace nphmm {

/// Raised by spectral recovery when the tensor does not support a unique
/// decomposition at the requested K.
class SpectralError : public std::runtime_error {
 public:
  enum class Kind { rank_deficient, rank_excess, eigen_gap, not_stochastic };
  SpectralError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Raised when no candidate grid reaches the singular value threshold.
class GridSearchError : public std::runtime_error {
 public:
  GridSearchError(const std::string& what, double best_a1, double best_a2)
      : std::runtime_error(what), best_a1_(best_a1), best_a2_(best_a2) {}
  double best_a1() const { return best_a1_; }
  double best_a2() const { return best_a2_; }

 private:
  double best_a1_;
  double best_a2_;
};

inline constexpr double kRankTol = 1e-8;
inline constexpr int kMaxBlockLength = 6;
inline constexpr double kMaxBlockPaths = 1e5;

/// Largest j such that every j rows of M have smallest singular value above
/// tol (default 1e-8 * largest singular value of M).
int kruskal_rank(const Matrix& M, std::optional<double> tol = std::nullopt);

using Block = std::vector<double>;

/// Points at which the three-way array is evaluated. Left blocks bound
/// Y_1..Y_T, singletons bound Y_{T+1}, right blocks bound Y_{T+2}..Y_{2T+1}.
struct EvaluationGrid {
  int T = 0;
  std::vector<Block> block_points_left;   ///< z~_1..z~_K
  std::vector<Block> block_points_right;  ///< z_1..z_K
  std::vector<double> singleton_points;   ///< y_1..y_m, then y
  Block extra_left;                       ///< z~ (column K+1 of M_1)
  Block extra_right;                      ///< z (column K+1 of M_3)

  int states() const { return static_cast<int>(block_points_right.size()); }
  /// Throws ValidationError unless counts and lengths match K and T.
  void validate(int K) const;
};

/// Conditional block CDFs of the blocks after (forward) or before
/// (backward) the middle observation, given the middle state.
enum class Direction { forward, backward };

/// G_T(block; k) for forward, H_T(block; k) for backward (block listed in
/// time order Y_1..Y_T). Refuses with GuardError when T > 6 or K^T > 1e5.
double conditional_block_cdf(const HmmModel& model, Direction direction, std::span<const double> block,
                             int k);

TransitionMatrix time_reversal(const TransitionMatrix& gamma);

/// pr(Y_1 <= a_1, ..., Y_L <= a_L) under the model's own initial law.
double joint_cdf(const HmmModel& model, std::span<const double> bounds);

struct ThreeWayFactors {
  Matrix m1_tilde;  ///< diag(pi) M_1, K x (K+2)
  Matrix m2;        ///< K x (m+2)
  Matrix m3;        ///< K x (2K+2): [A_1, G(z), 1_K, probes]
};

/// M(i, j, r) over Y_1..Y_{2T+2}. The last K right-block columns are the
/// probes (y, z_t) of length T+1; the standard right blocks are padded with
/// +inf, which leaves their value unchanged.
struct ThreeWayArray {
  int K = 0;
  int T = 0;
  int dim_i = 0;
  int dim_j = 0;
  int dim_r = 0;
  std::vector<double> values;
  std::optional<ThreeWayFactors> factors;

  double operator()(int i, int j, int r) const {
    return values[(static_cast<std::size_t>(i) * static_cast<std::size_t>(dim_j) +
                   static_cast<std::size_t>(j)) *
                      static_cast<std::size_t>(dim_r) +
                  static_cast<std::size_t>(r)];
  }
  /// I x R slice at fixed j.
  Matrix slice(int j) const;
};

ThreeWayArray build_threeway(const HmmModel& model, const EvaluationGrid& grid);

struct KruskalReport {
  int rank_m1 = 0;
  int rank_m2 = 0;
  int rank_m3 = 0;
  int required = 0;
  bool holds = false;
  std::vector<std::string> failing;  ///< factor names whose rank falls short
  std::string note;

  int sum() const { return rank_m1 + rank_m2 + rank_m3; }
};

KruskalReport verify_kruskal_condition(const HmmModel& model, const EvaluationGrid& grid);

/// 1-D coordinates spanning the 0.1% to 99.9% quantiles of the stationary
/// marginal law; the candidate blocks are their T-fold lattice.
std::vector<double> default_candidate_pool(const HmmModel& model, int T, int points = 41);

inline constexpr double kGridSingularTol = 1e-6;

/// Greedy grid search over pool^T.
EvaluationGrid find_full_rank_grid(const HmmModel& model, int T, std::span<const double> pool,
                                   int jobs = 1);

struct GridQuality {
  double sigma_min_a1 = 0.0;
  double sigma_min_a2 = 0.0;
};
GridQuality grid_quality(const HmmModel& model, const EvaluationGrid& grid);

/// Gamma = A A_1^{-1} diag(1 / F(y)), entries as computed.
Matrix recover_transition_entries(const Matrix& A, const Matrix& A1, const Vector& f_at_y);

/// As recover_transition_entries, then rounding residues below 1e-8 to a
/// stochastic matrix; larger violations raise SpectralError.
TransitionMatrix recover_transition_matrix(const Matrix& A, const Matrix& A1, const Vector& f_at_y);

struct SpectralRecovery {
  Matrix gamma;       ///< recovered transition matrix (raw entries)
  Matrix f_values;    ///< K x (m+1): F_k at the singleton points
  Vector pi;          ///< stationary weights from the marginal column
  Matrix a1;          ///< G_T at the right grid blocks
  double eigen_gap = 0.0;
  int attempts = 0;
  /// Labels are arbitrary: the output equals the truth up to one joint
  /// permutation of states.
  bool labels_up_to_permutation = true;
};

/// Blind Jennrich-type decomposition of the array: a random pencil of two
/// j-slice combinations yields the rows of M_3 as eigenvectors; scales come
/// from the all-ones columns. Up to 5 weight draws on a small eigen-gap.
SpectralRecovery spectral_recover(const ThreeWayArray& array, int K, std::uint64_t seed = 20150301);

/// Recovery compared with the generating model under the best joint
/// permutation (fitted label perm[k] matches true state k).
struct RecoveryCheck {
  std::vector<int> permutation;
  double gamma_error = 0.0;
  double f_error = 0.0;
  double pi_error = 0.0;

  double max_error() const;
};
RecoveryCheck compare_recovery(const SpectralRecovery& recovery, const HmmModel& model,
                               const EvaluationGrid& grid);

int required_window(int K);

/// Every entry of Gamma^{t0}, t0 = K^2 - 2K + 2, is positive (boolean powers).
bool primitivity_exponent_check(const TransitionMatrix& gamma);

double counterexample_split(double delta, double beta);

/// The (K+1)-state rank-K construction showing that full rank is needed:
/// both models are stationary with the same transition matrix and induce
/// the same law of the observations.
std::pair<HmmModel, HmmModel> rank_deficient_counterexample(
    const TransitionMatrix& base_gamma, double delta, double beta,
    const std::vector<FiniteMixtureDensity>& base_densities);

/// Largest |joint_cdf(a) - joint_cdf(b)| over the points^L lattice.
double max_joint_cdf_gap(const HmmModel& a, const HmmModel& b, int L, std::span<const double> points);

bool lumpability_check(const TransitionMatrix& gamma, const std::vector<std::vector<int>>& partition);

}  // namespace nphmm
