#include "nphmm/identification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nphmm/parallel.hpp"

namespace nphmm {

namespace {

Vector cdf_vector(const HmmModel& model, double y) {
  Vector f(model.states());
  for (int k = 0; k < model.states(); ++k) f(k) = cdf(model.density(k), y);
  return f;
}

// Gamma D_{b_1} Gamma D_{b_2} ... Gamma D_{b_T} 1, evaluated right to left.
Vector forward_block(const HmmModel& model, const Matrix& gamma, std::span<const double> block) {
  Vector v = Vector::Ones(model.states());
  for (std::size_t t = block.size(); t-- > 0;) v = gamma * cdf_vector(model, block[t]).cwiseProduct(v);
  return v;
}

// Reversed chain: Gamma~ D_{b_T} ... Gamma~ D_{b_1} 1, with b in time order.
Vector backward_block(const HmmModel& model, const Matrix& reversed, std::span<const double> block) {
  Vector v = Vector::Ones(model.states());
  for (std::size_t t = 0; t < block.size(); ++t)
    v = reversed * cdf_vector(model, block[t]).cwiseProduct(v);
  return v;
}

void check_block_guard(int K, std::size_t T) {
  if (T > static_cast<std::size_t>(kMaxBlockLength) ||
      std::pow(static_cast<double>(K), static_cast<double>(T)) > kMaxBlockPaths) {
    std::ostringstream os;
    os << "exact block summation refused: T = " << T << ", K^T = "
       << std::pow(static_cast<double>(K), static_cast<double>(T)) << " (limits T <= "
       << kMaxBlockLength << ", K^T <= " << kMaxBlockPaths << ")";
    throw GuardError(os.str());
  }
}

double smallest_singular_value(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (m.cols() > m.rows()) return s(s.size() - 1);
  return s.size() < m.cols() ? 0.0 : s(m.cols() - 1);
}

Block decode_candidate(std::size_t index, std::span<const double> pool, int T) {
  Block b(static_cast<std::size_t>(T));
  for (int t = T; t-- > 0;) {
    b[static_cast<std::size_t>(t)] = pool[index % pool.size()];
    index /= pool.size();
  }
  return b;
}

// Greedy column selection maximizing the smallest singular value of the
// growing K x s submatrix.
std::pair<std::vector<std::size_t>, double> greedy_columns(const Matrix& values) {
  const Eigen::Index K = values.rows();
  std::vector<std::size_t> chosen;
  double best_sigma = 0.0;
  Matrix current(K, 0);
  for (Eigen::Index s = 0; s < K; ++s) {
    double best = -1.0;
    std::size_t best_idx = 0;
    Matrix trial(K, s + 1);
    trial.leftCols(s) = current;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (std::find(chosen.begin(), chosen.end(), static_cast<std::size_t>(c)) != chosen.end()) continue;
      trial.col(s) = values.col(c);
      const double sigma = smallest_singular_value(trial);
      if (sigma > best) {
        best = sigma;
        best_idx = static_cast<std::size_t>(c);
      }
    }
    if (best < 0.0) return {chosen, 0.0};
    chosen.push_back(best_idx);
    current.conservativeResize(K, s + 1);
    current.col(s) = values.col(static_cast<Eigen::Index>(best_idx));
    best_sigma = best;
  }
  return {chosen, best_sigma};
}

Matrix pseudo_inverse_rows(const Matrix& c) {
  // c is K x R with full row rank.
  return c.transpose() * (c * c.transpose()).inverse();
}

}  // namespace

int kruskal_rank(const Matrix& M, std::optional<double> tol) {
  const auto rows = static_cast<int>(M.rows());
  if (rows == 0 || M.cols() == 0) return 0;
  double threshold = 0.0;
  if (tol) {
    threshold = *tol;
  } else {
    Eigen::JacobiSVD<Matrix> svd(M);
    threshold = kRankTol * svd.singularValues()(0);
    if (!(svd.singularValues()(0) > 0.0)) return 0;
  }
  for (int j = 1; j <= rows; ++j) {
    if (j > M.cols()) return j - 1;
    // Enumerate j-subsets through a selection mask.
    std::vector<bool> mask(static_cast<std::size_t>(rows), false);
    std::fill(mask.begin(), mask.begin() + j, true);
    do {
      Matrix sub(j, M.cols());
      int r = 0;
      for (int i = 0; i < rows; ++i)
        if (mask[static_cast<std::size_t>(i)]) sub.row(r++) = M.row(i);
      Eigen::JacobiSVD<Matrix> svd(sub);
      if (!(svd.singularValues()(j - 1) > threshold)) return j - 1;
    } while (std::prev_permutation(mask.begin(), mask.end()));
  }
  return rows;
}

void EvaluationGrid::validate(int K) const {
  const auto expect = static_cast<std::size_t>(K);
  if (T < 0) throw ValidationError("grid block length must be nonnegative");
  if (T < K - 1) throw ValidationError("grid block length must be at least K - 1");
  if (block_points_left.size() != expect || block_points_right.size() != expect)
    throw ValidationError("grid needs K left and K right block points");
  if (singleton_points.size() != static_cast<std::size_t>(K * (K - 1) / 2 + 1))
    throw ValidationError("grid needs K(K-1)/2 + 1 singleton points");
  auto check = [this](const Block& b) {
    if (b.size() != static_cast<std::size_t>(T)) throw ValidationError("grid block has the wrong length");
  };
  for (const auto& b : block_points_left) check(b);
  for (const auto& b : block_points_right) check(b);
  check(extra_left);
  check(extra_right);
}

TransitionMatrix time_reversal(const TransitionMatrix& gamma) {
  const ProbabilityVector pi = stationary_distribution(gamma);
  const int K = gamma.states();
  Matrix r(K, K);
  for (int j = 0; j < K; ++j)
    for (int k = 0; k < K; ++k) r(j, k) = pi[k] * gamma(k, j) / pi[j];
  return TransitionMatrix::normalized(std::move(r));
}

double conditional_block_cdf(const HmmModel& model, Direction direction, std::span<const double> block,
                             int k) {
  const int K = model.states();
  if (k < 0 || k >= K) throw ValidationError("state index out of range");
  check_block_guard(K, block.size());
  if (direction == Direction::forward) return forward_block(model, model.gamma().entries(), block)(k);
  return backward_block(model, time_reversal(model.gamma()).entries(), block)(k);
}

double joint_cdf(const HmmModel& model, std::span<const double> bounds) {
  if (bounds.empty()) return 1.0;
  Vector r = model.initial().entries().cwiseProduct(cdf_vector(model, bounds[0]));
  for (std::size_t t = 1; t < bounds.size(); ++t)
    r = (model.gamma().entries().transpose() * r).cwiseProduct(cdf_vector(model, bounds[t]));
  return r.sum();
}

Matrix ThreeWayArray::slice(int j) const {
  Matrix s(dim_i, dim_r);
  for (int i = 0; i < dim_i; ++i)
    for (int r = 0; r < dim_r; ++r) s(i, r) = (*this)(i, j, r);
  return s;
}

namespace {

ThreeWayFactors build_factors(const HmmModel& model, const EvaluationGrid& grid) {
  const int K = model.states();
  grid.validate(K);
  check_block_guard(K, static_cast<std::size_t>(grid.T));
  const Vector pi = stationary_distribution(model.gamma()).entries();
  const Matrix& g = model.gamma().entries();
  const Matrix rev = time_reversal(model.gamma()).entries();
  const int m = K * (K - 1) / 2;

  ThreeWayFactors f;
  Matrix m1(K, K + 2);
  for (int i = 0; i < K; ++i)
    m1.col(i) = backward_block(model, rev, grid.block_points_left[static_cast<std::size_t>(i)]);
  m1.col(K) = backward_block(model, rev, grid.extra_left);
  m1.col(K + 1).setOnes();
  f.m1_tilde = pi.asDiagonal() * m1;

  f.m2.resize(K, m + 2);
  for (int j = 0; j <= m; ++j) f.m2.col(j) = cdf_vector(model, grid.singleton_points[static_cast<std::size_t>(j)]);
  f.m2.col(m + 1).setOnes();

  f.m3.resize(K, 2 * K + 2);
  for (int r = 0; r < K; ++r)
    f.m3.col(r) = forward_block(model, g, grid.block_points_right[static_cast<std::size_t>(r)]);
  f.m3.col(K) = forward_block(model, g, grid.extra_right);
  f.m3.col(K + 1).setOnes();
  const double y = grid.singleton_points.back();
  for (int t = 0; t < K; ++t) {
    Block probe;
    probe.push_back(y);
    const auto& z = grid.block_points_right[static_cast<std::size_t>(t)];
    probe.insert(probe.end(), z.begin(), z.end());
    f.m3.col(K + 2 + t) = forward_block(model, g, probe);
  }
  return f;
}

}  // namespace

ThreeWayArray build_threeway(const HmmModel& model, const EvaluationGrid& grid) {
  ThreeWayFactors f = build_factors(model, grid);
  ThreeWayArray a;
  a.K = model.states();
  a.T = grid.T;
  a.dim_i = static_cast<int>(f.m1_tilde.cols());
  a.dim_j = static_cast<int>(f.m2.cols());
  a.dim_r = static_cast<int>(f.m3.cols());
  a.values.resize(static_cast<std::size_t>(a.dim_i) * a.dim_j * a.dim_r);
  std::size_t idx = 0;
  for (int i = 0; i < a.dim_i; ++i)
    for (int j = 0; j < a.dim_j; ++j) {
      const Vector w = f.m1_tilde.col(i).cwiseProduct(f.m2.col(j));
      for (int r = 0; r < a.dim_r; ++r) a.values[idx++] = w.dot(f.m3.col(r));
    }
  a.factors = std::move(f);
  return a;
}

KruskalReport verify_kruskal_condition(const HmmModel& model, const EvaluationGrid& grid) {
  const int K = model.states();
  const ThreeWayFactors f = build_factors(model, grid);
  KruskalReport rep;
  rep.rank_m1 = kruskal_rank(f.m1_tilde);
  rep.rank_m2 = kruskal_rank(f.m2);
  rep.rank_m3 = kruskal_rank(f.m3.leftCols(K + 2));
  rep.required = 2 * K + 2;
  rep.holds = rep.sum() >= rep.required;
  if (!rep.holds) {
    if (rep.rank_m1 < K) rep.failing.emplace_back("M1");
    if (rep.rank_m2 < std::min(K, 2)) rep.failing.emplace_back("M2");
    if (rep.rank_m3 < K) rep.failing.emplace_back("M3");
  }
  if (K == 1) rep.note = "K = 1 is identification-trivial; the rank condition 3 >= 4 cannot hold";
  return rep;
}

std::vector<double> default_candidate_pool(const HmmModel& model, int T, int points) {
  if (points < 2) throw ValidationError("candidate pool needs at least two points");
  const Vector pi = stationary_distribution(model.gamma()).entries();
  auto marginal = [&](double y) {
    double s = 0.0;
    for (int k = 0; k < model.states(); ++k) s += pi(k) * cdf(model.density(k), y);
    return s;
  };
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  for (int k = 0; k < model.states(); ++k) {
    lo = std::min(lo, mean(model.density(k)) - 4.0 * sd(model.density(k)));
    hi = std::max(hi, mean(model.density(k)) + 4.0 * sd(model.density(k)));
  }
  const double span = std::max(hi - lo, 1.0);
  while (marginal(lo) > 0.001) lo -= span;
  while (marginal(hi) < 0.999) hi += span;
  auto quantile = [&](double p, double a, double b) {
    for (int it = 0; it < 200 && b - a > 1e-12 * (1.0 + std::abs(a)); ++it) {
      const double mid = 0.5 * (a + b);
      (marginal(mid) < p ? a : b) = mid;
    }
    return 0.5 * (a + b);
  };
  const double q_lo = quantile(0.001, lo, hi);
  const double q_hi = quantile(0.999, lo, hi);
  int count = points;
  if (T > 1) count = std::min(points, static_cast<int>(std::floor(std::pow(2e4, 1.0 / T))));
  count = std::max(count, 2);
  std::vector<double> pool(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) pool[static_cast<std::size_t>(i)] = q_lo + (q_hi - q_lo) * i / (count - 1);
  return pool;
}

EvaluationGrid find_full_rank_grid(const HmmModel& model, int T, std::span<const double> pool, int jobs) {
  const int K = model.states();
  if (T < K - 1) throw ValidationError("block length T must be at least K - 1");
  if (pool.empty()) throw ValidationError("candidate pool is empty");
  check_block_guard(K, static_cast<std::size_t>(T));
  const double count = std::pow(static_cast<double>(pool.size()), static_cast<double>(T));
  if (count > 2e5) throw GuardError("candidate lattice exceeds 2e5 blocks; use a smaller pool");
  const auto n_cand = static_cast<std::size_t>(count);

  const Matrix& g = model.gamma().entries();
  const Matrix rev = time_reversal(model.gamma()).entries();
  Matrix gv(K, static_cast<Eigen::Index>(n_cand));
  Matrix hv(K, static_cast<Eigen::Index>(n_cand));
  parallel_for(n_cand, jobs, [&](std::size_t c) {
    const Block b = decode_candidate(c, pool, T);
    gv.col(static_cast<Eigen::Index>(c)) = forward_block(model, g, b);
    hv.col(static_cast<Eigen::Index>(c)) = backward_block(model, rev, b);
  });
  const auto [right, sigma_g] = greedy_columns(gv);
  const auto [left, sigma_h] = greedy_columns(hv);
  if (!(sigma_g > kGridSingularTol) || !(sigma_h > kGridSingularTol)) {
    std::ostringstream os;
    os << "no full-rank grid in the candidate pool: best smallest singular values A_1 = " << sigma_g
       << ", A_2 = " << sigma_h << " (threshold " << kGridSingularTol << ")";
    throw GridSearchError(os.str(), sigma_g, sigma_h);
  }

  EvaluationGrid grid;
  grid.T = T;
  for (std::size_t c : right) grid.block_points_right.push_back(decode_candidate(c, pool, T));
  for (std::size_t c : left) grid.block_points_left.push_back(decode_candidate(c, pool, T));
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      double best = -1.0;
      double arg = pool[0];
      for (double y : pool) {
        const double d = std::abs(cdf(model.density(i), y) - cdf(model.density(j), y));
        if (d > best) {
          best = d;
          arg = y;
        }
      }
      grid.singleton_points.push_back(arg);
    }
  double best = -1.0;
  double y_star = pool[0];
  for (double y : pool) {
    const double v = cdf_vector(model, y).minCoeff();
    if (v > best) {
      best = v;
      y_star = y;
    }
  }
  grid.singleton_points.push_back(y_star);
  const Block middle(static_cast<std::size_t>(T), pool[pool.size() / 2]);
  grid.extra_left = middle;
  grid.extra_right = middle;
  return grid;
}

GridQuality grid_quality(const HmmModel& model, const EvaluationGrid& grid) {
  const ThreeWayFactors f = build_factors(model, grid);
  const int K = model.states();
  return {smallest_singular_value(f.m3.leftCols(K)),
          smallest_singular_value(f.m1_tilde.leftCols(K).array().colwise() /
                                  stationary_distribution(model.gamma()).entries().array())};
}

Matrix recover_transition_entries(const Matrix& A, const Matrix& A1, const Vector& f_at_y) {
  const Eigen::Index K = A1.rows();
  if (A1.cols() != K || A.rows() != K || A.cols() != K || f_at_y.size() != K)
    throw ValidationError("transition recovery needs K x K matrices and a length-K vector");
  Eigen::JacobiSVD<Matrix> svd(A1);
  const auto& s = svd.singularValues();
  if (!(s(K - 1) > 1e-14 * s(0))) throw ValidationError("A_1 is singular");
  for (Eigen::Index k = 0; k < K; ++k)
    if (!(std::abs(f_at_y(k)) > 1e-14)) {
      std::ostringstream os;
      os << "F_" << (k + 1) << "(y) is zero; choose a larger y";
      throw ValidationError(os.str());
    }
  Matrix x = A1.transpose().fullPivLu().solve(A.transpose()).transpose();
  for (Eigen::Index k = 0; k < K; ++k) x.col(k) /= f_at_y(k);
  return x;
}

TransitionMatrix recover_transition_matrix(const Matrix& A, const Matrix& A1, const Vector& f_at_y) {
  Matrix x = recover_transition_entries(A, A1, f_at_y);
  constexpr double tol = 1e-8;
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    if (std::abs(x.row(j).sum() - 1.0) > tol || (x.row(j).array() < -tol).any() ||
        (x.row(j).array() > 1.0 + tol).any())
      throw SpectralError(SpectralError::Kind::not_stochastic, "recovered matrix is not stochastic");
  }
  x = x.cwiseMax(0.0).cwiseMin(1.0);
  return TransitionMatrix::normalized(std::move(x));
}

SpectralRecovery spectral_recover(const ThreeWayArray& array, int K, std::uint64_t seed) {
  if (K < 1) throw ValidationError("K must be at least 1");
  if (array.dim_i != K + 2 || array.dim_r != 2 * K + 2 || array.dim_j != K * (K - 1) / 2 + 2)
    throw ValidationError("array shape does not match K");
  const int J = array.dim_j;
  const int m = J - 2;
  std::vector<Matrix> slices;
  Matrix total = Matrix::Zero(array.dim_i, array.dim_r);
  for (int j = 0; j < J; ++j) {
    slices.push_back(array.slice(j));
    total += slices.back();
  }
  Eigen::JacobiSVD<Matrix> svd(total, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (!(sv(K - 1) > kRankTol * sv(0))) {
    std::ostringstream os;
    os << "slice sum has rank below K = " << K << " (singular value ratio " << sv(K - 1) / sv(0)
       << "); factor matrices are rank deficient and the pencil has no usable eigen-gap";
    throw SpectralError(SpectralError::Kind::rank_deficient, os.str());
  }
  if (sv.size() > K && sv(K) > 1e-6 * sv(0)) {
    std::ostringstream os;
    os << "array has more than K = " << K << " components (singular value ratio " << sv(K) / sv(0) << ")";
    throw SpectralError(SpectralError::Kind::rank_excess, os.str());
  }
  const Matrix U = svd.matrixU().leftCols(K);
  const Matrix V = svd.matrixV().leftCols(K);
  std::vector<Matrix> reduced;
  for (const auto& x : slices) reduced.push_back(U.transpose() * x * V);

  Philox4x32 rng(seed, 0);
  SpectralRecovery out;
  Matrix c_hat;
  for (int attempt = 1; attempt <= 5; ++attempt) {
    out.attempts = attempt;
    Matrix P = Matrix::Zero(K, K);
    Matrix Q = Matrix::Zero(K, K);
    for (int j = 0; j < J; ++j) {
      P += (2.0 * rng.uniform() - 1.0) * reduced[static_cast<std::size_t>(j)];
      Q += (0.5 + rng.uniform()) * reduced[static_cast<std::size_t>(j)];
    }
    const Matrix pencil = Q.fullPivLu().solve(P);
    Eigen::EigenSolver<Matrix> es(pencil.transpose());
    const Eigen::VectorXcd lambda = es.eigenvalues();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    double gap = std::numeric_limits<double>::infinity();
    bool complex_pair = false;
    for (int a = 0; a < K; ++a) {
      complex_pair = complex_pair || std::abs(lambda(a).imag()) > 1e-8 * scale;
      for (int b = a + 1; b < K; ++b) gap = std::min(gap, std::abs(lambda(a) - lambda(b)) / scale);
    }
    out.eigen_gap = gap;
    if (gap < 1e-8 || complex_pair) continue;
    c_hat = es.eigenvectors().real().transpose();
    break;
  }
  if (c_hat.size() == 0) {
    std::ostringstream os;
    os << "pencil eigenvalues clustered or complex (relative gap " << out.eigen_gap
       << " < 1e-8) after 5 weight draws; try different slice weights";
    throw SpectralError(SpectralError::Kind::eigen_gap, os.str());
  }
  Matrix C = c_hat * V.transpose();
  for (int k = 0; k < K; ++k) {
    const double s = C(k, K + 1);
    if (!(std::abs(s) > 1e-12))
      throw SpectralError(SpectralError::Kind::rank_deficient, "recovered factor has no marginal column");
    C.row(k) /= s;
  }
  const Matrix c_pinv = pseudo_inverse_rows(C);
  const Matrix a_t = slices[static_cast<std::size_t>(m + 1)] * c_pinv;  // I x K
  const Matrix a_t_pinv = (a_t.transpose() * a_t).inverse() * a_t.transpose();
  Matrix B(K, J);
  for (int j = 0; j < J; ++j)
    B.col(j) = (a_t_pinv * slices[static_cast<std::size_t>(j)] * c_pinv).diagonal();

  out.pi = a_t.row(K + 1).transpose();
  out.f_values = B.leftCols(m + 1);
  out.a1 = C.leftCols(K);
  out.gamma = recover_transition_entries(C.middleCols(K + 2, K), out.a1, B.col(m));
  return out;
}

double RecoveryCheck::max_error() const { return std::max({gamma_error, f_error, pi_error}); }

RecoveryCheck compare_recovery(const SpectralRecovery& recovery, const HmmModel& model,
                               const EvaluationGrid& grid) {
  const int K = model.states();
  const Vector pi = stationary_distribution(model.gamma()).entries();
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  RecoveryCheck best;
  double best_score = std::numeric_limits<double>::infinity();
  do {
    RecoveryCheck c;
    c.permutation = perm;
    for (int k = 0; k < K; ++k) {
      const int p = perm[static_cast<std::size_t>(k)];
      for (std::size_t j = 0; j < grid.singleton_points.size(); ++j)
        c.f_error = std::max(c.f_error, std::abs(recovery.f_values(p, static_cast<Eigen::Index>(j)) -
                                                 cdf(model.density(k), grid.singleton_points[j])));
      for (int l = 0; l < K; ++l)
        c.gamma_error = std::max(c.gamma_error, std::abs(recovery.gamma(p, perm[static_cast<std::size_t>(l)]) -
                                                         model.gamma()(k, l)));
      c.pi_error = std::max(c.pi_error, std::abs(recovery.pi(p) - pi(k)));
    }
    if (c.max_error() < best_score) {
      best_score = c.max_error();
      best = c;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

int required_window(int K) {
  if (K < 1) throw ValidationError("K must be at least 1");
  return (2 * K + 1) * (K * K - 2 * K + 2) + 1;
}

bool primitivity_exponent_check(const TransitionMatrix& gamma) {
  if (!is_ergodic(gamma)) throw ValidationError("primitivity check requires an ergodic matrix");
  const int K = gamma.states();
  const int t0 = K * K - 2 * K + 2;
  using Pattern = std::vector<std::vector<char>>;
  Pattern base(static_cast<std::size_t>(K), std::vector<char>(static_cast<std::size_t>(K)));
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) base[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = gamma(i, j) > 0.0;
  Pattern power = base;
  for (int step = 1; step < t0; ++step) {
    Pattern next(static_cast<std::size_t>(K), std::vector<char>(static_cast<std::size_t>(K), 0));
    for (std::size_t i = 0; i < power.size(); ++i)
      for (std::size_t l = 0; l < power.size(); ++l)
        if (power[i][l])
          for (std::size_t j = 0; j < power.size(); ++j)
            if (base[l][j]) next[i][j] = 1;
    power = std::move(next);
  }
  for (const auto& row : power)
    for (char v : row)
      if (!v) return false;
  return true;
}

double counterexample_split(double delta, double beta) { return beta / (1.0 + beta - delta); }

std::pair<HmmModel, HmmModel> rank_deficient_counterexample(
    const TransitionMatrix& base_gamma, double delta, double beta,
    const std::vector<FiniteMixtureDensity>& base_densities) {
  const int K = base_gamma.states();
  if (!(delta > 0.0 && delta < 1.0 && beta > 0.0 && beta < 1.0))
    throw ValidationError("delta and beta must lie in (0, 1)");
  if (delta == beta) throw ValidationError("delta equal to beta makes the two models coincide");
  if (base_densities.size() != static_cast<std::size_t>(K) + 1)
    throw ValidationError("need K + 1 base densities");
  if (!is_ergodic(base_gamma)) throw ValidationError("base transition matrix must be ergodic");
  Eigen::JacobiSVD<Matrix> svd(base_gamma.entries());
  const auto& s = svd.singularValues();
  if (!(s(K - 1) > kRankTol * s(0))) throw ValidationError("base transition matrix must have full rank");

  const double p = counterexample_split(delta, beta);
  const Matrix& a = base_gamma.entries();
  Matrix g1 = Matrix::Zero(K + 1, K + 1);
  for (int r = 0; r <= K; ++r) {
    const int src = std::min(r, K - 1);
    for (int c = 0; c + 1 < K; ++c) g1(r, c) = a(src, c);
    g1(r, K - 1) = p * a(src, K - 1);
    g1(r, K) = (1.0 - p) * a(src, K - 1);
  }
  const TransitionMatrix gamma1 = TransitionMatrix::normalized(std::move(g1));

  std::vector<StateDensity> fa(base_densities.begin(), base_densities.end());
  std::vector<StateDensity> fb(base_densities.begin(), base_densities.end());
  const auto& fk = base_densities[static_cast<std::size_t>(K) - 1];
  const auto& fk1 = base_densities[static_cast<std::size_t>(K)];
  fb[static_cast<std::size_t>(K) - 1] = fk.blend(fk1, delta);
  fb[static_cast<std::size_t>(K)] = fk.blend(fk1, beta);
  return {HmmModel::stationary(gamma1, std::move(fa)), HmmModel::stationary(gamma1, std::move(fb))};
}

double max_joint_cdf_gap(const HmmModel& a, const HmmModel& b, int L, std::span<const double> points) {
  if (L < 0) throw ValidationError("window length must be nonnegative");
  if (points.empty()) throw ValidationError("need at least one lattice point");
  std::vector<std::size_t> idx(static_cast<std::size_t>(L), 0);
  std::vector<double> bounds(static_cast<std::size_t>(L));
  double gap = 0.0;
  while (true) {
    for (std::size_t t = 0; t < idx.size(); ++t) bounds[t] = points[idx[t]];
    gap = std::max(gap, std::abs(joint_cdf(a, bounds) - joint_cdf(b, bounds)));
    std::size_t pos = idx.size();
    while (pos > 0) {
      --pos;
      if (++idx[pos] < points.size()) break;
      idx[pos] = 0;
      if (pos == 0) return gap;
    }
    if (idx.empty()) return gap;
  }
}

bool lumpability_check(const TransitionMatrix& gamma, const std::vector<std::vector<int>>& partition) {
  const int K = gamma.states();
  std::vector<int> seen(static_cast<std::size_t>(K), 0);
  for (const auto& block : partition) {
    if (block.empty()) throw ValidationError("partition blocks must be nonempty");
    for (int k : block) {
      if (k < 0 || k >= K) throw ValidationError("partition names a state out of range");
      if (seen[static_cast<std::size_t>(k)]++) throw ValidationError("partition blocks overlap");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw ValidationError("partition does not cover every state");
  for (const auto& from : partition)
    for (const auto& to : partition) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (int k : from) {
        double s = 0.0;
        for (int l : to) s += gamma(k, l);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
      if (hi - lo > 1e-12) return false;
    }
  return true;
}

}  // namespace nphmm
