#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nphmm/core.hpp"
#include "nphmm/estimation.hpp"

namespace nphmm {

enum class Alternative { two_comp, nonpar };

std::string to_string(Alternative alt);
/// Accepts "two-comp" or "nonpar".
Alternative parse_alternative(const std::string& text);

inline const std::vector<double> kGofLevels = {0.90, 0.95, 0.99};
inline constexpr double kNestingSlack = 1e-6;
inline constexpr int kMinBootstrap = 100;
inline constexpr double kMaxFailureShare = 0.05;

/// Raised when an alternative fit scores below its nested null by more than
/// the optimization slack.
class NestingError : public FitError {
 public:
  NestingError(const std::string& what, double raw) : FitError(what), raw_(raw) {}
  double raw() const { return raw_; }

 private:
  double raw_;
};

/// Gaussian (m = 1 per state) fit.
FitResult fit_null(const ObservationSeries& series, int K, const FitConfig& config);

/// Two components per state, warm-started from the null fit by splitting
/// every state's component (offset 0.5 sd, then 1e-3 sd); the better run wins.
/// With `exact_embedding` the split uses zero offset, which reproduces the
/// null likelihood at the start.
FitResult fit_two_comp(const ObservationSeries& series, const FitResult& null_fit,
                       const FitConfig& config, bool exact_embedding = false);

/// NPMLE warm-started from the two-component fit.
FitResult fit_nonpar(const ObservationSeries& series, const FitResult& two_comp_fit,
                     const FitConfig& config);

/// 2 (L_alt - L_null). Values in [-1e-6, 0) are clamped to 0; lower values
/// raise NestingError. Mismatched series or K raise ValidationError.
double lrt_statistic(const ObservationSeries& series, const FitResult& null_fit, const FitResult& alt_fit);

struct SeriesTest {
  FitResult null_fit;
  FitResult two_comp_fit;
  std::optional<FitResult> nonpar_fit;
  double lrt_two_comp = 0.0;
  double lrt_nonpar = 0.0;
  /// Alternatives refitted after a nesting violation.
  int refits = 0;

  double statistic(Alternative alt) const { return alt == Alternative::two_comp ? lrt_two_comp : lrt_nonpar; }
};

/// Fits null and the requested alternatives (the two-component fit is always
/// computed, it seeds the nonparametric one) and forms the statistics.
SeriesTest test_series(const ObservationSeries& series, int K, bool with_nonpar, const FitConfig& config);

struct BootstrapResult {
  Alternative alternative = Alternative::nonpar;
  std::map<double, double> critical_values;
  std::vector<double> statistics;  ///< ascending
  int B = 0;
  int failures = 0;
  std::vector<std::uint64_t> seeds;  ///< seeds of the replications used
};

struct GofRunOptions {
  std::uint64_t seed = 1;
  int jobs = 0;
};

/// Parametric bootstrap from the fitted null: B series of length n, each
/// refitted under null and alternative(s). Failed replications are replaced
/// by fresh draws while failures stay within 5% of B.
std::vector<BootstrapResult> bootstrap_critical_values(const HmmModel& null_model, std::size_t n, int B,
                                                       const std::vector<Alternative>& alternatives,
                                                       const FitConfig& config, const GofRunOptions& options);
BootstrapResult bootstrap_critical_values(const HmmModel& null_model, std::size_t n, int B,
                                          Alternative alternative, const FitConfig& config,
                                          const GofRunOptions& options);

struct PowerResult {
  Alternative alternative = Alternative::nonpar;
  std::map<double, double> rejection_rate;
  std::vector<double> statistics;  ///< in replication order
  int R = 0;
  int failures = 0;
};

/// Rejection frequencies (statistic > critical value) over R series of
/// length n from true_model, with a K-state Gaussian null.
std::vector<PowerResult> power_simulation(const HmmModel& true_model, int K,
                                          const std::vector<BootstrapResult>& critical, int R, std::size_t n,
                                          const FitConfig& config, const GofRunOptions& options);

struct GofReport {
  static constexpr int kSchemaVersion = 1;
  Alternative alternative = Alternative::nonpar;
  int K = 0;
  std::size_t n = 0;
  double statistic = 0.0;
  double null_loglik = 0.0;
  double alt_loglik = 0.0;
  std::map<double, double> critical_values;
  std::map<double, bool> reject;
  int B = 0;
  int failures = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> bootstrap_statistics;

  /// Deterministic JSON text (no timing fields).
  std::string to_json() const;
};

/// Full test on observed data: fits, statistic, bootstrap from the fitted null.
GofReport goodness_of_fit(const ObservationSeries& series, int K, Alternative alternative, int B,
                          const FitConfig& config, const GofRunOptions& options);

}  // namespace nphmm
