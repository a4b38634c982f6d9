#include "nphmm/gof.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nphmm/likelihood.hpp"
#include "nphmm/parallel.hpp"

namespace nphmm {

std::string to_string(Alternative alt) { return alt == Alternative::two_comp ? "two-comp" : "nonpar"; }

Alternative parse_alternative(const std::string& text) {
  if (text == "two-comp" || text == "2-comp") return Alternative::two_comp;
  if (text == "nonpar") return Alternative::nonpar;
  throw ValidationError("unknown alternative '" + text + "' (expected two-comp or nonpar)");
}

FitResult fit_null(const ObservationSeries& series, int K, const FitConfig& config) {
  const std::vector<int> ones(static_cast<std::size_t>(K), 1);
  return em_fit(series, K, ones, config);
}

FitResult fit_two_comp(const ObservationSeries& series, const FitResult& null_fit, const FitConfig& config,
                       bool exact_embedding) {
  for (int m : null_fit.model.support_sizes())
    if (m != 1) throw ValidationError("two-component fit needs a Gaussian null fit");
  const ThetaBox box = config.box_for(series.obs);
  const std::vector<double> offsets = exact_embedding ? std::vector<double>{0.0} : std::vector<double>{0.5, 1e-3};
  std::optional<FitResult> best;
  std::string last_error;
  for (double offset : offsets) {
    try {
      FitResult fit = em_run(series.obs, split_heaviest(null_fit.model, offset), box, config);
      if (!best || fit.loglik > best->loglik) best = std::move(fit);
    } catch (const FitError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw FitError("two-component fit failed: " + last_error);
  auto [relabeled, perm] = canonical_relabel(best->model);
  best->model = std::move(relabeled);
  best->permutation = std::move(perm);
  best->series_hash = series.hash();
  return std::move(*best);
}

FitResult fit_nonpar(const ObservationSeries& series, const FitResult& two_comp_fit, const FitConfig& config) {
  return npmle_fit(series, two_comp_fit.model.states(), config, &two_comp_fit);
}

double lrt_statistic(const ObservationSeries& series, const FitResult& null_fit, const FitResult& alt_fit) {
  const std::uint64_t h = series.hash();
  if (null_fit.series_hash != h || alt_fit.series_hash != h)
    throw ValidationError("fits were not computed on this series");
  if (null_fit.model.states() != alt_fit.model.states())
    throw ValidationError("null and alternative fits have different K");
  const double raw = 2.0 * (alt_fit.loglik - null_fit.loglik);
  if (raw < -kNestingSlack) {
    std::ostringstream os;
    os << "alternative scores below the nested null: 2 (L_alt - L_null) = " << raw;
    throw NestingError(os.str(), raw);
  }
  return std::max(raw, 0.0);
}

SeriesTest test_series(const ObservationSeries& series, int K, bool with_nonpar, const FitConfig& config) {
  FitResult null_fit = fit_null(series, K, config);
  FitResult two = fit_two_comp(series, null_fit, config);
  SeriesTest out{null_fit, two, std::nullopt};
  try {
    out.lrt_two_comp = lrt_statistic(series, out.null_fit, out.two_comp_fit);
  } catch (const NestingError&) {
    out.two_comp_fit = fit_two_comp(series, out.null_fit, config, true);
    ++out.refits;
    out.lrt_two_comp = lrt_statistic(series, out.null_fit, out.two_comp_fit);
  }
  if (with_nonpar) {
    out.nonpar_fit = fit_nonpar(series, out.two_comp_fit, config);
    out.lrt_nonpar = lrt_statistic(series, out.null_fit, *out.nonpar_fit);
  }
  return out;
}

namespace {

struct Replicates {
  std::vector<std::pair<double, double>> stats;  // (two-comp, nonpar)
  std::vector<std::uint64_t> seeds;
  int failures = 0;
};

// Runs `target` successful replications, drawing replacements for failed
// ones in index order; aborts once failures exceed max_failures.
Replicates run_replications(const HmmModel& model, std::size_t n, int K, int target, int max_failures,
                            bool with_nonpar, const FitConfig& config, const GofRunOptions& options,
                            const char* what) {
  Replicates out;
  std::size_t next = 0;
  while (static_cast<int>(out.stats.size()) < target) {
    const auto batch = static_cast<std::size_t>(target - static_cast<int>(out.stats.size()));
    std::vector<std::optional<std::pair<double, double>>> slots(batch);
    parallel_for(batch, options.jobs, [&](std::size_t b) {
      const std::uint64_t seed = derive_seed(options.seed, next + b);
      const ObservationSeries series = simulate(model, n, seed);
      try {
        const SeriesTest t = test_series(series, K, with_nonpar, config);
        slots[b] = std::make_pair(t.lrt_two_comp, t.lrt_nonpar);
      } catch (const FitError&) {
      }
    });
    for (std::size_t b = 0; b < batch; ++b) {
      if (slots[b]) {
        out.stats.push_back(*slots[b]);
        out.seeds.push_back(derive_seed(options.seed, next + b));
      } else {
        ++out.failures;
      }
    }
    next += batch;
    if (out.failures > max_failures) {
      std::ostringstream os;
      os << what << " aborted: " << out.failures << " of " << next
         << " replications failed to fit (limit " << max_failures << ")";
      throw FitError(os.str());
    }
  }
  return out;
}

bool wants_nonpar(const std::vector<Alternative>& alts) {
  return std::find(alts.begin(), alts.end(), Alternative::nonpar) != alts.end();
}

std::string level_key(double level) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", level);
  return buf;
}

}  // namespace

std::vector<BootstrapResult> bootstrap_critical_values(const HmmModel& null_model, std::size_t n, int B,
                                                       const std::vector<Alternative>& alternatives,
                                                       const FitConfig& config, const GofRunOptions& options) {
  if (B < kMinBootstrap) {
    std::ostringstream os;
    os << "bootstrap needs B >= " << kMinBootstrap << " (got " << B << ")";
    throw ValidationError(os.str());
  }
  if (alternatives.empty()) throw ValidationError("no alternative requested");
  for (int m : null_model.support_sizes())
    if (m != 1) throw ValidationError("bootstrap null model must be Gaussian (one component per state)");
  const int max_failures = static_cast<int>(std::floor(kMaxFailureShare * B));
  const Replicates reps = run_replications(null_model, n, null_model.states(), B, max_failures,
                                           wants_nonpar(alternatives), config, options, "bootstrap");
  std::vector<BootstrapResult> out;
  for (Alternative alt : alternatives) {
    BootstrapResult r;
    r.alternative = alt;
    r.B = B;
    r.failures = reps.failures;
    r.seeds = reps.seeds;
    for (const auto& [two, np] : reps.stats) r.statistics.push_back(alt == Alternative::two_comp ? two : np);
    std::sort(r.statistics.begin(), r.statistics.end());
    for (double level : kGofLevels) r.critical_values[level] = sorted_quantile(r.statistics, level);
    out.push_back(std::move(r));
  }
  return out;
}

BootstrapResult bootstrap_critical_values(const HmmModel& null_model, std::size_t n, int B,
                                          Alternative alternative, const FitConfig& config,
                                          const GofRunOptions& options) {
  return bootstrap_critical_values(null_model, n, B, std::vector<Alternative>{alternative}, config, options)
      .front();
}

std::vector<PowerResult> power_simulation(const HmmModel& true_model, int K,
                                          const std::vector<BootstrapResult>& critical, int R, std::size_t n,
                                          const FitConfig& config, const GofRunOptions& options) {
  if (R < 1) throw ValidationError("power simulation needs R >= 1");
  if (critical.empty()) throw ValidationError("no critical values supplied");
  std::vector<Alternative> alts;
  for (const auto& c : critical) alts.push_back(c.alternative);
  const int max_failures = static_cast<int>(std::floor(kMaxFailureShare * R));
  const Replicates reps =
      run_replications(true_model, n, K, R, max_failures, wants_nonpar(alts), config, options, "power simulation");
  std::vector<PowerResult> out;
  for (const auto& c : critical) {
    PowerResult p;
    p.alternative = c.alternative;
    p.R = R;
    p.failures = reps.failures;
    for (const auto& [two, np] : reps.stats)
      p.statistics.push_back(c.alternative == Alternative::two_comp ? two : np);
    for (const auto& [level, cv] : c.critical_values) {
      const auto hits = std::count_if(p.statistics.begin(), p.statistics.end(), [cv = cv](double s) { return s > cv; });
      p.rejection_rate[level] = static_cast<double>(hits) / R;
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string GofReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["alternative"] = to_string(alternative);
  j["K"] = K;
  j["n"] = n;
  j["statistic"] = statistic;
  j["null_loglik"] = null_loglik;
  j["alt_loglik"] = alt_loglik;
  nlohmann::ordered_json cv = nlohmann::ordered_json::object();
  nlohmann::ordered_json dec = nlohmann::ordered_json::object();
  for (const auto& [level, value] : critical_values) cv[level_key(level)] = value;
  for (const auto& [level, r] : reject) dec[level_key(level)] = r ? "reject" : "retain";
  j["critical_values"] = cv;
  j["decision"] = dec;
  j["B"] = B;
  j["failures"] = failures;
  j["master_seed"] = master_seed;
  j["seeds"] = seeds;
  j["bootstrap_statistics"] = bootstrap_statistics;
  return j.dump(2) + "\n";
}

GofReport goodness_of_fit(const ObservationSeries& series, int K, Alternative alternative, int B,
                          const FitConfig& config, const GofRunOptions& options) {
  if (B < kMinBootstrap) {
    std::ostringstream os;
    os << "bootstrap needs B >= " << kMinBootstrap << " (got " << B << ")";
    throw ValidationError(os.str());
  }
  const SeriesTest test = test_series(series, K, alternative == Alternative::nonpar, config);
  const BootstrapResult boot =
      bootstrap_critical_values(test.null_fit.model, series.size(), B, alternative, config, options);
  GofReport rep;
  rep.alternative = alternative;
  rep.K = K;
  rep.n = series.size();
  rep.statistic = test.statistic(alternative);
  rep.null_loglik = test.null_fit.loglik;
  rep.alt_loglik = alternative == Alternative::two_comp ? test.two_comp_fit.loglik : test.nonpar_fit->loglik;
  rep.critical_values = boot.critical_values;
  for (const auto& [level, cv] : boot.critical_values) rep.reject[level] = rep.statistic > cv;
  rep.B = B;
  rep.failures = boot.failures;
  rep.master_seed = options.seed;
  rep.seeds = boot.seeds;
  rep.bootstrap_statistics = boot.statistics;
  return rep;
}

}  // namespace nphmm
