#include "nphmm/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nphmm/core.hpp"
#include "nphmm/estimation.hpp"
#include "nphmm/gof.hpp"
#include "nphmm/identification.hpp"
#include "nphmm/likelihood.hpp"
#include "nphmm/persistence.hpp"
#include "nphmm/reproduce.hpp"
#include "nphmm/scenarios.hpp"

namespace nphmm::cli {

namespace {

struct Options {
  std::string scenario;
  std::string model;
  std::string data;
  std::string mode = "nonpar";
  std::string alt = "nonpar";
  std::string config;
  std::string out;
  std::vector<std::string> counterexample;
  std::size_t n = 0;
  int K = 0;
  int T = -1;
  int reps = 0;
  int B = 0;
  int jobs = 0;
  std::uint64_t seed = 1;
  bool seed_given = false;
};

std::string yes_no(bool b) { return b ? "yes" : "no"; }

std::string num(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

RunConfig run_config(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed_given) rc.fit.seed = o.seed;
  return rc;
}

int jobs_for(const Options& o, const RunConfig& rc) {
  if (o.jobs != 0) return o.jobs;
  return rc.jobs.value_or(0);
}

void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") out << content;
  else write_text_file(path, content);
}

HmmModel model_source(const Options& o, std::string& label) {
  if (!o.model.empty() && !o.scenario.empty()) throw ValidationError("give either --model or --scenario, not both");
  if (!o.model.empty()) {
    label = o.model;
    return load_model_file(o.model).model;
  }
  const std::string name = o.scenario.empty() ? "scenario-a" : o.scenario;
  label = name;
  return scenario_by_name(name).truth;
}

void describe_fit(const FitResult& fit, const std::string& mode, std::ostream& out) {
  const HmmModel& m = fit.model;
  out << "mode: " << mode << "\n"
      << "K: " << m.states() << "\n"
      << "loglik: " << std::setprecision(12) << fit.loglik << "\n"
      << "converged: " << yes_no(fit.converged) << " after " << fit.iterations << " iterations\n"
      << "support sizes:";
  for (int s : m.support_sizes()) out << ' ' << s;
  out << "\nm schedule:";
  for (const auto& stage : fit.m_schedule) {
    out << " (";
    for (std::size_t i = 0; i < stage.size(); ++i) out << (i ? "," : "") << stage[i];
    out << ")";
  }
  out << "\ngamma:\n";
  for (int j = 0; j < m.states(); ++j) {
    out << " ";
    for (int k = 0; k < m.states(); ++k) out << ' ' << std::setprecision(4) << std::fixed << m.gamma()(j, k);
    out << std::defaultfloat << "\n";
  }
  for (int k = 0; k < m.states(); ++k)
    out << "state " << (k + 1) << ": mean " << num(mean(m.density(k))) << ", sd " << num(sd(m.density(k)))
        << ", components " << m.mixture(k).support_size() << "\n";
}

int cmd_simulate(const Options& o, std::ostream& out) {
  if (o.n < 1) throw ValidationError("--n must be at least 1");
  std::string label;
  const HmmModel model = model_source(o, label);
  const ObservationSeries series = simulate(model, o.n, o.seed);
  std::ostringstream csv;
  write_series_csv(series, csv);
  emit(o.out, csv.str(), out);
  if (!o.out.empty() && o.out != "-")
    out << "simulated " << o.n << " observations from " << label << " (seed " << o.seed << ") into " << o.out
        << "\n";
  return kExitOk;
}

int cmd_fit(const Options& o, std::ostream& out) {
  if (o.data.empty()) throw ValidationError("--data is required");
  if (o.K < 1) throw ValidationError("--K must be at least 1");
  const RunConfig rc = run_config(o);
  const ObservationSeries series = read_series_csv(o.data);
  FitResult fit = [&] {
    if (o.mode == "gauss") return fit_null(series, o.K, rc.fit);
    if (o.mode == "two-comp") return fit_two_comp(series, fit_null(series, o.K, rc.fit), rc.fit);
    if (o.mode == "nonpar") return npmle_fit(series, o.K, rc.fit);
    throw ValidationError("--mode must be gauss, two-comp or nonpar");
  }();
  if (!o.out.empty()) save_model_file(make_model_file(fit, o.mode, rc.fit), o.out);
  describe_fit(fit, o.mode, out);
  if (!o.out.empty()) out << "model file: " << o.out << "\n";
  return kExitOk;
}

std::pair<double, double> parse_counterexample(const std::vector<std::string>& tokens) {
  double delta = 0.3, beta = 0.6;
  for (const auto& raw : tokens) {
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("counterexample settings are delta=<x> beta=<y>");
      const std::string key = item.substr(0, eq);
      const double v = std::stod(item.substr(eq + 1));
      if (key == "delta") delta = v;
      else if (key == "beta") beta = v;
      else throw ValidationError("unknown counterexample key '" + key + "'");
    }
  }
  return {delta, beta};
}

void report_counterexample(const Options& o, std::ostream& out) {
  const auto [delta, beta] = parse_counterexample(o.counterexample);
  Matrix g(2, 2);
  g << 0.8, 0.2, 0.3, 0.7;
  const std::vector<FiniteMixtureDensity> base{FiniteMixtureDensity::gaussian(-3.0, 1.0),
                                               FiniteMixtureDensity::gaussian(0.0, 1.0),
                                               FiniteMixtureDensity::gaussian(3.0, 1.0)};
  const auto [a, b] = rank_deficient_counterexample(TransitionMatrix(g), delta, beta, base);
  const ValidationReport va = validate_model(a);
  out << "counterexample: delta = " << delta << ", beta = " << beta
      << ", split p = " << num(counterexample_split(delta, beta)) << "\n"
      << "states: " << a.states() << " (base chain with 2 states)\n"
      << "full rank: " << yes_no(va.full_rank) << " (smallest singular value " << num(va.smallest_singular_value)
      << ")\n"
      << "ergodic: " << yes_no(va.ergodic) << "\n";
  const std::vector<double> points{-4.0, -1.5, 0.0, 1.5, 4.0};
  double worst = 0.0;
  for (int L = 1; L <= 4; ++L) {
    const double gap = max_joint_cdf_gap(a, b, L, points);
    worst = std::max(worst, gap);
    out << "joint law gap, L = " << L << ": " << num(gap, 3) << "\n";
  }
  out << "joint laws agree: " << yes_no(worst < 1e-10) << "\n";
  try {
    const EvaluationGrid grid = find_full_rank_grid(a, a.states() - 1, default_candidate_pool(a, a.states() - 1));
    out << "grid search: unexpectedly found a full-rank grid\n";
  } catch (const GridSearchError& e) {
    out << "grid search: no full-rank grid (best sigma_min A_1 = " << num(e.best_a1(), 3)
        << ", A_2 = " << num(e.best_a2(), 3) << ")\n";
  }
}

int cmd_identify(const Options& o, std::ostream& out) {
  out << "identification report\n";
  if (!o.counterexample.empty()) {
    report_counterexample(o, out);
    return kExitOk;
  }
  std::string label;
  const HmmModel model = model_source(o, label);
  const int K = model.states();
  out << "source: " << label << "\n" << "K: " << K << "\n";
  const ValidationReport v = validate_model(model);
  out << "full rank: " << yes_no(v.full_rank) << " (smallest singular value " << num(v.smallest_singular_value)
      << ")\n"
      << "ergodic: " << yes_no(v.ergodic) << " (irreducible " << yes_no(v.irreducible) << ", aperiodic "
      << yes_no(v.aperiodic) << ")\n"
      << "densities distinct: " << yes_no(v.densities_distinct) << "\n"
      << "identification window T = " << required_window(K) << "\n";
  if (v.ergodic)
    out << "primitivity exponent t0 = " << K * K - 2 * K + 2
        << ", Gamma^t0 positive: " << yes_no(primitivity_exponent_check(model.gamma())) << "\n";
  if (!v.ok()) {
    out << "assumptions fail; grid search and recovery skipped\n";
    return kExitOk;
  }
  const int T = o.T >= 0 ? o.T : K - 1;
  EvaluationGrid grid;
  try {
    grid = find_full_rank_grid(model, T, default_candidate_pool(model, T), o.jobs);
  } catch (const GridSearchError& e) {
    out << "grid search at T = " << T << ": failed (" << e.what() << ")\n";
    return kExitOk;
  }
  const GridQuality q = grid_quality(model, grid);
  out << "grid search at T = " << T << ": sigma_min A_1 = " << num(q.sigma_min_a1)
      << ", sigma_min A_2 = " << num(q.sigma_min_a2) << "\n";
  const KruskalReport kr = verify_kruskal_condition(model, grid);
  out << "Kruskal ranks: M1 = " << kr.rank_m1 << ", M2 = " << kr.rank_m2 << ", M3 = " << kr.rank_m3
      << " (sum " << kr.sum() << ", required " << kr.required << "): " << (kr.holds ? "holds" : "fails");
  if (!kr.failing.empty()) {
    out << " [";
    for (std::size_t i = 0; i < kr.failing.size(); ++i) out << (i ? ", " : "") << kr.failing[i];
    out << "]";
  }
  out << "\n";
  if (!kr.note.empty()) out << "note: " << kr.note << "\n";
  const ThreeWayArray array = build_threeway(model, grid);
  try {
    const SpectralRecovery rec = spectral_recover(array, K);
    const RecoveryCheck chk = compare_recovery(rec, model, grid);
    out << "spectral recovery: gamma error " << num(chk.gamma_error, 3) << ", F error " << num(chk.f_error, 3)
        << ", pi error " << num(chk.pi_error, 3) << "\n"
        << "recovery error: " << num(chk.max_error(), 3) << "\n";
  } catch (const SpectralError& e) {
    out << "spectral recovery refused: " << e.what() << "\n";
  }
  return kExitOk;
}

int cmd_gof(const Options& o, std::ostream& out) {
  if (o.data.empty()) throw ValidationError("--data is required");
  if (o.K < 1) throw ValidationError("--K must be at least 1");
  const RunConfig rc = run_config(o);
  const int B = o.B > 0 ? o.B : rc.B.value_or(200);
  const ObservationSeries series = read_series_csv(o.data);
  const auto start = std::chrono::steady_clock::now();
  const GofReport rep = goodness_of_fit(series, o.K, parse_alternative(o.alt), B, rc.fit,
                                        GofRunOptions{o.seed, jobs_for(o, rc)});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.out.empty() && o.out != "-") write_text_file(o.out, rep.to_json());
  out << "statistic: " << num(rep.statistic) << "\n";
  for (const auto& [level, cv] : rep.critical_values)
    out << "level " << num(level, 2) << ": critical value " << num(cv) << ", "
        << (rep.reject.at(level) ? "reject" : "retain") << "\n";
  out << "bootstrap replications: " << rep.B << " (failures " << rep.failures << ")\n"
      << "runtime seconds: " << num(seconds, 4) << "\n";
  if (o.out == "-") out << rep.to_json();
  return kExitOk;
}

int cmd_reproduce(const Options& o, std::ostream& out) {
  if (o.scenario.empty()) throw ValidationError("--scenario is required");
  const ScenarioSpec spec = scenario_by_name(o.scenario);
  const RunConfig rc = run_config(o);
  const std::size_t n = o.n > 0 ? o.n : spec.n;
  const int reps = o.reps > 0 ? o.reps : spec.replications;
  if (reps < 10) throw ValidationError("--reps must be at least 10");
  const ReproduceResult res = reproduce(spec, n, reps, o.seed, rc.fit, jobs_for(o, rc));
  const std::string rel = res.relative.to_csv();
  const std::string tr = res.transition.to_csv();
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    write_text_file((std::filesystem::path(o.out) / (spec.name + "_relative_errors.csv")).string(), rel);
    write_text_file((std::filesystem::path(o.out) / (spec.name + "_transition_errors.csv")).string(), tr);
  }
  out << "relative errors (x100), " << spec.name << ", n = " << n << ", replications = " << reps << "\n"
      << rel << "\ntransition errors (x100)\n" << tr;
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonparametric hidden Markov models: simulation, estimation, identification and testing"};
  app.require_subcommand(1);
  Options o;
  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Master seed")->each([&](const std::string&) { o.seed_given = true; });
  };

  CLI::App* sim = app.add_subcommand("simulate", "Simulate a series from a scenario or model file");
  sim->add_option("--scenario", o.scenario, "scenario-a or scenario-b");
  sim->add_option("--model", o.model, "Model file (JSON)");
  sim->add_option("--n", o.n, "Series length")->required();
  seed_opt(sim);
  sim->add_option("--out", o.out, "Output CSV (default: standard output)");

  CLI::App* fit = app.add_subcommand("fit", "Fit a K-state model to a data file");
  fit->add_option("--data", o.data, "Data CSV")->required();
  fit->add_option("--K", o.K, "Number of states")->required();
  fit->add_option("--mode", o.mode, "gauss, two-comp or nonpar");
  fit->add_option("--config", o.config, "key=value config file");
  seed_opt(fit);
  fit->add_option("--out", o.out, "Model file to write");

  CLI::App* ident = app.add_subcommand("identify", "Audit identifiability of a model");
  ident->add_option("--model", o.model, "Model file (JSON)");
  ident->add_option("--scenario", o.scenario, "Use a scenario truth instead of a model file");
  ident->add_option("--counterexample", o.counterexample, "Rank-deficient construction: delta=<x> beta=<y>")
      ->expected(1, 2);
  ident->add_option("--T", o.T, "Block length (default K - 1)");
  ident->add_option("--jobs", o.jobs, "Worker threads");

  CLI::App* gof = app.add_subcommand("gof", "Bootstrap likelihood-ratio goodness-of-fit test");
  gof->add_option("--data", o.data, "Data CSV")->required();
  gof->add_option("--K", o.K, "Number of states")->required();
  gof->add_option("--alt", o.alt, "two-comp or nonpar");
  gof->add_option("--B", o.B, "Bootstrap replications (>= 100)");
  seed_opt(gof);
  gof->add_option("--jobs", o.jobs, "Worker threads (default: all cores)");
  gof->add_option("--config", o.config, "key=value config file");
  gof->add_option("--out", o.out, "Report file (JSON)");

  CLI::App* rep = app.add_subcommand("reproduce", "Relative-error and transition-error tables");
  rep->add_option("--scenario", o.scenario, "scenario-a or scenario-b")->required();
  rep->add_option("--n", o.n, "Series length");
  rep->add_option("--reps", o.reps, "Replications (>= 10)");
  seed_opt(rep);
  rep->add_option("--jobs", o.jobs, "Worker threads (default: all cores)");
  rep->add_option("--config", o.config, "key=value config file");
  rep->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*sim) return cmd_simulate(o, out);
    if (*fit) return cmd_fit(o, out);
    if (*ident) return cmd_identify(o, out);
    if (*gof) return cmd_gof(o, out);
    if (*rep) return cmd_reproduce(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FitError& e) {
    err << "fit failure: " << e.what() << "\n";
    return kExitFit;
  } catch (const GuardError& e) {
    err << "refused: " << e.what() << "\n";
    return kExitGuard;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace nphmm::cli
