#include "nphmm/persistence.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace nphmm {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse " + what + " from '" + text + "'");
  }
  if (used != text.size()) throw ValidationError("cannot parse " + what + " from '" + text + "'");
  return v;
}

long long parse_integer(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse " + what + " from '" + text + "'");
  }
  if (used != text.size()) throw ValidationError("cannot parse " + what + " from '" + text + "'");
  return v;
}

std::uint64_t parse_unsigned(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse " + what + " from '" + text + "'");
  }
  if (used != text.size() || text.front() == '-')
    throw ValidationError("cannot parse " + what + " from '" + text + "'");
  return v;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_series_csv(const ObservationSeries& series, std::ostream& out) {
  const bool states = series.has_states();
  out << (states ? "t,y,state\n" : "t,y\n");
  for (std::size_t t = 0; t < series.size(); ++t) {
    out << (t + 1) << ',' << format_double(series.obs[t]);
    if (states) out << ',' << (series.states[t] + 1);
    out << '\n';
  }
}

void write_series_csv(const ObservationSeries& series, const std::string& path) {
  std::ostringstream os;
  write_series_csv(series, os);
  write_text_file(path, os.str());
}

ObservationSeries read_series_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("data file is empty");
  const auto header = split_commas(trim(line));
  bool with_states = false;
  if (header == std::vector<std::string>{"t", "y", "state"}) with_states = true;
  else if (header != std::vector<std::string>{"t", "y"})
    throw ValidationError("data header must be 't,y' or 't,y,state'");
  ObservationSeries series;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    ++row;
    const auto cells = split_commas(line);
    if (cells.size() != (with_states ? 3u : 2u)) {
      std::ostringstream os;
      os << "data row " << row << " has " << cells.size() << " fields";
      throw ValidationError(os.str());
    }
    const long long t = parse_integer(cells[0], "t");
    if (t != static_cast<long long>(row)) {
      std::ostringstream os;
      os << "data row " << row << " has t = " << t << ", expected " << row;
      throw ValidationError(os.str());
    }
    const double y = parse_double(cells[1], "y");
    if (!std::isfinite(y)) throw ValidationError("observations must be finite");
    series.obs.push_back(y);
    if (with_states) {
      const long long s = parse_integer(cells[2], "state");
      if (s < 1) throw ValidationError("states are 1-based positive integers");
      series.states.push_back(static_cast<int>(s - 1));
    }
  }
  if (series.obs.empty()) throw ValidationError("data file has no observations");
  return series;
}

ObservationSeries read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file '" + path + "'");
  return read_series_csv(in);
}

ModelFile make_model_file(const FitResult& fit, const std::string& mode, const FitConfig& config) {
  return ModelFile{fit.model,      mode,           fit.loglik,       fit.m_schedule, fit.permutation,
                   fit.converged,  fit.iterations, config.seed,      fit.series_hash, config_echo(config)};
}

std::string model_file_to_json(const ModelFile& file) {
  const HmmModel& m = file.model;
  nlohmann::ordered_json j;
  j["schema_version"] = ModelFile::kSchemaVersion;
  j["mode"] = file.mode;
  j["K"] = m.states();
  nlohmann::ordered_json gamma = nlohmann::ordered_json::array();
  for (int r = 0; r < m.states(); ++r) {
    std::vector<double> row;
    for (int c = 0; c < m.states(); ++c) row.push_back(m.gamma()(r, c));
    gamma.push_back(row);
  }
  j["gamma"] = gamma;
  std::vector<double> initial;
  for (int k = 0; k < m.states(); ++k) initial.push_back(m.initial()[k]);
  j["initial"] = initial;
  nlohmann::ordered_json states = nlohmann::ordered_json::array();
  for (int k = 0; k < m.states(); ++k) {
    const auto& mix = m.mixture(k);
    nlohmann::ordered_json s;
    std::vector<double> means, sds;
    for (const auto& c : mix.components()) {
      means.push_back(c.mean);
      sds.push_back(c.sd);
    }
    s["weights"] = std::vector<double>(mix.weights().begin(), mix.weights().end());
    s["means"] = means;
    s["sds"] = sds;
    states.push_back(s);
  }
  j["states"] = states;
  j["loglik"] = file.loglik;
  j["m_schedule"] = file.m_schedule;
  j["permutation"] = file.permutation;
  j["converged"] = file.converged;
  j["iterations"] = file.iterations;
  j["seed"] = file.seed;
  j["series_hash"] = file.series_hash;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : file.config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

ModelFile model_file_from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != ModelFile::kSchemaVersion)
      throw ValidationError("unsupported model file schema_version");
    const int K = j.at("K").get<int>();
    if (K < 1) throw ValidationError("model file K must be positive");
    const auto rows = j.at("gamma").get<std::vector<std::vector<double>>>();
    if (rows.size() != static_cast<std::size_t>(K)) throw ValidationError("gamma must have K rows");
    Matrix g(K, K);
    for (int r = 0; r < K; ++r) {
      if (rows[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(K))
        throw ValidationError("gamma rows must have K entries");
      for (int c = 0; c < K; ++c) g(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    const auto init = j.at("initial").get<std::vector<double>>();
    if (init.size() != static_cast<std::size_t>(K)) throw ValidationError("initial must have K entries");
    Vector lambda(K);
    for (int k = 0; k < K; ++k) lambda(k) = init[static_cast<std::size_t>(k)];
    const auto& states = j.at("states");
    if (!states.is_array() || states.size() != static_cast<std::size_t>(K))
      throw ValidationError("states must list K densities");
    std::vector<StateDensity> densities;
    for (const auto& s : states) {
      const auto w = s.at("weights").get<std::vector<double>>();
      const auto mu = s.at("means").get<std::vector<double>>();
      const auto sd = s.at("sds").get<std::vector<double>>();
      if (mu.size() != w.size() || sd.size() != w.size())
        throw ValidationError("weights, means and sds must have equal length");
      std::vector<GaussianComponent> comps;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(sd[i] > 0.0)) throw ValidationError("component sds must be positive");
        comps.push_back({mu[i], sd[i]});
      }
      densities.emplace_back(FiniteMixtureDensity(w, std::move(comps)));
    }
    ModelFile f{HmmModel(TransitionMatrix(g), ProbabilityVector(lambda), std::move(densities)),
                j.value("mode", std::string())};
    f.loglik = j.value("loglik", 0.0);
    f.m_schedule = j.value("m_schedule", std::vector<std::vector<int>>{});
    f.permutation = j.value("permutation", std::vector<int>{});
    f.converged = j.value("converged", false);
    f.iterations = j.value("iterations", 0);
    f.seed = j.value("seed", std::uint64_t{0});
    f.series_hash = j.value("series_hash", std::uint64_t{0});
    if (j.contains("config"))
      for (const auto& [k, v] : j.at("config").items()) f.config.emplace_back(k, v.get<std::string>());
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

void save_model_file(const ModelFile& file, const std::string& path) {
  write_text_file(path, model_file_to_json(file));
}

ModelFile load_model_file(const std::string& path) { return model_file_from_json(read_text_file(path)); }

RunConfig parse_run_config(std::istream& in) {
  RunConfig rc;
  std::optional<double> mean_lo, mean_hi, sd_lo, sd_hi;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << "config line " << lineno << " is not key=value";
      throw ValidationError(os.str());
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "max_iter") rc.fit.max_iter = static_cast<int>(parse_integer(value, key));
    else if (key == "rel_tol") rc.fit.rel_tol = parse_double(value, key);
    else if (key == "restarts") rc.fit.restarts = static_cast<int>(parse_integer(value, key));
    else if (key == "component_gain_tol") rc.fit.component_gain_tol = parse_double(value, key);
    else if (key == "max_components") rc.fit.max_components = static_cast<int>(parse_integer(value, key));
    else if (key == "sd_floor") rc.fit.sd_floor = parse_double(value, key);
    else if (key == "seed") rc.fit.seed = parse_unsigned(value, key);
    else if (key == "mean_lo") mean_lo = parse_double(value, key);
    else if (key == "mean_hi") mean_hi = parse_double(value, key);
    else if (key == "sd_lo") sd_lo = parse_double(value, key);
    else if (key == "sd_hi") sd_hi = parse_double(value, key);
    else if (key == "B") rc.B = static_cast<int>(parse_integer(value, key));
    else if (key == "jobs") rc.jobs = static_cast<int>(parse_integer(value, key));
    else throw ValidationError("unknown config key '" + key + "'");
  }
  const int box_keys = mean_lo.has_value() + mean_hi.has_value() + sd_lo.has_value() + sd_hi.has_value();
  if (box_keys != 0 && box_keys != 4)
    throw ValidationError("config must give all of mean_lo, mean_hi, sd_lo, sd_hi or none");
  if (box_keys == 4) {
    if (!(*mean_lo < *mean_hi) || !(*sd_lo > 0.0) || !(*sd_lo < *sd_hi))
      throw ValidationError("config parameter box is empty or has a nonpositive sd bound");
    rc.fit.theta_box = ThetaBox{*mean_lo, *mean_hi, *sd_lo, *sd_hi};
  }
  rc.fit.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  return parse_run_config(in);
}

std::vector<std::pair<std::string, std::string>> config_echo(const FitConfig& c) {
  std::vector<std::pair<std::string, std::string>> out{
      {"max_iter", std::to_string(c.max_iter)},
      {"rel_tol", format_double(c.rel_tol)},
      {"restarts", std::to_string(c.restarts)},
      {"component_gain_tol", format_double(c.component_gain_tol)},
      {"max_components", std::to_string(c.max_components)},
      {"sd_floor", format_double(c.sd_floor)},
      {"seed", std::to_string(c.seed)}};
  if (c.theta_box) {
    out.emplace_back("mean_lo", format_double(c.theta_box->mean_lo));
    out.emplace_back("mean_hi", format_double(c.theta_box->mean_hi));
    out.emplace_back("sd_lo", format_double(c.theta_box->sd_lo));
    out.emplace_back("sd_hi", format_double(c.theta_box->sd_hi));
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << content;
  out.close();
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace nphmm
