#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nphmm/core.hpp"
#include "nphmm/estimation.hpp"

namespace nphmm {

/// Header `t,y` or `t,y,state`; t and state are 1-based, y has 17
/// significant digits.
void write_series_csv(const ObservationSeries& series, std::ostream& out);
void write_series_csv(const ObservationSeries& series, const std::string& path);
ObservationSeries read_series_csv(std::istream& in);
ObservationSeries read_series_csv(const std::string& path);

/// Fitted model with its provenance, stored as JSON.
struct ModelFile {
  static constexpr int kSchemaVersion = 1;
  HmmModel model;
  std::string mode;
  double loglik = 0.0;
  std::vector<std::vector<int>> m_schedule;
  std::vector<int> permutation;
  bool converged = false;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::uint64_t series_hash = 0;
  /// key=value echo of the configuration used for the fit.
  std::vector<std::pair<std::string, std::string>> config;
};

ModelFile make_model_file(const FitResult& fit, const std::string& mode, const FitConfig& config);
std::string model_file_to_json(const ModelFile& file);
/// Throws ValidationError on schema or content problems.
ModelFile model_file_from_json(const std::string& text);
void save_model_file(const ModelFile& file, const std::string& path);
ModelFile load_model_file(const std::string& path);

/// Run settings read from a flat key=value file. Keys: max_iter, rel_tol,
/// restarts, component_gain_tol, max_components, sd_floor, seed, mean_lo,
/// mean_hi, sd_lo, sd_hi (all four box keys or none), B, jobs. `#` starts a
/// comment.
struct RunConfig {
  FitConfig fit;
  std::optional<int> B;
  std::optional<int> jobs;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);
std::vector<std::pair<std::string, std::string>> config_echo(const FitConfig& config);

/// Writes `content` to `path`; throws ValidationError when unwritable.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace nphmm
