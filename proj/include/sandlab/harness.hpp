#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "sandlab/topology.hpp"

namespace sandlab::harness {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "SANDLAB_OUT";

using Config = nlohmann::json;

struct CatalogEntry {
  std::string id;
  std::string title;
  std::string description;
};

/// The named experiments E1..E7 plus the shared property battery.
const std::vector<CatalogEntry>& list_experiments();
const CatalogEntry& catalog_entry(const std::string& id);  // throws on unknown id

/// One verified statement inside an experiment.
struct CheckLine {
  std::string name;
  bool pass = false;
  bool inconclusive = false;
  std::string detail;
};

struct OutputFile {
  std::string path;  // relative to the experiment output dir
  std::uint64_t bytes = 0;
  std::string digest;
};

struct ExperimentResult {
  std::string id;
  std::string title;
  std::vector<CheckLine> checks;
  std::vector<OutputFile> outputs;
  double wall_seconds = 0.0;

  bool all_passed() const;
  bool any_inconclusive() const;
};

struct RunResult {
  std::vector<ExperimentResult> experiments;
  std::filesystem::path out_dir;
  int exit_code = 0;  // 0 all passed, 2 inconclusive flags present, 1 failure/error
};

/// Built-in config for an experiment id ("E1".."E7", "properties", "all").
Config default_config(const std::string& id);

/// Loads a config from a JSON file, or falls back to the built-in config
/// when `spec` is a bare experiment id.
Config load_config(const std::string& spec);

/// Returns a list of problems, each naming the offending field; empty = valid.
std::vector<std::string> validate(const Config& config);

/// Executes the configured experiment(s), writes CSV/JSON outputs, a manifest
/// and a one-page summary under the output directory, and returns the checks.
RunResult run(const Config& config);

/// Toppling matrix of the configured volume in "i j value" coordinate text.
std::string export_matrix_text(const Config& config);

/// Parses a pattern description {"pattern": "...", ...}; `where` prefixes
/// error messages with the config path of the offending field.
topology::ClassPattern parse_pattern(const Config& node, const std::string& where);

}  // namespace sandlab::harness
