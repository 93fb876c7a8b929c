#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "fbsde/drivers.hpp"

namespace fbsde {

using Json = nlohmann::ordered_json;

struct GridSettings {
  double t0 = 0.0;
  double t_end = 8.0;
  int n_steps = 400;
};

struct McSettings {
  int n_paths = 2000;
  std::uint64_t seed = 1;
};

// One experiment: a target module plus its payload.
struct Scenario {
  std::string name;
  std::string target;  // forward|backward|coupled|lqgame|calculus|drivers
  GridSettings grid;
  McSettings mc;
  double hurst = 0.75;
  double K = 0.0;
  Eigen::MatrixXd generator;  // defaults to the one-state chain
  int start_regime = 0;       // 0-based internally
  Json coefficients;          // interpreted per target
  std::vector<std::string> checks;
  bool emit_paths = false;
};

Scenario parse_scenario(const Json& doc);
Scenario parse_problem(const std::string& path);  // reads a JSON file

struct Artifact {
  std::string name;  // e.g. "paths", "trace"
  std::string ext;   // "csv" or "json"
  std::string data;
};

struct RunReport {
  std::string scenario;
  Json summary;  // stable-key-ordered
  std::vector<Artifact> artifacts;
  bool all_checks_passed = true;
  double wall_seconds = 0.0;  // reported on the console, not in the summary
};

RunReport run_scenario(const Scenario& s);

// Writes <scenario>.<artifact>.<ext> plus <scenario>.summary.json into
// out_dir and returns the list of files written.
std::vector<std::string> emit_results(const RunReport& report,
                                      const std::string& format,
                                      const std::string& out_dir);

std::vector<std::string> builtin_names();
Scenario builtin_scenario(const std::string& name);

}  // namespace fbsde
