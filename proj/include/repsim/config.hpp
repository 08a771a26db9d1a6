#pragma once

#include "repsim/sim.hpp"
#include "repsim/tomography.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace repsim {

// Configuration problem with a field-level diagnostic; the CLI maps it to
// exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RunMode { Memory, NoMemory, Both };

std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string& token);

struct TomoSettings {
  double n_expected = 1000.0;
  int bootstrap = 200;
  ReconstructionOptions options;
  // Basis tokens like "HD"; empty means the standard 16-basis set.
  std::vector<std::string> bases;

  std::vector<MeasurementBasis> basis_set() const;
};

// Full tool configuration: one JSON document with sections
// {params, decay, sim, tomo}. Defaults reproduce the experimental operating
// point, so an empty document `{}` is a valid config.
struct ToolConfig {
  SimConfig sim;                 // params + decay + run controls
  RunMode run_mode = RunMode::Memory;
  std::vector<double> p_grid = {0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008};
  TomoSettings tomo;

  void validate() const;
};

ToolConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ToolConfig& config);

ToolConfig load_config_text(const std::string& text);
ToolConfig load_config_file(const std::string& path);

} // namespace repsim
