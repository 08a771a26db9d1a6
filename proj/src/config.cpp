#include "repsim/config.hpp"

#include "repsim/csv.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <set>

namespace repsim {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& section, const std::string& message) {
  throw ConfigError("config section '" + section + "': " + message);
}

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(section, "expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) fail(section, "unknown key '" + key + "'");
  }
}

double get_number(const json& obj, const std::string& section, const std::string& key,
                  double fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(section, "field '" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t get_integer(const json& obj, const std::string& section, const std::string& key,
                         std::int64_t fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(section, "field '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

bool get_bool(const json& obj, const std::string& section, const std::string& key, bool fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(section, "field '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& section, const std::string& key,
                       const std::string& fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) fail(section, "field '" + key + "' must be a string");
  return v.get<std::string>();
}

constexpr double kDegToRad = M_PI / 180.0;

void parse_params(const json& obj, ProtocolParams& p) {
  const std::string sec = "params";
  check_keys(obj, sec,
             {"p", "chi", "eps_s_fiber", "eps_s_trans", "eps_s_det", "eta2_eps_i", "eta3_eps_i",
              "extra_idler", "idler_fit", "trial_us", "max_trials", "pump_period",
              "pump_duration_us", "duty_cycle"});
  p.p = get_number(obj, sec, "p", p.p);
  if (obj.contains("chi") && !obj.at("chi").is_null()) {
    if (!obj.at("chi").is_number()) fail(sec, "field 'chi' must be a number");
    p.chi = obj.at("chi").get<double>();
  }
  p.eps_s_fiber = get_number(obj, sec, "eps_s_fiber", p.eps_s_fiber);
  p.eps_s_trans = get_number(obj, sec, "eps_s_trans", p.eps_s_trans);
  p.eps_s_det = get_number(obj, sec, "eps_s_det", p.eps_s_det);
  p.eta2_eps_i = get_number(obj, sec, "eta2_eps_i", p.eta2_eps_i);
  p.eta3_eps_i = get_number(obj, sec, "eta3_eps_i", p.eta3_eps_i);
  p.extra_idler = get_number(obj, sec, "extra_idler", p.extra_idler);
  p.idler_fit = get_number(obj, sec, "idler_fit", p.idler_fit);
  p.trial_s = get_number(obj, sec, "trial_us", p.trial_s * 1e6) * 1e-6;
  p.max_trials = static_cast<int>(get_integer(obj, sec, "max_trials", p.max_trials));
  p.pump_period = static_cast<int>(get_integer(obj, sec, "pump_period", p.pump_period));
  p.pump_duration_s = get_number(obj, sec, "pump_duration_us", p.pump_duration_s * 1e6) * 1e-6;
  p.duty_cycle = get_number(obj, sec, "duty_cycle", p.duty_cycle);
}

void parse_decay(const json& obj, MemoryDecayModel& d) {
  const std::string sec = "decay";
  check_keys(obj, sec, {"model", "tau_short_ms", "tau_long2_ms", "tau_long3_ms", "coherence_tau_ms"});
  const std::string model = get_string(obj, sec, "model", "calibrated");
  if (model == "calibrated") {
    d = MemoryDecayModel::calibrated();
  } else if (model == "none") {
    d = MemoryDecayModel::none();
  } else {
    fail(sec, "field 'model' must be 'calibrated' or 'none', got '" + model + "'");
  }
  d.tau_short_s = get_number(obj, sec, "tau_short_ms", d.tau_short_s * 1e3) * 1e-3;
  d.tau_long2_s = get_number(obj, sec, "tau_long2_ms", d.tau_long2_s * 1e3) * 1e-3;
  d.tau_long3_s = get_number(obj, sec, "tau_long3_ms", d.tau_long3_s * 1e3) * 1e-3;
  d.coherence_tau_s = get_number(obj, sec, "coherence_tau_ms", d.coherence_tau_s * 1e3) * 1e-3;
}

void parse_sim(const json& obj, ToolConfig& cfg) {
  const std::string sec = "sim";
  check_keys(obj, sec,
             {"master_seed", "rounds", "max_sim_seconds", "mode", "phase_drift_rad_per_s",
              "record_states", "phi1_deg", "phi2_deg", "werner_coeff", "load_dead_ms", "threads",
              "p_grid"});
  SimConfig& s = cfg.sim;
  const auto seed = get_integer(obj, sec, "master_seed", static_cast<std::int64_t>(s.master_seed));
  s.master_seed = static_cast<std::uint64_t>(seed);
  const auto rounds = get_integer(obj, sec, "rounds", static_cast<std::int64_t>(s.rounds));
  if (rounds <= 0) fail(sec, "field 'rounds' must be positive");
  s.rounds = static_cast<std::uint64_t>(rounds);
  if (obj.contains("max_sim_seconds") && !obj.at("max_sim_seconds").is_null()) {
    if (!obj.at("max_sim_seconds").is_number()) fail(sec, "field 'max_sim_seconds' must be a number");
    s.max_sim_seconds = obj.at("max_sim_seconds").get<double>();
  }
  cfg.run_mode = parse_run_mode(get_string(obj, sec, "mode", to_string(cfg.run_mode)));
  s.phase_drift = get_number(obj, sec, "phase_drift_rad_per_s", s.phase_drift);
  s.record_states = get_bool(obj, sec, "record_states", s.record_states);
  s.phi1 = get_number(obj, sec, "phi1_deg", s.phi1 / kDegToRad) * kDegToRad;
  s.phi2 = get_number(obj, sec, "phi2_deg", s.phi2 / kDegToRad) * kDegToRad;
  s.werner_coeff = get_number(obj, sec, "werner_coeff", s.werner_coeff);
  s.load_dead_s = get_number(obj, sec, "load_dead_ms", s.load_dead_s * 1e3) * 1e-3;
  s.threads = static_cast<int>(get_integer(obj, sec, "threads", s.threads));
  if (obj.contains("p_grid") && !obj.at("p_grid").is_null()) {
    const json& grid = obj.at("p_grid");
    if (!grid.is_array()) fail(sec, "field 'p_grid' must be an array of numbers");
    cfg.p_grid.clear();
    for (const auto& v : grid) {
      if (!v.is_number()) fail(sec, "field 'p_grid' must contain only numbers");
      cfg.p_grid.push_back(v.get<double>());
    }
  }
}

void parse_tomo(const json& obj, TomoSettings& t) {
  const std::string sec = "tomo";
  check_keys(obj, sec,
             {"n_expected", "bootstrap", "dilution", "plain_iteration", "max_iterations",
              "loglik_tol", "bases"});
  t.n_expected = get_number(obj, sec, "n_expected", t.n_expected);
  t.bootstrap = static_cast<int>(get_integer(obj, sec, "bootstrap", t.bootstrap));
  t.options.dilution = get_number(obj, sec, "dilution", t.options.dilution);
  t.options.plain_iteration = get_bool(obj, sec, "plain_iteration", t.options.plain_iteration);
  t.options.max_iterations =
      static_cast<int>(get_integer(obj, sec, "max_iterations", t.options.max_iterations));
  t.options.loglik_tol = get_number(obj, sec, "loglik_tol", t.options.loglik_tol);
  if (obj.contains("bases") && !obj.at("bases").is_null()) {
    const json& bases = obj.at("bases");
    if (!bases.is_array()) fail(sec, "field 'bases' must be an array of two-letter tokens");
    t.bases.clear();
    for (const auto& v : bases) {
      if (!v.is_string()) fail(sec, "field 'bases' must contain strings");
      t.bases.push_back(v.get<std::string>());
    }
  }
}

} // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Memory: return "memory";
    case RunMode::NoMemory: return "no-memory";
    case RunMode::Both: return "both";
  }
  throw std::logic_error("unreachable run mode");
}

RunMode parse_run_mode(const std::string& token) {
  if (token == "memory") return RunMode::Memory;
  if (token == "no-memory") return RunMode::NoMemory;
  if (token == "both") return RunMode::Both;
  throw ConfigError("mode must be one of memory/no-memory/both, got '" + token + "'");
}

std::vector<MeasurementBasis> TomoSettings::basis_set() const {
  if (bases.empty()) return standard_bases();
  std::vector<MeasurementBasis> out;
  out.reserve(bases.size());
  for (const auto& token : bases) {
    if (token.size() != 2)
      throw ConfigError("tomo basis token must be two letters, got '" + token + "'");
    out.push_back(MeasurementBasis::parse(token.substr(0, 1), token.substr(1, 1)));
  }
  return out;
}

void ToolConfig::validate() const {
  try {
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (double p : p_grid) {
    if (!(p > 0.0) || p > 1.0) throw ConfigError("config: p_grid values must be in (0,1]");
  }
  if (tomo.n_expected <= 0.0) throw ConfigError("config section 'tomo': n_expected must be positive");
  if (tomo.bootstrap < 100) throw ConfigError("config section 'tomo': bootstrap must be >= 100");
  if (tomo.options.max_iterations < 1)
    throw ConfigError("config section 'tomo': max_iterations must be positive");
  (void)tomo.basis_set();  // validates basis tokens
}

ToolConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "params" && key != "decay" && key != "sim" && key != "tomo")
      throw ConfigError("config: unknown section '" + key + "'");
  }
  ToolConfig cfg;
  if (doc.contains("params")) parse_params(doc.at("params"), cfg.sim.params);
  if (doc.contains("decay")) parse_decay(doc.at("decay"), cfg.sim.decay);
  if (doc.contains("sim")) parse_sim(doc.at("sim"), cfg);
  if (doc.contains("tomo")) parse_tomo(doc.at("tomo"), cfg.tomo);
  cfg.validate();
  return cfg;
}

json config_to_json(const ToolConfig& cfg) {
  json params{
      {"p", cfg.sim.params.p},
      {"eps_s_fiber", cfg.sim.params.eps_s_fiber},
      {"eps_s_trans", cfg.sim.params.eps_s_trans},
      {"eps_s_det", cfg.sim.params.eps_s_det},
      {"eta2_eps_i", cfg.sim.params.eta2_eps_i},
      {"eta3_eps_i", cfg.sim.params.eta3_eps_i},
      {"extra_idler", cfg.sim.params.extra_idler},
      {"idler_fit", cfg.sim.params.idler_fit},
      {"trial_us", cfg.sim.params.trial_s * 1e6},
      {"max_trials", cfg.sim.params.max_trials},
      {"pump_period", cfg.sim.params.pump_period},
      {"pump_duration_us", cfg.sim.params.pump_duration_s * 1e6},
      {"duty_cycle", cfg.sim.params.duty_cycle},
  };
  if (cfg.sim.params.chi) params["chi"] = *cfg.sim.params.chi;

  const MemoryDecayModel& d = cfg.sim.decay;
  json decay{
      {"model", d.retrieval_decay || d.coherence_decay ? "calibrated" : "none"},
      {"tau_short_ms", d.tau_short_s * 1e3},
      {"tau_long2_ms", d.tau_long2_s * 1e3},
      {"tau_long3_ms", d.tau_long3_s * 1e3},
      {"coherence_tau_ms", d.coherence_tau_s * 1e3},
  };

  json sim{
      {"master_seed", cfg.sim.master_seed},
      {"rounds", cfg.sim.rounds},
      {"mode", to_string(cfg.run_mode)},
      {"phase_drift_rad_per_s", cfg.sim.phase_drift},
      {"record_states", cfg.sim.record_states},
      {"phi1_deg", cfg.sim.phi1 / kDegToRad},
      {"phi2_deg", cfg.sim.phi2 / kDegToRad},
      {"werner_coeff", cfg.sim.werner_coeff},
      {"load_dead_ms", cfg.sim.load_dead_s * 1e3},
      {"threads", cfg.sim.threads},
      {"p_grid", cfg.p_grid},
  };
  if (std::isfinite(cfg.sim.max_sim_seconds)) sim["max_sim_seconds"] = cfg.sim.max_sim_seconds;

  json tomo{
      {"n_expected", cfg.tomo.n_expected},
      {"bootstrap", cfg.tomo.bootstrap},
      {"dilution", cfg.tomo.options.dilution},
      {"plain_iteration", cfg.tomo.options.plain_iteration},
      {"max_iterations", cfg.tomo.options.max_iterations},
      {"loglik_tol", cfg.tomo.options.loglik_tol},
  };
  if (!cfg.tomo.bases.empty()) tomo["bases"] = cfg.tomo.bases;

  return json{{"params", params}, {"decay", decay}, {"sim", sim}, {"tomo", tomo}};
}

ToolConfig load_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

ToolConfig load_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return load_config_text(text);
}

} // namespace repsim
