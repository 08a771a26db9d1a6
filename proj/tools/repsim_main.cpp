// Command-line front end: analytic tables, protocol simulation, parameter
// sweeps and state tomography, emitted as plot-ready CSV/JSON with a run
// manifest per invocation.

#include "repsim/analytic.hpp"
#include "repsim/config.hpp"
#include "repsim/csv.hpp"
#include "repsim/manifest.hpp"
#include "repsim/sim.hpp"
#include "repsim/tomography.hpp"
#include "repsim/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using namespace repsim;
using nlohmann::json;

constexpr const char* kSeedEnvVar = "REPSIM_SEED";

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_flag;
  std::optional<std::string> mode_flag;
  std::optional<std::uint64_t> rounds_flag;
  bool verbose = false;

  std::string counts_path;     // tomo
  std::string synthesize;      // tomo
  std::optional<int> bootstrap_flag;
  std::string from_manifest;
};

ToolConfig effective_config(const CliOptions& opts, bool seed_from_env_allowed = true) {
  ToolConfig cfg;
  if (!opts.config_path.empty()) cfg = load_config_file(opts.config_path);
  if (seed_from_env_allowed) {
    if (const char* env = std::getenv(kSeedEnvVar)) {
      try {
        cfg.sim.master_seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("environment ") + kSeedEnvVar + " is not an integer: " + env);
      }
    }
  }
  if (opts.seed_flag) cfg.sim.master_seed = *opts.seed_flag;
  if (opts.mode_flag) cfg.run_mode = parse_run_mode(*opts.mode_flag);
  if (opts.rounds_flag) {
    if (*opts.rounds_flag == 0) throw ConfigError("--rounds must be positive");
    cfg.sim.rounds = *opts.rounds_flag;
  }
  if (opts.bootstrap_flag) cfg.tomo.bootstrap = *opts.bootstrap_flag;
  cfg.validate();
  return cfg;
}

// --- CSV helpers -------------------------------------------------------------

std::string histogram_csv(const Histogram& hist, const std::string& unit) {
  CsvWriter csv({"bin_lo_" + unit, "bin_hi_" + unit, "count"});
  const auto& bins = hist.bins();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i] == 0) continue;
    csv.cell(static_cast<double>(i) * hist.bin_width())
        .cell(static_cast<double>(i + 1) * hist.bin_width())
        .cell(bins[i]);
    csv.end_row();
  }
  return csv.str();
}

const std::vector<std::string> kStatsColumns = {
    "mode", "p", "rounds", "fourfold_count", "simulated_time_s", "active_time_s",
    "rate_per_s", "rate_err_per_s", "mean_prep_us", "mean_prep_err_us", "mean_storage_us",
    "mean_storage_err_us", "mean_repetitions", "mean_repetitions_err", "idler2_detected",
    "idler3_detected", "both_idlers", "bell_phi_plus", "bell_phi_minus", "bell_psi_plus",
    "bell_psi_minus", "mean_final_fidelity", "budget_exhausted"};

void stats_row(CsvWriter& csv, const std::string& mode, double p, const SimStats& s) {
  csv.cell(mode)
      .cell(p)
      .cell(s.rounds_completed)
      .cell(s.fourfold_count)
      .cell(s.simulated_time_s)
      .cell(s.active_time_s)
      .cell(s.fourfold_rate_per_s())
      .cell(s.fourfold_rate_err_per_s())
      .cell(s.mean_prep_time_s * 1e6)
      .cell(s.prep_time_err_s * 1e6)
      .cell(s.mean_storage_time_s * 1e6)
      .cell(s.storage_time_err_s * 1e6)
      .cell(s.mean_repetitions)
      .cell(s.repetitions_err)
      .cell(s.idler2_detected)
      .cell(s.idler3_detected)
      .cell(s.both_idlers)
      .cell(s.bell_outcomes[0])
      .cell(s.bell_outcomes[1])
      .cell(s.bell_outcomes[2])
      .cell(s.bell_outcomes[3])
      .cell(s.mean_final_fidelity)
      .cell(s.budget_exhausted ? 1 : 0);
  csv.end_row();
}

void emit_stats_histograms(ManifestWriter& out, const std::string& prefix, const SimStats& s) {
  out.emit(prefix + "_storage_hist.csv", histogram_csv(s.storage_us, "us"));
  out.emit(prefix + "_time_cost_hist.csv", histogram_csv(s.time_cost_us, "us"));
  out.emit(prefix + "_repetition_hist.csv", histogram_csv(s.repetitions, "count"));
  out.emit(prefix + "_step1_trials_hist.csv", histogram_csv(s.step1_trials, "trial"));
  out.emit(prefix + "_step2_trials_hist.csv", histogram_csv(s.step2_trials, "trial"));
  if (!s.fidelity_trace.empty()) {
    CsvWriter csv({"storage_bin_center_us", "mean_fidelity", "count"});
    for (const auto& bin : s.fidelity_trace) {
      csv.cell(bin.storage_us).cell(bin.mean_fidelity).cell(bin.count);
      csv.end_row();
    }
    out.emit(prefix + "_fidelity_trace.csv", csv.str());
  }
}

std::string legend_text() {
  return
      "analytic.csv: expected times and rates per excitation probability\n"
      "  p                    overall signal detection probability per trial\n"
      "  T_prime_us           expected time to herald the first segment [us]\n"
      "  T_us                 expected time to herald both segments [us]\n"
      "  C                    correction factor T / (2A/p)\n"
      "  R_per_s              memory-enhanced four-fold rate [1/s]\n"
      "  Rprime_per_s         memoryless four-fold rate [1/s]\n"
      "  acceleration         R / R' = 1/(2 C p)\n"
      "  mean_storage_us      mean first-memory storage time per success [us]\n"
      "  mean_repetitions     mean step-I/II sequences per success\n"
      "stats/sweep CSV columns\n"
      "  mode                 memory | no-memory\n"
      "  rounds               completed successful connections\n"
      "  fourfold_count       registered four-photon coincidences\n"
      "  simulated_time_s     wall-clock time incl. loading dead time [s]\n"
      "  active_time_s        in-window protocol time [s]\n"
      "  rate_per_s           fourfold_count / simulated_time_s [1/s]\n"
      "  rate_err_per_s       Poisson error of the rate [1/s]\n"
      "  mean_prep_us         mean steps-I+II duration per success [us]\n"
      "  mean_storage_us      mean step-II duration per success [us]\n"
      "  mean_repetitions     mean step-I/II sequences per success\n"
      "  idler*/both/bell_*   step-III detection and Bell-outcome tallies\n"
      "  mean_final_fidelity  model fidelity of the connected state\n"
      "  budget_exhausted     1 when the simulated-time budget stopped the run\n"
      "histogram CSVs: bin_lo/bin_hi in the unit named by the column, count\n"
      "ratio column (both mode): memory rate / no-memory rate\n";
}

// --- subcommands -------------------------------------------------------------

int cmd_analytic(const CliOptions& opts, const ToolConfig& cfg, const json& cfg_doc) {
  if (cfg.p_grid.empty()) throw ConfigError("analytic: p_grid is empty, nothing to compute");
  ManifestWriter out(opts.out_dir, "analytic", {}, cfg_doc, cfg.sim.master_seed);
  CsvWriter csv({"p", "T_prime_us", "T_us", "C", "R_per_s", "Rprime_per_s", "acceleration",
                 "mean_storage_us", "mean_repetitions"});
  for (double p : cfg.p_grid) {
    ProtocolParams params = cfg.sim.params;
    params.p = p;
    params.chi.reset();
    const double correction = correction_factor(params);
    csv.cell(p)
        .cell(expected_time_first_photon(params) * 1e6)
        .cell(expected_total_time(params) * 1e6)
        .cell(correction)
        .cell(rate_memory_with_correction(params, correction))
        .cell(rate_no_memory(params))
        .cell(1.0 / (2.0 * correction * p))
        .cell(mean_storage_time(params) * 1e6)
        .cell(mean_repetitions(p, params.max_trials));
    csv.end_row();
  }
  out.emit("analytic.csv", csv.str());
  out.emit("legend.txt", legend_text());
  out.finalize();
  std::cout << "analytic: wrote " << cfg.p_grid.size() << " rows to " << opts.out_dir
            << "/analytic.csv\n";
  return 0;
}

const char* event_name(SimEvent::Type type) {
  switch (type) {
    case SimEvent::Type::Step1Herald: return "step1_herald";
    case SimEvent::Type::Step2Herald: return "step2_herald";
    case SimEvent::Type::Step2Restart: return "step2_restart";
    case SimEvent::Type::Reload: return "reload";
    case SimEvent::Type::BsmOutcome: return "bsm_outcome";
    case SimEvent::Type::Fourfold: return "fourfold";
  }
  return "unknown";
}

SimStats run_mode_once(const ToolConfig& cfg, ScalingMode mode, std::uint64_t seed,
                       ManifestWriter* out, bool verbose, const std::string& prefix) {
  SimConfig sim = cfg.sim;
  sim.mode = mode;
  sim.master_seed = seed;
  SimStats stats;
  if (verbose && out != nullptr) {
    std::ostringstream log;
    const EventSink sink = [&log](const SimEvent& ev) {
      log << event_name(ev.type) << ' ' << format_double(ev.time_s) << ' ' << ev.round << ' '
          << ev.detail << '\n';
    };
    stats = run(sim, sink);
    out->emit(prefix + "_events.log", log.str());
  } else {
    stats = run(sim);
  }
  return stats;
}

int cmd_simulate(const CliOptions& opts, const ToolConfig& cfg, const json& cfg_doc) {
  ManifestWriter out(opts.out_dir, "simulate", {}, cfg_doc, cfg.sim.master_seed);
  CsvWriter csv(kStatsColumns);
  bool any_success = true;
  if (cfg.run_mode == RunMode::Memory || cfg.run_mode == RunMode::Both) {
    const SimStats s = run_mode_once(cfg, ScalingMode::MemoryEnhanced, cfg.sim.master_seed, &out,
                                     opts.verbose, "memory");
    stats_row(csv, "memory", cfg.sim.params.p, s);
    emit_stats_histograms(out, "memory", s);
    any_success = any_success && (s.rounds_completed > 0 || !s.budget_exhausted);
  }
  if (cfg.run_mode == RunMode::NoMemory || cfg.run_mode == RunMode::Both) {
    const std::uint64_t seed = cfg.run_mode == RunMode::Both
                                   ? splitmix64(splitmix64(cfg.sim.master_seed) ^ 0xB5ULL)
                                   : cfg.sim.master_seed;
    const SimStats s =
        run_mode_once(cfg, ScalingMode::NoMemory, seed, &out, opts.verbose, "nomemory");
    stats_row(csv, "no-memory", cfg.sim.params.p, s);
    emit_stats_histograms(out, "nomemory", s);
    any_success = any_success && (s.rounds_completed > 0 || !s.budget_exhausted);
  }
  out.emit("stats.csv", csv.str());
  out.emit("legend.txt", legend_text());
  out.finalize();
  if (!any_success) {
    std::cerr << "simulate: budget exhausted before any successful round; partial stats flushed to "
              << opts.out_dir << "\n";
    return 3;
  }
  std::cout << "simulate: wrote stats to " << opts.out_dir << "/stats.csv\n";
  return 0;
}

std::string p_tag(double p) {
  std::ostringstream s;
  s << "p" << format_double(p);
  std::string tag = s.str();
  for (char& c : tag)
    if (c == '.') c = '_';
  return tag;
}

int cmd_sweep(const CliOptions& opts, const ToolConfig& cfg, const json& cfg_doc,
              const std::string& command_name) {
  if (cfg.p_grid.empty()) throw ConfigError(command_name + ": p_grid is empty, nothing to sweep");
  const SweepMode mode = cfg.run_mode == RunMode::Memory     ? SweepMode::Memory
                         : cfg.run_mode == RunMode::NoMemory ? SweepMode::NoMemory
                                                             : SweepMode::Both;
  ManifestWriter out(opts.out_dir, command_name, {}, cfg_doc, cfg.sim.master_seed);
  const std::vector<SweepRow> rows = sweep(cfg.sim, cfg.p_grid, mode);

  std::vector<std::string> columns = {
      "p", "mode", "rounds", "fourfold_count", "simulated_time_s", "rate_per_s", "rate_err_per_s",
      "mean_storage_us", "mean_repetitions"};
  const bool both = mode == SweepMode::Both;
  if (both) columns.push_back("ratio_memory_over_no_memory");
  if (command_name == "compare") {
    columns.push_back("R_per_s_analytic");
    columns.push_back("Rprime_per_s_analytic");
    columns.push_back("acceleration_analytic");
  }
  CsvWriter csv(columns);
  for (const auto& row : rows) {
    ProtocolParams params = cfg.sim.params;
    params.p = row.p;
    params.chi.reset();
    const auto emit_one = [&](const char* mode_name, const SimStats& s, bool with_ratio) {
      csv.cell(row.p)
          .cell(std::string(mode_name))
          .cell(s.rounds_completed)
          .cell(s.fourfold_count)
          .cell(s.simulated_time_s)
          .cell(s.fourfold_rate_per_s())
          .cell(s.fourfold_rate_err_per_s())
          .cell(s.mean_storage_time_s * 1e6)
          .cell(s.mean_repetitions);
      if (both) {
        if (with_ratio && row.no_memory.fourfold_rate_per_s() > 0.0)
          csv.cell(row.memory.fourfold_rate_per_s() / row.no_memory.fourfold_rate_per_s());
        else
          csv.cell(std::string("nan"));
      }
      if (command_name == "compare") {
        const double correction = correction_factor(params);
        csv.cell(rate_memory_with_correction(params, correction))
            .cell(rate_no_memory(params))
            .cell(1.0 / (2.0 * correction * row.p));
      }
      csv.end_row();
    };
    if (row.has_memory) {
      emit_one("memory", row.memory, true);
      emit_stats_histograms(out, "memory_" + p_tag(row.p), row.memory);
    }
    if (row.has_no_memory) {
      emit_one("no-memory", row.no_memory, false);
      emit_stats_histograms(out, "nomemory_" + p_tag(row.p), row.no_memory);
    }
  }
  out.emit(command_name + ".csv", csv.str());
  out.emit("legend.txt", legend_text());
  out.finalize();
  std::cout << command_name << ": wrote " << rows.size() << " sweep points to " << opts.out_dir
            << "/" << command_name << ".csv\n";
  return 0;
}

DensityMatrix synthesize_state(const std::string& spec) {
  std::vector<std::string> parts;
  std::istringstream stream(spec);
  std::string tok;
  while (std::getline(stream, tok, ':')) parts.push_back(tok);
  if (parts.empty()) throw ConfigError("empty --synthesize spec");
  const auto number = [&](std::size_t i, double fallback) {
    if (parts.size() <= i) return fallback;
    try {
      return std::stod(parts[i]);
    } catch (const std::exception&) {
      throw ConfigError("bad number in --synthesize spec: '" + parts[i] + "'");
    }
  };
  const std::string& name = parts[0];
  if (name == "phi-plus") {
    return to_density(bell_state(BellOutcome::PhiPlus, "S1", "S4"));
  }
  if (name == "mixed") {
    return DensityMatrix::make(CMatrix::Identity(4, 4) / 4.0, {"S1", "S4"});
  }
  if (name == "werner") {
    const double w = number(1, 0.0);
    DensityMatrix rho = to_density(bell_state(BellOutcome::PhiPlus, "S1", "S4"));
    return apply_channel(rho, NoiseChannel::depolarizing(w, {"S1", "S4"}));
  }
  if (name == "eq2") {
    const double phi = number(1, 0.0) * M_PI / 180.0;
    const double lambda = number(2, 1.0);
    const double w = number(3, 0.0);
    DensityMatrix rho = to_density(phase_bell_state(phi, "S1", "S4"));
    rho = apply_channel(rho, NoiseChannel::dephasing_residual(lambda, {"S4"}));
    if (w > 0.0) rho = apply_channel(rho, NoiseChannel::depolarizing(w, {"S1", "S4"}));
    return rho;
  }
  throw ConfigError("unknown --synthesize state '" + name +
                    "' (expected phi-plus | mixed | werner:<w> | eq2:<phi_deg>[:<lambda>[:<w>]])");
}

int cmd_tomo(const CliOptions& opts, const ToolConfig& cfg, const json& cfg_doc) {
  if (opts.counts_path.empty() == opts.synthesize.empty())
    throw ConfigError("tomo needs exactly one of a counts file or --synthesize");

  std::vector<std::string> replay_args;
  CountsRecord counts;
  if (!opts.counts_path.empty()) {
    replay_args = {"--counts", std::filesystem::absolute(opts.counts_path).string()};
    try {
      counts = parse_counts_file(read_file(opts.counts_path));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
  } else {
    replay_args = {"--synthesize", opts.synthesize};
    const DensityMatrix rho = synthesize_state(opts.synthesize);
    RngStream rng(cfg.sim.master_seed, 0);
    counts = simulate_counts(rho, cfg.tomo.basis_set(), cfg.tomo.n_expected, rng);
  }

  ManifestWriter out(opts.out_dir, "tomo", replay_args, cfg_doc, cfg.sim.master_seed);
  out.emit("counts.txt", format_counts_file(counts));

  ReconstructionResult result;
  try {
    result = mle_reconstruct(counts, cfg.tomo.options);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  RngStream boot_rng(cfg.sim.master_seed, 1);
  const auto [boot_mean, boot_std] =
      fidelity_with_error(counts, cfg.tomo.bootstrap, boot_rng, cfg.tomo.options);
  result.fidelity_std = boot_std;

  json report;
  report["converged"] = result.converged;
  report["iterations"] = result.iterations;
  report["log_likelihood"] = result.log_likelihood;
  report["count_scale"] = result.count_scale;
  report["counts_total"] = counts.total();
  report["n_bases"] = counts.counts.size();
  report["fidelity_nearest_max_entangled"] = result.fidelity;
  report["fidelity_bootstrap_mean"] = boot_mean;
  report["fidelity_bootstrap_std"] = boot_std;
  report["bootstrap_replicas"] = cfg.tomo.bootstrap;
  try {
    report["phase_deg"] = extract_phase_deg(result.rho_hat);
  } catch (const std::invalid_argument&) {
    report["phase_deg"] = nullptr;
  }
  bool monotone = true;
  for (std::size_t i = 1; i < result.loglik_trace.size(); ++i)
    monotone = monotone && result.loglik_trace[i] >= result.loglik_trace[i - 1];
  report["loglik_monotone"] = monotone;
  json rho_real = json::array(), rho_imag = json::array();
  for (Eigen::Index r = 0; r < 4; ++r) {
    json re_row = json::array(), im_row = json::array();
    for (Eigen::Index c = 0; c < 4; ++c) {
      re_row.push_back(result.rho_hat.entries(r, c).real());
      im_row.push_back(result.rho_hat.entries(r, c).imag());
    }
    rho_real.push_back(re_row);
    rho_imag.push_back(im_row);
  }
  report["rho_real"] = rho_real;
  report["rho_imag"] = rho_imag;

  out.emit("tomo_report.json", report.dump(2) + "\n");
  out.finalize();

  if (!result.converged) {
    std::cerr << "tomo: reconstruction did not converge within "
              << cfg.tomo.options.max_iterations << " iterations (report written)\n";
    return 4;
  }
  std::cout << "tomo: fidelity " << result.fidelity << " +/- " << boot_std << ", report in "
            << opts.out_dir << "/tomo_report.json\n";
  return 0;
}

// Runs always execute the canonicalized config (the one parsed back from
// the JSON document stored in the manifest), so a replay sees bit-identical
// parameters.
int dispatch(const std::string& command, const CliOptions& opts, const json& cfg_doc) {
  const ToolConfig cfg = config_from_json(cfg_doc);
  if (command == "analytic") return cmd_analytic(opts, cfg, cfg_doc);
  if (command == "simulate") return cmd_simulate(opts, cfg, cfg_doc);
  if (command == "sweep") return cmd_sweep(opts, cfg, cfg_doc, "sweep");
  if (command == "compare") {
    ToolConfig both = cfg;
    both.run_mode = RunMode::Both;
    return cmd_sweep(opts, both, cfg_doc, "compare");
  }
  if (command == "tomo") return cmd_tomo(opts, cfg, cfg_doc);
  throw ConfigError("unknown command '" + command + "'");
}

int replay_manifest(const CliOptions& opts) {
  const RunManifest manifest = load_manifest_file(opts.from_manifest);
  CliOptions replay = opts;
  replay.from_manifest.clear();
  for (std::size_t i = 0; i + 1 < manifest.arguments.size(); i += 2) {
    if (manifest.arguments[i] == "--counts") replay.counts_path = manifest.arguments[i + 1];
    if (manifest.arguments[i] == "--synthesize") replay.synthesize = manifest.arguments[i + 1];
  }
  return dispatch(manifest.command, replay, manifest.config_doc);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-segment memory-enhanced entanglement connection: analytics, simulation and tomography"};
  app.set_version_flag("--version", repsim::kVersion);
  app.fallthrough();  // global options may follow the subcommand name

  CliOptions opts;
  app.add_option("--config", opts.config_path, "JSON configuration file");
  app.add_option("--out-dir", opts.out_dir, "output directory (default: out)");
  app.add_option("--seed", opts.seed_flag, "master seed override (beats env and config)");
  app.add_flag("--verbose", opts.verbose, "write per-event trace logs (runs sequentially)");
  app.add_option("--from-manifest", opts.from_manifest,
                 "re-run the command recorded in a manifest.json");

  auto* analytic = app.add_subcommand("analytic", "closed-form times, rates and storage stats");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo run at the configured p");
  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo runs over the configured p grid");
  auto* compare = app.add_subcommand("compare", "memory vs no-memory sweep with analytic columns");
  auto* tomo = app.add_subcommand("tomo", "maximum-likelihood state reconstruction");

  for (CLI::App* cmd : {simulate, sweep_cmd}) {
    cmd->add_option("--mode", opts.mode_flag, "memory | no-memory | both");
    cmd->add_option("--rounds", opts.rounds_flag, "successful connections to simulate");
  }
  compare->add_option("--rounds", opts.rounds_flag, "successful connections per sweep point");
  tomo->add_option("counts_file", opts.counts_path, "counts file: '<basis1> <basis2> <count>' lines");
  tomo->add_option("--counts", opts.counts_path, "counts file (same as the positional)")
      ->excludes("counts_file");
  tomo->add_option("--synthesize", opts.synthesize,
                   "generate counts from a model state: phi-plus | mixed | werner:<w> | "
                   "eq2:<phi_deg>[:<lambda>[:<w>]]");
  tomo->add_option("--bootstrap", opts.bootstrap_flag, "bootstrap replicas (>= 100)");

  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!opts.from_manifest.empty()) return replay_manifest(opts);
    if (app.get_subcommands().empty()) {
      std::cerr << "error: no command given (try --help)\n";
      return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    const ToolConfig cfg = effective_config(opts);
    return dispatch(command, opts, config_to_json(cfg));
  } catch (const repsim::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const repsim::BudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const repsim::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
