// End-to-end tests driving the installed binary through a shell, checking
// exit codes, file outputs and the determinism contract.

#include "repsim/csv.hpp"
#include "repsim/sha256.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CliResult run_cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = (env.empty() ? "" : env + " ") + std::string(REPSIM_BIN_PATH) + " " +
                          args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  result.out = slurp(out);
  result.err = slurp(err);
  return result;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("repsim_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

// Splits a CSV document into cells; no quoting in this tool's output.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

int column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("analytic reproduces the reference storage-time table") {
  const fs::path dir = fresh_dir("analytic");
  const CliResult r = run_cli(dir, "analytic --out-dir " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);

  const auto rows = parse_csv(slurp(dir / "out" / "analytic.csv"));
  REQUIRE(rows.size() == 9);  // header + default 8-point grid
  const int stor = column_index(rows[0], "mean_storage_us");
  const int accel = column_index(rows[0], "acceleration");
  REQUIRE(stor >= 0);
  REQUIRE(accel >= 0);
  const double table[] = {462, 377, 309, 255, 212, 181, 156, 136};
  for (int i = 0; i < 8; ++i) {
    const double value = std::stod(rows[i + 1][stor]);
    CHECK(std::abs(value - table[i]) / table[i] < 0.02);
  }
  CHECK(std::abs(std::stod(rows[1][accel]) - 353.0) < 2.0);

  CHECK(fs::exists(dir / "out" / "manifest.json"));
  CHECK(fs::exists(dir / "out" / "legend.txt"));
}

TEST_CASE("analytic at p = 1% emits the expected correction factor") {
  const fs::path dir = fresh_dir("analytic_c");
  write_text(dir / "cfg.json", R"({"sim": {"p_grid": [0.01]}})");
  const CliResult r = run_cli(dir, "analytic --config " + (dir / "cfg.json").string() +
                                       " --out-dir " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  const auto rows = parse_csv(slurp(dir / "out" / "analytic.csv"));
  const int c_col = column_index(rows[0], "C");
  CHECK(std::abs(std::stod(rows[1][c_col]) - 1.08) < 0.01);
}

TEST_CASE("empty p grid exits 2 without output") {
  const fs::path dir = fresh_dir("analytic_empty");
  write_text(dir / "cfg.json", R"({"sim": {"p_grid": []}})");
  const CliResult r = run_cli(dir, "analytic --config " + (dir / "cfg.json").string() +
                                       " --out-dir " + (dir / "out").string());
  CHECK(r.exit_code == 2);
  CHECK_FALSE(fs::exists(dir / "out" / "analytic.csv"));
}

TEST_CASE("config problems exit 2 with a field diagnostic") {
  const fs::path dir = fresh_dir("badcfg");
  write_text(dir / "cfg.json", R"({"params": {"excitation": 0.1}})");
  const CliResult unknown = run_cli(dir, "analytic --config " + (dir / "cfg.json").string() +
                                             " --out-dir " + (dir / "out").string());
  CHECK(unknown.exit_code == 2);
  CHECK(unknown.err.find("excitation") != std::string::npos);

  const CliResult missing =
      run_cli(dir, "analytic --config /nonexistent.json --out-dir " + (dir / "out").string());
  CHECK(missing.exit_code == 2);

  const CliResult no_cmd = run_cli(dir, "--out-dir " + (dir / "out").string());
  CHECK(no_cmd.exit_code == 2);
}

TEST_CASE("simulate is byte-deterministic for a fixed seed") {
  const fs::path dir = fresh_dir("determinism");
  const std::string cfg = R"({"sim": {"rounds": 3000, "record_states": true}})";
  write_text(dir / "cfg.json", cfg);
  const std::string base = "simulate --config " + (dir / "cfg.json").string() + " --seed 11";

  REQUIRE(run_cli(dir, base + " --out-dir " + (dir / "a").string()).exit_code == 0);
  REQUIRE(run_cli(dir, base + " --out-dir " + (dir / "b").string()).exit_code == 0);
  REQUIRE(run_cli(dir, "simulate --config " + (dir / "cfg.json").string() + " --seed 12" +
                           " --out-dir " + (dir / "c").string())
              .exit_code == 0);

  for (const char* file :
       {"stats.csv", "memory_storage_hist.csv", "memory_time_cost_hist.csv",
        "memory_step2_trials_hist.csv", "memory_fidelity_trace.csv"}) {
    CAPTURE(file);
    REQUIRE(fs::exists(dir / "a" / file));
    CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
  }
  CHECK(slurp(dir / "a" / "stats.csv") != slurp(dir / "c" / "stats.csv"));
}

TEST_CASE("seed precedence: flag beats environment beats config") {
  const fs::path dir = fresh_dir("seeds");
  write_text(dir / "cfg.json", R"({"sim": {"rounds": 500, "master_seed": 5}})");
  const std::string cfg = " --config " + (dir / "cfg.json").string();

  REQUIRE(run_cli(dir, "simulate" + cfg + " --out-dir " + (dir / "cfgseed").string()).exit_code == 0);
  REQUIRE(run_cli(dir, "simulate" + cfg + " --out-dir " + (dir / "envseed").string(),
                  "REPSIM_SEED=7").exit_code == 0);
  REQUIRE(run_cli(dir, "simulate" + cfg + " --seed 7 --out-dir " + (dir / "flagseed").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "simulate" + cfg + " --seed 5 --out-dir " + (dir / "flag5").string(),
                  "REPSIM_SEED=7").exit_code == 0);

  CHECK(slurp(dir / "envseed" / "stats.csv") == slurp(dir / "flagseed" / "stats.csv"));
  CHECK(slurp(dir / "envseed" / "stats.csv") != slurp(dir / "cfgseed" / "stats.csv"));
  CHECK(slurp(dir / "flag5" / "stats.csv") == slurp(dir / "cfgseed" / "stats.csv"));
}

TEST_CASE("sweep in both mode emits the enhancement ratio") {
  const fs::path dir = fresh_dir("sweep");
  write_text(dir / "cfg.json",
             R"({"sim": {"rounds": 2000, "mode": "both", "p_grid": [0.004, 0.008]},)"
             R"( "params": {"eta2_eps_i": 0.5, "eta3_eps_i": 0.5, "extra_idler": 0.99}})");
  const CliResult r = run_cli(dir, "sweep --config " + (dir / "cfg.json").string() +
                                       " --out-dir " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  const auto rows = parse_csv(slurp(dir / "out" / "sweep.csv"));
  REQUIRE(rows.size() == 5);  // header + 2 points x 2 modes
  const int ratio = column_index(rows[0], "ratio_memory_over_no_memory");
  REQUIRE(ratio >= 0);
  CHECK(std::stod(rows[1][ratio]) > 1.0);  // memory wins at p = 0.4%
  CHECK(fs::exists(dir / "out" / "memory_p0_004_storage_hist.csv"));
  CHECK(fs::exists(dir / "out" / "nomemory_p0_008_step1_trials_hist.csv"));
}

TEST_CASE("compare adds analytic reference columns") {
  const fs::path dir = fresh_dir("compare");
  write_text(dir / "cfg.json", R"({"sim": {"rounds": 800, "p_grid": [0.008]}})");
  const CliResult r = run_cli(dir, "compare --config " + (dir / "cfg.json").string() +
                                       " --out-dir " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  const auto rows = parse_csv(slurp(dir / "out" / "compare.csv"));
  CHECK(column_index(rows[0], "R_per_s_analytic") >= 0);
  CHECK(column_index(rows[0], "acceleration_analytic") >= 0);
}

TEST_CASE("tomo synthesizes, reconstructs, and round-trips its counts file") {
  const fs::path dir = fresh_dir("tomo");
  write_text(dir / "cfg.json", R"({"tomo": {"n_expected": 100000, "bootstrap": 100}})");
  const CliResult r = run_cli(dir, "tomo --synthesize phi-plus --config " +
                                       (dir / "cfg.json").string() + " --out-dir " +
                                       (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  const std::string report = slurp(dir / "out" / "tomo_report.json");
  const auto fid_pos = report.find("\"fidelity_nearest_max_entangled\": 0.999");
  CHECK(fid_pos != std::string::npos);

  // feed the emitted counts file back in
  const CliResult again = run_cli(dir, "tomo " + (dir / "out" / "counts.txt").string() +
                                           " --config " + (dir / "cfg.json").string() +
                                           " --out-dir " + (dir / "again").string());
  CHECK(again.exit_code == 0);
  CHECK(slurp(dir / "again" / "counts.txt") == slurp(dir / "out" / "counts.txt"));
}

TEST_CASE("tomo at the reference count budget brackets the true fidelity") {
  // 0.80-fidelity dephased entangled state, ~656 events in total: the
  // reported fidelity must sit within 3 bootstrap deviations of the truth.
  const fs::path dir = fresh_dir("tomo_656");
  write_text(dir / "cfg.json", R"({"tomo": {"n_expected": 159.4, "bootstrap": 150}})");
  const CliResult r = run_cli(dir, "tomo --synthesize eq2:337.5:0.6 --seed 3 --config " +
                                       (dir / "cfg.json").string() + " --out-dir " +
                                       (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  const std::string report = slurp(dir / "out" / "tomo_report.json");
  const auto grab = [&](const std::string& key) {
    const auto pos = report.find('"' + key + '"');
    REQUIRE(pos != std::string::npos);
    return std::stod(report.substr(report.find(':', pos) + 1));
  };
  const double fidelity = grab("fidelity_nearest_max_entangled");
  const double std_dev = grab("fidelity_bootstrap_std");
  CHECK(std_dev > 0.02);
  CHECK(std::abs(fidelity - 0.80) < 3.0 * std_dev);
}

TEST_CASE("tomo rejects malformed counts naming the offender, exit 2") {
  const fs::path dir = fresh_dir("tomo_bad");
  write_text(dir / "counts.txt", "H H 512\nH Q 31\n");
  const CliResult r = run_cli(dir, "tomo " + (dir / "counts.txt").string() + " --out-dir " +
                                       (dir / "out").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(r.err.find("Q") != std::string::npos);

  const CliResult neither = run_cli(dir, "tomo --out-dir " + (dir / "out").string());
  CHECK(neither.exit_code == 2);
}

TEST_CASE("tomo that cannot converge exits 4 but writes the report") {
  const fs::path dir = fresh_dir("tomo_iter");
  write_text(dir / "cfg.json", R"({"tomo": {"max_iterations": 1, "bootstrap": 100}})");
  const CliResult r = run_cli(dir, "tomo --synthesize werner:0.4 --config " +
                                       (dir / "cfg.json").string() + " --out-dir " +
                                       (dir / "out").string());
  CHECK(r.exit_code == 4);
  const std::string report = slurp(dir / "out" / "tomo_report.json");
  CHECK(report.find("\"converged\": false") != std::string::npos);
}

TEST_CASE("budget exhausted before any success exits 3 and flushes stats") {
  const fs::path dir = fresh_dir("budget");
  write_text(dir / "cfg.json",
             R"({"sim": {"rounds": 100000, "max_sim_seconds": 0.2}})");
  const CliResult r = run_cli(dir, "simulate --config " + (dir / "cfg.json").string() +
                                       " --out-dir " + (dir / "out").string());
  CHECK(r.exit_code == 3);
  const auto rows = parse_csv(slurp(dir / "out" / "stats.csv"));
  REQUIRE(rows.size() == 2);
  const int flag = column_index(rows[0], "budget_exhausted");
  CHECK(rows[1][flag] == "1");
}

TEST_CASE("a manifest replays to identical outputs") {
  const fs::path dir = fresh_dir("replay");
  write_text(dir / "cfg.json", R"({"sim": {"rounds": 1500, "master_seed": 31}})");

  REQUIRE(run_cli(dir, "simulate --config " + (dir / "cfg.json").string() + " --out-dir " +
                           (dir / "orig").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "--from-manifest " + (dir / "orig" / "manifest.json").string() +
                           " --out-dir " + (dir / "redo").string())
              .exit_code == 0);
  CHECK(slurp(dir / "redo" / "stats.csv") == slurp(dir / "orig" / "stats.csv"));
  CHECK(slurp(dir / "redo" / "memory_storage_hist.csv") ==
        slurp(dir / "orig" / "memory_storage_hist.csv"));

  // tomo replay re-synthesizes the same counts
  write_text(dir / "tomo_cfg.json", R"({"tomo": {"n_expected": 2000, "bootstrap": 100}})");
  REQUIRE(run_cli(dir, "tomo --synthesize eq2:337.5:0.6 --config " +
                           (dir / "tomo_cfg.json").string() + " --out-dir " +
                           (dir / "t_orig").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "--from-manifest " + (dir / "t_orig" / "manifest.json").string() +
                           " --out-dir " + (dir / "t_redo").string())
              .exit_code == 0);
  CHECK(slurp(dir / "t_redo" / "counts.txt") == slurp(dir / "t_orig" / "counts.txt"));
  CHECK(slurp(dir / "t_redo" / "tomo_report.json") == slurp(dir / "t_orig" / "tomo_report.json"));
}

TEST_CASE("manifest digests match the files on disk") {
  const fs::path dir = fresh_dir("digests");
  REQUIRE(run_cli(dir, "analytic --out-dir " + (dir / "out").string()).exit_code == 0);
  const std::string manifest = slurp(dir / "out" / "manifest.json");
  const std::string csv = slurp(dir / "out" / "analytic.csv");
  CHECK(manifest.find(repsim::sha256_hex(csv)) != std::string::npos);
}

TEST_CASE("verbose simulate writes an event trace") {
  const fs::path dir = fresh_dir("events");
  write_text(dir / "cfg.json", R"({"sim": {"rounds": 50}, "params": {"p": 0.01}})");
  const CliResult r = run_cli(dir, "simulate --verbose --config " + (dir / "cfg.json").string() +
                                       " --out-dir " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  const std::string log = slurp(dir / "out" / "memory_events.log");
  CHECK(log.find("step1_herald") != std::string::npos);
  CHECK(log.find("step2_herald") != std::string::npos);
}

} // TEST_SUITE
