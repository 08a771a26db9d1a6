#include "repsim/sim.hpp"

#include "repsim/tomography.hpp"
#include "support/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace repsim;

namespace {

SimConfig base_config(double p, std::uint64_t rounds, std::uint64_t seed = 1) {
  SimConfig cfg;
  cfg.params.p = p;
  cfg.rounds = rounds;
  cfg.master_seed = seed;
  cfg.decay = MemoryDecayModel::none();
  return cfg;
}

// Idler arms set to certainty-scale so four-fold statistics accumulate fast;
// a constant efficiency factor cancels in every rate comparison.
SimConfig boosted_config(double p, std::uint64_t rounds, std::uint64_t seed = 1) {
  SimConfig cfg = base_config(p, rounds, seed);
  cfg.params.eta2_eps_i = 0.5;
  cfg.params.eta3_eps_i = 0.5;
  cfg.params.extra_idler = 1.0;
  return cfg;
}

} // namespace

TEST_SUITE("sim") {

TEST_CASE("deterministic heralding at p = 1") {
  SimConfig cfg = boosted_config(1.0, 10000);
  const SimStats stats = run_protocol(cfg);
  CHECK(stats.rounds_completed == 10000);
  CHECK(stats.mean_prep_time_s == doctest::Approx(2e-6).epsilon(1e-12));
  CHECK(stats.prep_time_err_s < 1e-12);
  CHECK(stats.mean_storage_time_s == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(stats.mean_repetitions == 1.0);
  // every round reaches step III with both idlers at unit-scale efficiency 0.25
  CHECK(stats.both_idlers > 2000);
}

TEST_CASE("memory-mode means converge to the analytic model (p = 0.4%)") {
  SimConfig cfg = base_config(0.004, 100000, 21);
  const SimStats stats = run_protocol(cfg);

  const double t_expected = expected_total_time(cfg.params);
  CHECK(std::abs(stats.mean_prep_time_s - t_expected) < 3.0 * stats.prep_time_err_s);
  CHECK(std::abs(stats.mean_prep_time_s - t_expected) / t_expected < 0.01);

  const double storage_expected = mean_storage_time(cfg.params);
  CHECK(std::abs(stats.mean_storage_time_s - storage_expected) < 3.0 * stats.storage_time_err_s);
  CHECK(std::abs(stats.mean_storage_time_s - storage_expected) / storage_expected < 0.02);

  const double reps_expected = mean_repetitions(cfg.params.p, cfg.params.max_trials);
  CHECK(std::abs(stats.mean_repetitions - reps_expected) < 3.0 * stats.repetitions_err);
}

TEST_CASE("memory-mode four-fold rate converges to the rate formula (p = 0.1%)") {
  SimConfig cfg = boosted_config(0.001, 60000, 5);
  const SimStats stats = run_protocol(cfg);
  const double expected_rate = rate_memory(cfg.params);
  CHECK(stats.fourfold_count > 5000);
  CHECK(std::abs(stats.fourfold_rate_per_s() - expected_rate) <
        3.0 * stats.fourfold_rate_err_per_s());
  CHECK(std::abs(stats.mean_repetitions - 1.582) < 0.02);
}

TEST_CASE("retrieval decay scales the four-fold rate by the storage-averaged factor") {
  SimConfig cfg = boosted_config(0.002, 80000, 9);
  cfg.decay = MemoryDecayModel::calibrated();
  const SimStats stats = run_protocol(cfg);
  const double g_storage =
      mean_retrieval_factor(cfg.params, [&](double t) { return cfg.decay.retrieval_factor2(t); });
  const double g3 = cfg.decay.retrieval_factor3(cfg.params.trial_s);
  const double expected_rate = rate_memory(cfg.params) * g_storage * g3;
  CHECK(std::abs(stats.fourfold_rate_per_s() - expected_rate) <
        3.0 * stats.fourfold_rate_err_per_s());
  // decayed rate must sit clearly below the constant-efficiency rate
  CHECK(stats.fourfold_rate_per_s() < rate_memory(cfg.params));
}

TEST_CASE("wall clock expands active time by the duty cycle") {
  SimConfig cfg = base_config(0.004, 20000, 3);
  const SimStats stats = run_protocol(cfg);
  const double ideal_wall = stats.active_time_s / cfg.params.duty_cycle;
  // quantized by whole loading cycles: at most one dead time of slack
  CHECK(stats.simulated_time_s >= stats.active_time_s);
  CHECK(std::abs(stats.simulated_time_s - ideal_wall) <= cfg.load_dead_s + 1e-12);
}

TEST_CASE("runs are bit-reproducible and thread-count independent") {
  SimConfig cfg = boosted_config(0.003, 30000, 77);
  cfg.record_states = true;
  cfg.params.chi = 0.003 / cfg.params.eps_s();
  const SimStats a = run_protocol(cfg);
  const SimStats b = run_protocol(cfg);
  CHECK(a.rng_fingerprint == b.rng_fingerprint);
  CHECK(a.fourfold_count == b.fourfold_count);
  CHECK(a.mean_prep_time_s == b.mean_prep_time_s);
  CHECK(a.storage_us == b.storage_us);
  CHECK(a.time_cost_us == b.time_cost_us);
  CHECK(a.mean_final_fidelity == b.mean_final_fidelity);

  SimConfig threaded = cfg;
  threaded.threads = 4;
  const SimStats c = run_protocol(threaded);
  CHECK(c.rng_fingerprint == a.rng_fingerprint);
  CHECK(c.fourfold_count == a.fourfold_count);
  CHECK(c.mean_prep_time_s == a.mean_prep_time_s);
  CHECK(c.simulated_time_s == a.simulated_time_s);
  CHECK(c.storage_us == a.storage_us);
  CHECK(c.mean_final_fidelity == a.mean_final_fidelity);

  SimConfig reseeded = cfg;
  reseeded.master_seed = 78;
  const SimStats d = run_protocol(reseeded);
  CHECK(d.rng_fingerprint != a.rng_fingerprint);
}

TEST_CASE("step-II trial counts follow the truncated geometric law (1e6 samples)") {
  // ~1e6 step-II attempts, then a chi-square against the exact pmf: success
  // trials binned by the histogram width, failures as their own bin.
  SimConfig cfg = base_config(0.003, 950000, 13);
  const SimStats stats = run_protocol(cfg);

  const TrialDistribution dist = trial_pmf(cfg.params.p, cfg.params.max_trials, HeraldStep::StepTwo);
  const std::uint64_t successes = stats.rounds_completed;
  const std::uint64_t failures =
      static_cast<std::uint64_t>(stats.mean_repetitions * static_cast<double>(successes) + 0.5) -
      successes;
  const std::uint64_t attempts = successes + failures;

  const auto& bins = stats.step2_trials.bins();
  const int width = static_cast<int>(stats.step2_trials.bin_width());
  std::vector<double> expected;
  std::vector<std::uint64_t> observed;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    double mass = 0.0;
    for (int i = static_cast<int>(b) * width; i < static_cast<int>(b + 1) * width; ++i)
      mass += dist.pmf(i);
    expected.push_back(mass * static_cast<double>(attempts));
    observed.push_back(bins[b]);
  }
  expected.push_back(dist.failure_mass() * static_cast<double>(attempts));
  observed.push_back(failures);

  CHECK(teststat::chi2_gof_pvalue(expected, observed) > 0.01);
}

TEST_CASE("Bell outcomes are equidistributed over the four signatures") {
  SimConfig cfg = boosted_config(0.01, 40000, 4);
  const SimStats stats = run_protocol(cfg);
  REQUIRE(stats.both_idlers > 5000);
  const std::vector<double> expected(4, static_cast<double>(stats.both_idlers) / 4.0);
  const std::vector<std::uint64_t> observed(stats.bell_outcomes.begin(), stats.bell_outcomes.end());
  CHECK(teststat::chi2_gof_pvalue(expected, observed) > 0.01);
  // registered signatures are exactly the first two
  CHECK(stats.fourfold_count == stats.bell_outcomes[0] + stats.bell_outcomes[1]);
}

TEST_CASE("storage times respect the protocol ceiling and the decay model") {
  SimConfig cfg = base_config(0.0015, 20000, 6);
  const SimStats stats = run_protocol(cfg);
  const double ceiling_us =
      cfg.params.max_trials * cfg.params.trial_s * 1e6 +
      ((cfg.params.max_trials - 1) / cfg.params.pump_period) * cfg.params.pump_duration_s * 1e6;
  const auto& bins = stats.storage_us.bins();
  const double top_edge = static_cast<double>(bins.size()) * stats.storage_us.bin_width();
  CHECK(top_edge <= ceiling_us + stats.storage_us.bin_width());

  const MemoryDecayModel decay = MemoryDecayModel::calibrated();
  double previous2 = 1.1, previous3 = 1.1, previous_c = 1.1;
  for (double t = 0.0; t <= 2e-3; t += 5e-5) {
    const double g2 = decay.retrieval_factor2(t);
    const double g3 = decay.retrieval_factor3(t);
    const double lam = decay.coherence_factor(t);
    CHECK(g2 >= 0.0);
    CHECK(g2 <= previous2);
    CHECK(g3 <= previous3);
    CHECK(lam <= previous_c);
    previous2 = g2;
    previous3 = g3;
    previous_c = lam;
  }
  // calibration anchors: retrieval halves over 1 ms, pair fidelity 0.929
  CHECK(decay.retrieval_factor2(1e-3) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(0.5 * (1.0 + decay.coherence_factor(1e-3)) == doctest::Approx(0.929).epsilon(1e-12));
}

TEST_CASE("no-memory mode: trivial p = 1 and rate convergence") {
  SimConfig sure = boosted_config(1.0, 5000);
  sure.mode = ScalingMode::NoMemory;
  const SimStats trivial = run_no_memory(sure);
  CHECK(trivial.mean_prep_time_s == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(trivial.mean_storage_time_s == 0.0);

  SimConfig cfg = boosted_config(0.005, 30000, 15);
  cfg.mode = ScalingMode::NoMemory;
  const SimStats stats = run_no_memory(cfg);
  const double expected_rate = rate_no_memory(cfg.params);
  CHECK(stats.fourfold_count > 2000);
  CHECK(std::abs(stats.fourfold_rate_per_s() - expected_rate) <
        3.0 * stats.fourfold_rate_err_per_s());

  // heralding takes 1/p^2 trials on average
  const double expected_prep = cfg.params.trial_s / (cfg.params.p * cfg.params.p);
  CHECK(std::abs(stats.mean_prep_time_s - expected_prep - cfg.params.trial_s) <
        3.0 * stats.prep_time_err_s + expected_prep * 0.01);
}

TEST_CASE("mode dispatch is strict") {
  SimConfig cfg = base_config(0.01, 10);
  cfg.mode = ScalingMode::NoMemory;
  CHECK_THROWS_AS(run_protocol(cfg), std::invalid_argument);
  cfg.mode = ScalingMode::MemoryEnhanced;
  CHECK_THROWS_AS(run_no_memory(cfg), std::invalid_argument);
  cfg.mode = ScalingMode::DirectTransmission;
  CHECK_THROWS_AS(run(cfg), std::invalid_argument);
  cfg.rounds = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("final state: ideal inputs give unit fidelity, decay is monotone") {
  SimConfig ideal = base_config(0.001, 10);
  ideal.werner_coeff = 0.0;
  const FinalState pure = final_state(ideal, 5e-4);
  CHECK(pure.fidelity == doctest::Approx(1.0).epsilon(1e-12));

  SimConfig cfg = base_config(0.001, 10);
  cfg.decay = MemoryDecayModel::calibrated();
  double previous = 1.1;
  for (double t : {0.0, 1e-5, 1e-4, 5e-4, 1e-3, 5e-3}) {
    const FinalState fs = final_state(cfg, t);
    CHECK(fs.fidelity <= previous + 1e-12);
    previous = fs.fidelity;
  }

  // the closed form used per round matches the full operator route
  for (double t : {0.0, 1e-5, 2e-4, 1e-3}) {
    const FinalState fs = final_state(cfg, t);
    CHECK(final_state_fidelity(cfg, t) == doctest::Approx(fs.fidelity).epsilon(1e-10));
  }

  // segment-I pair fidelity anchor propagated through the swap at chi -> 0
  SimConfig anchored = base_config(0.001, 10);
  anchored.decay = MemoryDecayModel::calibrated();
  anchored.werner_coeff = 0.0;
  const FinalState at_1ms = final_state(anchored, 1e-3);
  CHECK(std::abs(at_1ms.fidelity - 0.929) < 1e-3);
}

TEST_CASE("connected-state phase is storage-invariant with locked paths") {
  SimConfig cfg = base_config(0.001, 10);
  cfg.decay = MemoryDecayModel::calibrated();
  const double expect_deg = 337.5;  // phi1 default + phi2 = 0
  double reference = -1.0;
  for (double t_us : {1.0, 10.0, 21.3, 500.0, 1000.0}) {
    const FinalState fs = final_state(cfg, t_us * 1e-6);
    const double phase = extract_phase_deg(fs.rho);
    if (reference < 0.0) reference = phase;
    CHECK(std::abs(phase - reference) < 1e-9);
    CHECK(phase == doctest::Approx(expect_deg).epsilon(1e-9));
  }

  SimConfig drifting = cfg;
  drifting.phase_drift = 2.0 * M_PI * 1000.0;  // one turn per millisecond
  // both memories precess while stored: the first for the requested time,
  // the second for its single read trial
  const double drift_deg_per_s = 360.0 * 1000.0;
  const double expected =
      std::fmod(337.5 + drift_deg_per_s * (0.25e-3 + cfg.params.trial_s), 360.0);
  const double at_quarter = extract_phase_deg(final_state(drifting, 0.25e-3).rho);
  CHECK(at_quarter == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("simulated-time budget stops the run and is flagged") {
  SimConfig cfg = base_config(0.001, 1000000, 2);
  cfg.max_sim_seconds = 2.0;
  const SimStats stats = run_protocol(cfg);
  CHECK(stats.budget_exhausted);
  CHECK(stats.rounds_completed < cfg.rounds);
  CHECK(stats.rounds_completed > 0);
  CHECK(stats.simulated_time_s >= 2.0);

  SimConfig hopeless = cfg;
  hopeless.max_sim_seconds = 0.1;  // below the first loading cycle
  const SimStats none = run_protocol(hopeless);
  CHECK(none.budget_exhausted);
  CHECK(none.rounds_completed == 0);
}

TEST_CASE("sweep is deterministic and decreasing-C makes rates superlinear") {
  SimConfig cfg = boosted_config(0.0, 20000, 99);
  const std::vector<double> grid = {0.002, 0.004, 0.008};
  cfg.params.p = grid[0];
  const auto rows_a = sweep(cfg, grid, SweepMode::Both);
  const auto rows_b = sweep(cfg, grid, SweepMode::Both);
  REQUIRE(rows_a.size() == 3);
  for (std::size_t i = 0; i < rows_a.size(); ++i) {
    CHECK(rows_a[i].memory.rng_fingerprint == rows_b[i].memory.rng_fingerprint);
    CHECK(rows_a[i].no_memory.rng_fingerprint == rows_b[i].no_memory.rng_fingerprint);
    CHECK(rows_a[i].memory.fourfold_count == rows_b[i].memory.fourfold_count);
  }
  // doubling p: memory rate grows by 2 * C-ratio, memoryless by 4
  const double mem_ratio =
      rows_a[2].memory.fourfold_rate_per_s() / rows_a[1].memory.fourfold_rate_per_s();
  CHECK(mem_ratio > 1.9);
  CHECK(mem_ratio < 2.3);
  const double nomem_ratio =
      rows_a[2].no_memory.fourfold_rate_per_s() / rows_a[1].no_memory.fourfold_rate_per_s();
  CHECK(nomem_ratio > 3.5);
  CHECK(nomem_ratio < 4.5);

  CHECK_THROWS_AS(sweep(cfg, {}, SweepMode::Both), std::invalid_argument);
}

TEST_CASE("time-cost histogram covers steps I+II+III") {
  SimConfig cfg = base_config(0.004, 20000, 41);
  const SimStats stats = run_protocol(cfg);
  CHECK(stats.time_cost_us.count() == stats.rounds_completed);
  const double expected_us = (stats.mean_prep_time_s + cfg.params.trial_s) * 1e6;
  CHECK(stats.time_cost_us.mean() == doctest::Approx(expected_us).epsilon(1e-9));
  CHECK(stats.time_cost_us.mean() > stats.storage_us.mean());
}

TEST_CASE("memory enhancement ratio at p = 0.1% is near the 353x prediction") {
  SimConfig cfg = boosted_config(0.001, 3000, 23);
  const auto rows = sweep(cfg, {0.001}, SweepMode::Both);
  REQUIRE(rows.size() == 1);
  const double ratio =
      rows[0].memory.fourfold_rate_per_s() / rows[0].no_memory.fourfold_rate_per_s();
  const double expected = acceleration(cfg.params);  // 1/(2Cp) at p = 0.1%
  const double rel_err = std::sqrt(1.0 / static_cast<double>(rows[0].memory.fourfold_count) +
                                   1.0 / static_cast<double>(rows[0].no_memory.fourfold_count));
  CHECK(std::abs(ratio - expected) < 3.0 * expected * rel_err);
  CHECK(std::abs(expected - 353.3) < 0.1);
}

TEST_CASE("repetition scaling with channel transmission matches the formulas") {
  const double p = 0.01, q = 0.3;
  const auto mem = simulate_repetitions(p, q, ScalingMode::MemoryEnhanced, 40000, 11);
  CHECK(std::abs(mem.mean - segment_scaling(p, q, ScalingMode::MemoryEnhanced)) <
        3.0 * mem.mean_err);
  const auto direct = simulate_repetitions(p, q, ScalingMode::DirectTransmission, 40000, 12);
  CHECK(std::abs(direct.mean - segment_scaling(p, q, ScalingMode::DirectTransmission)) <
        3.0 * direct.mean_err);
  const auto nomem = simulate_repetitions(p, q, ScalingMode::NoMemory, 20000, 13);
  CHECK(std::abs(nomem.mean - segment_scaling(p, q, ScalingMode::NoMemory)) <
        3.0 * nomem.mean_err);
}

TEST_CASE("event trace is ordered and consistent with the round stats") {
  SimConfig cfg = boosted_config(0.01, 200, 8);
  std::vector<SimEvent> events;
  const SimStats stats = run_protocol(cfg, [&](const SimEvent& ev) { events.push_back(ev); });
  REQUIRE(!events.empty());
  double last_time = 0.0;
  std::uint64_t heralds1 = 0, fourfolds = 0;
  for (const auto& ev : events) {
    CHECK(ev.time_s >= last_time - 1e-12);
    last_time = ev.time_s;
    if (ev.type == SimEvent::Type::Step1Herald) ++heralds1;
    if (ev.type == SimEvent::Type::Fourfold) ++fourfolds;
  }
  CHECK(heralds1 >= stats.rounds_completed);
  CHECK(fourfolds == stats.fourfold_count);
}

} // TEST_SUITE
