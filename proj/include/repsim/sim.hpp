#pragma once

#include "repsim/analytic.hpp"
#include "repsim/decay.hpp"
#include "repsim/histogram.hpp"
#include "repsim/rng.hpp"
#include "repsim/state.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace repsim {

struct SimConfig {
  ProtocolParams params;
  MemoryDecayModel decay = MemoryDecayModel::calibrated();
  ScalingMode mode = ScalingMode::MemoryEnhanced;

  std::uint64_t rounds = 10000;  // target successful connections
  // Optional cap on simulated wall-clock seconds; checked per round, so runs
  // with a cap execute sequentially.
  double max_sim_seconds = std::numeric_limits<double>::infinity();

  std::uint64_t master_seed = 0;
  double phase_drift = 0.0;  // rad per second of storage, 0 = locked paths
  bool record_states = false;

  double phi1 = 337.5 * M_PI / 180.0;  // segment-I path phase
  double phi2 = 0.0;                   // segment-II path phase
  // Per-segment depolarizing weight is werner_coeff * chi (double-excitation
  // error on each heralded pair).
  double werner_coeff = 1.0;

  // Atom-loading dead time per duty cycle (MOT load + compression + molasses
  // + drop). The active window length follows from the duty cycle D:
  // window = dead * D / (1 - D).
  double load_dead_s = 0.45;
  int threads = 1;  // 0 = hardware concurrency

  double active_window_s() const {
    const double d = params.duty_cycle;
    return d >= 1.0 ? std::numeric_limits<double>::infinity() : load_dead_s * d / (1.0 - d);
  }

  void validate() const;
};

// Point on the storage-time axis of the final-state fidelity trace.
struct FidelityBin {
  double storage_us = 0.0;
  double mean_fidelity = 0.0;
  std::uint64_t count = 0;
};

struct SimStats {
  std::uint64_t rounds_completed = 0;
  std::uint64_t fourfold_count = 0;
  bool budget_exhausted = false;

  double active_time_s = 0.0;     // in-window protocol time
  double simulated_time_s = 0.0;  // wall clock including loading dead time

  double mean_prep_time_s = 0.0;  // steps I+II per success, restarts included
  double prep_time_err_s = 0.0;   // standard error of that mean
  double mean_storage_time_s = 0.0;
  double storage_time_err_s = 0.0;
  double mean_repetitions = 0.0;
  double repetitions_err = 0.0;

  std::uint64_t idler2_detected = 0;
  std::uint64_t idler3_detected = 0;
  std::uint64_t both_idlers = 0;
  std::array<std::uint64_t, 4> bell_outcomes{};  // Phi+, Phi-, Psi+, Psi-

  Histogram storage_us{10.0};        // step-II duration per success
  Histogram time_cost_us{100.0};     // steps I+II+III per success
  Histogram repetitions{1.0};        // step-I/II sequences per success
  Histogram step1_trials{10.0};      // heralding trial index, segment I
  Histogram step2_trials{10.0};      // heralding trial index, segment II

  double mean_final_fidelity = 0.0;  // populated when record_states is set
  std::vector<FidelityBin> fidelity_trace;

  std::uint64_t rng_fingerprint = 0;

  double fourfold_rate_per_s() const {
    return simulated_time_s > 0.0 ? static_cast<double>(fourfold_count) / simulated_time_s : 0.0;
  }
  double fourfold_rate_err_per_s() const {
    return simulated_time_s > 0.0 ? std::sqrt(static_cast<double>(fourfold_count)) / simulated_time_s
                                  : 0.0;
  }
};

// Per-event trace record handed to the optional sink (verbose mode). Times
// are simulated wall-clock seconds.
struct SimEvent {
  enum class Type { Step1Herald, Step2Herald, Step2Restart, Reload, BsmOutcome, Fourfold };
  Type type;
  double time_s;
  std::uint64_t round;
  int detail;  // trial index, Bell outcome, or reload count
};
using EventSink = std::function<void(const SimEvent&)>;

// Runs the asynchronous two-segment protocol: step-I heralding, step-II
// heralding truncated at n trials with restart, step-III retrieval and swap.
// Deterministic for a fixed config, including under parallel execution.
SimStats run_protocol(const SimConfig& config, const EventSink& sink = nullptr);

// Memoryless reference: both segments must herald in the same trial.
SimStats run_no_memory(const SimConfig& config, const EventSink& sink = nullptr);

// Dispatch on config.mode.
SimStats run(const SimConfig& config, const EventSink& sink = nullptr);

// Exact model state after the swap for a given storage time of the first
// memory: both heralded pairs, storage dephasing and double-excitation
// mixing, |Phi+> projection of the idlers.
struct FinalState {
  DensityMatrix rho;  // labels (S1, S4)
  double fidelity;    // to the nearest phase-family maximally entangled state
  double phi;         // optimizing phase
};
FinalState final_state(const SimConfig& config, double storage_time_s);

// Closed-form fidelity of the same state; cross-checked against final_state.
double final_state_fidelity(const SimConfig& config, double storage_time_s);

struct SweepRow {
  double p = 0.0;
  SimStats memory;
  SimStats no_memory;
  bool has_memory = false;
  bool has_no_memory = false;
};

enum class SweepMode { Memory, NoMemory, Both };

// One protocol run per excitation probability, each with an independently
// derived seed; bit-reproducible for a fixed master seed.
std::vector<SweepRow> sweep(const SimConfig& config, const std::vector<double>& p_values,
                            SweepMode mode);

// Repetition-count model with an explicit per-segment channel transmission
// q: memories make the two segments sequential, without them both must
// succeed in one trial, direct transmission needs both hops at once.
struct RepetitionEstimate {
  double mean = 0.0;
  double mean_err = 0.0;
};
RepetitionEstimate simulate_repetitions(double p_total, double q_channel, ScalingMode mode,
                                        std::uint64_t rounds, std::uint64_t master_seed);

} // namespace repsim
