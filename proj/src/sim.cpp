#include "repsim/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace repsim {

namespace {

constexpr std::uint64_t kChunkRounds = 8192;
constexpr double kTraceBinUs = 25.0;

std::uint64_t mix_fingerprint(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}

double step_elapsed(std::uint64_t trials, const ProtocolParams& p) {
  return static_cast<double>(trials) * p.trial_s +
         static_cast<double>((trials - 1) / static_cast<std::uint64_t>(p.pump_period)) *
             p.pump_duration_s;
}

struct RoundEvent {
  SimEvent::Type type;
  double active_offset_s;  // in-round protocol time of the event
  int detail;
};

struct RoundResult {
  double prep_s = 0.0;
  double storage_s = 0.0;
  std::uint64_t repetitions = 0;
  std::uint64_t step1_trial = 0;
  std::uint64_t step2_trial = 0;
  bool idler2 = false;
  bool idler3 = false;
  int bell_outcome = -1;  // -1: no swap, an idler was lost
  bool fourfold = false;
  double fidelity = 0.0;
  bool trace = false;
  std::vector<RoundEvent> events;

  void record(SimEvent::Type type, double offset, std::uint64_t detail) {
    if (trace)
      events.push_back(RoundEvent{type, offset, static_cast<int>(std::min<std::uint64_t>(detail, INT32_MAX))});
  }
};

struct TraceBin {
  std::uint64_t count = 0;
  double fidelity_sum = 0.0;
};

struct Accum {
  std::uint64_t rounds = 0;
  std::uint64_t fourfold = 0;
  std::uint64_t idler2 = 0, idler3 = 0, both = 0;
  std::array<std::uint64_t, 4> bell{};
  double active_s = 0.0;
  double prep_sum = 0.0, prep_sq = 0.0;
  double stor_sum = 0.0, stor_sq = 0.0;
  double reps_sum = 0.0, reps_sq = 0.0;
  double fid_sum = 0.0;
  Histogram storage_us{10.0};
  Histogram time_cost_us{100.0};
  Histogram repetitions{1.0};
  Histogram step1_trials{10.0};
  Histogram step2_trials{10.0};
  std::vector<TraceBin> trace;
  std::uint64_t fingerprint = 0xcbf29ce484222325ULL;

  void add_round(std::uint64_t round_index, const RoundResult& r, bool record_states,
                 double step3_s) {
    ++rounds;
    active_s += r.prep_s;
    prep_sum += r.prep_s;
    prep_sq += r.prep_s * r.prep_s;
    stor_sum += r.storage_s;
    stor_sq += r.storage_s * r.storage_s;
    const double reps = static_cast<double>(r.repetitions);
    reps_sum += reps;
    reps_sq += reps * reps;
    storage_us.add(r.storage_s * 1e6);
    time_cost_us.add((r.prep_s + step3_s) * 1e6);
    repetitions.add(reps);
    step1_trials.add(static_cast<double>(r.step1_trial));
    step2_trials.add(static_cast<double>(r.step2_trial));
    idler2 += r.idler2 ? 1 : 0;
    idler3 += r.idler3 ? 1 : 0;
    if (r.idler2 && r.idler3) {
      ++both;
      ++bell[static_cast<std::size_t>(r.bell_outcome)];
    }
    fourfold += r.fourfold ? 1 : 0;
    if (record_states) {
      fid_sum += r.fidelity;
      const auto bin = static_cast<std::size_t>(r.storage_s * 1e6 / kTraceBinUs);
      if (bin >= trace.size()) trace.resize(bin + 1);
      trace[bin].count += 1;
      trace[bin].fidelity_sum += r.fidelity;
    }
    fingerprint = mix_fingerprint(fingerprint, round_index);
    fingerprint = mix_fingerprint(fingerprint, r.step1_trial);
    fingerprint = mix_fingerprint(fingerprint, r.step2_trial);
    fingerprint = mix_fingerprint(fingerprint, r.repetitions);
    fingerprint = mix_fingerprint(fingerprint,
                                  (r.idler2 ? 1u : 0u) | (r.idler3 ? 2u : 0u) |
                                      (r.fourfold ? 4u : 0u) |
                                      (static_cast<std::uint64_t>(r.bell_outcome + 1) << 3));
  }

  void merge(const Accum& o) {
    rounds += o.rounds;
    fourfold += o.fourfold;
    idler2 += o.idler2;
    idler3 += o.idler3;
    both += o.both;
    for (std::size_t i = 0; i < 4; ++i) bell[i] += o.bell[i];
    active_s += o.active_s;
    prep_sum += o.prep_sum;
    prep_sq += o.prep_sq;
    stor_sum += o.stor_sum;
    stor_sq += o.stor_sq;
    reps_sum += o.reps_sum;
    reps_sq += o.reps_sq;
    fid_sum += o.fid_sum;
    storage_us.merge(o.storage_us);
    time_cost_us.merge(o.time_cost_us);
    repetitions.merge(o.repetitions);
    step1_trials.merge(o.step1_trials);
    step2_trials.merge(o.step2_trials);
    if (o.trace.size() > trace.size()) trace.resize(o.trace.size());
    for (std::size_t i = 0; i < o.trace.size(); ++i) {
      trace[i].count += o.trace[i].count;
      trace[i].fidelity_sum += o.trace[i].fidelity_sum;
    }
    fingerprint = mix_fingerprint(fingerprint, o.fingerprint);
  }
};

double mean_of(double sum, std::uint64_t n) {
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double mean_err_of(double sum, double sq, std::uint64_t n) {
  if (n < 2) return 0.0;
  const double dn = static_cast<double>(n);
  const double var = (sq - sum * sum / dn) / (dn - 1.0);
  return var > 0.0 ? std::sqrt(var / dn) : 0.0;
}

double wall_from_active(const SimConfig& cfg, double active_s) {
  const double window = cfg.active_window_s();
  if (!std::isfinite(window) || window <= 0.0) return active_s;
  const double reloads = std::floor(active_s / window) + 1.0;
  return active_s + reloads * cfg.load_dead_s;
}

double fidelity_formula(const SimConfig& cfg, double storage_s) {
  const double w = std::clamp(cfg.werner_coeff * cfg.params.chi_value(), 0.0, 1.0);
  const double lam = cfg.decay.coherence_factor(storage_s) *
                     cfg.decay.coherence_factor(cfg.params.trial_s);
  const double pure_weight = (1.0 - w) * (1.0 - w);
  return pure_weight * 0.5 * (1.0 + lam) + (1.0 - pure_weight) * 0.25;
}

// Step III: read both memories, detect the idlers, register the swap when
// the Bell signature lands on one of the two recorded coincidence pairs
// (Phi+ or Phi-), which carries the protocol's 1/2 swap efficiency.
void sample_swap(RngStream& rng, const SimConfig& cfg, RoundResult& r) {
  const auto& p = cfg.params;
  const double g2 = cfg.decay.retrieval_factor2(r.storage_s);
  const double g3 = cfg.decay.retrieval_factor3(p.trial_s);
  r.idler2 = rng.bernoulli(std::min(1.0, p.idler2_eff() * g2 * p.idler_fit));
  r.idler3 = rng.bernoulli(p.idler3_eff() * g3);
  const double swap_time = r.prep_s + p.trial_s;
  if (r.idler2 && r.idler3) {
    r.bell_outcome = rng.uniform_int(4);
    r.fourfold = r.bell_outcome == 0 || r.bell_outcome == 1;
    r.record(SimEvent::Type::BsmOutcome, swap_time, static_cast<std::uint64_t>(r.bell_outcome));
    if (r.fourfold) r.record(SimEvent::Type::Fourfold, swap_time, 0);
  }
  if (cfg.record_states) r.fidelity = fidelity_formula(cfg, r.storage_s);
}

void simulate_round_memory(RngStream& rng, const SimConfig& cfg, RoundResult& r) {
  const auto& p = cfg.params;
  const auto n = static_cast<std::uint64_t>(p.max_trials);
  for (;;) {
    ++r.repetitions;
    r.step1_trial = rng.geometric_trials(p.p);
    const double t1 = step_elapsed(r.step1_trial, p);
    r.record(SimEvent::Type::Step1Herald, r.prep_s + t1, r.step1_trial);
    const std::uint64_t g = rng.geometric_trials(p.p);
    if (g <= n) {
      r.step2_trial = g;
      r.storage_s = step_elapsed(g, p);
      r.record(SimEvent::Type::Step2Herald, r.prep_s + t1 + r.storage_s, g);
      r.prep_s += t1 + r.storage_s;
      break;
    }
    r.prep_s += t1 + step_elapsed(n, p);
    r.record(SimEvent::Type::Step2Restart, r.prep_s, n);
  }
  sample_swap(rng, cfg, r);
}

void simulate_round_no_memory(RngStream& rng, const SimConfig& cfg, RoundResult& r) {
  const auto& p = cfg.params;
  const std::uint64_t trial = rng.geometric_trials(p.p * p.p);
  r.repetitions = 1;
  r.step1_trial = trial;
  r.step2_trial = trial;
  r.storage_s = 0.0;
  r.prep_s = static_cast<double>(trial) * p.trial_s;  // no pumping pauses
  r.record(SimEvent::Type::Step1Herald, r.prep_s, trial);
  r.record(SimEvent::Type::Step2Herald, r.prep_s, trial);
  sample_swap(rng, cfg, r);
}

using RoundFn = void (*)(RngStream&, const SimConfig&, RoundResult&);

SimStats finalize(const SimConfig& cfg, const Accum& acc, bool budget_exhausted) {
  SimStats s;
  s.rounds_completed = acc.rounds;
  s.fourfold_count = acc.fourfold;
  s.budget_exhausted = budget_exhausted;
  // step III adds one read trial per completed round
  s.active_time_s = acc.active_s + static_cast<double>(acc.rounds) * cfg.params.trial_s;
  s.simulated_time_s = wall_from_active(cfg, s.active_time_s);
  s.mean_prep_time_s = mean_of(acc.prep_sum, acc.rounds);
  s.prep_time_err_s = mean_err_of(acc.prep_sum, acc.prep_sq, acc.rounds);
  s.mean_storage_time_s = mean_of(acc.stor_sum, acc.rounds);
  s.storage_time_err_s = mean_err_of(acc.stor_sum, acc.stor_sq, acc.rounds);
  s.mean_repetitions = mean_of(acc.reps_sum, acc.rounds);
  s.repetitions_err = mean_err_of(acc.reps_sum, acc.reps_sq, acc.rounds);
  s.idler2_detected = acc.idler2;
  s.idler3_detected = acc.idler3;
  s.both_idlers = acc.both;
  s.bell_outcomes = acc.bell;
  s.storage_us = acc.storage_us;
  s.time_cost_us = acc.time_cost_us;
  s.repetitions = acc.repetitions;
  s.step1_trials = acc.step1_trials;
  s.step2_trials = acc.step2_trials;
  if (cfg.record_states) {
    s.mean_final_fidelity = mean_of(acc.fid_sum, acc.rounds);
    for (std::size_t i = 0; i < acc.trace.size(); ++i) {
      if (acc.trace[i].count == 0) continue;
      FidelityBin bin;
      bin.storage_us = (static_cast<double>(i) + 0.5) * kTraceBinUs;
      bin.mean_fidelity = acc.trace[i].fidelity_sum / static_cast<double>(acc.trace[i].count);
      bin.count = acc.trace[i].count;
      s.fidelity_trace.push_back(bin);
    }
  }
  s.rng_fingerprint = acc.fingerprint;
  return s;
}

void emit_round_events(const SimConfig& cfg, const EventSink& sink, std::uint64_t round,
                       const RoundResult& r, double active_before, std::uint64_t& reloads_seen) {
  const double window = cfg.active_window_s();
  for (const RoundEvent& ev : r.events) {
    const double active = active_before + ev.active_offset_s;
    if (std::isfinite(window) && window > 0.0) {
      const auto k = static_cast<std::uint64_t>(std::floor(active / window));
      while (reloads_seen < k) {
        ++reloads_seen;
        sink(SimEvent{SimEvent::Type::Reload,
                      wall_from_active(cfg, static_cast<double>(reloads_seen) * window), round,
                      static_cast<int>(std::min<std::uint64_t>(reloads_seen, INT32_MAX))});
      }
    }
    sink(SimEvent{ev.type, wall_from_active(cfg, active), round, ev.detail});
  }
}

// Aggregation is chunk-aligned on fixed boundaries in every execution mode,
// so results are bit-identical no matter how many threads run the chunks.
SimStats run_rounds(const SimConfig& cfg, RoundFn round_fn, const EventSink& sink) {
  cfg.validate();
  const bool sequential = sink != nullptr || std::isfinite(cfg.max_sim_seconds) || cfg.threads == 1;

  if (sequential) {
    Accum total;
    Accum chunk;
    std::uint64_t reloads_seen = 0;
    bool budget_exhausted = false;
    for (std::uint64_t i = 0; i < cfg.rounds; ++i) {
      if (i > 0 && i % kChunkRounds == 0) {
        total.merge(chunk);
        chunk = Accum();
      }
      const double active_so_far = total.active_s + chunk.active_s;
      const std::uint64_t rounds_so_far = total.rounds + chunk.rounds;
      if (wall_from_active(cfg, active_so_far + static_cast<double>(rounds_so_far) *
                                                    cfg.params.trial_s) >= cfg.max_sim_seconds) {
        budget_exhausted = true;
        break;
      }
      RngStream rng(cfg.master_seed, i);
      RoundResult r;
      r.trace = sink != nullptr;
      round_fn(rng, cfg, r);
      const double active_before =
          active_so_far + static_cast<double>(rounds_so_far) * cfg.params.trial_s;
      chunk.add_round(i, r, cfg.record_states, cfg.params.trial_s);
      if (sink) emit_round_events(cfg, sink, i, r, active_before, reloads_seen);
    }
    total.merge(chunk);
    return finalize(cfg, total, budget_exhausted);
  }

  const std::uint64_t n_chunks = (cfg.rounds + kChunkRounds - 1) / kChunkRounds;
  unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::uint64_t>(n_threads, n_chunks));

  std::vector<Accum> chunk_accums(n_chunks);
  std::atomic<std::uint64_t> next_chunk{0};
  auto worker = [&] {
    for (;;) {
      const std::uint64_t c = next_chunk.fetch_add(1);
      if (c >= n_chunks) return;
      const std::uint64_t begin = c * kChunkRounds;
      const std::uint64_t end = std::min(begin + kChunkRounds, cfg.rounds);
      Accum acc;
      for (std::uint64_t i = begin; i < end; ++i) {
        RngStream rng(cfg.master_seed, i);
        RoundResult r;
        round_fn(rng, cfg, r);
        acc.add_round(i, r, cfg.record_states, cfg.params.trial_s);
      }
      chunk_accums[c] = std::move(acc);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  Accum total;
  for (const auto& acc : chunk_accums) total.merge(acc);
  return finalize(cfg, total, false);
}

} // namespace

void SimConfig::validate() const {
  params.validate();
  decay.validate();
  if (rounds == 0) throw std::invalid_argument("rounds must be positive");
  if (!(params.duty_cycle > 0.0)) throw std::invalid_argument("simulation requires a positive duty cycle");
  if (!std::isfinite(phase_drift)) throw std::invalid_argument("phase drift must be finite");
  if (!std::isfinite(phi1) || !std::isfinite(phi2)) throw std::invalid_argument("segment phases must be finite");
  if (werner_coeff < 0.0) throw std::invalid_argument("werner_coeff must be non-negative");
  if (!(load_dead_s > 0.0)) throw std::invalid_argument("loading dead time must be positive");
  if (threads < 0) throw std::invalid_argument("threads must be non-negative");
}

SimStats run_protocol(const SimConfig& config, const EventSink& sink) {
  if (config.mode != ScalingMode::MemoryEnhanced)
    throw std::invalid_argument("run_protocol requires memory-enhanced mode");
  return run_rounds(config, &simulate_round_memory, sink);
}

SimStats run_no_memory(const SimConfig& config, const EventSink& sink) {
  if (config.mode != ScalingMode::NoMemory)
    throw std::invalid_argument("run_no_memory requires no-memory mode");
  return run_rounds(config, &simulate_round_no_memory, sink);
}

SimStats run(const SimConfig& config, const EventSink& sink) {
  switch (config.mode) {
    case ScalingMode::MemoryEnhanced: return run_protocol(config, sink);
    case ScalingMode::NoMemory: return run_no_memory(config, sink);
    case ScalingMode::DirectTransmission:
      throw std::invalid_argument("direct transmission has no full protocol simulation");
  }
  throw std::logic_error("unreachable mode");
}

FinalState final_state(const SimConfig& config, double storage_time_s) {
  config.validate();
  if (storage_time_s < 0.0) throw std::invalid_argument("storage time must be non-negative");
  const auto& p = config.params;
  const double t3 = p.trial_s;
  const double w = std::clamp(config.werner_coeff * p.chi_value(), 0.0, 1.0);

  const double phi1 = config.phi1 + config.phase_drift * storage_time_s;
  const double phi2 = config.phi2 + config.phase_drift * t3;

  DensityMatrix seg1 = to_density(atom_photon_state(phi1, "S1", "I1"));
  seg1 = apply_channel(seg1, NoiseChannel::dephasing_residual(config.decay.coherence_factor(storage_time_s), {"I1"}));
  if (w > 0.0) seg1 = apply_channel(seg1, NoiseChannel::depolarizing(w, {"S1", "I1"}));

  DensityMatrix seg2 = to_density(atom_photon_state(phi2, "S4", "I2"));
  seg2 = apply_channel(seg2, NoiseChannel::dephasing_residual(config.decay.coherence_factor(t3), {"I2"}));
  if (w > 0.0) seg2 = apply_channel(seg2, NoiseChannel::depolarizing(w, {"S4", "I2"}));

  DensityMatrix joint = permute(tensor(seg1, seg2), {"S1", "I1", "I2", "S4"});
  const BsmResult swap = bsm_project(joint);
  if (!swap.state) throw std::runtime_error("swap projection annihilated the state");

  FinalState out{*swap.state, 0.0, 0.0};
  const MaxEntangledFit fit = nearest_max_entangled_fidelity(out.rho);
  out.fidelity = fit.fidelity;
  out.phi = fit.phi;
  return out;
}

double final_state_fidelity(const SimConfig& config, double storage_time_s) {
  return fidelity_formula(config, storage_time_s);
}

std::vector<SweepRow> sweep(const SimConfig& config, const std::vector<double>& p_values,
                            SweepMode mode) {
  if (p_values.empty()) throw std::invalid_argument("sweep needs a non-empty p grid");
  std::vector<SweepRow> rows;
  rows.reserve(p_values.size());
  for (std::size_t k = 0; k < p_values.size(); ++k) {
    SweepRow row;
    row.p = p_values[k];
    SimConfig point = config;
    point.params.p = p_values[k];
    point.params.chi.reset();  // re-derived from the swept p
    if (mode == SweepMode::Memory || mode == SweepMode::Both) {
      point.mode = ScalingMode::MemoryEnhanced;
      point.master_seed = splitmix64(splitmix64(config.master_seed) ^ (2 * k + 1));
      row.memory = run_protocol(point);
      row.has_memory = true;
    }
    if (mode == SweepMode::NoMemory || mode == SweepMode::Both) {
      point.mode = ScalingMode::NoMemory;
      point.master_seed = splitmix64(splitmix64(config.master_seed) ^ (2 * k + 2));
      row.no_memory = run_no_memory(point);
      row.has_no_memory = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

RepetitionEstimate simulate_repetitions(double p_total, double q_channel, ScalingMode mode,
                                        std::uint64_t rounds, std::uint64_t master_seed) {
  if (rounds == 0) throw std::invalid_argument("rounds must be positive");
  if (!(p_total > 0.0) || p_total > 1.0 || !(q_channel > 0.0) || q_channel > 1.0)
    throw std::invalid_argument("p and q must be in (0,1]");
  const double per_segment = 0.5 * p_total * q_channel;
  double sum = 0.0, sq = 0.0;
  for (std::uint64_t i = 0; i < rounds; ++i) {
    RngStream rng(master_seed, i);
    double reps = 0.0;
    switch (mode) {
      case ScalingMode::MemoryEnhanced:
        reps = static_cast<double>(rng.geometric_trials(per_segment)) +
               static_cast<double>(rng.geometric_trials(per_segment));
        break;
      case ScalingMode::NoMemory:
        reps = static_cast<double>(rng.geometric_trials(per_segment * per_segment));
        break;
      case ScalingMode::DirectTransmission:
        reps = static_cast<double>(rng.geometric_trials(p_total * q_channel * q_channel));
        break;
    }
    sum += reps;
    sq += reps * reps;
  }
  RepetitionEstimate est;
  const double n = static_cast<double>(rounds);
  est.mean = sum / n;
  if (rounds > 1) {
    const double var = (sq - sum * sum / n) / (n - 1.0);
    est.mean_err = var > 0.0 ? std::sqrt(var / n) : 0.0;
  }
  return est;
}

} // namespace repsim
