#pragma once

#include <optional>
#include <vector>

namespace repsim {

// Per-trial probabilities, efficiencies and timings of the two-segment
// connection protocol. Defaults are the experimental operating point.
struct ProtocolParams {
  // Overall signal detection probability per write trial.
  double p = 0.001;
  // Intrinsic excitation probability; derived as p / eps_s() when unset.
  std::optional<double> chi;

  // Signal detection efficiency factors: fiber coupling, optical
  // transmission, detector.
  double eps_s_fiber = 0.75;
  double eps_s_trans = 0.8;
  double eps_s_det = 0.55;

  // Measured overall idler retrieval-detection products for the two memory
  // nodes, plus the additional fiber factor picked up on the swap path
  // (applied once per idler arm).
  double eta2_eps_i = 0.042;
  double eta3_eps_i = 0.019;
  double extra_idler = 0.65;
  // Scalar fit multiplier on eta2*eta3*eps_i^2 (rate curve calibration knob).
  double idler_fit = 1.0;

  double trial_s = 1e-6;           // write-clean cycle length A
  int max_trials = 1000;           // step-II truncation n
  int pump_period = 50;            // trials between optical-pumping pauses
  double pump_duration_s = 5e-6;   // pause length
  double duty_cycle = 0.10;        // active fraction of wall-clock time

  void validate() const;

  double eps_s() const { return eps_s_fiber * eps_s_trans * eps_s_det; }
  double chi_value() const { return chi ? *chi : p / eps_s(); }
  // Effective per-arm idler detection probabilities on the swap path.
  double idler2_eff() const { return eta2_eps_i * extra_idler; }
  double idler3_eff() const { return eta3_eps_i * extra_idler; }
  // Probability that a heralded pair of memories yields a registered
  // four-fold event, before retrieval decay: eta2 eta3 eps_i^2 / 2.
  double bsm_factor() const { return idler_fit * idler2_eff() * idler3_eff() * 0.5; }
};

enum class ScalingMode { MemoryEnhanced, NoMemory, DirectTransmission };

// Expected time to herald the first photon of a segment, write trials of
// length A with a pumping pause every `pump_period` trials:
//   T' = A/p + pump_duration * q^K / (1 - q^K), q = 1 - p.
double expected_time_first_photon(double p, double trial_s, int pump_period, double pump_duration_s);
double expected_time_first_photon(const ProtocolParams& params);

// Expected time to herald both segments, including step-II truncation at n
// trials and full restarts. Solved by exact algebraic rearrangement of the
// affine recursion.
double expected_total_time(const ProtocolParams& params);

// C(n, p) = T / (2A/p), the overhead over the ideal preparation time.
double correction_factor(const ProtocolParams& params);
double correction_factor(int max_trials, double p);

// Four-fold coincidence rate of the memory-enhanced protocol,
//   R = (p / 2A) (1/C) (eta2 eta3 eps_i^2 / 2) D,
// and the same with an externally fixed correction factor.
double rate_memory(const ProtocolParams& params);
double rate_memory_with_correction(const ProtocolParams& params, double correction);

// Four-fold rate of the memoryless scheme that needs both segments to herald
// in the same trial: R' = (p^2 / A) (eta2 eta3 eps_i^2 / 2) D.
double rate_no_memory(const ProtocolParams& params);

// R / R' = 1 / (2 C p).
double acceleration(const ProtocolParams& params);

// Trial-index law P(i) = (1-p)^{i-1} p, optionally truncated at n trials
// with an explicit failure mass.
struct TrialDistribution {
  double p = 0.0;
  std::optional<int> truncation;

  double pmf(int trial) const;
  double failure_mass() const;
  // Mean trial index conditioned on success (within the truncation window).
  double conditional_mean() const;
};

enum class HeraldStep { StepOne, StepTwo };

TrialDistribution trial_pmf(double p, int max_trials, HeraldStep step);

// E[i A + floor((i-1)/K) pump | success within n trials]: how long the
// first memory stores while the second segment is being heralded.
double mean_storage_time(const ProtocolParams& params);

// Expected number of step-I/II sequences until step II succeeds:
// 1 / (1 - (1-p)^n).
double mean_repetitions(double p, int max_trials);

// Expected total repetitions for connecting two segments with per-segment
// excitation budget p/2 and channel transmission q: 4/(pq) with memories,
// 1/(p q^2) for direct transmission, 4/(p^2 q^2) without memories.
double segment_scaling(double p, double q_channel, ScalingMode mode);

// Least-squares scale factor between a modeled rate curve and measured
// values: the calibration behind the idler_fit multiplier. Minimizes
// sum (s * model_i - measured_i)^2 over s.
double fit_rate_scale(const std::vector<double>& model, const std::vector<double>& measured);

// Storage-time average of a retrieval decay factor g(t) over the step-II
// success distribution; used to compare decayed Monte Carlo rates against
// the constant-efficiency rate formula.
template <typename DecayFn>
double mean_retrieval_factor(const ProtocolParams& params, DecayFn&& g) {
  const TrialDistribution dist = trial_pmf(params.p, params.max_trials, HeraldStep::StepTwo);
  double weighted = 0.0, total = 0.0;
  for (int i = 1; i <= params.max_trials; ++i) {
    const double w = dist.pmf(i);
    const double t = static_cast<double>(i) * params.trial_s +
                     static_cast<double>((i - 1) / params.pump_period) * params.pump_duration_s;
    weighted += w * g(t);
    total += w;
  }
  return weighted / total;
}

} // namespace repsim
