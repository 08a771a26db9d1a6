#include "repsim/analytic.hpp"

#include <cmath>
#include <stdexcept>

namespace repsim {

namespace {

void check_probability(double p, const char* what) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument(std::string(what) + " must be in (0,1]");
}

// (1-p)^m evaluated as exp(m log1p(-p)) so small p stays accurate.
double q_pow(double p, double m) {
  if (p >= 1.0) return m == 0.0 ? 1.0 : 0.0;
  return std::exp(m * std::log1p(-p));
}

long double q_pow_l(double p, long double m) {
  if (p >= 1.0) return m == 0.0L ? 1.0L : 0.0L;
  return expl(m * log1pl(-static_cast<long double>(p)));
}

// 1 - (1-p)^n without cancellation.
long double success_mass_l(double p, int n) {
  if (p >= 1.0) return 1.0L;
  return -expm1l(static_cast<long double>(n) * log1pl(-static_cast<long double>(p)));
}

// Expected pumping pauses before a success at trial i <= n:
// sum_{i=1..n} q^{i-1} p floor((i-1)/K) = sum_{m=1..M} (q^{mK} - q^n),
// M = floor((n-1)/K). Unbounded case: q^K / (1 - q^K). Extended precision
// keeps the terminal subtractions from eating the small-n-p regime.
double truncated_pump_expectation(double p, int n, int period) {
  const int m_max = (n - 1) / period;
  if (m_max == 0) return 0.0;
  const long double qn = q_pow_l(p, n);
  long double sum = 0.0L;
  for (int m = 1; m <= m_max; ++m) sum += q_pow_l(p, static_cast<long double>(m) * period);
  return static_cast<double>(sum - static_cast<long double>(m_max) * qn);
}

// sum_{i=1..n} q^{i-1} p i = (1 - q^n)/p - n q^n.
double truncated_trial_expectation(double p, int n) {
  const long double s = success_mass_l(p, n);
  const long double qn = q_pow_l(p, n);
  return static_cast<double>(s / p - static_cast<long double>(n) * qn);
}

// Time consumed by a step that ran `trials` trials: i A + floor((i-1)/K) P.
double elapsed(double trials, double trial_s, int period, double pump_s) {
  return trials * trial_s + std::floor((trials - 1.0) / period) * pump_s;
}

} // namespace

void ProtocolParams::validate() const {
  check_probability(p, "p");
  if (chi) {
    check_probability(*chi, "chi");
    const double implied = *chi * eps_s();
    if (std::abs(implied - p) > 1e-9 * std::max(p, implied))
      throw std::invalid_argument("chi and p are inconsistent: p must equal chi * eps_s");
  }
  check_probability(eps_s_fiber, "eps_s_fiber");
  check_probability(eps_s_trans, "eps_s_trans");
  check_probability(eps_s_det, "eps_s_det");
  check_probability(eta2_eps_i, "eta2_eps_i");
  check_probability(eta3_eps_i, "eta3_eps_i");
  check_probability(extra_idler, "extra_idler");
  if (!(idler_fit > 0.0)) throw std::invalid_argument("idler_fit must be positive");
  if (!(trial_s > 0.0)) throw std::invalid_argument("trial duration must be positive");
  if (max_trials < 1) throw std::invalid_argument("max_trials must be at least 1");
  if (pump_period < 1) throw std::invalid_argument("pump_period must be at least 1");
  if (pump_duration_s < 0.0) throw std::invalid_argument("pump duration must be non-negative");
  if (duty_cycle < 0.0 || duty_cycle > 1.0) throw std::invalid_argument("duty cycle must be in [0,1]");
}

double expected_time_first_photon(double p, double trial_s, int pump_period,
                                  double pump_duration_s) {
  check_probability(p, "p");
  const double qk = q_pow(p, pump_period);
  const double pump_term = qk < 1.0 ? pump_duration_s * qk / (1.0 - qk) : 0.0;
  return trial_s / p + pump_term;
}

double expected_time_first_photon(const ProtocolParams& params) {
  return expected_time_first_photon(params.p, params.trial_s, params.pump_period,
                                    params.pump_duration_s);
}

double expected_total_time(const ProtocolParams& params) {
  params.validate();
  const double p = params.p;
  const int n = params.max_trials;
  const double qn = q_pow(p, n);
  const double success = static_cast<double>(success_mass_l(p, n));
  if (success <= 0.0) throw std::invalid_argument("expected_total_time undefined: success probability is 0");

  const double t_first = expected_time_first_photon(params);
  const double success_sum =
      params.trial_s * truncated_trial_expectation(p, n) +
      params.pump_duration_s * truncated_pump_expectation(p, n, params.pump_period);
  const double restart_cost =
      elapsed(static_cast<double>(n), params.trial_s, params.pump_period, params.pump_duration_s);
  return (t_first + success_sum + qn * restart_cost) / success;
}

double correction_factor(const ProtocolParams& params) {
  return expected_total_time(params) / (2.0 * params.trial_s / params.p);
}

double correction_factor(int max_trials, double p) {
  ProtocolParams params;
  params.p = p;
  params.max_trials = max_trials;
  return correction_factor(params);
}

double rate_memory(const ProtocolParams& params) {
  return rate_memory_with_correction(params, correction_factor(params));
}

double rate_memory_with_correction(const ProtocolParams& params, double correction) {
  params.validate();
  return params.p / (2.0 * params.trial_s) / correction * params.bsm_factor() * params.duty_cycle;
}

double rate_no_memory(const ProtocolParams& params) {
  params.validate();
  return params.p * params.p / params.trial_s * params.bsm_factor() * params.duty_cycle;
}

double acceleration(const ProtocolParams& params) {
  return rate_memory(params) / rate_no_memory(params);
}

double TrialDistribution::pmf(int trial) const {
  if (trial < 1) return 0.0;
  if (truncation && trial > *truncation) return 0.0;
  return q_pow(p, trial - 1.0) * p;
}

double TrialDistribution::failure_mass() const {
  if (!truncation) return 0.0;
  return q_pow(p, static_cast<double>(*truncation));
}

double TrialDistribution::conditional_mean() const {
  if (!truncation) return 1.0 / p;
  const double success = 1.0 - failure_mass();
  if (success <= 0.0) throw std::invalid_argument("trial distribution has zero success probability");
  return truncated_trial_expectation(p, *truncation) / success;
}

TrialDistribution trial_pmf(double p, int max_trials, HeraldStep step) {
  check_probability(p, "p");
  TrialDistribution dist;
  dist.p = p;
  if (step == HeraldStep::StepTwo) {
    if (max_trials < 1) throw std::invalid_argument("max_trials must be at least 1");
    dist.truncation = max_trials;
  }
  return dist;
}

double mean_storage_time(const ProtocolParams& params) {
  params.validate();
  const double p = params.p;
  const int n = params.max_trials;
  const double success = static_cast<double>(success_mass_l(p, n));
  if (success <= 0.0) throw std::invalid_argument("mean_storage_time undefined: success probability is 0");
  const double expected =
      params.trial_s * truncated_trial_expectation(p, n) +
      params.pump_duration_s * truncated_pump_expectation(p, n, params.pump_period);
  return expected / success;
}

double mean_repetitions(double p, int max_trials) {
  check_probability(p, "p");
  if (max_trials < 1) throw std::invalid_argument("max_trials must be at least 1");
  const double success = static_cast<double>(success_mass_l(p, max_trials));
  if (success <= 0.0) throw std::invalid_argument("mean_repetitions undefined: success probability is 0");
  return 1.0 / success;
}

double fit_rate_scale(const std::vector<double>& model, const std::vector<double>& measured) {
  if (model.size() != measured.size() || model.empty())
    throw std::invalid_argument("fit_rate_scale needs matching non-empty curves");
  double cross = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    cross += model[i] * measured[i];
    norm += model[i] * model[i];
  }
  if (norm <= 0.0) throw std::invalid_argument("fit_rate_scale: model curve is identically zero");
  return cross / norm;
}

double segment_scaling(double p, double q_channel, ScalingMode mode) {
  check_probability(p, "p");
  check_probability(q_channel, "q_channel");
  switch (mode) {
    case ScalingMode::MemoryEnhanced: return 4.0 / (p * q_channel);
    case ScalingMode::DirectTransmission: return 1.0 / (p * q_channel * q_channel);
    case ScalingMode::NoMemory: return 4.0 / (p * p * q_channel * q_channel);
  }
  throw std::logic_error("unreachable scaling mode");
}

} // namespace repsim
