#pragma once

#include "repsim/rng.hpp"
#include "repsim/state.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace repsim {

// Single-qubit polarization analyzer settings.
enum class Pol : char { H = 'H', V = 'V', D = 'D', A = 'A', R = 'R', L = 'L' };

Pol parse_pol(char token);
CVector pol_ket(Pol pol);

// A pair of analyzer settings, one per photon; measured as the rank-1
// projector |ab><ab|.
struct MeasurementBasis {
  Pol first = Pol::H;
  Pol second = Pol::H;

  CMatrix projector() const;
  std::string name() const;
  static MeasurementBasis parse(const std::string& token_a, const std::string& token_b);
};

// The default tomographically complete set {H,V,D,R} x {H,V,D,R}.
std::vector<MeasurementBasis> standard_bases();

struct CountsRecord {
  std::vector<std::pair<MeasurementBasis, std::uint64_t>> counts;

  std::uint64_t total() const;
};

// Forward model: coincidences per basis are Poisson with mean
// n_expected * Tr[Pi_b rho] (each basis occupies its own acquisition slot).
CountsRecord simulate_counts(const DensityMatrix& rho, const std::vector<MeasurementBasis>& bases,
                             double n_expected, RngStream& rng);

// Line-oriented counts file: "<basis1> <basis2> <count>" per line, '#' opens
// a comment. Parse errors carry the offending line and token.
CountsRecord parse_counts_file(const std::string& content);
std::string format_counts_file(const CountsRecord& counts);

struct ReconstructionOptions {
  double dilution = 0.1;       // iteration step weight; ignored in plain mode
  bool plain_iteration = false;
  double loglik_tol = 1e-10;   // stop when the log-likelihood gain drops below
  int max_iterations = 100000;
};

struct ReconstructionResult {
  DensityMatrix rho_hat;
  double log_likelihood = 0.0;
  double count_scale = 0.0;    // fitted counts-per-unit-probability factor
  int iterations = 0;
  bool converged = false;
  double fidelity = 0.0;       // to the nearest phase-family entangled state
  double fidelity_std = 0.0;   // bootstrap; 0 until estimated
  double phase_deg = 0.0;      // extracted coherence phase (0 if no coherence)
  // Log-likelihood after each accepted iteration; non-decreasing.
  std::vector<double> loglik_trace;
};

// Iterative maximum-likelihood reconstruction of a two-qubit state. The
// diluted update (I + eps R) rho (I + eps R) / N ascends the likelihood; a
// step that fails to ascend is retried with a halved step weight, so the
// reported trace is monotone by construction.
ReconstructionResult mle_reconstruct(const CountsRecord& counts,
                                     const ReconstructionOptions& options = {});

// Parametric bootstrap around the reconstructed state: resample Poisson
// counts from the fitted means, re-reconstruct, return the mean and standard
// deviation of the nearest-maximally-entangled fidelity over replicas.
std::pair<double, double> fidelity_with_error(const CountsRecord& counts, int n_bootstrap,
                                              RngStream& rng,
                                              const ReconstructionOptions& options = {});

// arg <VV| rho |HH> in degrees, mapped to [0, 360); the phase estimator for
// the entangled-state family. Throws when the coherence is zero.
double extract_phase_deg(const DensityMatrix& rho);

} // namespace repsim
