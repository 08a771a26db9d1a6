#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace repsim {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// Validation tolerances for state invariants. Eigenvalues above the PSD
// floor but below zero are clamped to zero when states are normalized.
inline constexpr double kHermTol = 1e-10;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kPsdFloor = -1e-10;

// Normalized pure state over named two-level subsystems. labels[0] is the
// most significant bit of the amplitude index.
struct PureState {
  CVector amplitudes;
  std::vector<std::string> labels;

  static PureState make(CVector amplitudes, std::vector<std::string> labels);

  int num_qubits() const { return static_cast<int>(labels.size()); }
  Eigen::Index dim() const { return amplitudes.size(); }
};

struct DensityMatrix {
  CMatrix entries;
  std::vector<std::string> labels;

  // Validates Hermiticity, unit trace and positivity, then clamps the
  // residual numerical noise (symmetrizes, zeroes negative eigenvalues,
  // renormalizes the trace).
  static DensityMatrix make(CMatrix entries, std::vector<std::string> labels);

  int num_qubits() const { return static_cast<int>(labels.size()); }
  Eigen::Index dim() const { return entries.rows(); }
};

DensityMatrix to_density(const PureState& psi);

// --- elementary kets -------------------------------------------------------

// Computational basis: |H> = |L> = index 0, |V> = |R> = index 1.
PureState basis_ket(int bit, std::string label);
inline PureState ket_h(std::string label = "S") { return basis_ket(0, std::move(label)); }
inline PureState ket_v(std::string label = "S") { return basis_ket(1, std::move(label)); }
inline PureState ket_l(std::string label = "A") { return basis_ket(0, std::move(label)); }
inline PureState ket_r(std::string label = "A") { return basis_ket(1, std::move(label)); }

// (|H>|L> + e^{i phi}|V>|R>)/sqrt(2): the heralded photon-memory pair of one
// repeater segment, with the interferometer path phase phi.
PureState atom_photon_state(double phi, std::string photon_label = "S", std::string memory_label = "A");

// (|00> + e^{i phi}|11>)/sqrt(2) on two named subsystems.
PureState phase_bell_state(double phi, std::string label_a, std::string label_b);

enum class BellOutcome { PhiPlus = 0, PhiMinus = 1, PsiPlus = 2, PsiMinus = 3 };

PureState bell_state(BellOutcome which, std::string label_a, std::string label_b);

// --- composition and reduction ---------------------------------------------

PureState tensor(const PureState& a, const PureState& b);
DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b);

// Trace out every subsystem not in `keep`; kept labels retain their original
// relative order. `keep` must be a non-empty subset of rho.labels.
DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<std::string>& keep);

// Reorder subsystems to the given label permutation.
PureState permute(const PureState& psi, const std::vector<std::string>& new_order);
DensityMatrix permute(const DensityMatrix& rho, const std::vector<std::string>& new_order);

// --- noise channels ---------------------------------------------------------

enum class ChannelKind { Identity, Dephasing, Depolarizing };

// Dephasing: strength s shrinks off-diagonal coherence by (1 - s); s = 1
// erases it. Depolarizing (Werner): strength w mixes the targets toward the
// maximally mixed state, rho -> (1-w) rho + w I/d (x) Tr_t[rho].
struct NoiseChannel {
  ChannelKind kind = ChannelKind::Identity;
  double strength = 0.0;
  std::vector<std::string> targets;

  static NoiseChannel identity();
  static NoiseChannel dephasing(double strength, std::vector<std::string> targets);
  // Dephasing parameterized by the surviving coherence factor lambda in [0,1].
  static NoiseChannel dephasing_residual(double lambda, std::vector<std::string> targets);
  static NoiseChannel depolarizing(double strength, std::vector<std::string> targets);

  // Kraus operators on the target subspace (dimension 2^targets).
  std::vector<CMatrix> kraus_operators() const;
};

DensityMatrix apply_channel(const DensityMatrix& rho, const NoiseChannel& ch);

// --- measurement and figures of merit ---------------------------------------

struct BsmResult {
  double probability = 0.0;
  // Normalized post-measurement state on the outer pair; empty when the
  // projection annihilates the input.
  std::optional<DensityMatrix> state;
};

// Projects subsystems `idler_a`, `idler_b` of a four-subsystem state onto the
// Bell state `outcome` and traces them out. Default outcome is |Phi+>, the
// registered swap signature.
BsmResult bell_project(const DensityMatrix& rho4, const std::string& idler_a,
                       const std::string& idler_b, BellOutcome outcome);

// Convention of the two-segment connection: labels ordered (S1, I1, I2, S4),
// projection of (I1, I2) onto |Phi+>.
BsmResult bsm_project(const DensityMatrix& rho4);

// Probabilities of the four Bell outcomes on the two middle subsystems; sums
// to one for any valid state.
std::array<double, 4> bell_outcome_probabilities(const DensityMatrix& rho4, const std::string& idler_a,
                                                 const std::string& idler_b);

// <psi| rho |psi>.
double fidelity_to_pure(const DensityMatrix& rho, const PureState& psi);

// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 between two mixed
// states.
double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

struct MaxEntangledFit {
  double fidelity = 0.0;
  double phi = 0.0;
};

// Maximum overlap with the one-parameter family (|00> + e^{i phi}|11>)/sqrt(2)
// and its optimizing phase. Closed form: F = (rho_00,00 + rho_11,11)/2 +
// |rho_00,11|, phi_opt = -arg(rho_00,11); phi = 0 reported on zero coherence.
MaxEntangledFit nearest_max_entangled_fidelity(const DensityMatrix& rho);

} // namespace repsim
