#include "repsim/state.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace repsim {

namespace {

bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

void check_labels(const std::vector<std::string>& labels, Eigen::Index dim) {
  if (labels.empty()) throw std::invalid_argument("state needs at least one subsystem label");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) throw std::invalid_argument("duplicate subsystem label: " + l);
  }
  if (!is_power_of_two(dim) || dim != (Eigen::Index{1} << labels.size()))
    throw std::invalid_argument("dimension must be 2^(label count)");
}

int label_index(const std::vector<std::string>& labels, const std::string& l) {
  const auto it = std::find(labels.begin(), labels.end(), l);
  if (it == labels.end()) throw std::invalid_argument("unknown subsystem label: " + l);
  return static_cast<int>(it - labels.begin());
}

// Bit of `index` addressing subsystem `pos` out of `k`; labels[0] is the MSB.
inline int bit_at(Eigen::Index index, int pos, int k) {
  return static_cast<int>((index >> (k - 1 - pos)) & 1);
}

// Projects noisy-but-valid input onto the exact density-matrix set:
// symmetrize, clamp negative eigenvalues to zero, renormalize the trace.
CMatrix clamp_to_density(const CMatrix& m) {
  CMatrix herm = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm);
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0);
  const double total = vals.sum();
  if (total <= 0.0) throw std::invalid_argument("density matrix has no positive weight");
  vals /= total;
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
}

CMatrix pauli_z() {
  CMatrix z(2, 2);
  z << 1, 0, 0, -1;
  return z;
}

const std::array<CMatrix, 4>& single_paulis() {
  static const std::array<CMatrix, 4> paulis = [] {
    std::array<CMatrix, 4> p;
    p[0] = CMatrix::Identity(2, 2);
    p[1] = CMatrix(2, 2);
    p[1] << 0, 1, 1, 0;
    p[2] = CMatrix(2, 2);
    p[2] << 0, Complex(0, -1), Complex(0, 1), 0;
    p[3] = pauli_z();
    return p;
  }();
  return paulis;
}

// Embed an operator acting on the subsystems at `positions` into the full
// space, identity elsewhere.
CMatrix embed_operator(const CMatrix& op, const std::vector<int>& positions, int k) {
  const Eigen::Index dim = Eigen::Index{1} << k;
  const int t = static_cast<int>(positions.size());
  CMatrix full = CMatrix::Zero(dim, dim);
  for (Eigen::Index row = 0; row < dim; ++row) {
    Eigen::Index trow = 0;
    for (int j = 0; j < t; ++j) trow = (trow << 1) | bit_at(row, positions[j], k);
    for (Eigen::Index col = 0; col < dim; ++col) {
      bool rest_match = true;
      for (int pos = 0; pos < k && rest_match; ++pos) {
        if (std::find(positions.begin(), positions.end(), pos) != positions.end()) continue;
        rest_match = bit_at(row, pos, k) == bit_at(col, pos, k);
      }
      if (!rest_match) continue;
      Eigen::Index tcol = 0;
      for (int j = 0; j < t; ++j) tcol = (tcol << 1) | bit_at(col, positions[j], k);
      full(row, col) = op(trow, tcol);
    }
  }
  return full;
}

} // namespace

PureState PureState::make(CVector amplitudes, std::vector<std::string> labels) {
  check_labels(labels, amplitudes.size());
  const double norm = amplitudes.norm();
  if (std::abs(norm - 1.0) > 1e-12) throw std::invalid_argument("pure state must have unit norm");
  return PureState{std::move(amplitudes), std::move(labels)};
}

DensityMatrix DensityMatrix::make(CMatrix entries, std::vector<std::string> labels) {
  if (entries.rows() != entries.cols()) throw std::invalid_argument("density matrix must be square");
  check_labels(labels, entries.rows());
  const double herm_err = (entries - entries.adjoint()).cwiseAbs().maxCoeff();
  if (herm_err > kHermTol) throw std::invalid_argument("density matrix is not Hermitian");
  const Complex tr = entries.trace();
  if (std::abs(tr - 1.0) > kTraceTol) throw std::invalid_argument("density matrix trace must be 1");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (entries + entries.adjoint()),
                                            Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < kPsdFloor)
    throw std::invalid_argument("density matrix has a negative eigenvalue");
  return DensityMatrix{clamp_to_density(entries), std::move(labels)};
}

DensityMatrix to_density(const PureState& psi) {
  return DensityMatrix{psi.amplitudes * psi.amplitudes.adjoint(), psi.labels};
}

PureState basis_ket(int bit, std::string label) {
  CVector v = CVector::Zero(2);
  v(bit == 0 ? 0 : 1) = 1.0;
  return PureState::make(std::move(v), {std::move(label)});
}

PureState atom_photon_state(double phi, std::string photon_label, std::string memory_label) {
  if (!std::isfinite(phi)) throw std::invalid_argument("atom_photon_state: phase must be finite");
  return phase_bell_state(phi, std::move(photon_label), std::move(memory_label));
}

PureState phase_bell_state(double phi, std::string label_a, std::string label_b) {
  CVector v = CVector::Zero(4);
  const double s = 1.0 / std::sqrt(2.0);
  v(0) = s;
  v(3) = s * std::exp(Complex(0.0, phi));
  return PureState::make(std::move(v), {std::move(label_a), std::move(label_b)});
}

PureState bell_state(BellOutcome which, std::string label_a, std::string label_b) {
  CVector v = CVector::Zero(4);
  const double s = 1.0 / std::sqrt(2.0);
  switch (which) {
    case BellOutcome::PhiPlus: v(0) = s; v(3) = s; break;
    case BellOutcome::PhiMinus: v(0) = s; v(3) = -s; break;
    case BellOutcome::PsiPlus: v(1) = s; v(2) = s; break;
    case BellOutcome::PsiMinus: v(1) = s; v(2) = -s; break;
  }
  return PureState::make(std::move(v), {std::move(label_a), std::move(label_b)});
}

namespace {

std::vector<std::string> joined_labels(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
  for (const auto& l : b) {
    if (std::find(a.begin(), a.end(), l) != a.end())
      throw std::invalid_argument("tensor: label collision on " + l);
  }
  std::vector<std::string> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

} // namespace

PureState tensor(const PureState& a, const PureState& b) {
  auto labels = joined_labels(a.labels, b.labels);
  CVector v(a.dim() * b.dim());
  for (Eigen::Index i = 0; i < a.dim(); ++i)
    for (Eigen::Index j = 0; j < b.dim(); ++j) v(i * b.dim() + j) = a.amplitudes(i) * b.amplitudes(j);
  return PureState{std::move(v), std::move(labels)};
}

DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  auto labels = joined_labels(a.labels, b.labels);
  const Eigen::Index da = a.dim(), db = b.dim();
  CMatrix m(da * db, da * db);
  for (Eigen::Index i = 0; i < da; ++i)
    for (Eigen::Index j = 0; j < da; ++j)
      m.block(i * db, j * db, db, db) = a.entries(i, j) * b.entries;
  return DensityMatrix{std::move(m), std::move(labels)};
}

DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<std::string>& keep) {
  if (keep.empty()) throw std::invalid_argument("partial_trace: keep set must be non-empty");
  const int k = rho.num_qubits();
  std::vector<int> keep_pos;
  std::vector<std::string> out_labels;
  for (int pos = 0; pos < k; ++pos) {
    if (std::find(keep.begin(), keep.end(), rho.labels[pos]) != keep.end()) {
      keep_pos.push_back(pos);
      out_labels.push_back(rho.labels[pos]);
    }
  }
  if (out_labels.size() != keep.size())
    throw std::invalid_argument("partial_trace: keep set contains unknown label");
  std::vector<int> drop_pos;
  for (int pos = 0; pos < k; ++pos)
    if (std::find(keep_pos.begin(), keep_pos.end(), pos) == keep_pos.end()) drop_pos.push_back(pos);

  const int nk = static_cast<int>(keep_pos.size());
  const int nd = static_cast<int>(drop_pos.size());
  const Eigen::Index dim_keep = Eigen::Index{1} << nk;
  const Eigen::Index dim_drop = Eigen::Index{1} << nd;
  CMatrix out = CMatrix::Zero(dim_keep, dim_keep);
  for (Eigen::Index r = 0; r < dim_keep; ++r) {
    for (Eigen::Index c = 0; c < dim_keep; ++c) {
      Complex acc = 0.0;
      for (Eigen::Index d = 0; d < dim_drop; ++d) {
        Eigen::Index row = 0, col = 0;
        for (int pos = 0; pos < k; ++pos) {
          const auto kit = std::find(keep_pos.begin(), keep_pos.end(), pos);
          int rb, cb;
          if (kit != keep_pos.end()) {
            const int j = static_cast<int>(kit - keep_pos.begin());
            rb = bit_at(r, j, nk);
            cb = bit_at(c, j, nk);
          } else {
            const auto dit = std::find(drop_pos.begin(), drop_pos.end(), pos);
            const int j = static_cast<int>(dit - drop_pos.begin());
            rb = cb = bit_at(d, j, nd);
          }
          row = (row << 1) | rb;
          col = (col << 1) | cb;
        }
        acc += rho.entries(row, col);
      }
      out(r, c) = acc;
    }
  }
  return DensityMatrix{std::move(out), std::move(out_labels)};
}

namespace {

std::vector<Eigen::Index> permutation_map(const std::vector<std::string>& labels,
                                          const std::vector<std::string>& new_order) {
  const int k = static_cast<int>(labels.size());
  if (new_order.size() != labels.size())
    throw std::invalid_argument("permute: label count mismatch");
  std::vector<int> src_pos(k);
  for (int j = 0; j < k; ++j) src_pos[j] = label_index(labels, new_order[j]);
  const Eigen::Index dim = Eigen::Index{1} << k;
  std::vector<Eigen::Index> map(dim);
  for (Eigen::Index idx = 0; idx < dim; ++idx) {
    Eigen::Index out = 0;
    for (int j = 0; j < k; ++j) out = (out << 1) | bit_at(idx, src_pos[j], k);
    map[idx] = out;
  }
  return map;
}

} // namespace

PureState permute(const PureState& psi, const std::vector<std::string>& new_order) {
  const auto map = permutation_map(psi.labels, new_order);
  CVector v(psi.dim());
  for (Eigen::Index i = 0; i < psi.dim(); ++i) v(map[i]) = psi.amplitudes(i);
  return PureState{std::move(v), new_order};
}

DensityMatrix permute(const DensityMatrix& rho, const std::vector<std::string>& new_order) {
  const auto map = permutation_map(rho.labels, new_order);
  CMatrix m(rho.dim(), rho.dim());
  for (Eigen::Index i = 0; i < rho.dim(); ++i)
    for (Eigen::Index j = 0; j < rho.dim(); ++j) m(map[i], map[j]) = rho.entries(i, j);
  return DensityMatrix{std::move(m), new_order};
}

NoiseChannel NoiseChannel::identity() { return NoiseChannel{ChannelKind::Identity, 0.0, {}}; }

NoiseChannel NoiseChannel::dephasing(double strength, std::vector<std::string> targets) {
  if (strength < 0.0 || strength > 1.0) throw std::invalid_argument("dephasing strength must be in [0,1]");
  if (targets.size() != 1) throw std::invalid_argument("dephasing acts on a single subsystem");
  return NoiseChannel{ChannelKind::Dephasing, strength, std::move(targets)};
}

NoiseChannel NoiseChannel::dephasing_residual(double lambda, std::vector<std::string> targets) {
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("residual coherence must be in [0,1]");
  return dephasing(1.0 - lambda, std::move(targets));
}

NoiseChannel NoiseChannel::depolarizing(double strength, std::vector<std::string> targets) {
  if (strength < 0.0 || strength > 1.0) throw std::invalid_argument("depolarizing strength must be in [0,1]");
  if (targets.empty()) throw std::invalid_argument("depolarizing needs at least one target");
  return NoiseChannel{ChannelKind::Depolarizing, strength, std::move(targets)};
}

std::vector<CMatrix> NoiseChannel::kraus_operators() const {
  switch (kind) {
    case ChannelKind::Identity:
      return {CMatrix::Identity(2, 2)};
    case ChannelKind::Dephasing: {
      // rho -> (1 - s/2) rho + (s/2) Z rho Z; coherence shrinks by (1 - s).
      std::vector<CMatrix> ks;
      ks.push_back(std::sqrt(1.0 - strength / 2.0) * CMatrix::Identity(2, 2));
      if (strength > 0.0) ks.push_back(std::sqrt(strength / 2.0) * pauli_z());
      return ks;
    }
    case ChannelKind::Depolarizing: {
      // rho -> (1-w) rho + w I/d == Pauli twirl with uniform weight w/d^2.
      const int t = static_cast<int>(targets.size());
      const Eigen::Index d = Eigen::Index{1} << t;
      const double dsq = static_cast<double>(d) * static_cast<double>(d);
      std::vector<CMatrix> ks;
      for (Eigen::Index combo = 0; combo < d * d; ++combo) {
        CMatrix op = CMatrix::Identity(1, 1);
        Eigen::Index c = combo;
        for (int j = 0; j < t; ++j) {
          const auto& p = single_paulis()[c % 4];
          c /= 4;
          CMatrix next(op.rows() * 2, op.cols() * 2);
          for (Eigen::Index i = 0; i < op.rows(); ++i)
            for (Eigen::Index jj = 0; jj < op.cols(); ++jj)
              next.block(i * 2, jj * 2, 2, 2) = op(i, jj) * p;
          op = std::move(next);
        }
        const double w = combo == 0 ? 1.0 - strength + strength / dsq : strength / dsq;
        if (w > 0.0) ks.push_back(std::sqrt(w) * op);
      }
      return ks;
    }
  }
  throw std::logic_error("unreachable channel kind");
}

DensityMatrix apply_channel(const DensityMatrix& rho, const NoiseChannel& ch) {
  if (ch.kind == ChannelKind::Identity || ch.strength == 0.0) return rho;
  const int k = rho.num_qubits();
  std::vector<int> positions;
  positions.reserve(ch.targets.size());
  for (const auto& t : ch.targets) positions.push_back(label_index(rho.labels, t));
  CMatrix out = CMatrix::Zero(rho.dim(), rho.dim());
  for (const auto& kraus : ch.kraus_operators()) {
    const CMatrix full = embed_operator(kraus, positions, k);
    out += full * rho.entries * full.adjoint();
  }
  return DensityMatrix{std::move(out), rho.labels};
}

namespace {

CMatrix bell_projector_full(const DensityMatrix& rho4, const std::string& idler_a,
                            const std::string& idler_b, BellOutcome outcome) {
  if (rho4.num_qubits() != 4)
    throw std::invalid_argument("Bell projection expects a four-subsystem state");
  const PureState bell = bell_state(outcome, "_a", "_b");
  const CMatrix proj2 = bell.amplitudes * bell.amplitudes.adjoint();
  const std::vector<int> positions{label_index(rho4.labels, idler_a),
                                   label_index(rho4.labels, idler_b)};
  return embed_operator(proj2, positions, 4);
}

} // namespace

BsmResult bell_project(const DensityMatrix& rho4, const std::string& idler_a,
                       const std::string& idler_b, BellOutcome outcome) {
  const CMatrix proj = bell_projector_full(rho4, idler_a, idler_b, outcome);
  const double prob = std::real((proj * rho4.entries).trace());
  BsmResult result;
  result.probability = std::max(prob, 0.0);
  if (result.probability < 1e-15) {
    result.probability = 0.0;
    return result;
  }
  CMatrix projected = proj * rho4.entries * proj / result.probability;
  std::vector<std::string> keep;
  for (const auto& l : rho4.labels)
    if (l != idler_a && l != idler_b) keep.push_back(l);
  DensityMatrix reduced = partial_trace(DensityMatrix{std::move(projected), rho4.labels}, keep);
  result.state = DensityMatrix::make(reduced.entries, reduced.labels);
  return result;
}

BsmResult bsm_project(const DensityMatrix& rho4) {
  if (rho4.num_qubits() != 4) throw std::invalid_argument("bsm_project expects four subsystems");
  return bell_project(rho4, rho4.labels[1], rho4.labels[2], BellOutcome::PhiPlus);
}

std::array<double, 4> bell_outcome_probabilities(const DensityMatrix& rho4,
                                                 const std::string& idler_a,
                                                 const std::string& idler_b) {
  std::array<double, 4> probs{};
  for (int i = 0; i < 4; ++i) {
    const CMatrix proj = bell_projector_full(rho4, idler_a, idler_b, static_cast<BellOutcome>(i));
    probs[i] = std::max(std::real((proj * rho4.entries).trace()), 0.0);
  }
  return probs;
}

double fidelity_to_pure(const DensityMatrix& rho, const PureState& psi) {
  if (rho.dim() != psi.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  const Complex val = psi.amplitudes.adjoint() * rho.entries * psi.amplitudes;
  if (std::abs(val.imag()) > 1e-9) throw std::logic_error("fidelity has a large imaginary part");
  return std::clamp(val.real(), 0.0, 1.0);
}

double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.entries);
  const Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const CMatrix sqrt_rho = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
  Eigen::SelfAdjointEigenSolver<CMatrix> inner(sqrt_rho * sigma.entries * sqrt_rho);
  const double root_sum = inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::clamp(root_sum * root_sum, 0.0, 1.0);
}

MaxEntangledFit nearest_max_entangled_fidelity(const DensityMatrix& rho) {
  if (rho.dim() != 4) throw std::invalid_argument("nearest_max_entangled_fidelity expects a two-qubit state");
  const Complex coh = rho.entries(0, 3); // <00| rho |11>
  MaxEntangledFit fit;
  fit.fidelity = 0.5 * std::real(rho.entries(0, 0) + rho.entries(3, 3)) + std::abs(coh);
  fit.phi = std::abs(coh) > 0.0 ? -std::arg(coh) : 0.0;
  fit.fidelity = std::clamp(fit.fidelity, 0.0, 1.0);
  return fit;
}

} // namespace repsim
