#include "repsim/tomography.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace repsim {

namespace {

constexpr double kSqrtHalf = 0.70710678118654752440;

} // namespace

Pol parse_pol(char token) {
  switch (token) {
    case 'H': return Pol::H;
    case 'V': return Pol::V;
    case 'D': return Pol::D;
    case 'A': return Pol::A;
    case 'R': return Pol::R;
    case 'L': return Pol::L;
    default: throw std::invalid_argument(std::string("unknown polarization token: ") + token);
  }
}

CVector pol_ket(Pol pol) {
  CVector v(2);
  switch (pol) {
    case Pol::H: v << 1, 0; break;
    case Pol::V: v << 0, 1; break;
    case Pol::D: v << kSqrtHalf, kSqrtHalf; break;
    case Pol::A: v << kSqrtHalf, -kSqrtHalf; break;
    case Pol::R: v << kSqrtHalf, Complex(0, -kSqrtHalf); break;
    case Pol::L: v << kSqrtHalf, Complex(0, kSqrtHalf); break;
  }
  return v;
}

CMatrix MeasurementBasis::projector() const {
  const CVector a = pol_ket(first);
  const CVector b = pol_ket(second);
  CVector joint(4);
  joint << a(0) * b(0), a(0) * b(1), a(1) * b(0), a(1) * b(1);
  return joint * joint.adjoint();
}

std::string MeasurementBasis::name() const {
  return std::string(1, static_cast<char>(first)) + static_cast<char>(second);
}

MeasurementBasis MeasurementBasis::parse(const std::string& token_a, const std::string& token_b) {
  if (token_a.size() != 1) throw std::invalid_argument("bad basis token: " + token_a);
  if (token_b.size() != 1) throw std::invalid_argument("bad basis token: " + token_b);
  return MeasurementBasis{parse_pol(token_a[0]), parse_pol(token_b[0])};
}

std::vector<MeasurementBasis> standard_bases() {
  const std::array<Pol, 4> set{Pol::H, Pol::V, Pol::D, Pol::R};
  std::vector<MeasurementBasis> bases;
  bases.reserve(16);
  for (Pol a : set)
    for (Pol b : set) bases.push_back(MeasurementBasis{a, b});
  return bases;
}

std::uint64_t CountsRecord::total() const {
  std::uint64_t t = 0;
  for (const auto& [basis, count] : counts) t += count;
  return t;
}

CountsRecord simulate_counts(const DensityMatrix& rho, const std::vector<MeasurementBasis>& bases,
                             double n_expected, RngStream& rng) {
  if (!(n_expected > 0.0)) throw std::invalid_argument("n_expected must be positive");
  if (rho.dim() != 4) throw std::invalid_argument("simulate_counts expects a two-qubit state");
  CountsRecord record;
  record.counts.reserve(bases.size());
  for (const auto& basis : bases) {
    const double mean =
        std::max(0.0, std::real((basis.projector() * rho.entries).trace())) * n_expected;
    record.counts.emplace_back(basis, rng.poisson(mean));
  }
  return record;
}

CountsRecord parse_counts_file(const std::string& content) {
  CountsRecord record;
  std::istringstream stream(content);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string a, b, count_token;
    if (!(fields >> a)) continue;  // blank line
    if (!(fields >> b >> count_token))
      throw std::invalid_argument("counts file line " + std::to_string(line_no) +
                                  ": expected '<basis1> <basis2> <count>'");
    std::string extra;
    if (fields >> extra)
      throw std::invalid_argument("counts file line " + std::to_string(line_no) +
                                  ": unexpected trailing token '" + extra + "'");
    MeasurementBasis basis;
    try {
      basis = MeasurementBasis::parse(a, b);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("counts file line " + std::to_string(line_no) + ": " + e.what());
    }
    std::uint64_t count = 0;
    try {
      if (!count_token.empty() && count_token[0] == '-') throw std::invalid_argument("negative");
      std::size_t used = 0;
      count = std::stoull(count_token, &used);
      if (used != count_token.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::invalid_argument("counts file line " + std::to_string(line_no) +
                                  ": bad count '" + count_token + "'");
    }
    record.counts.emplace_back(basis, count);
  }
  return record;
}

std::string format_counts_file(const CountsRecord& counts) {
  std::ostringstream out;
  for (const auto& [basis, count] : counts.counts)
    out << static_cast<char>(basis.first) << ' ' << static_cast<char>(basis.second) << ' ' << count
        << '\n';
  return out.str();
}

namespace {

struct Preprocessed {
  std::vector<CMatrix> transformed;  // G^{-1/2} Pi_b G^{-1/2}
  CMatrix g_inv_sqrt;
  std::vector<double> frequencies;   // counts / total
  std::vector<std::uint64_t> counts;
  double total = 0.0;
};

// The projector set is generally not a resolution of identity; conjugating
// by G^{-1/2}, G = sum_b Pi_b, turns it into a POVM so the standard
// iteration applies. States map as sigma = G^{1/2} rho G^{1/2} / Tr[G rho],
// which leaves the per-basis probabilities (and so the likelihood) intact.
Preprocessed preprocess(const CountsRecord& record) {
  if (record.counts.size() < 16)
    throw std::invalid_argument("reconstruction needs at least 16 measurement bases");
  Preprocessed pre;
  CMatrix g = CMatrix::Zero(4, 4);
  for (const auto& [basis, count] : record.counts) {
    g += basis.projector();
    pre.total += static_cast<double>(count);
  }
  if (pre.total <= 0.0) throw std::invalid_argument("reconstruction needs non-zero counts");

  Eigen::SelfAdjointEigenSolver<CMatrix> es(g);
  if (es.eigenvalues().minCoeff() < 1e-9)
    throw std::invalid_argument("basis set is not informationally sufficient (singular frame)");
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().cwiseSqrt().cwiseInverse();
  pre.g_inv_sqrt = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().adjoint();

  // Informational sufficiency beyond invertibility of G: the projectors must
  // span the full 16-dimensional operator space.
  Eigen::MatrixXcd span(16, record.counts.size());
  for (std::size_t b = 0; b < record.counts.size(); ++b) {
    const CMatrix proj = record.counts[b].first.projector();
    span.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const Eigen::VectorXcd>(proj.data(), 16);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(span);
  qr.setThreshold(1e-9);
  if (qr.rank() < 16)
    throw std::invalid_argument("basis set is not informationally sufficient (rank " +
                                std::to_string(qr.rank()) + " of 16)");

  pre.transformed.reserve(record.counts.size());
  pre.frequencies.reserve(record.counts.size());
  for (const auto& [basis, count] : record.counts) {
    pre.transformed.push_back(pre.g_inv_sqrt * basis.projector() * pre.g_inv_sqrt);
    pre.frequencies.push_back(static_cast<double>(count) / pre.total);
    pre.counts.push_back(count);
  }
  return pre;
}

double log_likelihood(const Preprocessed& pre, const CMatrix& sigma,
                      std::vector<double>& probs) {
  double ll = 0.0;
  for (std::size_t b = 0; b < pre.transformed.size(); ++b) {
    const double prob = std::max(std::real((pre.transformed[b] * sigma).trace()), 1e-300);
    probs[b] = prob;
    if (pre.counts[b] > 0) ll += static_cast<double>(pre.counts[b]) * std::log(prob);
  }
  return ll;
}

CMatrix r_operator(const Preprocessed& pre, const std::vector<double>& probs) {
  CMatrix r = CMatrix::Zero(4, 4);
  for (std::size_t b = 0; b < pre.transformed.size(); ++b) {
    if (pre.counts[b] == 0) continue;
    r += (pre.frequencies[b] / probs[b]) * pre.transformed[b];
  }
  return r;
}

CMatrix normalized(const CMatrix& m) { return m / std::real(m.trace()); }

} // namespace

ReconstructionResult mle_reconstruct(const CountsRecord& record,
                                     const ReconstructionOptions& options) {
  const Preprocessed pre = preprocess(record);
  const std::size_t n_bases = pre.transformed.size();

  CMatrix sigma = CMatrix::Identity(4, 4) / 4.0;
  std::vector<double> probs(n_bases);
  double ll = log_likelihood(pre, sigma, probs);

  ReconstructionResult result;
  result.loglik_trace.reserve(256);
  result.loglik_trace.push_back(ll);

  int iter = 0;
  bool converged = false;
  std::vector<double> trial_probs(n_bases);
  while (iter < options.max_iterations) {
    ++iter;
    const CMatrix r = r_operator(pre, probs);
    double gain = 0.0;
    if (options.plain_iteration) {
      sigma = normalized(r * sigma * r);
      const double next = log_likelihood(pre, sigma, probs);
      gain = next - ll;
      ll = next;
    } else {
      // Backtracking on the diluted step: shrink the step weight until the
      // likelihood does not decrease.
      double eps = options.dilution;
      bool accepted = false;
      for (int attempt = 0; attempt < 60; ++attempt) {
        const CMatrix step = CMatrix::Identity(4, 4) + eps * r;
        const CMatrix candidate = normalized(step * sigma * step.adjoint());
        const double next = log_likelihood(pre, candidate, trial_probs);
        if (next >= ll) {
          sigma = candidate;
          probs = trial_probs;
          gain = next - ll;
          ll = next;
          accepted = true;
          break;
        }
        eps *= 0.5;
      }
      if (!accepted) {
        converged = true;  // no ascent direction left at float precision
        break;
      }
    }
    result.loglik_trace.push_back(ll);
    if (std::abs(gain) < options.loglik_tol) {
      converged = true;
      break;
    }
  }

  CMatrix rho_raw = pre.g_inv_sqrt * sigma * pre.g_inv_sqrt;
  rho_raw /= std::real(rho_raw.trace());
  result.rho_hat = DensityMatrix::make(std::move(rho_raw), {"S1", "S4"});
  result.log_likelihood = ll;
  result.iterations = iter;
  result.converged = converged;

  double predicted_total = 0.0;
  for (std::size_t b = 0; b < n_bases; ++b)
    predicted_total += std::max(
        0.0, std::real((record.counts[b].first.projector() * result.rho_hat.entries).trace()));
  result.count_scale = pre.total / predicted_total;

  const MaxEntangledFit fit = nearest_max_entangled_fidelity(result.rho_hat);
  result.fidelity = fit.fidelity;
  const Complex coh = result.rho_hat.entries(3, 0);
  result.phase_deg = std::abs(coh) > 1e-12 ? extract_phase_deg(result.rho_hat) : 0.0;
  return result;
}

std::pair<double, double> fidelity_with_error(const CountsRecord& record, int n_bootstrap,
                                              RngStream& rng,
                                              const ReconstructionOptions& options) {
  if (n_bootstrap < 100) throw std::invalid_argument("bootstrap needs at least 100 replicas");
  const ReconstructionResult fit = mle_reconstruct(record, options);

  std::vector<double> means(record.counts.size());
  for (std::size_t b = 0; b < record.counts.size(); ++b)
    means[b] = fit.count_scale *
               std::max(0.0, std::real((record.counts[b].first.projector() * fit.rho_hat.entries).trace()));

  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n_bootstrap; ++i) {
    CountsRecord replica;
    replica.counts.reserve(record.counts.size());
    for (std::size_t b = 0; b < record.counts.size(); ++b)
      replica.counts.emplace_back(record.counts[b].first, rng.poisson(means[b]));
    const ReconstructionResult r = mle_reconstruct(replica, options);
    sum += r.fidelity;
    sq += r.fidelity * r.fidelity;
  }
  const double n = static_cast<double>(n_bootstrap);
  const double mean = sum / n;
  const double var = (sq - sum * sum / n) / (n - 1.0);
  return {mean, var > 0.0 ? std::sqrt(var) : 0.0};
}

double extract_phase_deg(const DensityMatrix& rho) {
  if (rho.dim() != 4) throw std::invalid_argument("extract_phase expects a two-qubit state");
  const Complex coh = rho.entries(3, 0);  // <VV| rho |HH>
  if (std::abs(coh) < 1e-12)
    throw std::invalid_argument("extract_phase undefined: state has no HH-VV coherence");
  double deg = std::arg(coh) * 180.0 / M_PI;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

} // namespace repsim
