#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "quenchmc/bitstring.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/rydberg.hpp"

namespace quenchmc {

using SparseHamiltonian = Eigen::SparseMatrix<std::complex<double>>;

// State vector over the computational basis, index bit i = atom i.
struct QuantumState {
  int n = 0;
  Eigen::VectorXcd amp;

  static QuantumState basis(int n, const BitString& z) {
    if (static_cast<int>(z.size()) != n)
      throw std::invalid_argument("QuantumState: bitstring length mismatch");
    QuantumState s;
    s.n = n;
    s.amp = Eigen::VectorXcd::Zero(1ll << n);
    s.amp[static_cast<Eigen::Index>(z.index())] = 1.0;
    return s;
  }

  double norm() const { return amp.norm(); }
};

inline double fidelity(const QuantumState& s, const BitString& z) {
  return std::norm(s.amp[static_cast<Eigen::Index>(z.index())]);
}

// Quench description: evolve for time t under the drive Hamiltonian
//   H = sum_i (omega/2)(e^{i phase}|1><0|_i + e^{-i phase}|0><1|_i)
//       - sum_i (delta + delta_local_i + mask_i) n_i
//       + sum_{i<j} V_ij n_i n_j.
// mask entries are extra per-atom detunings with the same sign as delta;
// an empty mask means zero everywhere.
struct QuenchSpec {
  RydbergParams params;
  double t = 0.0;
  double phase = 0.0;
  std::vector<double> mask;
  double tol = 1e-10;

  bool mask_is_zero() const {
    for (double m : mask)
      if (m != 0.0) return false;
    return true;
  }
};

inline SparseHamiltonian build_hamiltonian(const QuenchSpec& spec) {
  spec.params.validate();
  const int n = spec.params.n();
  if (n > 14) throw CapacityError("build_hamiltonian: state dimension capped at n = 14");
  if (!spec.mask.empty() && spec.mask.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("build_hamiltonian: mask length mismatch");
  if (spec.tol <= 0.0) throw std::invalid_argument("build_hamiltonian: tol must be positive");

  const Eigen::Index dim = 1ll << n;
  std::vector<double> detuning(n);
  for (int i = 0; i < n; ++i)
    detuning[i] = spec.params.delta + spec.params.local(i) +
                  (spec.mask.empty() ? 0.0 : spec.mask[i]);

  std::vector<double> vij(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      vij[static_cast<std::size_t>(i) * n + j] = interaction(spec.params, i, j);

  const std::complex<double> up(0.5 * spec.params.omega * std::cos(spec.phase),
                                0.5 * spec.params.omega * std::sin(spec.phase));
  std::vector<Eigen::Triplet<std::complex<double>>> trips;
  trips.reserve(static_cast<std::size_t>(dim) * (n + 1));
  for (Eigen::Index k = 0; k < dim; ++k) {
    double diag = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!((k >> i) & 1)) continue;
      diag -= detuning[i];
      for (int j = i + 1; j < n; ++j)
        if ((k >> j) & 1) diag += vij[static_cast<std::size_t>(i) * n + j];
    }
    if (diag != 0.0) trips.emplace_back(k, k, diag);
    for (int i = 0; i < n; ++i) {
      if ((k >> i) & 1) continue;
      const Eigen::Index k1 = k | (Eigen::Index(1) << i);
      trips.emplace_back(k1, k, up);             // |1><0| on atom i
      trips.emplace_back(k, k1, std::conj(up));  // |0><1| on atom i
    }
  }
  SparseHamiltonian h(dim, dim);
  h.setFromTriplets(trips.begin(), trips.end());
  return h;
}

namespace detail {

// Krylov decomposition H V = V T + beta_next v_next e_m', with T real
// symmetric tridiagonal.  Basis vectors are kept fully reorthogonalized.
struct KrylovBasis {
  Eigen::MatrixXcd v;       // dim x m
  Eigen::MatrixXd t;        // m x m
  double beta_next = 0.0;   // residual coupling past the last vector
  int m = 0;
};

inline KrylovBasis krylov_decompose(const SparseHamiltonian& h,
                                    const Eigen::VectorXcd& v0, int m_max) {
  const Eigen::Index dim = v0.size();
  KrylovBasis kb;
  kb.v.resize(dim, m_max);
  kb.t = Eigen::MatrixXd::Zero(m_max, m_max);
  kb.v.col(0) = v0;
  double scale = 0.0;
  int j = 0;
  for (; j < m_max; ++j) {
    Eigen::VectorXcd w = h * kb.v.col(j);
    const double alpha = kb.v.col(j).dot(w).real();
    kb.t(j, j) = alpha;
    w -= alpha * kb.v.col(j);
    if (j > 0) w -= kb.t(j - 1, j) * kb.v.col(j - 1);
    for (int pass = 0; pass < 2; ++pass)
      for (int k = 0; k <= j; ++k) w -= kb.v.col(k).dot(w) * kb.v.col(k);
    const double beta = w.norm();
    scale = std::max({scale, std::abs(alpha), beta});
    if (j + 1 == m_max || beta <= 1e-14 * std::max(1.0, scale)) {
      kb.beta_next = (beta <= 1e-14 * std::max(1.0, scale)) ? 0.0 : beta;
      ++j;
      break;
    }
    kb.t(j, j + 1) = beta;
    kb.t(j + 1, j) = beta;
    kb.v.col(j + 1) = w / beta;
  }
  kb.m = j;
  return kb;
}

}  // namespace detail

// Unitary propagation psi(t) = exp(-i t H) psi(0) by adaptive Krylov
// stepping.  Each substep applies the exponential of the projected
// tridiagonal exactly; the step is halved until the residual-based local
// error fits within the share of tol allotted to it.  The state is never
// renormalized, so any norm drift is observable.
inline QuantumState propagate(const SparseHamiltonian& h, const QuantumState& psi0,
                              double t, double tol = 1e-10) {
  if (tol <= 0.0) throw std::invalid_argument("propagate: tol must be positive");
  if (h.rows() != psi0.amp.size())
    throw std::invalid_argument("propagate: dimension mismatch");
  QuantumState psi = psi0;
  if (t == 0.0) return psi;

  const double total = std::abs(t);
  const double dir = t > 0.0 ? 1.0 : -1.0;
  const int m_max = static_cast<int>(std::min<Eigen::Index>(h.rows(), 30));
  double remaining = total;
  double dt = total;

  while (remaining > 0.0) {
    const double beta0 = psi.amp.norm();
    if (beta0 == 0.0) throw NumericalError("propagate: zero state");
    const auto kb = detail::krylov_decompose(h, psi.amp / beta0, m_max);
    const Eigen::MatrixXd t_m = kb.t.topLeftCorner(kb.m, kb.m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t_m);
    const Eigen::VectorXd lam = es.eigenvalues();
    const Eigen::VectorXd qe1 = es.eigenvectors().row(0).transpose();

    dt = std::min(dt, remaining);
    for (;;) {
      Eigen::VectorXcd u(kb.m);
      for (int k = 0; k < kb.m; ++k)
        u[k] = std::exp(std::complex<double>(0.0, -dir * dt * lam[k])) * qe1[k];
      u = es.eigenvectors() * u;  // exp(-i dir dt T) e1
      const double err = beta0 * kb.beta_next * std::abs(u[kb.m - 1]);
      // The estimate cannot resolve below the roundoff of the decomposition;
      // budgets tighter than that only shrink dt without gaining accuracy.
      const double noise =
          2.0 * std::numeric_limits<double>::epsilon() * beta0 * kb.beta_next;
      const double budget = std::max(tol * dt / total, noise);
      if (err <= budget || kb.beta_next == 0.0) {
        psi.amp = beta0 * (kb.v.leftCols(kb.m) * u);
        remaining -= dt;
        if (err < 0.3 * budget) dt *= 1.5;
        break;
      }
      dt *= 0.5;
      if (dt < total * 1e-12)
        throw NumericalError("propagate: step size underflow before reaching tol");
    }
  }
  return psi;
}

// Outcome distribution r(z | z_from) = |<z| U |z_from>|^2.
inline Eigen::VectorXd proposal_row(const QuenchSpec& spec, const BitString& z_from) {
  const auto h = build_hamiltonian(spec);
  const auto psi = propagate(h, QuantumState::basis(spec.params.n(), z_from),
                             spec.t, spec.tol);
  return psi.amp.cwiseAbs2();
}

// Full outcome matrix K(z, z') = r(z | z'), one column per source state.
// Dense diagonalization is used up to dimension 1024; larger problems fall
// back to one Krylov propagation per column.
inline Eigen::MatrixXd transition_kernel(const QuenchSpec& spec) {
  const int n = spec.params.n();
  if (n > 12) throw CapacityError("transition_kernel: full kernel capped at n = 12");
  const auto h = build_hamiltonian(spec);
  const Eigen::Index dim = 1ll << n;

  if (dim <= 1024) {
    Eigen::MatrixXcd u;
    if (spec.phase == 0.0) {
      const Eigen::MatrixXd hd = Eigen::MatrixXcd(h).real();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hd);
      Eigen::VectorXcd ph(dim);
      for (Eigen::Index k = 0; k < dim; ++k)
        ph[k] = std::exp(std::complex<double>(0.0, -spec.t * es.eigenvalues()[k]));
      u = es.eigenvectors().cast<std::complex<double>>() * ph.asDiagonal() *
          es.eigenvectors().transpose().cast<std::complex<double>>();
    } else {
      const Eigen::MatrixXcd hd(h);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hd);
      Eigen::VectorXcd ph(dim);
      for (Eigen::Index k = 0; k < dim; ++k)
        ph[k] = std::exp(std::complex<double>(0.0, -spec.t * es.eigenvalues()[k]));
      u = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    }
    return u.cwiseAbs2();
  }

  Eigen::MatrixXd kernel(dim, dim);
  for (Eigen::Index col = 0; col < dim; ++col) {
    const auto psi = propagate(
        h, QuantumState::basis(n, BitString::from_index(n, col)), spec.t, spec.tol);
    kernel.col(col) = psi.amp.cwiseAbs2();
  }
  return kernel;
}

struct MaskedPrepResult {
  QuantumState state;
  bool independence_warning = false;
};

// Drive |0...0> for a pi pulse while detuning every atom that should stay
// in 0 by delta_mask.  Targets that violate the blockade-graph independence
// condition are prepared anyway but flagged.
inline MaskedPrepResult prepare_masked_state(const RydbergParams& params,
                                             const BitString& target,
                                             double delta_mask, double tol = 1e-10) {
  params.validate();
  if (static_cast<int>(target.size()) != params.n())
    throw std::invalid_argument("prepare_masked_state: target length mismatch");
  if (params.omega <= 0.0)
    throw std::invalid_argument("prepare_masked_state: omega must be positive");
  if (delta_mask <= 0.0)
    throw std::invalid_argument("prepare_masked_state: delta_mask must be positive");

  QuenchSpec spec;
  spec.params = params;
  spec.t = std::numbers::pi / params.omega;
  spec.tol = tol;
  // The spectator penalty +delta_mask n_i enters the Hamiltonian through
  // the detuning term, which carries a minus sign.
  spec.mask.assign(params.n(), 0.0);
  for (int i = 0; i < params.n(); ++i)
    if (!target[i]) spec.mask[i] = -delta_mask;

  MaskedPrepResult out;
  const auto g = unit_disk_graph(params.atoms, blockade_radius(params.c6, params.omega));
  out.independence_warning = violation_count(g, target) > 0;
  const auto h = build_hamiltonian(spec);
  out.state = propagate(h, QuantumState::basis(params.n(), BitString(params.n())),
                        spec.t, spec.tol);
  return out;
}

}  // namespace quenchmc
