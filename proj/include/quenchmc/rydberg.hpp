#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "quenchmc/bitstring.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/lattice.hpp"

namespace quenchmc {

// Drive and detuning for a register of interacting two-level atoms.
// omega and delta are angular frequencies (rad/us), c6 in rad/us * um^6.
// delta_local holds optional per-atom detuning offsets.
struct RydbergParams {
  AtomArray atoms;
  double omega = 0.0;
  double delta = 0.0;
  std::vector<double> delta_local;
  double c6 = 0.0;

  int n() const { return atoms.n(); }

  double local(int i) const {
    return delta_local.empty() ? 0.0 : delta_local.at(i);
  }

  void validate() const {
    if (atoms.n() < 1) throw std::invalid_argument("params: empty atom array");
    if (c6 <= 0.0) throw std::invalid_argument("params: c6 must be positive");
    if (!delta_local.empty() && delta_local.size() != static_cast<std::size_t>(atoms.n()))
      throw std::invalid_argument("params: delta_local length mismatch");
  }
};

// Pair interaction c6 / |r_i - r_j|^6.
inline double interaction(const RydbergParams& p, int i, int j) {
  const double d = distance(p.atoms, i, j);
  if (d <= 0.0) throw std::invalid_argument("interaction: coincident atoms");
  const double d3 = d * d * d;
  return p.c6 / (d3 * d3);
}

// Diagonal cost E(z) = sign * sum_i (delta + delta_local_i) z_i
//                      + sum_{i<j} V_ij z_i z_j.
// The detuning enters with a plus sign by default; pass sign = -1 to match
// the drive Hamiltonian's convention instead.
inline double classical_energy(const RydbergParams& p, const BitString& z,
                               double sign = 1.0) {
  if (static_cast<int>(z.size()) != p.n())
    throw std::invalid_argument("classical_energy: bitstring length mismatch");
  double e = 0.0;
  for (int i = 0; i < p.n(); ++i)
    if (z[i]) {
      e += sign * (p.delta + p.local(i));
      for (int j = i + 1; j < p.n(); ++j)
        if (z[j]) e += interaction(p, i, j);
    }
  return e;
}

// Coefficient form of the diagonal cost: E(x) = linear . x + x' Pair x / 2
// with Pair symmetric, zero diagonal.  Agrees with classical_energy on
// binary vectors and extends it smoothly to relaxed ones.
struct EnergyTerms {
  Eigen::VectorXd linear;
  Eigen::MatrixXd pair;

  double eval(const Eigen::VectorXd& x) const {
    return linear.dot(x) + 0.5 * x.dot(pair * x);
  }

  double eval(const BitString& z) const {
    Eigen::VectorXd x(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) x[static_cast<int>(i)] = z[i];
    return eval(x);
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
    return linear + pair * x;
  }
};

inline EnergyTerms energy_terms(const RydbergParams& p, double sign = 1.0) {
  p.validate();
  const int n = p.n();
  EnergyTerms t;
  t.linear.resize(n);
  t.pair = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    t.linear[i] = sign * (p.delta + p.local(i));
    for (int j = i + 1; j < n; ++j) {
      const double v = interaction(p, i, j);
      t.pair(i, j) = v;
      t.pair(j, i) = v;
    }
  }
  return t;
}

// Normalized probability table over {0,1}^n together with ln Z.
struct DiscreteDistribution {
  Eigen::VectorXd probs;
  double log_partition = 0.0;
};

// Exact Boltzmann distribution exp(-E/tau)/Z by full enumeration.
inline DiscreteDistribution boltzmann(const std::function<double(const BitString&)>& energy,
                                      int n, double tau) {
  if (n < 1) throw std::invalid_argument("boltzmann: n must be >= 1");
  if (n > 24) throw CapacityError("boltzmann: enumeration capped at n = 24");
  if (tau <= 0.0) throw std::invalid_argument("boltzmann: tau must be positive");
  const std::uint64_t dim = 1ull << n;
  Eigen::VectorXd e(dim);
  double emin = std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 0; k < dim; ++k) {
    e[static_cast<Eigen::Index>(k)] = energy(BitString::from_index(n, k));
    emin = std::min(emin, e[static_cast<Eigen::Index>(k)]);
  }
  DiscreteDistribution d;
  d.probs.resize(dim);
  double z = 0.0;
  for (Eigen::Index k = 0; k < d.probs.size(); ++k) {
    d.probs[k] = std::exp(-(e[k] - emin) / tau);
    z += d.probs[k];
  }
  d.probs /= z;
  d.log_partition = std::log(z) - emin / tau;
  return d;
}

inline DiscreteDistribution boltzmann(const RydbergParams& p, double tau,
                                      double sign = 1.0) {
  return boltzmann([&](const BitString& z) { return classical_energy(p, z, sign); },
                   p.n(), tau);
}

// Quadratic form in the spin basis s = 2z - 1.
struct IsingForm {
  Eigen::VectorXd field;                       // coefficient of s_i
  std::map<std::pair<int, int>, double> coupling;  // coefficient of s_i s_j, i < j
  double offset = 0.0;

  double eval(const BitString& z) const {
    double e = offset;
    for (Eigen::Index i = 0; i < field.size(); ++i)
      e += field[i] * (2.0 * z[static_cast<std::size_t>(i)] - 1.0);
    for (const auto& [ij, j] : coupling)
      e += j * (2.0 * z[ij.first] - 1.0) * (2.0 * z[ij.second] - 1.0);
    return e;
  }
};

// Change of basis from binary coefficients (a, b) with cost
// sum a_i z_i + sum_{i<j} b_ij z_i z_j to the spin form.  Substituting
// z = (s+1)/2 gives field_i = a_i/2 + sum_j b_ij/4, coupling b_ij/4,
// offset sum a_i/2 + sum b_ij/4.
inline IsingForm ising_coefficients(const std::vector<double>& linear,
                                    const std::map<std::pair<int, int>, double>& quadratic) {
  const int n = static_cast<int>(linear.size());
  if (n < 1) throw std::invalid_argument("ising_coefficients: empty linear term");
  IsingForm f;
  f.field = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    f.field[i] = linear[i] / 2.0;
    f.offset += linear[i] / 2.0;
  }
  for (const auto& [ij, b] : quadratic) {
    const auto [i, j] = ij;
    if (i < 0 || j <= i || j >= n)
      throw std::invalid_argument("ising_coefficients: pair indices must satisfy 0 <= i < j < n");
    f.coupling[ij] = b / 4.0;
    f.field[i] += b / 4.0;
    f.field[j] += b / 4.0;
    f.offset += b / 4.0;
  }
  return f;
}

}  // namespace quenchmc
