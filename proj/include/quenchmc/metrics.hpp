#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "quenchmc/bitstring.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/lattice.hpp"

namespace quenchmc {

namespace detail {
inline void check_distribution_pair(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size() || p.size() == 0)
    throw std::invalid_argument("divergence: distributions must have equal positive size");
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p[k] < 0.0 || q[k] < 0.0)
      throw std::invalid_argument("divergence: probabilities must be non-negative");
  if (std::abs(p.sum() - 1.0) > 1e-6 || std::abs(q.sum() - 1.0) > 1e-6)
    throw std::invalid_argument("divergence: probabilities must sum to 1");
}
}  // namespace detail

// Renyi divergence D_alpha(p||q) = ln(sum_k p^alpha q^(1-alpha)) / (alpha-1),
// in nats.  alpha = 1 is excluded (use kl_divergence).
inline double renyi_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                               double alpha = 0.999) {
  detail::check_distribution_pair(p, q);
  if (alpha <= 0.0 || alpha == 1.0)
    throw std::invalid_argument("renyi_divergence: alpha must be positive and != 1");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    if (q[k] == 0.0) {
      std::ostringstream msg;
      msg << "renyi_divergence: reference mass is zero in bin " << k
          << " where p = " << p[k];
      throw DivergenceError(msg.str());
    }
    acc += std::exp(alpha * std::log(p[k]) + (1.0 - alpha) * std::log(q[k]));
  }
  return std::log(acc) / (alpha - 1.0);
}

// KL divergence sum_k p ln(p/q) in nats, with 0 ln 0 = 0.
inline double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  detail::check_distribution_pair(p, q);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    if (q[k] == 0.0) {
      std::ostringstream msg;
      msg << "kl_divergence: reference mass is zero in bin " << k << " where p = " << p[k];
      throw DivergenceError(msg.str());
    }
    acc += p[k] * (std::log(p[k]) - std::log(q[k]));
  }
  return acc;
}

inline double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  detail::check_distribution_pair(p, q);
  return 0.5 * (p - q).cwiseAbs().sum();
}

// Histogram over equal-width bins with the last bin right-closed.
struct BinnedDistribution {
  std::vector<double> edges;  // bins + 1 ascending values
  Eigen::VectorXd probs;

  int bins() const { return static_cast<int>(probs.size()); }
};

// Equal-width edges spanning [min, max] of the values.  When every value
// coincides the histogram degenerates to the single bin [v-1/2, v+1/2].
inline std::vector<double> bin_edges(const std::vector<double>& values, int bins) {
  if (values.empty()) throw std::invalid_argument("bin_edges: empty value list");
  if (bins < 1) throw std::invalid_argument("bin_edges: bins must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (lo == hi) return {lo - 0.5, lo + 0.5};
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k)
    edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / bins;
  edges.back() = hi;
  return edges;
}

// Weighted histogram on the given edges.  Values at most a rounding slack
// outside the span are clamped into the end bins.
inline BinnedDistribution bin_costs(const std::vector<double>& values,
                                    const std::vector<double>& weights,
                                    const std::vector<double>& edges) {
  if (values.size() != weights.size())
    throw std::invalid_argument("bin_costs: values and weights must have equal length");
  if (edges.size() < 2) throw std::invalid_argument("bin_costs: need at least two edges");
  const int bins = static_cast<int>(edges.size()) - 1;
  const double lo = edges.front(), hi = edges.back();
  BinnedDistribution d;
  d.edges = edges;
  d.probs = Eigen::VectorXd::Zero(bins);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("bin_costs: negative weight");
    const double v = values[i];
    int b;
    if (v >= hi) b = bins - 1;
    else if (v <= lo) b = 0;
    else b = std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
    // Guard against values landing left of their edge after the division.
    while (b > 0 && v < d.edges[static_cast<std::size_t>(b)]) --b;
    while (b < bins - 1 && v >= d.edges[static_cast<std::size_t>(b) + 1]) ++b;
    d.probs[b] += weights[i];
    total += weights[i];
  }
  if (total <= 0.0) throw std::invalid_argument("bin_costs: total weight must be positive");
  d.probs /= total;
  return d;
}

inline BinnedDistribution bin_costs(const std::vector<double>& values,
                                    const std::vector<double>& weights, int bins) {
  return bin_costs(values, weights, bin_edges(values, bins));
}

inline BinnedDistribution bin_costs(const std::vector<double>& values, int bins) {
  return bin_costs(values, std::vector<double>(values.size(), 1.0), bins);
}

// Plain Hamming distance.
inline int hamming(const BitString& a, const BitString& b) {
  return popcount(a ^ b);
}

// Lattice-weighted quadratic Hamming distance:
//   sum over ordered pairs i != j of (a_i a_j - b_i b_j)^2 / d(v_i, v_j)
//   + sum_i (a_i - b_i)^2.
inline double quadratic_hamming(const AtomArray& atoms, const BitString& a,
                                const BitString& b) {
  const int n = atoms.n();
  if (static_cast<int>(a.size()) != n || static_cast<int>(b.size()) != n)
    throw std::invalid_argument("quadratic_hamming: bitstring length mismatch");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const int db = a[i] - b[i];
    acc += db * db;
    for (int j = i + 1; j < n; ++j) {
      const int dp = a[i] * a[j] - b[i] * b[j];
      if (dp == 0) continue;
      const double dist = distance(atoms, i, j);
      if (dist <= 0.0) throw std::invalid_argument("quadratic_hamming: coincident sites");
      acc += 2.0 * dp * dp / dist;
    }
  }
  return acc;
}

struct MetricAxiomReport {
  bool identity_ok = true;
  bool positivity_ok = true;
  bool symmetry_ok = true;
  bool triangle_ok = true;
  std::vector<std::string> violations;

  bool ok() const { return identity_ok && positivity_ok && symmetry_ok && triangle_ok; }
};

// Check the metric axioms of dist over the point set, with a small slack
// for floating-point roundoff.  Violations are reported with witnesses.
inline MetricAxiomReport check_metric_axioms(
    const std::function<double(const BitString&, const BitString&)>& dist,
    const std::vector<BitString>& points, double tol = 1e-9) {
  const std::size_t m = points.size();
  if (m < 2) throw std::invalid_argument("check_metric_axioms: need at least two points");
  MetricAxiomReport rep;
  Eigen::MatrixXd d(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          dist(points[i], points[j]);

  auto note = [&rep](const std::string& s) {
    if (rep.violations.size() < 100) rep.violations.push_back(s);
  };
  for (std::size_t i = 0; i < m; ++i) {
    if (std::abs(d(i, i)) > tol) {
      rep.identity_ok = false;
      note("identity: d(" + std::to_string(i) + "," + std::to_string(i) + ") = " +
           std::to_string(d(i, i)));
    }
    for (std::size_t j = i + 1; j < m; ++j) {
      if (!(points[i] == points[j]) && d(i, j) <= tol) {
        rep.positivity_ok = false;
        note("positivity: d(" + std::to_string(i) + "," + std::to_string(j) + ") = " +
             std::to_string(d(i, j)));
      }
      if (std::abs(d(i, j) - d(j, i)) > tol) {
        rep.symmetry_ok = false;
        note("symmetry: d(" + std::to_string(i) + "," + std::to_string(j) + ") != d(" +
             std::to_string(j) + "," + std::to_string(i) + ")");
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        if (d(i, k) > d(i, j) + d(j, k) + tol) {
          rep.triangle_ok = false;
          note("triangle: d(" + std::to_string(i) + "," + std::to_string(k) +
               ") > d(" + std::to_string(i) + "," + std::to_string(j) + ") + d(" +
               std::to_string(j) + "," + std::to_string(k) + ")");
        }
      }
  return rep;
}

// Mean absolute pixel difference between two equal-size designs in [0,1].
inline double mean_abs_pixel_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() == 0)
    throw std::invalid_argument("mean_abs_pixel_distance: size mismatch");
  return (x - y).cwiseAbs().mean();
}

// Latent pair with design samples attached to each endpoint.
struct IsometryPair {
  BitString za, zb;
  std::vector<Eigen::VectorXd> xa, xb;
};

// Mean over pairs of |d_Z(za, zb) - lambda_d * mean cross-pair d_X|.
inline double expected_isometry_gap(
    const std::vector<IsometryPair>& pairs,
    const std::function<double(const BitString&, const BitString&)>& d_z,
    const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& d_x,
    double lambda_d) {
  if (pairs.empty()) throw std::invalid_argument("expected_isometry_gap: no pairs");
  double acc = 0.0;
  for (const auto& pr : pairs) {
    if (pr.xa.empty() || pr.xb.empty())
      throw std::invalid_argument("expected_isometry_gap: pair without design samples");
    double mean_dx = 0.0;
    for (const auto& x : pr.xa)
      for (const auto& y : pr.xb) mean_dx += d_x(x, y);
    mean_dx /= static_cast<double>(pr.xa.size() * pr.xb.size());
    acc += std::abs(d_z(pr.za, pr.zb) - lambda_d * mean_dx);
  }
  return acc / static_cast<double>(pairs.size());
}

}  // namespace quenchmc
