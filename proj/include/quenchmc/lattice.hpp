#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "quenchmc/bitstring.hpp"
#include "quenchmc/rng.hpp"

namespace quenchmc {

// Planar atom register.  Atoms live at grid sites (col*spacing, row*spacing)
// in micrometres; defected sites are dropped from positions but the full
// row-major mask is kept so site indices remain addressable.
struct AtomArray {
  std::vector<std::array<double, 2>> positions;
  double spacing = 0.0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> defect_mask;  // length rows*cols, 1 = removed
  std::vector<int> site_of;               // atom index -> original site

  int n() const { return static_cast<int>(positions.size()); }
};

inline double distance(const AtomArray& atoms, int i, int j) {
  const double dx = atoms.positions[i][0] - atoms.positions[j][0];
  const double dy = atoms.positions[i][1] - atoms.positions[j][1];
  return std::sqrt(dx * dx + dy * dy);
}

// Rectangular grid with defects removed.  Site index is row*cols + col.
inline AtomArray build_king_subgraph(int rows, int cols, double spacing,
                                     const std::vector<std::uint8_t>& defect_mask) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid: rows and cols must be >= 1");
  if (spacing <= 0.0) throw std::invalid_argument("grid: spacing must be positive");
  if (defect_mask.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("grid: defect mask length must be rows*cols");
  AtomArray a;
  a.spacing = spacing;
  a.rows = rows;
  a.cols = cols;
  a.defect_mask = defect_mask;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int site = r * cols + c;
      if (defect_mask[site]) continue;
      a.positions.push_back({c * spacing, r * spacing});
      a.site_of.push_back(site);
    }
  if (a.positions.empty()) throw std::invalid_argument("grid: all sites defected");
  return a;
}

inline AtomArray build_king_subgraph(int rows, int cols, double spacing) {
  return build_king_subgraph(rows, cols, spacing,
                             std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 0));
}

// Random defects: each site is removed independently with the given density.
inline AtomArray build_king_subgraph(int rows, int cols, double spacing,
                                     double defect_density, std::uint64_t seed) {
  if (defect_density < 0.0 || defect_density >= 1.0)
    throw std::invalid_argument("grid: defect density must lie in [0, 1)");
  CounterRng rng(seed);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(rows) * cols, 0);
  for (auto& m : mask) m = rng.next_double() < defect_density ? 1 : 0;
  return build_king_subgraph(rows, cols, spacing, mask);
}

// Undirected graph of atom pairs closer than the interaction radius.
struct InteractionGraph {
  int n = 0;
  double radius = 0.0;
  std::vector<std::pair<int, int>> edges;        // i < j
  std::vector<std::vector<int>> neighbors;       // adjacency lists

  bool adjacent(int i, int j) const {
    for (int k : neighbors[i])
      if (k == j) return true;
    return false;
  }
};

// Edge (i, j) iff |r_i - r_j| <= radius, with a 1e-9 relative slack so
// grid-exact distances are classified stably.
inline InteractionGraph unit_disk_graph(const AtomArray& atoms, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("unit_disk_graph: radius must be positive");
  InteractionGraph g;
  g.n = atoms.n();
  g.radius = radius;
  g.neighbors.resize(g.n);
  const double cutoff = radius * (1.0 + 1e-9);
  for (int i = 0; i < g.n; ++i)
    for (int j = i + 1; j < g.n; ++j)
      if (distance(atoms, i, j) <= cutoff) {
        g.edges.emplace_back(i, j);
        g.neighbors[i].push_back(j);
        g.neighbors[j].push_back(i);
      }
  return g;
}

// Distance at which the pair interaction c6 / r^6 equals the drive omega.
inline double blockade_radius(double c6, double omega) {
  if (c6 <= 0.0 || omega <= 0.0)
    throw std::invalid_argument("blockade_radius: c6 and omega must be positive");
  return std::pow(c6 / omega, 1.0 / 6.0);
}

// Number of edges whose endpoints are both excited in z.
inline int violation_count(const InteractionGraph& g, const BitString& z) {
  if (static_cast<int>(z.size()) != g.n)
    throw std::invalid_argument("violation_count: bitstring length mismatch");
  int count = 0;
  for (const auto& [i, j] : g.edges)
    if (z[i] && z[j]) ++count;
  return count;
}

// Graph Laplacian D - A.
inline Eigen::MatrixXd laplacian(const InteractionGraph& g) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(g.n, g.n);
  for (const auto& [i, j] : g.edges) {
    l(i, j) -= 1.0;
    l(j, i) -= 1.0;
    l(i, i) += 1.0;
    l(j, j) += 1.0;
  }
  return l;
}

}  // namespace quenchmc
