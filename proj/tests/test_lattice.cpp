#include <gtest/gtest.h>

#include <cmath>

#include "quenchmc/lattice.hpp"

using namespace quenchmc;

TEST(Lattice, GridWithDefectDropsSite) {
  std::vector<std::uint8_t> mask = {0, 0, 0, 1};
  const auto a = build_king_subgraph(2, 2, 1.0, mask);
  ASSERT_EQ(a.n(), 3);
  EXPECT_DOUBLE_EQ(a.positions[0][0], 0.0);
  EXPECT_DOUBLE_EQ(a.positions[0][1], 0.0);
  EXPECT_DOUBLE_EQ(a.positions[1][0], 1.0);
  EXPECT_DOUBLE_EQ(a.positions[1][1], 0.0);
  EXPECT_DOUBLE_EQ(a.positions[2][0], 0.0);
  EXPECT_DOUBLE_EQ(a.positions[2][1], 1.0);
  EXPECT_EQ(a.site_of[2], 2);
}

TEST(Lattice, GridValidation) {
  EXPECT_THROW(build_king_subgraph(0, 2, 1.0), std::invalid_argument);
  EXPECT_THROW(build_king_subgraph(2, 2, 0.0), std::invalid_argument);
  EXPECT_THROW(build_king_subgraph(2, 2, 1.0, std::vector<std::uint8_t>{0, 1}),
               std::invalid_argument);
  EXPECT_THROW(build_king_subgraph(1, 1, 1.0, std::vector<std::uint8_t>{1}),
               std::invalid_argument);
}

TEST(Lattice, RandomDefectsDeterministic) {
  const auto a = build_king_subgraph(8, 8, 1.0, 0.2, 99);
  const auto b = build_king_subgraph(8, 8, 1.0, 0.2, 99);
  EXPECT_EQ(a.defect_mask, b.defect_mask);
  EXPECT_LT(a.n(), 64);
  const auto full = build_king_subgraph(8, 8, 1.0, 0.0, 99);
  EXPECT_EQ(full.n(), 64);
}

TEST(Lattice, BlockadeRadiusSixthRoot) {
  EXPECT_NEAR(blockade_radius(64.0, 1.0), 2.0, 1e-12);
  EXPECT_THROW(blockade_radius(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(blockade_radius(1.0, -1.0), std::invalid_argument);
}

TEST(Lattice, KingAdjacencyUnderDiagonalRadius) {
  const auto a = build_king_subgraph(3, 3, 1.0);
  const auto g = unit_disk_graph(a, std::sqrt(2.0));
  // Centre atom touches all eight others; corner atoms touch three.
  EXPECT_EQ(g.neighbors[4].size(), 8u);
  EXPECT_EQ(g.neighbors[0].size(), 3u);
  // King's graph on 3x3: 12 rook edges + 8 diagonal edges.
  EXPECT_EQ(g.edges.size(), 20u);
}

TEST(Lattice, UnitDiskToleratesExactDistances) {
  const auto a = build_king_subgraph(1, 2, 5.4);
  const auto g = unit_disk_graph(a, 5.4);
  EXPECT_EQ(g.edges.size(), 1u);
  EXPECT_TRUE(g.adjacent(0, 1));
}

TEST(Lattice, TriangleViolations) {
  AtomArray a;
  a.spacing = 1.0;
  a.rows = 1;
  a.cols = 3;
  a.positions = {{0.0, 0.0}, {1.0, 0.0}, {0.5, 0.9}};
  a.defect_mask = {0, 0, 0};
  a.site_of = {0, 1, 2};
  const auto g = unit_disk_graph(a, 1.2);
  ASSERT_EQ(g.edges.size(), 3u);
  EXPECT_EQ(violation_count(g, BitString::parse("111")), 3);
  EXPECT_EQ(violation_count(g, BitString::parse("110")), 1);
  EXPECT_EQ(violation_count(g, BitString::parse("100")), 0);
  EXPECT_THROW(violation_count(g, BitString::parse("10")), std::invalid_argument);
}

TEST(Lattice, SingleEdgeLaplacian) {
  const auto a = build_king_subgraph(1, 2, 1.0);
  const auto g = unit_disk_graph(a, 1.0);
  const auto l = laplacian(g);
  ASSERT_EQ(l.rows(), 2);
  EXPECT_DOUBLE_EQ(l(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(l(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(l(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(l(1, 1), 1.0);
}

TEST(Lattice, LaplacianRowSumsVanish) {
  const auto a = build_king_subgraph(3, 4, 2.0, 0.1, 7);
  const auto g = unit_disk_graph(a, 2.0 * std::sqrt(2.0));
  const auto l = laplacian(g);
  for (int i = 0; i < g.n; ++i) EXPECT_NEAR(l.row(i).sum(), 0.0, 1e-12);
}
