#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "quenchmc/mcmc.hpp"

using namespace quenchmc;

namespace {

std::function<double(const BitString&)> table_energy(int n, std::uint64_t seed) {
  CounterRng rng(seed);
  auto table = std::make_shared<std::vector<double>>(1ull << n);
  for (auto& e : *table) e = rng.next_double();
  return [table](const BitString& z) { return (*table)[z.index()]; };
}

QuenchSpec small_quench(int n) {
  QuenchSpec s;
  s.params.atoms = build_king_subgraph(1, n, 5.4);
  s.params.omega = 15.8;
  s.params.delta = 6.66;
  s.params.c6 = 5.42e6;
  s.t = 1.29;
  return s;
}

DiscreteDistribution table_boltzmann(const std::function<double(const BitString&)>& e,
                                     int n, double tau) {
  return boltzmann(e, n, tau);
}

}  // namespace

TEST(Mcmc, BitflipProposalFlipsOneBit) {
  const auto ch = make_channel(SamplerKind::bitflip, 5, 1.0, 1, table_energy(5, 1));
  CounterRng rng(7);
  const auto z = BitString::parse("01101");
  for (int i = 0; i < 50; ++i) {
    const auto prop = propose(ch, z, rng);
    int diff = 0;
    for (int b = 0; b < 5; ++b) diff += prop[b] != z[b];
    EXPECT_EQ(diff, 1);
  }
}

TEST(Mcmc, UniformProposalConsumesExactlyNBits) {
  const auto ch = make_channel(SamplerKind::uniform, 6, 1.0, 1, table_energy(6, 2));
  CounterRng rng(11), ref(11);
  const auto z = BitString(6);
  const auto prop = propose(ch, z, rng);
  EXPECT_EQ(prop.index(), ref.next_bits(6));
  // Reservoir continues where the proposal left off.
  EXPECT_EQ(rng.next_bits(6), ref.next_bits(6));
}

TEST(Mcmc, AcceptAlwaysTakesDownhill) {
  CounterRng rng(3);
  for (int i = 0; i < 20; ++i) {
    EXPECT_TRUE(mh_accept(-0.5, 1.0, rng));
    EXPECT_TRUE(mh_accept(0.0, 1.0, rng));
  }
}

TEST(Mcmc, AcceptMatchesBoltzmannFactor) {
  CounterRng rng(17);
  const double delta_c = 0.9, tau = 1.3;
  const int trials = 40000;
  int acc = 0;
  for (int i = 0; i < trials; ++i) acc += mh_accept(delta_c, tau, rng);
  const double expect = std::exp(-delta_c / tau);
  const double sigma = std::sqrt(expect * (1 - expect) / trials);
  EXPECT_NEAR(acc / static_cast<double>(trials), expect, 4 * sigma);
}

TEST(Mcmc, ChannelMatrixColumnsAreStochastic) {
  for (auto kind : {SamplerKind::bitflip, SamplerKind::uniform, SamplerKind::quantum}) {
    auto ch = kind == SamplerKind::quantum
                  ? make_channel(kind, 3, 0.7, 1, table_energy(3, 5), small_quench(3))
                  : make_channel(kind, 3, 0.7, 1, table_energy(3, 5));
    const auto p = channel_matrix(ch);
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-12);
      for (Eigen::Index z = 0; z < p.rows(); ++z) EXPECT_GE(p(z, c), -1e-15);
    }
  }
}

TEST(Mcmc, DetailedBalanceAllSamplers) {
  const int n = 3;
  const auto energy = table_energy(n, 5);
  const auto mu = table_boltzmann(energy, n, 0.7);
  for (auto kind : {SamplerKind::bitflip, SamplerKind::uniform, SamplerKind::quantum}) {
    auto ch = kind == SamplerKind::quantum
                  ? make_channel(kind, n, 0.7, 1, energy, small_quench(n))
                  : make_channel(kind, n, 0.7, 1, energy);
    const auto p = channel_matrix(ch);
    EXPECT_LE(detailed_balance_residual(p, mu), 1e-12) << sampler_name(kind);
  }
}

TEST(Mcmc, TelescopeMatchesRepeatedMultiplication) {
  const auto ch = make_channel(SamplerKind::bitflip, 3, 1.0, 1, table_energy(3, 9));
  const auto p = channel_matrix(ch);
  EXPECT_LT((telescope(p, 0) - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((telescope(p, 1) - p).cwiseAbs().maxCoeff(), 1e-15);
  const Eigen::MatrixXd p3 = p * p * p;
  EXPECT_LT((telescope(p, 3) - p3).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::MatrixXd bad = p;
  bad(0, 0) += 0.1;
  EXPECT_THROW(telescope(bad, 2), std::invalid_argument);
}

TEST(Mcmc, SpectralGapOracles) {
  // Identity channel never mixes.
  EXPECT_NEAR(spectral_gap(Eigen::MatrixXd::Identity(16, 16)), 0.0, 1e-10);
  // One uniform draw mixes completely.
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(8, 8, 1.0 / 8.0);
  EXPECT_NEAR(spectral_gap(flat), 1.0, 1e-10);
  // Single-site flip on one atom alternates deterministically.
  Eigen::MatrixXd swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  EXPECT_NEAR(spectral_gap(swap), 0.0, 1e-10);
}

TEST(Mcmc, SymmetrizedGapMatchesGeneralSolver) {
  const int n = 4;
  const auto energy = table_energy(n, 21);
  const auto mu = table_boltzmann(energy, n, 1.0);
  const auto ch = make_channel(SamplerKind::bitflip, n, 1.0, 1, energy);
  const auto p = channel_matrix(ch);
  EXPECT_NEAR(spectral_gap(p), spectral_gap(p, mu), 1e-9);
}

TEST(Mcmc, XorNoiseMarksFlips) {
  const auto eps = xor_noise(BitString::parse("1100"), BitString::parse("1010"));
  EXPECT_EQ(eps.str(), "0110");
}

TEST(Mcmc, ApplyChannelRunsDepthSteps) {
  const auto energy = table_energy(4, 31);
  const auto ch1 = make_channel(SamplerKind::bitflip, 4, 1.0, 1, energy);
  const auto ch3 = make_channel(SamplerKind::bitflip, 4, 1.0, 3, energy);
  CounterRng rng_a(5), rng_b(5);
  BitString z = BitString::parse("0110");
  BitString a = z;
  for (int d = 0; d < 3; ++d) a = channel_step(ch1, a, rng_a).state;
  const auto b = apply_channel(ch3, z, rng_b);
  EXPECT_EQ(a, b);
}

TEST(Mcmc, EnergyCacheEvaluatesOnce) {
  int calls = 0;
  EnergyCache cache([&calls](const BitString&) { ++calls; return 1.0; }, 4);
  const auto z = BitString::parse("1010");
  cache(z);
  cache(z);
  cache(z);
  EXPECT_EQ(calls, 1);
}

TEST(Mcmc, RunChainIsDeterministicAndConsistent) {
  const auto ch = make_channel(SamplerKind::bitflip, 4, 1.0, 1, table_energy(4, 77));
  const auto a = run_chain(ch, BitString(4), 200, 1234);
  const auto b = run_chain(ch, BitString(4), 200, 1234);
  ASSERT_EQ(a.steps.size(), 201u);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].state, b.steps[i].state);
    EXPECT_EQ(a.steps[i].accepted, b.steps[i].accepted);
  }
  for (std::size_t i = 1; i < a.steps.size(); ++i) {
    if (a.steps[i].accepted) EXPECT_EQ(a.steps[i].state, a.steps[i].proposal);
    else EXPECT_EQ(a.steps[i].state, a.steps[i - 1].state);
  }
}

TEST(Mcmc, ChainConvergesToBoltzmann) {
  const int n = 4;
  const auto energy = table_energy(n, 13);
  const auto mu = table_boltzmann(energy, n, 1.0);
  const auto ch = make_channel(SamplerKind::bitflip, n, 1.0, 1, energy);
  const auto rec = run_chain(ch, BitString(n), 40000, 99);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(16);
  for (std::size_t i = 5000; i < rec.steps.size(); ++i)
    freq[static_cast<Eigen::Index>(rec.steps[i].state.index())] += 1.0;
  freq /= freq.sum();
  EXPECT_LT(0.5 * (freq - mu.probs).cwiseAbs().sum(), 0.05);
}

TEST(Mcmc, QuantumChannelUsesCachedKernel) {
  const auto spec = small_quench(3);
  const auto ch = make_channel(SamplerKind::quantum, 3, 1.0, 1, table_energy(3, 55), spec);
  ASSERT_TRUE(ch.quantum_kernel != nullptr);
  CounterRng rng_a(8), rng_b(8);
  const auto z = BitString::parse("010");
  EXPECT_EQ(propose(ch, z, rng_a), propose(ch, z, rng_b));
}

TEST(Mcmc, ChannelValidation) {
  EXPECT_THROW(make_channel(SamplerKind::bitflip, 0, 1.0, 1, table_energy(1, 1)),
               std::invalid_argument);
  EXPECT_THROW(make_channel(SamplerKind::bitflip, 3, 0.0, 1, table_energy(3, 1)),
               std::invalid_argument);
  EXPECT_THROW(make_channel(SamplerKind::bitflip, 3, 1.0, 0, table_energy(3, 1)),
               std::invalid_argument);
  EXPECT_THROW(make_channel(SamplerKind::quantum, 3, 1.0, 1, table_energy(3, 1)),
               std::invalid_argument);
}
