#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quenchmc/bitstring.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/quench.hpp"
#include "quenchmc/rng.hpp"
#include "quenchmc/rydberg.hpp"

namespace quenchmc {

enum class SamplerKind { quantum, bitflip, uniform };

inline const char* sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::quantum: return "quantum";
    case SamplerKind::bitflip: return "bitflip";
    default: return "uniform";
  }
}

inline SamplerKind parse_sampler(const std::string& s) {
  if (s == "quantum") return SamplerKind::quantum;
  if (s == "bitflip") return SamplerKind::bitflip;
  if (s == "uniform") return SamplerKind::uniform;
  throw std::invalid_argument("unknown sampler: " + s);
}

// One Metropolis-Hastings channel: a proposal sampler plus the acceptance
// rule at temperature tau.  depth is the number of proposal/accept rounds
// a single channel application performs.  The quantum sampler keeps its
// full outcome kernel cached when the register is small enough.
struct Channel {
  SamplerKind sampler = SamplerKind::bitflip;
  int n = 0;
  double tau = 1.0;
  int depth = 1;
  std::function<double(const BitString&)> energy;
  std::optional<QuenchSpec> quench;
  std::shared_ptr<const Eigen::MatrixXd> quantum_kernel;
};

inline Channel make_channel(SamplerKind sampler, int n, double tau, int depth,
                            std::function<double(const BitString&)> energy,
                            std::optional<QuenchSpec> quench = std::nullopt) {
  if (n < 1) throw std::invalid_argument("make_channel: n must be >= 1");
  if (tau <= 0.0) throw std::invalid_argument("make_channel: tau must be positive");
  if (depth < 1) throw std::invalid_argument("make_channel: depth must be >= 1");
  if (!energy) throw std::invalid_argument("make_channel: energy function required");
  Channel ch;
  ch.sampler = sampler;
  ch.n = n;
  ch.tau = tau;
  ch.depth = depth;
  ch.energy = std::move(energy);
  if (sampler == SamplerKind::quantum) {
    if (!quench) throw std::invalid_argument("make_channel: quantum sampler needs a quench spec");
    if (quench->params.n() != n)
      throw std::invalid_argument("make_channel: quench register size mismatch");
    ch.quench = std::move(quench);
    if (n <= 12)
      ch.quantum_kernel =
          std::make_shared<const Eigen::MatrixXd>(transition_kernel(*ch.quench));
  }
  return ch;
}

// Memoized energy table; falls back to direct evaluation past n = 20.
class EnergyCache {
public:
  EnergyCache(std::function<double(const BitString&)> fn, int n) : fn_(std::move(fn)) {
    if (n <= 20) table_.assign(1ull << n, std::numeric_limits<double>::quiet_NaN());
  }

  double operator()(const BitString& z) {
    if (table_.empty()) return fn_(z);
    double& slot = table_[z.index()];
    if (std::isnan(slot)) slot = fn_(z);
    return slot;
  }

private:
  std::function<double(const BitString&)> fn_;
  std::vector<double> table_;
};

// Draw one proposal.  Consumption is fixed per sampler so trajectories are
// reproducible: bitflip one integer draw, uniform exactly n reservoir bits,
// quantum one double (inverse CDF over the outcome column).
inline BitString propose(const Channel& ch, const BitString& z, CounterRng& rng) {
  if (static_cast<int>(z.size()) != ch.n)
    throw std::invalid_argument("propose: bitstring length mismatch");
  switch (ch.sampler) {
    case SamplerKind::bitflip: {
      BitString out = z;
      out.flip(static_cast<std::size_t>(rng.next_below(ch.n)));
      return out;
    }
    case SamplerKind::uniform:
      return BitString::from_index(ch.n, rng.next_bits(ch.n));
    case SamplerKind::quantum: {
      const double u = rng.next_double();
      Eigen::VectorXd column;
      if (ch.quantum_kernel) {
        column = ch.quantum_kernel->col(static_cast<Eigen::Index>(z.index()));
      } else {
        column = proposal_row(*ch.quench, z);
      }
      double acc = 0.0;
      for (Eigen::Index k = 0; k < column.size(); ++k) {
        acc += column[k];
        if (u < acc) return BitString::from_index(ch.n, static_cast<std::uint64_t>(k));
      }
      return BitString::from_index(ch.n, static_cast<std::uint64_t>(column.size() - 1));
    }
  }
  throw std::logic_error("propose: unreachable");
}

// Acceptance min(1, exp(-delta_c / tau)).  Always consumes one double so
// the draw pattern does not depend on the data.
inline bool mh_accept(double delta_c, double tau, CounterRng& rng) {
  if (tau <= 0.0) throw std::invalid_argument("mh_accept: tau must be positive");
  const double u = rng.next_double();
  if (delta_c <= 0.0) return true;
  return u < std::exp(-delta_c / tau);
}

struct StepResult {
  BitString state;
  BitString proposal;
  bool accepted = false;
};

inline StepResult channel_step(const Channel& ch, const BitString& z,
                               CounterRng& rng, EnergyCache& energy) {
  StepResult r;
  r.proposal = propose(ch, z, rng);
  const double delta_c = energy(r.proposal) - energy(z);
  r.accepted = mh_accept(delta_c, ch.tau, rng);
  r.state = r.accepted ? r.proposal : z;
  return r;
}

inline StepResult channel_step(const Channel& ch, const BitString& z, CounterRng& rng) {
  EnergyCache cache(ch.energy, ch.n);
  return channel_step(ch, z, rng, cache);
}

// Noise bits flipped between input and output of a channel application.
inline BitString xor_noise(const BitString& before, const BitString& after) {
  return before ^ after;
}

// Run the channel's depth proposal/accept rounds from z.
inline BitString apply_channel(const Channel& ch, const BitString& z, CounterRng& rng,
                               EnergyCache& energy) {
  BitString cur = z;
  for (int d = 0; d < ch.depth; ++d) cur = channel_step(ch, cur, rng, energy).state;
  return cur;
}

inline BitString apply_channel(const Channel& ch, const BitString& z, CounterRng& rng) {
  EnergyCache cache(ch.energy, ch.n);
  return apply_channel(ch, z, rng, cache);
}

// Proposal matrix R(z, z') for one draw, columns indexed by the source.
inline Eigen::MatrixXd proposal_matrix(const Channel& ch) {
  if (ch.n > 12) throw CapacityError("proposal_matrix: capped at n = 12");
  const Eigen::Index dim = 1ll << ch.n;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(dim, dim);
  switch (ch.sampler) {
    case SamplerKind::bitflip:
      for (Eigen::Index c = 0; c < dim; ++c)
        for (int i = 0; i < ch.n; ++i) r(c ^ (Eigen::Index(1) << i), c) = 1.0 / ch.n;
      break;
    case SamplerKind::uniform:
      r.setConstant(std::pow(2.0, -ch.n));
      break;
    case SamplerKind::quantum: {
      if (ch.quantum_kernel) r = *ch.quantum_kernel;
      else r = transition_kernel(*ch.quench);
      // At zero drive phase and zero mask the Hamiltonian is real symmetric,
      // so the exact kernel is symmetric; averaging removes the residual
      // asymmetry of the numerical propagation.
      if (ch.quench->phase == 0.0 && ch.quench->mask_is_zero())
        r = ((r + r.transpose()) * 0.5).eval();
      break;
    }
  }
  return r;
}

// Column-stochastic matrix of one proposal/accept round.  Rejected mass
// sits on the diagonal.
inline Eigen::MatrixXd channel_matrix(const Channel& ch) {
  const Eigen::MatrixXd r = proposal_matrix(ch);
  const Eigen::Index dim = r.rows();
  EnergyCache energy(ch.energy, ch.n);
  Eigen::VectorXd e(dim);
  for (Eigen::Index k = 0; k < dim; ++k)
    e[k] = energy(BitString::from_index(ch.n, static_cast<std::uint64_t>(k)));
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    double off = 0.0;
    for (Eigen::Index z = 0; z < dim; ++z) {
      if (z == c) continue;
      const double a = std::min(1.0, std::exp(-(e[z] - e[c]) / ch.tau));
      p(z, c) = r(z, c) * a;
      off += p(z, c);
    }
    p(c, c) = 1.0 - off;
  }
  return p;
}

// f-fold composition of a column-stochastic matrix by binary powering.
inline Eigen::MatrixXd telescope(const Eigen::MatrixXd& p, int f) {
  if (p.rows() != p.cols()) throw std::invalid_argument("telescope: matrix must be square");
  if (f < 0) throw std::invalid_argument("telescope: exponent must be >= 0");
  for (Eigen::Index c = 0; c < p.cols(); ++c)
    if (std::abs(p.col(c).sum() - 1.0) > 1e-8)
      throw std::invalid_argument("telescope: input columns must sum to 1");
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(p.rows(), p.cols());
  Eigen::MatrixXd base = p;
  int k = f;
  while (k > 0) {
    if (k & 1) out = (out * base).eval();
    base = (base * base).eval();
    k >>= 1;
  }
  return out;
}

// Absolute spectral gap 1 - max_{lambda != lambda_1} |lambda|, removing
// exactly one copy of the leading modulus.
inline double spectral_gap(const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols()) throw std::invalid_argument("spectral_gap: matrix must be square");
  Eigen::EigenSolver<Eigen::MatrixXd> es(p, false);
  std::vector<double> mags(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index k = 0; k < p.rows(); ++k)
    mags[static_cast<std::size_t>(k)] = std::abs(es.eigenvalues()[k]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  if (mags.size() < 2) return 1.0;
  return std::clamp(1.0 - mags[1], 0.0, 1.0);
}

// Same gap computed on the similarity transform D^{1/2} P D^{-1/2}, which
// is symmetric for a mu-reversible channel and better conditioned.
inline double spectral_gap(const Eigen::MatrixXd& p, const DiscreteDistribution& mu) {
  if (p.rows() != mu.probs.size())
    throw std::invalid_argument("spectral_gap: distribution size mismatch");
  const Eigen::Index dim = p.rows();
  Eigen::VectorXd sq(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (mu.probs[k] <= 0.0)
      throw std::invalid_argument("spectral_gap: mu must be strictly positive");
    sq[k] = std::sqrt(mu.probs[k]);
  }
  Eigen::MatrixXd s(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c)
    for (Eigen::Index z = 0; z < dim; ++z) s(z, c) = p(z, c) * sq[c] / sq[z];
  s = ((s + s.transpose()) * 0.5).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  std::vector<double> mags(static_cast<std::size_t>(dim));
  for (Eigen::Index k = 0; k < dim; ++k)
    mags[static_cast<std::size_t>(k)] = std::abs(es.eigenvalues()[k]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  if (mags.size() < 2) return 1.0;
  return std::clamp(1.0 - mags[1], 0.0, 1.0);
}

// max_{z, z'} |P(z|z') mu(z') - P(z'|z) mu(z)|.
inline double detailed_balance_residual(const Eigen::MatrixXd& p,
                                        const DiscreteDistribution& mu) {
  if (p.rows() != p.cols() || p.rows() != mu.probs.size())
    throw std::invalid_argument("detailed_balance_residual: size mismatch");
  double worst = 0.0;
  for (Eigen::Index c = 0; c < p.cols(); ++c)
    for (Eigen::Index z = c + 1; z < p.rows(); ++z)
      worst = std::max(worst, std::abs(p(z, c) * mu.probs[c] - p(c, z) * mu.probs[z]));
  return worst;
}

struct ChainStep {
  std::int64_t step = 0;
  BitString state;
  double energy = 0.0;
  BitString proposal;
  bool accepted = false;
};

struct ChainRecord {
  std::uint64_t seed = 0;
  std::vector<ChainStep> steps;
};

// Run `steps` proposal/accept rounds from z0.  Row 0 records the initial
// state (proposal set to the state itself, accepted = 1).
inline ChainRecord run_chain(const Channel& ch, const BitString& z0,
                             std::int64_t steps, std::uint64_t seed) {
  if (steps < 0) throw std::invalid_argument("run_chain: steps must be >= 0");
  CounterRng rng(seed);
  EnergyCache energy(ch.energy, ch.n);
  ChainRecord rec;
  rec.seed = seed;
  rec.steps.reserve(static_cast<std::size_t>(steps) + 1);
  BitString cur = z0;
  rec.steps.push_back({0, cur, energy(cur), cur, true});
  for (std::int64_t s = 1; s <= steps; ++s) {
    const auto r = channel_step(ch, cur, rng, energy);
    cur = r.state;
    rec.steps.push_back({s, cur, energy(cur), r.proposal, r.accepted});
  }
  return rec;
}

}  // namespace quenchmc
