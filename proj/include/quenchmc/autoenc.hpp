#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quenchmc/bitstring.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/lattice.hpp"
#include "quenchmc/mcmc.hpp"
#include "quenchmc/metrics.hpp"
#include "quenchmc/rng.hpp"
#include "quenchmc/rydberg.hpp"

namespace quenchmc {

struct AffineLayer {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

// Feed-forward autoencoder with a discrete latent register.  Hidden layers
// use tanh; the encoder head is linear (latent logits) and the decoder head
// is a sigmoid so outputs live in (0,1).
struct AutoencoderModel {
  int pixels = 0;
  int latent_n = 0;
  std::vector<int> hidden;
  std::vector<AffineLayer> encoder;
  std::vector<AffineLayer> decoder;
};

inline AutoencoderModel init_model(int pixels, const std::vector<int>& hidden,
                                   int latent_n, std::uint64_t seed) {
  if (pixels < 1 || latent_n < 1)
    throw std::invalid_argument("init_model: pixels and latent_n must be >= 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("init_model: hidden widths must be >= 1");
  CounterRng rng(seed);
  const auto glorot = [&rng](int rows, int cols) {
    AffineLayer l;
    l.w.resize(rows, cols);
    const double s = std::sqrt(6.0 / (rows + cols));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) l.w(r, c) = (2.0 * rng.next_double() - 1.0) * s;
    l.b = Eigen::VectorXd::Zero(rows);
    return l;
  };
  AutoencoderModel m;
  m.pixels = pixels;
  m.latent_n = latent_n;
  m.hidden = hidden;
  int in = pixels;
  for (int h : hidden) {
    m.encoder.push_back(glorot(h, in));
    in = h;
  }
  m.encoder.push_back(glorot(latent_n, in));
  in = latent_n;
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
    m.decoder.push_back(glorot(*it, in));
    in = *it;
  }
  m.decoder.push_back(glorot(pixels, in));
  return m;
}

namespace detail {

inline double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

struct LayerTrace {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> pre;
};

enum class HeadKind { linear, sigmoid };

inline Eigen::VectorXd stack_forward(const std::vector<AffineLayer>& layers,
                                     const Eigen::VectorXd& x, HeadKind head,
                                     LayerTrace* trace = nullptr) {
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (trace) trace->inputs.push_back(a);
    Eigen::VectorXd pre = layers[l].w * a + layers[l].b;
    if (trace) trace->pre.push_back(pre);
    if (l + 1 < layers.size()) {
      a = pre.array().tanh().matrix();
    } else if (head == HeadKind::sigmoid) {
      a.resize(pre.size());
      for (Eigen::Index k = 0; k < pre.size(); ++k) a[k] = sigmoid(pre[k]);
    } else {
      a = pre;
    }
  }
  return a;
}

// Backpropagate g = dL/d(pre-activation of the head layer).  Weight
// gradients accumulate into *grads when given; the return value is
// dL/d(stack input).
inline Eigen::VectorXd stack_backward(const std::vector<AffineLayer>& layers,
                                      const LayerTrace& trace, Eigen::VectorXd g,
                                      std::vector<AffineLayer>* grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (grads) {
      (*grads)[l].w += g * trace.inputs[l].transpose();
      (*grads)[l].b += g;
    }
    Eigen::VectorXd gin = layers[l].w.transpose() * g;
    if (l == 0) return gin;
    const auto& pre = trace.pre[l - 1];
    g = (gin.array() * (1.0 - pre.array().tanh().square())).matrix();
  }
  return g;
}

inline std::vector<AffineLayer> zeros_like(const std::vector<AffineLayer>& layers) {
  std::vector<AffineLayer> out(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out[l].w = Eigen::MatrixXd::Zero(layers[l].w.rows(), layers[l].w.cols());
    out[l].b = Eigen::VectorXd::Zero(layers[l].b.size());
  }
  return out;
}

}  // namespace detail

// Latent logits for one design.
inline Eigen::VectorXd encode(const AutoencoderModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.pixels) throw std::invalid_argument("encode: pixel count mismatch");
  return detail::stack_forward(m.encoder, x, detail::HeadKind::linear);
}

// Decoded design for one latent vector (binary or relaxed entries).
inline Eigen::VectorXd decode(const AutoencoderModel& m, const Eigen::VectorXd& z) {
  if (z.size() != m.latent_n) throw std::invalid_argument("decode: latent size mismatch");
  return detail::stack_forward(m.decoder, z, detail::HeadKind::sigmoid);
}

// Sign quantizer with the straight-through convention: spin = sign(tanh z)
// with sign(0) = +1, relaxed = tanh z, and noise = spin - relaxed held
// constant during backpropagation.
struct QuantizerOutput {
  Eigen::VectorXd spin;
  Eigen::VectorXd relaxed;
  Eigen::VectorXd noise;
};

inline QuantizerOutput quantize(const Eigen::VectorXd& zeta) {
  QuantizerOutput q;
  q.relaxed = zeta.array().tanh().matrix();
  q.spin.resize(zeta.size());
  for (Eigen::Index k = 0; k < zeta.size(); ++k)
    q.spin[k] = q.relaxed[k] >= 0.0 ? 1.0 : -1.0;
  q.noise = q.spin - q.relaxed;
  return q;
}

inline BitString spin_to_binary(const Eigen::VectorXd& spin) {
  BitString z(static_cast<std::size_t>(spin.size()));
  for (Eigen::Index k = 0; k < spin.size(); ++k)
    z.set(static_cast<std::size_t>(k), spin[k] > 0.0 ? 1 : 0);
  return z;
}

inline Eigen::VectorXd binary_to_spin(const BitString& z) {
  Eigen::VectorXd s(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s[static_cast<Eigen::Index>(i)] = z[i] ? 1.0 : -1.0;
  return s;
}

inline Eigen::VectorXd binary_to_real(const BitString& z) {
  Eigen::VectorXd x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[static_cast<Eigen::Index>(i)] = z[i];
  return x;
}

// Threshold a decoded design at one half.
inline BitString binarize_design(const Eigen::VectorXd& xhat) {
  BitString z(static_cast<std::size_t>(xhat.size()));
  for (Eigen::Index k = 0; k < xhat.size(); ++k)
    z.set(static_cast<std::size_t>(k), xhat[k] >= 0.5 ? 1 : 0);
  return z;
}

// Binary cross-entropy per pixel, with predictions clamped away from the
// endpoints of (0,1).
inline double reconstruction_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat) {
  if (x.size() != xhat.size() || x.size() == 0)
    throw std::invalid_argument("reconstruction_loss: size mismatch");
  const double clamp = 1e-7;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double p = std::min(1.0 - clamp, std::max(clamp, xhat[k]));
    acc -= x[k] * std::log(p) + (1.0 - x[k]) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(x.size());
}

inline double energy_match_loss(double c_z, double c_chi, double lambda) {
  const double d = c_z - lambda * c_chi;
  return d * d;
}

// Quadratic adjacency penalty; equals the violation count on binary input.
inline double is_penalty_loss(const InteractionGraph& g, const Eigen::VectorXd& z) {
  if (z.size() != g.n) throw std::invalid_argument("is_penalty_loss: size mismatch");
  double acc = 0.0;
  for (const auto& [i, j] : g.edges) acc += z[i] * z[j];
  return acc;
}

// Mean over unordered pairs of |d_Z - lambda_d * d_X|.
inline double distance_match_loss(const Eigen::MatrixXd& d_z,
                                  const std::vector<Eigen::VectorXd>& xhat,
                                  double lambda_d) {
  const std::size_t n = xhat.size();
  if (n < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      acc += std::abs(d_z(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -
                      lambda_d * mean_abs_pixel_distance(xhat[a], xhat[b]));
  return acc / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

struct TrainConfig {
  int epochs = 1;
  double lr = 1e-3;
  double momentum = 0.9;
  int batch_size = 0;  // 0 = full batch
  double w_rec = 1.0;
  double w_energy = 1.0;
  double w_is = 1.0;
  double w_dist = 1.0;
  double lambda = 0.0;    // 0 = freeze from the first batch
  double lambda_d = 0.0;  // 0 = freeze from the first batch
  int noise_draws = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("train: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("train: momentum must lie in [0, 1)");
    if (batch_size < 0) throw std::invalid_argument("train: batch_size must be >= 0");
    if (noise_draws < 1) throw std::invalid_argument("train: noise_draws must be >= 1");
    if (lambda < 0.0 || lambda_d < 0.0)
      throw std::invalid_argument("train: scale factors must be >= 0");
  }
};

// Everything the losses need besides the model: the noise channel, the
// differentiable latent cost, the design cost, and the latent register
// geometry.
struct TrainContext {
  Channel channel;
  EnergyTerms energy;
  std::function<double(const Eigen::VectorXd&)> design_cost;  // on binarized pixels
  AtomArray atoms;
  InteractionGraph graph;
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double energy_match = 0.0;
  double is_penalty = 0.0;
  double distance_match = 0.0;
  double lambda = 0.0;
  double lambda_d = 0.0;

  double total(const TrainConfig& cfg) const {
    return cfg.w_rec * reconstruction + cfg.w_energy * energy_match +
           cfg.w_is * is_penalty + cfg.w_dist * distance_match;
  }
};

// Stochastic draws frozen at one expansion point: channel flips, quantizer
// noise, the design cost of the decoded latent, and the latent distances.
// The surrogate loss below is a deterministic function of the weights once
// these are fixed.
struct FrozenSample {
  Eigen::VectorXd noise;    // quantizer noise at the expansion point
  Eigen::VectorXd eps;      // channel flip indicator per latent bit
  double c_chi = 0.0;       // frozen design cost
  Eigen::VectorXd ztilde0;  // frozen decoder input for the distance term
};

struct FrozenBatch {
  std::vector<FrozenSample> samples;
  Eigen::MatrixXd d_z;  // frozen pairwise latent distances
  double mean_abs_cz = 0.0;
  double mean_abs_cchi = 0.0;
  double mean_dz = 0.0;
  double mean_dx = 0.0;
};

// Run the stochastic part of one batch: encode, quantize, push the latent
// through the channel, decode, and record everything the surrogate needs.
inline FrozenBatch freeze_batch(const AutoencoderModel& m,
                                const std::vector<Eigen::VectorXd>& designs,
                                const TrainContext& ctx, CounterRng& rng) {
  FrozenBatch fb;
  const std::size_t n = designs.size();
  fb.samples.resize(n);
  std::vector<BitString> latents;
  latents.reserve(n);
  std::vector<Eigen::VectorXd> decoded;
  decoded.reserve(n);
  EnergyCache cache(ctx.channel.energy, ctx.channel.n);
  for (std::size_t s = 0; s < n; ++s) {
    const Eigen::VectorXd zeta = encode(m, designs[s]);
    const QuantizerOutput q = quantize(zeta);
    const BitString z_pre = spin_to_binary(q.spin);
    const BitString z_post = apply_channel(ctx.channel, z_pre, rng, cache);
    const BitString eps = xor_noise(z_pre, z_post);
    FrozenSample& fs = fb.samples[s];
    fs.noise = q.noise;
    fs.eps = binary_to_real(eps);
    fs.ztilde0 = binary_to_real(z_post);
    const Eigen::VectorXd xhat = decode(m, fs.ztilde0);
    fs.c_chi = ctx.design_cost(binary_to_real(binarize_design(xhat)));
    fb.mean_abs_cz += std::abs(ctx.energy.eval(fs.ztilde0));
    fb.mean_abs_cchi += std::abs(fs.c_chi);
    latents.push_back(z_post);
    decoded.push_back(xhat);
  }
  fb.mean_abs_cz /= static_cast<double>(n);
  fb.mean_abs_cchi /= static_cast<double>(n);
  fb.d_z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  int pairs = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = quadratic_hamming(ctx.atoms, latents[a], latents[b]);
      fb.d_z(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = d;
      fb.d_z(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = d;
      fb.mean_dz += d;
      fb.mean_dx += mean_abs_pixel_distance(decoded[a], decoded[b]);
      ++pairs;
    }
  if (pairs > 0) {
    fb.mean_dz /= pairs;
    fb.mean_dx /= pairs;
  }
  return fb;
}

// Deterministic loss of the noise-frozen surrogate at the current weights.
// The straight-through path substitutes tanh(zeta) + noise for the spin,
// and the frozen channel flips enter through z~ = zb(1-eps) + (1-zb)eps.
// The distance term sees the decoder only: its inputs stay pinned at the
// frozen latents.
inline LossBreakdown surrogate_loss(const AutoencoderModel& m,
                                    const std::vector<Eigen::VectorXd>& designs,
                                    const TrainContext& ctx, const FrozenBatch& fb,
                                    const TrainConfig& cfg, double lambda,
                                    double lambda_d) {
  const std::size_t n = designs.size();
  LossBreakdown out;
  out.lambda = lambda;
  out.lambda_d = lambda_d;
  std::vector<Eigen::VectorXd> xhat_dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    const FrozenSample& fs = fb.samples[s];
    const Eigen::VectorXd zeta = encode(m, designs[s]);
    const Eigen::VectorXd zb =
        ((zeta.array().tanh() + fs.noise.array() + 1.0) / 2.0).matrix();
    const Eigen::VectorXd ztilde =
        (zb.array() * (1.0 - fs.eps.array()) + (1.0 - zb.array()) * fs.eps.array())
            .matrix();
    const Eigen::VectorXd xhat = decode(m, ztilde);
    out.reconstruction += reconstruction_loss(designs[s], xhat);
    out.energy_match += energy_match_loss(ctx.energy.eval(ztilde), fs.c_chi, lambda);
    out.is_penalty += is_penalty_loss(ctx.graph, ztilde);
    xhat_dist[s] = decode(m, fs.ztilde0);
  }
  out.reconstruction /= static_cast<double>(n);
  out.energy_match /= static_cast<double>(n);
  out.is_penalty /= static_cast<double>(n);
  out.distance_match = distance_match_loss(fb.d_z, xhat_dist, lambda_d);
  return out;
}

struct BatchGradients {
  LossBreakdown losses;
  std::vector<AffineLayer> encoder;
  std::vector<AffineLayer> decoder;
};

// Analytic gradient of surrogate_loss at the expansion point.
inline BatchGradients surrogate_gradients(const AutoencoderModel& m,
                                          const std::vector<Eigen::VectorXd>& designs,
                                          const TrainContext& ctx, const FrozenBatch& fb,
                                          const TrainConfig& cfg, double lambda,
                                          double lambda_d) {
  const std::size_t n = designs.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t m_pairs = n >= 2 ? n * (n - 1) / 2 : 0;
  BatchGradients bg;
  bg.encoder = detail::zeros_like(m.encoder);
  bg.decoder = detail::zeros_like(m.decoder);
  bg.losses.lambda = lambda;
  bg.losses.lambda_d = lambda_d;

  // Forward traces for every sample.
  std::vector<detail::LayerTrace> enc_traces(n), dec_traces(n), dist_traces(n);
  std::vector<Eigen::VectorXd> zeta(n), ztilde(n), xhat(n), xhat0(n);
  for (std::size_t s = 0; s < n; ++s) {
    const FrozenSample& fs = fb.samples[s];
    zeta[s] = detail::stack_forward(m.encoder, designs[s], detail::HeadKind::linear,
                                    &enc_traces[s]);
    const Eigen::VectorXd zb =
        ((zeta[s].array().tanh() + fs.noise.array() + 1.0) / 2.0).matrix();
    ztilde[s] =
        (zb.array() * (1.0 - fs.eps.array()) + (1.0 - zb.array()) * fs.eps.array())
            .matrix();
    xhat[s] = detail::stack_forward(m.decoder, ztilde[s], detail::HeadKind::sigmoid,
                                    &dec_traces[s]);
    xhat0[s] = detail::stack_forward(m.decoder, fs.ztilde0, detail::HeadKind::sigmoid,
                                     &dist_traces[s]);
  }

  // Distance term: subgradient with respect to every decoded sample.
  std::vector<Eigen::VectorXd> g_dist(n, Eigen::VectorXd::Zero(m.pixels));
  double dist_loss = 0.0;
  if (m_pairs > 0) {
    const double inv_pairs = 1.0 / static_cast<double>(m_pairs);
    const double inv_p = 1.0 / static_cast<double>(m.pixels);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const double dx = mean_abs_pixel_distance(xhat0[a], xhat0[b]);
        const double v = fb.d_z(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -
                         lambda_d * dx;
        dist_loss += std::abs(v) * inv_pairs;
        const double sv = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        for (int k = 0; k < m.pixels; ++k) {
          const double diff = xhat0[a][k] - xhat0[b][k];
          const double sd = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          const double g = -lambda_d * sv * sd * inv_p * inv_pairs;
          g_dist[a][k] += g;
          g_dist[b][k] -= g;
        }
      }
  }
  bg.losses.distance_match = dist_loss;

  for (std::size_t s = 0; s < n; ++s) {
    const FrozenSample& fs = fb.samples[s];

    // Reconstruction: gradient at the decoder head pre-activation is
    // (xhat - x) / pixels for the clamped mean BCE.
    bg.losses.reconstruction += reconstruction_loss(designs[s], xhat[s]) * inv_n;
    const Eigen::VectorXd g_head =
        cfg.w_rec * inv_n * (xhat[s] - designs[s]) / static_cast<double>(m.pixels);
    const Eigen::VectorXd g_zin =
        detail::stack_backward(m.decoder, dec_traces[s], g_head, &bg.decoder);

    // Distance: decoder weights only, head gradient through the sigmoid.
    if (m_pairs > 0 && cfg.w_dist != 0.0) {
      const Eigen::VectorXd g_head_dist =
          (cfg.w_dist * g_dist[s].array() * xhat0[s].array() *
           (1.0 - xhat0[s].array()))
              .matrix();
      detail::stack_backward(m.decoder, dist_traces[s], g_head_dist, &bg.decoder);
    }

    // Encoder-side gradient on the relaxed latent.
    const double c_z = ctx.energy.eval(ztilde[s]);
    bg.losses.energy_match += energy_match_loss(c_z, fs.c_chi, lambda) * inv_n;
    bg.losses.is_penalty += is_penalty_loss(ctx.graph, ztilde[s]) * inv_n;
    Eigen::VectorXd g_zt = g_zin;  // reconstruction path through the decoder
    g_zt += cfg.w_energy * inv_n * 2.0 * (c_z - lambda * fs.c_chi) *
            ctx.energy.grad(ztilde[s]);
    if (cfg.w_is != 0.0) {
      Eigen::VectorXd g_is = Eigen::VectorXd::Zero(m.latent_n);
      for (const auto& [i, j] : ctx.graph.edges) {
        g_is[i] += ztilde[s][j];
        g_is[j] += ztilde[s][i];
      }
      g_zt += cfg.w_is * inv_n * g_is;
    }

    // Straight-through chain: dz~/dzeta = (1 - 2 eps) sech^2(zeta) / 2.
    const Eigen::VectorXd g_zeta =
        (g_zt.array() * (1.0 - 2.0 * fs.eps.array()) *
         (1.0 - zeta[s].array().tanh().square()) / 2.0)
            .matrix();
    detail::stack_backward(m.encoder, enc_traces[s], g_zeta, &bg.encoder);
  }
  return bg;
}

// Persistent training state: frozen scale factors plus momentum buffers.
struct TrainState {
  bool scales_frozen = false;
  double lambda = 0.0;
  double lambda_d = 0.0;
  std::vector<AffineLayer> enc_vel;
  std::vector<AffineLayer> dec_vel;
};

inline TrainState init_train_state(const AutoencoderModel& m, const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.lambda = cfg.lambda;
  st.lambda_d = cfg.lambda_d;
  st.scales_frozen = cfg.lambda > 0.0 && cfg.lambda_d > 0.0;
  st.enc_vel = detail::zeros_like(m.encoder);
  st.dec_vel = detail::zeros_like(m.decoder);
  return st;
}

// One pass over the dataset with SGD + momentum.  Scale factors left at
// zero in the config are frozen from the first batch: lambda as the ratio
// of mean |C_z| to mean |C_chi|, lambda_d as mean d_Z over mean d_X.
inline LossBreakdown train_epoch(AutoencoderModel& m,
                                 const std::vector<Eigen::VectorXd>& designs,
                                 const TrainContext& ctx, const TrainConfig& cfg,
                                 TrainState& st, CounterRng& rng) {
  cfg.validate();
  if (designs.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  for (const auto& d : designs)
    if (d.size() != m.pixels)
      throw std::invalid_argument("train_epoch: design pixel count mismatch");
  const std::size_t total = designs.size();
  const std::size_t bs = cfg.batch_size == 0
                             ? total
                             : std::min<std::size_t>(total, static_cast<std::size_t>(cfg.batch_size));
  LossBreakdown epoch_losses;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < total; start += bs) {
    const std::size_t stop = std::min(total, start + bs);
    const std::vector<Eigen::VectorXd> batch(designs.begin() + static_cast<std::ptrdiff_t>(start),
                                             designs.begin() + static_cast<std::ptrdiff_t>(stop));
    BatchGradients acc;
    for (int draw = 0; draw < cfg.noise_draws; ++draw) {
      const FrozenBatch fb = freeze_batch(m, batch, ctx, rng);
      if (!st.scales_frozen) {
        if (cfg.lambda <= 0.0)
          st.lambda = fb.mean_abs_cchi > 0.0 ? fb.mean_abs_cz / fb.mean_abs_cchi : 1.0;
        if (cfg.lambda_d <= 0.0)
          st.lambda_d = fb.mean_dx > 0.0 ? fb.mean_dz / fb.mean_dx : 1.0;
        st.scales_frozen = true;
      }
      BatchGradients bg =
          surrogate_gradients(m, batch, ctx, fb, cfg, st.lambda, st.lambda_d);
      if (draw == 0) {
        acc = std::move(bg);
      } else {
        for (std::size_t l = 0; l < acc.encoder.size(); ++l) {
          acc.encoder[l].w += bg.encoder[l].w;
          acc.encoder[l].b += bg.encoder[l].b;
        }
        for (std::size_t l = 0; l < acc.decoder.size(); ++l) {
          acc.decoder[l].w += bg.decoder[l].w;
          acc.decoder[l].b += bg.decoder[l].b;
        }
        acc.losses.reconstruction += bg.losses.reconstruction;
        acc.losses.energy_match += bg.losses.energy_match;
        acc.losses.is_penalty += bg.losses.is_penalty;
        acc.losses.distance_match += bg.losses.distance_match;
      }
    }
    const double inv_draws = 1.0 / cfg.noise_draws;
    auto update = [&](std::vector<AffineLayer>& weights, std::vector<AffineLayer>& vel,
                      const std::vector<AffineLayer>& grad) {
      for (std::size_t l = 0; l < weights.size(); ++l) {
        if (!grad[l].w.allFinite() || !grad[l].b.allFinite())
          throw TrainingError("train_epoch: non-finite gradient");
        vel[l].w = cfg.momentum * vel[l].w - cfg.lr * inv_draws * grad[l].w;
        vel[l].b = cfg.momentum * vel[l].b - cfg.lr * inv_draws * grad[l].b;
        weights[l].w += vel[l].w;
        weights[l].b += vel[l].b;
      }
    };
    update(m.encoder, st.enc_vel, acc.encoder);
    update(m.decoder, st.dec_vel, acc.decoder);

    const double wgt = static_cast<double>(stop - start);
    epoch_losses.reconstruction += acc.losses.reconstruction * inv_draws * wgt;
    epoch_losses.energy_match += acc.losses.energy_match * inv_draws * wgt;
    epoch_losses.is_penalty += acc.losses.is_penalty * inv_draws * wgt;
    epoch_losses.distance_match += acc.losses.distance_match * inv_draws * wgt;
    seen += stop - start;
  }
  epoch_losses.reconstruction /= static_cast<double>(seen);
  epoch_losses.energy_match /= static_cast<double>(seen);
  epoch_losses.is_penalty /= static_cast<double>(seen);
  epoch_losses.distance_match /= static_cast<double>(seen);
  epoch_losses.lambda = st.lambda;
  epoch_losses.lambda_d = st.lambda_d;
  if (!std::isfinite(epoch_losses.total(cfg)))
    throw TrainingError("train_epoch: non-finite loss");
  return epoch_losses;
}

// JSON persistence.  The format tag names the quantizer convention the
// weights were trained under; mismatches are rejected on load.
inline constexpr const char* kModelFormat = "tanh-sign-st";

inline nlohmann::json layers_to_json(const std::vector<AffineLayer>& layers) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers) {
    nlohmann::json jl;
    jl["rows"] = l.w.rows();
    jl["cols"] = l.w.cols();
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) w.push_back(l.w(r, c));
    jl["w"] = std::move(w);
    nlohmann::json b = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.b.size(); ++r) b.push_back(l.b[r]);
    jl["b"] = std::move(b);
    arr.push_back(std::move(jl));
  }
  return arr;
}

inline std::vector<AffineLayer> layers_from_json(const nlohmann::json& arr) {
  std::vector<AffineLayer> layers;
  for (const auto& jl : arr) {
    AffineLayer l;
    const Eigen::Index rows = jl.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = jl.at("cols").get<Eigen::Index>();
    const auto& w = jl.at("w");
    const auto& b = jl.at("b");
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows)
      throw IoError("model: layer shape mismatch");
    l.w.resize(rows, cols);
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) l.w(r, c) = w[static_cast<std::size_t>(k++)].get<double>();
    l.b.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) l.b[r] = b[static_cast<std::size_t>(r)].get<double>();
    layers.push_back(std::move(l));
  }
  return layers;
}

inline void save_model(const AutoencoderModel& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["pixels"] = m.pixels;
  j["latent"] = m.latent_n;
  j["hidden"] = m.hidden;
  j["encoder"] = layers_to_json(m.encoder);
  j["decoder"] = layers_to_json(m.decoder);
  std::ofstream out(path);
  if (!out) throw IoError("save_model: cannot open " + path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("save_model: write failed for " + path);
}

inline AutoencoderModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("load_model: bad JSON: ") + e.what());
  }
  if (!j.contains("format") || j["format"] != kModelFormat)
    throw IoError("load_model: unsupported model format");
  AutoencoderModel m;
  m.pixels = j.at("pixels").get<int>();
  m.latent_n = j.at("latent").get<int>();
  m.hidden = j.at("hidden").get<std::vector<int>>();
  m.encoder = layers_from_json(j.at("encoder"));
  m.decoder = layers_from_json(j.at("decoder"));
  if (m.encoder.empty() || m.decoder.empty() ||
      m.encoder.back().w.rows() != m.latent_n ||
      m.decoder.back().w.rows() != m.pixels)
    throw IoError("load_model: inconsistent layer shapes");
  return m;
}

}  // namespace quenchmc
