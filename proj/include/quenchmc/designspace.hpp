#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "quenchmc/autoenc.hpp"
#include "quenchmc/bitstring.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/mcmc.hpp"
#include "quenchmc/metrics.hpp"
#include "quenchmc/parallel.hpp"
#include "quenchmc/rng.hpp"

namespace quenchmc {

// Binary pixel grid, row-major.
struct Design {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> pixels;

  int pixel_count() const { return h * w; }
};

inline Eigen::VectorXd design_to_vector(const Design& d) {
  Eigen::VectorXd x(d.pixels.size());
  for (std::size_t i = 0; i < d.pixels.size(); ++i)
    x[static_cast<Eigen::Index>(i)] = d.pixels[i];
  return x;
}

inline Design vector_to_design(const Eigen::VectorXd& x, int h, int w) {
  if (x.size() != static_cast<Eigen::Index>(h) * w)
    throw std::invalid_argument("vector_to_design: size mismatch");
  Design d;
  d.h = h;
  d.w = w;
  d.pixels.resize(static_cast<std::size_t>(h) * w);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    d.pixels[static_cast<std::size_t>(i)] = x[i] >= 0.5 ? 1 : 0;
  return d;
}

// FNV-1a over the row-major pixel bytes.
inline std::uint64_t design_hash(const Design& d) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : d.pixels) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

// Cost function over designs.  The synthetic kind scores a design by the
// mismatch between an ideal low-pass angular response and a logistic
// surrogate response built from seeded random pixel weights; the external
// kind looks costs up in a hash-keyed table.
struct Objective {
  enum class Kind { synthetic_filter, external_table };

  Kind kind = Kind::synthetic_filter;
  int pixel_count = 0;

  // synthetic_filter
  int k_angles = 16;
  double theta_star = 0.14 * std::numbers::pi;
  std::uint64_t seed = 0;
  std::vector<double> thetas;
  std::vector<double> t_ideal;
  Eigen::MatrixXd filter_w;  // k_angles x pixel_count, iid uniform [-1, 1]

  // external_table
  std::unordered_map<std::uint64_t, double> table;
};

inline Objective make_synthetic_objective(int pixel_count, int k_angles = 16,
                                          double theta_star = 0.14 * std::numbers::pi,
                                          std::uint64_t seed = 0) {
  if (pixel_count < 1) throw std::invalid_argument("objective: pixel_count must be >= 1");
  if (k_angles < 1) throw std::invalid_argument("objective: k_angles must be >= 1");
  if (theta_star <= 0.0 || theta_star >= std::numbers::pi / 2.0)
    throw std::invalid_argument("objective: theta_star must lie in (0, pi/2)");
  Objective o;
  o.kind = Objective::Kind::synthetic_filter;
  o.pixel_count = pixel_count;
  o.k_angles = k_angles;
  o.theta_star = theta_star;
  o.seed = seed;
  CounterRng rng(seed);
  o.thetas.resize(static_cast<std::size_t>(k_angles));
  o.t_ideal.resize(static_cast<std::size_t>(k_angles));
  o.filter_w.resize(k_angles, pixel_count);
  for (int k = 0; k < k_angles; ++k) {
    o.thetas[static_cast<std::size_t>(k)] =
        (k + 0.5) / k_angles * (std::numbers::pi / 2.0);
    o.t_ideal[static_cast<std::size_t>(k)] =
        o.thetas[static_cast<std::size_t>(k)] < theta_star ? 1.0 : 0.0;
    for (int p = 0; p < pixel_count; ++p)
      o.filter_w(k, p) = 2.0 * rng.next_double() - 1.0;
  }
  return o;
}

// Cost of a binary pixel vector under the objective, in [0, 2] for the
// synthetic kind.
inline double evaluate(const Objective& o, const Eigen::VectorXd& x) {
  if (x.size() != o.pixel_count)
    throw std::invalid_argument("evaluate: pixel count mismatch");
  if (o.kind == Objective::Kind::synthetic_filter) {
    const double dtheta = 1.0 / o.k_angles;
    double acc = 0.0;
    for (int k = 0; k < o.k_angles; ++k) {
      const double t_u = detail::sigmoid(o.filter_w.row(k).dot(x) / o.pixel_count);
      acc += (o.t_ideal[static_cast<std::size_t>(k)] - t_u) * dtheta;
    }
    return 1.0 - acc;
  }
  Design d;
  d.h = 1;
  d.w = o.pixel_count;
  d.pixels.resize(static_cast<std::size_t>(o.pixel_count));
  for (Eigen::Index i = 0; i < x.size(); ++i)
    d.pixels[static_cast<std::size_t>(i)] = x[i] >= 0.5 ? 1 : 0;
  const std::uint64_t h = design_hash(d);
  const auto it = o.table.find(h);
  if (it == o.table.end()) {
    std::ostringstream msg;
    msg << "evaluate: design hash " << std::hex << h << " not in cost table";
    throw std::invalid_argument(msg.str());
  }
  return it->second;
}

inline double evaluate(const Objective& o, const Design& d) {
  if (d.pixel_count() != o.pixel_count)
    throw std::invalid_argument("evaluate: pixel count mismatch");
  if (o.kind == Objective::Kind::external_table) {
    const std::uint64_t h = design_hash(d);
    const auto it = o.table.find(h);
    if (it == o.table.end()) {
      std::ostringstream msg;
      msg << "evaluate: design hash " << std::hex << h << " not in cost table";
      throw std::invalid_argument(msg.str());
    }
    return it->second;
  }
  return evaluate(o, design_to_vector(d));
}

// Cost table rows are "hex-hash,cost" keyed by design_hash.
inline Objective load_external_table(const std::string& path, int pixel_count) {
  std::ifstream in(path);
  if (!in) throw IoError("load_external_table: cannot open " + path);
  Objective o;
  o.kind = Objective::Kind::external_table;
  o.pixel_count = pixel_count;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("load_external_table: missing comma at line " + std::to_string(lineno));
    try {
      const std::uint64_t h = std::stoull(line.substr(0, comma), nullptr, 16);
      o.table[h] = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw IoError("load_external_table: bad row at line " + std::to_string(lineno));
    }
  }
  if (o.table.empty()) throw IoError("load_external_table: empty table in " + path);
  return o;
}

// PGM (P2/P5) readers and writer; pixels binarize at half of maxval.
inline Design read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw IoError("read_pgm: unsupported magic in " + path);
  const auto next_int = [&in, &path]() {
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string comment;
        std::getline(in, comment);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw IoError("read_pgm: bad header in " + path);
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw IoError("read_pgm: unsupported geometry in " + path);
  Design d;
  d.h = static_cast<int>(h);
  d.w = static_cast<int>(w);
  d.pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(d.pixels.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("read_pgm: truncated data in " + path);
    for (std::size_t i = 0; i < raw.size(); ++i)
      d.pixels[i] = 2 * static_cast<long>(raw[i]) >= maxval ? 1 : 0;
  } else {
    for (auto& px : d.pixels) {
      long v = -1;
      in >> v;
      if (!in || v < 0 || v > maxval) throw IoError("read_pgm: bad pixel in " + path);
      px = 2 * v >= maxval ? 1 : 0;
    }
  }
  return d;
}

inline void write_pgm(const Design& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << d.w << " " << d.h << "\n255\n";
  for (std::uint8_t px : d.pixels) out.put(px ? static_cast<char>(255) : static_cast<char>(0));
  if (!out) throw IoError("write_pgm: write failed for " + path);
}

// Load a directory of .pgm designs (sorted by filename) or one .pgm file.
// All designs must share one geometry.
inline std::vector<Design> load_dataset(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".pgm")
        files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw IoError("load_dataset: no such file or directory: " + path);
  }
  if (files.empty()) throw IoError("load_dataset: no .pgm designs under " + path);
  std::vector<Design> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    out.push_back(read_pgm(f));
    if (out.back().h != out.front().h || out.back().w != out.front().w)
      throw IoError("load_dataset: mixed design geometries under " + path);
  }
  return out;
}

// Exact cost distribution of the decoder: enumerate every latent state,
// decode, binarize, score, and weight by exp(-cost/tau).
struct DecoderTarget {
  BinnedDistribution binned;   // cost histogram of the Boltzmann ensemble
  std::vector<double> costs;   // cost per latent index
  DiscreteDistribution boltz;  // Boltzmann weights over latent indices
};

inline DecoderTarget decoder_boltzmann_target(const AutoencoderModel& model,
                                              const Objective& objective, double tau,
                                              int bins) {
  if (model.latent_n > 16)
    throw CapacityError("decoder_boltzmann_target: enumeration capped at 16 latent bits");
  if (tau <= 0.0) throw std::invalid_argument("decoder_boltzmann_target: tau must be positive");
  if (bins < 1) throw std::invalid_argument("decoder_boltzmann_target: bins must be >= 1");
  const std::uint64_t dim = 1ull << model.latent_n;
  DecoderTarget t;
  t.costs.resize(dim);
  for (std::uint64_t k = 0; k < dim; ++k) {
    const auto z = BitString::from_index(model.latent_n, k);
    const Eigen::VectorXd xhat = decode(model, binary_to_real(z));
    t.costs[k] = evaluate(objective, binary_to_real(binarize_design(xhat)));
  }
  t.boltz = boltzmann(
      [&t](const BitString& z) { return t.costs[z.index()]; }, model.latent_n, tau);
  std::vector<double> weights(t.boltz.probs.data(), t.boltz.probs.data() + t.boltz.probs.size());
  t.binned = bin_costs(t.costs, weights, bins);
  return t;
}

// Design-space Metropolis acceptance on objective values.
inline bool validation_accept(double c_cur, double c_prop, double tau, CounterRng& rng) {
  return mh_accept(c_prop - c_cur, tau, rng);
}

struct BenchmarkConfig {
  double tau = 0.1;
  double alpha = 0.999;
  int n_samples = 5000;
  int bins = 20;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RenyiReport {
  double renyi = 0.0;
  double kl = 0.0;
  double tv = 0.0;
  double mean_cost = 0.0;
  double accept_rate = 0.0;
  BinnedDistribution empirical;
  BinnedDistribution target;
};

// Divergence between the chain-sampled cost distribution and the decoder
// Boltzmann target.  Each sample starts from one training design (round
// robin), encodes it, then runs the channel's depth proposal rounds with
// the Metropolis rule applied to decoded objective values.  Sample s uses
// the stream seed ^ s, so results do not depend on evaluation order.
inline RenyiReport renyi_benchmark(const AutoencoderModel& model, const Channel& channel,
                                   const Objective& objective,
                                   const std::vector<Design>& starts,
                                   const BenchmarkConfig& cfg) {
  if (starts.empty()) throw std::invalid_argument("renyi_benchmark: no start designs");
  if (channel.n != model.latent_n)
    throw std::invalid_argument("renyi_benchmark: channel register size mismatch");
  if (cfg.n_samples < 1) throw std::invalid_argument("renyi_benchmark: n_samples must be >= 1");
  const DecoderTarget target = decoder_boltzmann_target(model, objective, cfg.tau, cfg.bins);

  // Encoded starting latents and their costs are reused across samples.
  std::vector<BitString> start_z;
  std::vector<double> start_c;
  start_z.reserve(starts.size());
  for (const auto& d : starts) {
    const auto zeta = encode(model, design_to_vector(d));
    const auto z = spin_to_binary(quantize(zeta).spin);
    start_z.push_back(z);
    start_c.push_back(target.costs[z.index()]);
  }

  std::vector<double> sampled(static_cast<std::size_t>(cfg.n_samples));
  std::vector<std::int32_t> acc_count(static_cast<std::size_t>(cfg.n_samples));
  parallel_for(static_cast<std::size_t>(cfg.n_samples), cfg.threads, [&](std::size_t s) {
    CounterRng rng = CounterRng::stream(cfg.seed, static_cast<std::uint64_t>(s));
    BitString z = start_z[s % start_z.size()];
    double c_cur = start_c[s % start_c.size()];
    std::int32_t acc = 0;
    for (int d = 0; d < channel.depth; ++d) {
      const BitString z_prop = propose(channel, z, rng);
      const double c_prop = target.costs[z_prop.index()];
      if (validation_accept(c_cur, c_prop, cfg.tau, rng)) {
        z = z_prop;
        c_cur = c_prop;
        ++acc;
      }
    }
    sampled[s] = c_cur;
    acc_count[s] = acc;
  });
  std::int64_t accepted = 0;
  for (std::int32_t a : acc_count) accepted += a;
  const std::int64_t proposals =
      static_cast<std::int64_t>(cfg.n_samples) * std::max(channel.depth, 0);

  RenyiReport rep;
  rep.target = target.binned;
  rep.empirical = bin_costs(sampled, std::vector<double>(sampled.size(), 1.0),
                            target.binned.edges);
  rep.renyi = renyi_divergence(rep.empirical.probs, rep.target.probs, cfg.alpha);
  rep.kl = kl_divergence(rep.empirical.probs, rep.target.probs);
  rep.tv = total_variation(rep.empirical.probs, rep.target.probs);
  rep.mean_cost = 0.0;
  for (double c : sampled) rep.mean_cost += c;
  rep.mean_cost /= static_cast<double>(sampled.size());
  rep.accept_rate = proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0;
  return rep;
}

// Control experiment: draw the samples exactly from the Boltzmann target,
// so any residual divergence is binning plus sampling noise.
inline RenyiReport renyi_selftest(const AutoencoderModel& model, const Objective& objective,
                                  const BenchmarkConfig& cfg) {
  const DecoderTarget target = decoder_boltzmann_target(model, objective, cfg.tau, cfg.bins);
  Eigen::VectorXd cdf(target.boltz.probs.size());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < cdf.size(); ++k) {
    acc += target.boltz.probs[k];
    cdf[k] = acc;
  }
  std::vector<double> sampled(static_cast<std::size_t>(cfg.n_samples));
  for (int s = 0; s < cfg.n_samples; ++s) {
    CounterRng rng = CounterRng::stream(cfg.seed, static_cast<std::uint64_t>(s));
    const double u = rng.next_double();
    const Eigen::Index k =
        std::lower_bound(cdf.data(), cdf.data() + cdf.size(), u) - cdf.data();
    sampled[static_cast<std::size_t>(s)] =
        target.costs[static_cast<std::size_t>(std::min<Eigen::Index>(k, cdf.size() - 1))];
  }
  RenyiReport rep;
  rep.target = target.binned;
  rep.empirical = bin_costs(sampled, std::vector<double>(sampled.size(), 1.0),
                            target.binned.edges);
  rep.renyi = renyi_divergence(rep.empirical.probs, rep.target.probs, cfg.alpha);
  rep.kl = kl_divergence(rep.empirical.probs, rep.target.probs);
  rep.tv = total_variation(rep.empirical.probs, rep.target.probs);
  rep.mean_cost = 0.0;
  for (double c : sampled) rep.mean_cost += c;
  rep.mean_cost /= static_cast<double>(sampled.size());
  rep.accept_rate = 1.0;
  return rep;
}

}  // namespace quenchmc
