#pragma once

#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quenchmc/autoenc.hpp"
#include "quenchmc/designspace.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/lattice.hpp"
#include "quenchmc/mcmc.hpp"
#include "quenchmc/quench.hpp"
#include "quenchmc/rydberg.hpp"

namespace quenchmc {

struct LatticeConfig {
  int rows = 4;
  int cols = 4;
  double spacing = 5.4;
  std::string defect_mask;       // '0'/'1' per site, row-major; empty = none
  double defect_density = 0.0;   // used when the mask string is empty
  std::uint64_t defect_seed = 0;
};

struct ParamsConfig {
  double omega = 15.8;
  double delta = 6.66;
  double c6 = 0.0;  // required: there is no physically neutral default
  std::vector<double> delta_local;
};

struct QuenchConfig {
  double t = 1.29;
  double phase = 0.0;
  std::vector<double> mask;
  double tol = 1e-10;
};

struct ChannelConfig {
  std::string sampler = "quantum";
  double tau = 1.0;
  int depth = 3;
};

struct TrainSection {
  std::string data;
  std::vector<int> hidden = {64};
  int epochs = 100;
  double lr = 1e-3;
  double momentum = 0.9;
  int batch_size = 0;
  double w_rec = 1.0;
  double w_energy = 1.0;
  double w_is = 1.0;
  double w_dist = 1.0;
  double lambda = 0.0;
  double lambda_d = 0.0;
  int noise_draws = 1;
  double energy_sign = 1.0;
};

struct ObjectiveConfig {
  std::string kind = "synthetic_filter";
  int k_angles = 16;
  double theta_star_frac = 0.14;  // threshold angle as a fraction of pi
  std::uint64_t seed = 0;
  std::string table;  // external_table CSV path
};

struct BenchmarkSection {
  double alpha = 0.999;
  int n_samples = 5000;
  int bins = 20;
  std::vector<double> tau_list = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  int starts_limit = 0;  // 0 = use every dataset design as a chain start
  bool selftest = false;
};

struct SweepSection {
  std::vector<double> delta_list;
  std::vector<double> t_list;
  double tau = 0.1;
};

struct SampleSection {
  int steps = 3;
  std::string start = "encode";  // encode | zeros
};

struct DiffuseSection {
  std::string target;
  double delta_mask_over_omega = 100.0;
  int shots = 10000;
  bool diffusion_step = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  LatticeConfig lattice;
  ParamsConfig params;
  QuenchConfig quench;
  ChannelConfig channel;
  TrainSection train;
  ObjectiveConfig objective;
  BenchmarkSection benchmark;
  SweepSection sweep;
  SampleSection sample;
  DiffuseSection diffuse;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& ctx,
                                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: " + ctx + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key \"" + key + "\" in " + ctx);
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::read_field;
  using detail::reject_unknown_keys;
  RunConfig c;
  reject_unknown_keys(j, "top level",
                      {"seed", "lattice", "params", "quench", "channel", "train",
                       "objective", "benchmark", "sweep", "sample", "diffuse"});
  read_field(j, "seed", c.seed);
  if (j.contains("lattice")) {
    const auto& s = j.at("lattice");
    reject_unknown_keys(s, "lattice",
                        {"rows", "cols", "spacing", "defect_mask", "defect_density",
                         "defect_seed"});
    read_field(s, "rows", c.lattice.rows);
    read_field(s, "cols", c.lattice.cols);
    read_field(s, "spacing", c.lattice.spacing);
    read_field(s, "defect_mask", c.lattice.defect_mask);
    read_field(s, "defect_density", c.lattice.defect_density);
    read_field(s, "defect_seed", c.lattice.defect_seed);
  }
  if (!j.contains("params") || !j.at("params").contains("c6"))
    throw std::invalid_argument("config: params.c6 is required");
  {
    const auto& s = j.at("params");
    reject_unknown_keys(s, "params", {"omega", "delta", "c6", "delta_local"});
    read_field(s, "omega", c.params.omega);
    read_field(s, "delta", c.params.delta);
    read_field(s, "c6", c.params.c6);
    read_field(s, "delta_local", c.params.delta_local);
  }
  if (j.contains("quench")) {
    const auto& s = j.at("quench");
    reject_unknown_keys(s, "quench", {"t", "phase", "mask", "tol"});
    read_field(s, "t", c.quench.t);
    read_field(s, "phase", c.quench.phase);
    read_field(s, "mask", c.quench.mask);
    read_field(s, "tol", c.quench.tol);
  }
  if (j.contains("channel")) {
    const auto& s = j.at("channel");
    reject_unknown_keys(s, "channel", {"sampler", "tau", "depth"});
    read_field(s, "sampler", c.channel.sampler);
    read_field(s, "tau", c.channel.tau);
    read_field(s, "depth", c.channel.depth);
  }
  if (j.contains("train")) {
    const auto& s = j.at("train");
    reject_unknown_keys(s, "train",
                        {"data", "hidden", "epochs", "lr", "momentum", "batch_size",
                         "w_rec", "w_energy", "w_is", "w_dist", "lambda", "lambda_d",
                         "noise_draws", "energy_sign"});
    read_field(s, "data", c.train.data);
    read_field(s, "hidden", c.train.hidden);
    read_field(s, "epochs", c.train.epochs);
    read_field(s, "lr", c.train.lr);
    read_field(s, "momentum", c.train.momentum);
    read_field(s, "batch_size", c.train.batch_size);
    read_field(s, "w_rec", c.train.w_rec);
    read_field(s, "w_energy", c.train.w_energy);
    read_field(s, "w_is", c.train.w_is);
    read_field(s, "w_dist", c.train.w_dist);
    read_field(s, "lambda", c.train.lambda);
    read_field(s, "lambda_d", c.train.lambda_d);
    read_field(s, "noise_draws", c.train.noise_draws);
    read_field(s, "energy_sign", c.train.energy_sign);
  }
  if (j.contains("objective")) {
    const auto& s = j.at("objective");
    reject_unknown_keys(s, "objective",
                        {"kind", "k_angles", "theta_star_frac", "seed", "table"});
    read_field(s, "kind", c.objective.kind);
    read_field(s, "k_angles", c.objective.k_angles);
    read_field(s, "theta_star_frac", c.objective.theta_star_frac);
    read_field(s, "seed", c.objective.seed);
    read_field(s, "table", c.objective.table);
  }
  if (j.contains("benchmark")) {
    const auto& s = j.at("benchmark");
    reject_unknown_keys(s, "benchmark",
                        {"alpha", "n_samples", "bins", "tau_list", "starts_limit",
                         "selftest"});
    read_field(s, "alpha", c.benchmark.alpha);
    read_field(s, "n_samples", c.benchmark.n_samples);
    read_field(s, "bins", c.benchmark.bins);
    read_field(s, "tau_list", c.benchmark.tau_list);
    read_field(s, "starts_limit", c.benchmark.starts_limit);
    read_field(s, "selftest", c.benchmark.selftest);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown_keys(s, "sweep", {"delta_list", "t_list", "tau"});
    read_field(s, "delta_list", c.sweep.delta_list);
    read_field(s, "t_list", c.sweep.t_list);
    read_field(s, "tau", c.sweep.tau);
  }
  if (j.contains("sample")) {
    const auto& s = j.at("sample");
    reject_unknown_keys(s, "sample", {"steps", "start"});
    read_field(s, "steps", c.sample.steps);
    read_field(s, "start", c.sample.start);
  }
  if (j.contains("diffuse")) {
    const auto& s = j.at("diffuse");
    reject_unknown_keys(s, "diffuse",
                        {"target", "delta_mask_over_omega", "shots", "diffusion_step"});
    read_field(s, "target", c.diffuse.target);
    read_field(s, "delta_mask_over_omega", c.diffuse.delta_mask_over_omega);
    read_field(s, "shots", c.diffuse.shots);
    read_field(s, "diffusion_step", c.diffuse.diffusion_step);
  }

  if (c.params.c6 <= 0.0) throw std::invalid_argument("config: params.c6 must be positive");
  if (c.channel.sampler != "quantum" && c.channel.sampler != "bitflip" &&
      c.channel.sampler != "uniform")
    throw std::invalid_argument("config: unknown channel.sampler " + c.channel.sampler);
  if (c.objective.kind != "synthetic_filter" && c.objective.kind != "external_table")
    throw std::invalid_argument("config: unknown objective.kind " + c.objective.kind);
  if (c.sample.start != "encode" && c.sample.start != "zeros")
    throw std::invalid_argument("config: sample.start must be encode or zeros");
  for (char ch : c.lattice.defect_mask)
    if (ch != '0' && ch != '1')
      throw std::invalid_argument("config: lattice.defect_mask must be 0/1 characters");
  if (c.benchmark.tau_list.empty())
    throw std::invalid_argument("config: benchmark.tau_list must not be empty");
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["lattice"] = {{"rows", c.lattice.rows},
                  {"cols", c.lattice.cols},
                  {"spacing", c.lattice.spacing},
                  {"defect_mask", c.lattice.defect_mask},
                  {"defect_density", c.lattice.defect_density},
                  {"defect_seed", c.lattice.defect_seed}};
  j["params"] = {{"omega", c.params.omega},
                 {"delta", c.params.delta},
                 {"c6", c.params.c6},
                 {"delta_local", c.params.delta_local}};
  j["quench"] = {{"t", c.quench.t},
                 {"phase", c.quench.phase},
                 {"mask", c.quench.mask},
                 {"tol", c.quench.tol}};
  j["channel"] = {{"sampler", c.channel.sampler},
                  {"tau", c.channel.tau},
                  {"depth", c.channel.depth}};
  j["train"] = {{"data", c.train.data},
                {"hidden", c.train.hidden},
                {"epochs", c.train.epochs},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"batch_size", c.train.batch_size},
                {"w_rec", c.train.w_rec},
                {"w_energy", c.train.w_energy},
                {"w_is", c.train.w_is},
                {"w_dist", c.train.w_dist},
                {"lambda", c.train.lambda},
                {"lambda_d", c.train.lambda_d},
                {"noise_draws", c.train.noise_draws},
                {"energy_sign", c.train.energy_sign}};
  j["objective"] = {{"kind", c.objective.kind},
                    {"k_angles", c.objective.k_angles},
                    {"theta_star_frac", c.objective.theta_star_frac},
                    {"seed", c.objective.seed},
                    {"table", c.objective.table}};
  j["benchmark"] = {{"alpha", c.benchmark.alpha},
                    {"n_samples", c.benchmark.n_samples},
                    {"bins", c.benchmark.bins},
                    {"tau_list", c.benchmark.tau_list},
                    {"starts_limit", c.benchmark.starts_limit},
                    {"selftest", c.benchmark.selftest}};
  j["sweep"] = {{"delta_list", c.sweep.delta_list},
                {"t_list", c.sweep.t_list},
                {"tau", c.sweep.tau}};
  j["sample"] = {{"steps", c.sample.steps}, {"start", c.sample.start}};
  j["diffuse"] = {{"target", c.diffuse.target},
                  {"delta_mask_over_omega", c.diffuse.delta_mask_over_omega},
                  {"shots", c.diffuse.shots},
                  {"diffusion_step", c.diffuse.diffusion_step}};
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("load_config: bad JSON: ") + e.what());
  }
  return parse_config(j);
}

inline void save_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_config: cannot open " + path);
  out << config_to_json(c).dump(1) << '\n';
  if (!out) throw IoError("save_config: write failed for " + path);
}

// Builders shared by the command-line driver and the tests.

inline AtomArray lattice_from_config(const LatticeConfig& lc) {
  if (!lc.defect_mask.empty()) {
    std::vector<std::uint8_t> mask(lc.defect_mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = lc.defect_mask[i] == '1';
    return build_king_subgraph(lc.rows, lc.cols, lc.spacing, mask);
  }
  if (lc.defect_density > 0.0)
    return build_king_subgraph(lc.rows, lc.cols, lc.spacing, lc.defect_density,
                               lc.defect_seed);
  return build_king_subgraph(lc.rows, lc.cols, lc.spacing);
}

inline RydbergParams params_from_config(const RunConfig& c) {
  RydbergParams p;
  p.atoms = lattice_from_config(c.lattice);
  p.omega = c.params.omega;
  p.delta = c.params.delta;
  p.delta_local = c.params.delta_local;
  p.c6 = c.params.c6;
  p.validate();
  return p;
}

inline QuenchSpec quench_from_config(const RunConfig& c) {
  QuenchSpec s;
  s.params = params_from_config(c);
  s.t = c.quench.t;
  s.phase = c.quench.phase;
  s.mask = c.quench.mask;
  s.tol = c.quench.tol;
  return s;
}

inline Channel channel_from_config(const RunConfig& c,
                                   std::function<double(const BitString&)> energy) {
  const auto kind = parse_sampler(c.channel.sampler);
  const auto params = params_from_config(c);
  if (kind == SamplerKind::quantum)
    return make_channel(kind, params.n(), c.channel.tau, c.channel.depth,
                        std::move(energy), quench_from_config(c));
  return make_channel(kind, params.n(), c.channel.tau, c.channel.depth, std::move(energy));
}

inline Objective objective_from_config(const ObjectiveConfig& oc, int pixel_count) {
  if (oc.kind == "external_table") {
    if (oc.table.empty())
      throw std::invalid_argument("config: objective.table path required for external_table");
    return load_external_table(oc.table, pixel_count);
  }
  return make_synthetic_objective(pixel_count, oc.k_angles,
                                  oc.theta_star_frac * std::numbers::pi, oc.seed);
}

inline TrainConfig train_config_from_section(const TrainSection& t, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = t.epochs;
  cfg.lr = t.lr;
  cfg.momentum = t.momentum;
  cfg.batch_size = t.batch_size;
  cfg.w_rec = t.w_rec;
  cfg.w_energy = t.w_energy;
  cfg.w_is = t.w_is;
  cfg.w_dist = t.w_dist;
  cfg.lambda = t.lambda;
  cfg.lambda_d = t.lambda_d;
  cfg.noise_draws = t.noise_draws;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

}  // namespace quenchmc
