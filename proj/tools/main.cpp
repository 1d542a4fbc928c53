// Command-line driver: experiment runners plus property-check suites.
// Exit codes: 0 success, 1 usage, 2 runtime failure, 3 check failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quenchmc/autoenc.hpp"
#include "quenchmc/bitstring.hpp"
#include "quenchmc/config.hpp"
#include "quenchmc/csv.hpp"
#include "quenchmc/designspace.hpp"
#include "quenchmc/errors.hpp"
#include "quenchmc/lattice.hpp"
#include "quenchmc/mcmc.hpp"
#include "quenchmc/metrics.hpp"
#include "quenchmc/parallel.hpp"
#include "quenchmc/quench.hpp"
#include "quenchmc/rng.hpp"
#include "quenchmc/rydberg.hpp"

namespace fs = std::filesystem;
using namespace quenchmc;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out = ".";
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
};

void add_common(CLI::App* sub, CommonOpts& o, bool config_required) {
  auto* cfg = sub->add_option("--config", o.config_path,
                              "JSON run configuration (rad/us, us, um units)");
  cfg->check(CLI::ExistingFile);
  if (config_required) cfg->required();
  sub->add_option("--seed", o.seed, "random seed override (config seed otherwise)")
      ->each([&o](const std::string&) { o.seed_given = true; });
  sub->add_option("--out", o.out, "output directory (created if missing)");
  sub->add_option("--threads", o.threads, "worker thread count")
      ->check(CLI::PositiveNumber);
}

std::uint64_t resolve_seed(const CommonOpts& o, const RunConfig& cfg) {
  return o.seed_given ? o.seed : cfg.seed;
}

fs::path ensure_outdir(const std::string& out) {
  fs::path dir(out);
  if (!dir.empty()) fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

// "lo:hi:count" -> count points lo + k (hi - lo) / count, endpoint excluded.
std::vector<double> parse_range(const std::string& text) {
  double lo = 0.0, hi = 0.0;
  long count = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  in >> lo >> c1 >> hi >> c2 >> count;
  if (!in || c1 != ':' || c2 != ':' || count < 1 || hi < lo)
    throw std::invalid_argument("bad range \"" + text + "\" (want lo:hi:count)");
  std::vector<double> pts(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k)
    pts[static_cast<std::size_t>(k)] = lo + (hi - lo) * static_cast<double>(k) /
                                                static_cast<double>(count);
  return pts;
}

// --- phase-sweep ------------------------------------------------------

int cmd_phase_sweep(const RunConfig& cfg, const CommonOpts& opts,
                    const std::vector<double>& delta_override,
                    const std::vector<double>& t_override) {
  std::vector<double> deltas = delta_override.empty() ? cfg.sweep.delta_list : delta_override;
  std::vector<double> times = t_override.empty() ? cfg.sweep.t_list : t_override;
  if (deltas.empty() || times.empty())
    throw std::invalid_argument(
        "phase-sweep: needs sweep.delta_list/t_list or --delta-range/--t-range");
  std::sort(deltas.begin(), deltas.end());
  std::sort(times.begin(), times.end());

  const std::size_t grid = deltas.size() * times.size();
  std::vector<double> gaps(grid, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> warnings(grid);
  parallel_for(grid, opts.threads, [&](std::size_t idx) {
    const double delta = deltas[idx / times.size()];
    const double t = times[idx % times.size()];
    RunConfig point = cfg;
    point.params.delta = delta;
    point.quench.t = t;
    point.channel.sampler = "quantum";
    point.channel.tau = cfg.sweep.tau;
    point.channel.depth = 1;
    try {
      const RydbergParams params = params_from_config(point);
      const Channel ch = channel_from_config(
          point, [params](const BitString& z) { return classical_energy(params, z); });
      const Eigen::MatrixXd p = channel_matrix(ch);
      const DiscreteDistribution mu = boltzmann(params, cfg.sweep.tau);
      for (double prob : mu.probs)
        if (prob <= 0.0)
          throw NumericalError("stationary distribution underflows at tau " +
                               fmt_double(cfg.sweep.tau));
      gaps[idx] = spectral_gap(p, mu);
    } catch (const CapacityError& e) {
      warnings[idx] = e.what();
    } catch (const NumericalError& e) {
      warnings[idx] = e.what();
    }
  });

  const fs::path dir = ensure_outdir(opts.out);
  auto csv = open_out(dir / "sweep.csv");
  csv << "delta,t,gap\n";
  for (std::size_t idx = 0; idx < grid; ++idx) {
    if (!warnings[idx].empty())
      std::cerr << "phase-sweep: point (" << deltas[idx / times.size()] << ", "
                << times[idx % times.size()] << ") skipped: " << warnings[idx] << "\n";
    csv << fmt_double(deltas[idx / times.size()]) << ','
        << fmt_double(times[idx % times.size()]) << ',' << fmt_double(gaps[idx]) << '\n';
  }
  std::cout << "wrote " << (dir / "sweep.csv").string() << " (" << grid << " grid points)\n";
  return 0;
}

// --- shared model/context assembly ------------------------------------

struct Workbench {
  RydbergParams params;
  EnergyTerms terms;
  InteractionGraph graph;
  Channel channel;
  TrainContext ctx;
  Objective objective;
};

Workbench make_workbench(const RunConfig& cfg, int pixel_count) {
  Workbench w;
  w.params = params_from_config(cfg);
  w.terms = energy_terms(w.params, cfg.train.energy_sign);
  w.graph = unit_disk_graph(w.params.atoms,
                            blockade_radius(w.params.c6, w.params.omega));
  const EnergyTerms terms = w.terms;
  w.channel =
      channel_from_config(cfg, [terms](const BitString& z) { return terms.eval(z); });
  w.objective = objective_from_config(cfg.objective, pixel_count);
  const Objective obj = w.objective;
  w.ctx.channel = w.channel;
  w.ctx.energy = w.terms;
  w.ctx.atoms = w.params.atoms;
  w.ctx.graph = w.graph;
  w.ctx.design_cost = [obj](const Eigen::VectorXd& x) { return evaluate(obj, x); };
  return w;
}

// --- train -------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const CommonOpts& opts, const std::string& data_flag) {
  const std::string data = data_flag.empty() ? cfg.train.data : data_flag;
  if (data.empty())
    throw std::invalid_argument("train: needs --data or train.data in the config");
  const std::vector<Design> dataset = load_dataset(data);
  std::vector<Eigen::VectorXd> designs;
  designs.reserve(dataset.size());
  for (const auto& d : dataset) designs.push_back(design_to_vector(d));
  const int pixels = dataset.front().pixel_count();

  const std::uint64_t seed = resolve_seed(opts, cfg);
  const Workbench bench = make_workbench(cfg, pixels);
  AutoencoderModel model = init_model(pixels, cfg.train.hidden, bench.params.n(), seed);
  const TrainConfig tc = train_config_from_section(cfg.train, seed);
  TrainState st = init_train_state(model, tc);
  CounterRng rng(seed);

  const fs::path dir = ensure_outdir(opts.out);
  auto csv = open_out(dir / "losses.csv");
  csv << "epoch,rec,energy,is,dist,total\n";
  LossBreakdown last;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    last = train_epoch(model, designs, bench.ctx, tc, st, rng);
    csv << epoch << ',' << fmt_double(tc.w_rec * last.reconstruction) << ','
        << fmt_double(tc.w_energy * last.energy_match) << ','
        << fmt_double(tc.w_is * last.is_penalty) << ','
        << fmt_double(tc.w_dist * last.distance_match) << ','
        << fmt_double(last.total(tc)) << '\n';
  }
  save_model(model, (dir / "model.json").string());
  std::cout << "trained " << tc.epochs << " epochs on " << designs.size()
            << " designs; final total " << fmt_double(last.total(tc)) << " (lambda "
            << fmt_double(st.lambda) << ", lambda_d " << fmt_double(st.lambda_d)
            << ")\nwrote " << (dir / "losses.csv").string() << " and "
            << (dir / "model.json").string() << "\n";
  return 0;
}

// --- sample ------------------------------------------------------------

std::string index_name(const char* stem, std::size_t i, const char* ext) {
  std::ostringstream s;
  s << stem << '_' << std::setw(5) << std::setfill('0') << i << ext;
  return s.str();
}

int cmd_sample(const RunConfig& cfg, const CommonOpts& opts, const std::string& model_path,
               const std::string& data_flag, long count) {
  if (count < 0) throw std::invalid_argument("sample: count must be >= 0");
  const AutoencoderModel model = load_model(model_path);
  const Workbench bench = make_workbench(cfg, model.pixels);
  if (bench.params.n() != model.latent_n)
    throw std::invalid_argument("sample: lattice size does not match the model latent");

  std::vector<Design> dataset;
  const std::string data = data_flag.empty() ? cfg.train.data : data_flag;
  if (cfg.sample.start == "encode") {
    if (data.empty())
      throw std::invalid_argument("sample: encode starts need --data or train.data");
    dataset = load_dataset(data);
    if (dataset.front().pixel_count() != model.pixels)
      throw std::invalid_argument("sample: dataset pixel count does not match the model");
  }
  const int h = dataset.empty() ? 1 : dataset.front().h;
  const int w = dataset.empty() ? model.pixels : dataset.front().w;

  const std::uint64_t seed = resolve_seed(opts, cfg);
  std::vector<ChainRecord> records(static_cast<std::size_t>(count));
  parallel_for(static_cast<std::size_t>(count), opts.threads, [&](std::size_t i) {
    BitString z0(static_cast<std::size_t>(model.latent_n));
    if (!dataset.empty()) {
      const auto& d = dataset[i % dataset.size()];
      z0 = spin_to_binary(quantize(encode(model, design_to_vector(d))).spin);
    }
    records[i] = run_chain(bench.channel, z0, cfg.sample.steps,
                           seed ^ static_cast<std::uint64_t>(i));
  });

  const fs::path dir = ensure_outdir(opts.out);
  auto summary = open_out(dir / "samples.csv");
  summary << "chain,seed,final_state,final_energy,design_file,chain_file\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string chain_file = index_name("chain", i, ".csv");
    const std::string design_file = index_name("design", i, ".pgm");
    write_chain_csv(records[i], (dir / chain_file).string());
    const BitString final_z = records[i].steps.back().state;
    const Eigen::VectorXd xhat = decode(model, binary_to_real(final_z));
    write_pgm(vector_to_design(xhat, h, w), (dir / design_file).string());
    summary << i << ',' << records[i].seed << ',' << final_z.str() << ','
            << fmt_double(records[i].steps.back().energy) << ',' << design_file << ','
            << chain_file << '\n';
  }
  std::cout << "wrote " << records.size() << " chains under " << dir.string() << "\n";
  return 0;
}

// --- benchmark ----------------------------------------------------------

int cmd_benchmark(const RunConfig& cfg, const CommonOpts& opts,
                  const std::string& model_path, const std::string& data_flag,
                  bool selftest_flag) {
  const AutoencoderModel model = load_model(model_path);
  const Workbench bench = make_workbench(cfg, model.pixels);
  if (bench.params.n() != model.latent_n)
    throw std::invalid_argument("benchmark: lattice size does not match the model latent");

  const std::string data = data_flag.empty() ? cfg.train.data : data_flag;
  const bool selftest = selftest_flag || cfg.benchmark.selftest;
  std::vector<Design> starts;
  if (!selftest) {
    if (data.empty())
      throw std::invalid_argument("benchmark: needs --data or train.data for chain starts");
    starts = load_dataset(data);
    if (cfg.benchmark.starts_limit > 0 &&
        starts.size() > static_cast<std::size_t>(cfg.benchmark.starts_limit))
      starts.resize(static_cast<std::size_t>(cfg.benchmark.starts_limit));
  }

  const std::uint64_t seed = resolve_seed(opts, cfg);
  const fs::path dir = ensure_outdir(opts.out);
  auto bins_csv = open_out(dir / "bins.csv");
  bins_csv << "tau,bin_lo,bin_hi,p_hat,mu_hat\n";
  auto summary = open_out(dir / "summary.csv");
  summary << "tau,depth,sampler,alpha,renyi_nats,kl_nats,tv,accept_rate,mean_cost\n";

  for (double tau : cfg.benchmark.tau_list) {
    BenchmarkConfig bc;
    bc.tau = tau;
    bc.alpha = cfg.benchmark.alpha;
    bc.n_samples = cfg.benchmark.n_samples;
    bc.bins = cfg.benchmark.bins;
    bc.seed = seed;
    bc.threads = opts.threads;
    const RenyiReport rep =
        selftest ? renyi_selftest(model, bench.objective, bc)
                 : renyi_benchmark(model, bench.channel, bench.objective, starts, bc);
    for (int b = 0; b < rep.target.bins(); ++b)
      bins_csv << fmt_double(tau) << ','
               << fmt_double(rep.target.edges[static_cast<std::size_t>(b)]) << ','
               << fmt_double(rep.target.edges[static_cast<std::size_t>(b) + 1]) << ','
               << fmt_double(rep.empirical.probs[b]) << ','
               << fmt_double(rep.target.probs[b]) << '\n';
    const char* sampler = selftest ? "exact" : sampler_name(bench.channel.sampler);
    summary << fmt_double(tau) << ',' << cfg.channel.depth << ',' << sampler << ','
            << fmt_double(cfg.benchmark.alpha) << ',' << fmt_double(rep.renyi) << ','
            << fmt_double(rep.kl) << ',' << fmt_double(rep.tv) << ','
            << fmt_double(rep.accept_rate) << ',' << fmt_double(rep.mean_cost) << '\n';
    std::cout << "tau " << fmt_double(tau) << ": renyi " << fmt_double(rep.renyi)
              << " nats, tv " << fmt_double(rep.tv) << ", accept "
              << fmt_double(rep.accept_rate) << "\n";
  }
  std::cout << "wrote " << (dir / "bins.csv").string() << " and "
            << (dir / "summary.csv").string() << "\n";
  return 0;
}

// --- diffuse -------------------------------------------------------------

int cmd_diffuse(const RunConfig& cfg, const CommonOpts& opts,
                const std::string& target_flag, const std::string& model_path) {
  const std::string target_text =
      target_flag.empty() ? cfg.diffuse.target : target_flag;
  if (target_text.empty())
    throw std::invalid_argument("diffuse: needs --target or diffuse.target");
  const RydbergParams params = params_from_config(cfg);
  const BitString target = BitString::parse(target_text);
  if (static_cast<int>(target.size()) != params.n())
    throw std::invalid_argument("diffuse: target length does not match the lattice");
  if (cfg.diffuse.shots < 1)
    throw std::invalid_argument("diffuse: shots must be >= 1");

  MaskedPrepResult prep = prepare_masked_state(
      params, target, cfg.diffuse.delta_mask_over_omega * params.omega, cfg.quench.tol);
  if (prep.independence_warning)
    std::cerr << "diffuse: warning: target excitations are adjacent on the blockade "
                 "graph; prepared state may be distorted\n";
  std::cout << "prepared target " << target.str() << " with fidelity "
            << fmt_double(fidelity(prep.state, target)) << "\n";

  QuantumState state = prep.state;
  if (cfg.diffuse.diffusion_step) {
    QuenchSpec spec;
    spec.params = params;
    spec.t = std::numbers::pi / (2.0 * params.omega);
    spec.phase = cfg.quench.phase;
    spec.tol = cfg.quench.tol;
    state = propagate(build_hamiltonian(spec), state, spec.t, spec.tol);
  }

  // Measurement: inverse CDF over the outcome probabilities per shot.
  Eigen::VectorXd cdf(state.amp.size());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < state.amp.size(); ++k) {
    acc += std::norm(state.amp[k]);
    cdf[k] = acc;
  }
  const std::uint64_t seed = resolve_seed(opts, cfg);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(state.amp.size()), 0);
  CounterRng rng(seed);
  for (int s = 0; s < cfg.diffuse.shots; ++s) {
    const double u = rng.next_double() * acc;
    const Eigen::Index k =
        std::lower_bound(cdf.data(), cdf.data() + cdf.size(), u) - cdf.data();
    ++counts[static_cast<std::size_t>(std::min<Eigen::Index>(k, cdf.size() - 1))];
  }

  AutoencoderModel model;
  bool with_model = !model_path.empty();
  if (with_model) {
    model = load_model(model_path);
    if (model.latent_n != params.n())
      throw std::invalid_argument("diffuse: model latent does not match the lattice");
  }
  const Eigen::VectorXd x_target =
      with_model ? decode(model, binary_to_real(target)) : Eigen::VectorXd();

  const fs::path dir = ensure_outdir(opts.out);
  auto csv = open_out(dir / "diffuse.csv");
  csv << "state,count,hamming,quad_hamming,pixel_dist\n";
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    const BitString z = BitString::from_index(params.n(), k);
    double pixel_dist = std::numeric_limits<double>::quiet_NaN();
    if (with_model)
      pixel_dist = mean_abs_pixel_distance(decode(model, binary_to_real(z)), x_target);
    csv << z.str() << ',' << counts[k] << ',' << hamming(z, target) << ','
        << fmt_double(quadratic_hamming(params.atoms, z, target)) << ','
        << fmt_double(pixel_dist) << '\n';
  }
  std::cout << "wrote " << (dir / "diffuse.csv").string() << " (" << cfg.diffuse.shots
            << " shots)\n";
  return 0;
}

// --- check ---------------------------------------------------------------

struct CheckResult {
  std::string suite;
  std::string name;
  bool pass = false;
  std::string detail;
};

void metric_suite(std::vector<CheckResult>& out) {
  auto push = [&out](const std::string& name, bool pass, const std::string& detail) {
    out.push_back({"metric", name, pass, detail});
  };

  std::vector<BitString> points4;
  for (std::uint64_t k = 0; k < 16; ++k) points4.push_back(BitString::from_index(4, k));
  const auto plain = check_metric_axioms(
      [](const BitString& a, const BitString& b) { return static_cast<double>(hamming(a, b)); },
      points4);
  push("hamming_axioms", plain.ok(),
       plain.ok() ? "all axioms hold on 16 points"
                  : plain.violations.front());

  const struct {
    int rows, cols;
    double spacing;
  } lattices[] = {{1, 4, 4.0}, {2, 2, 5.4}, {2, 3, 3.9}, {3, 2, 7.1}, {1, 6, 5.0}};
  bool quad_ok = true;
  std::string quad_detail = "axioms hold on 5 lattices";
  for (const auto& spec : lattices) {
    const AtomArray atoms = build_king_subgraph(spec.rows, spec.cols, spec.spacing);
    std::vector<BitString> pts;
    for (std::uint64_t k = 0; k < (1ull << atoms.n()); ++k)
      pts.push_back(BitString::from_index(atoms.n(), k));
    const auto rep = check_metric_axioms(
        [&atoms](const BitString& a, const BitString& b) {
          return quadratic_hamming(atoms, a, b);
        },
        pts);
    if (!rep.ok()) {
      quad_ok = false;
      quad_detail = std::to_string(spec.rows) + "x" + std::to_string(spec.cols) + ": " +
                    rep.violations.front();
      break;
    }
  }
  push("quadratic_hamming_axioms", quad_ok, quad_detail);

  // Independent recomputation of the pair-weighted form on one instance.
  const AtomArray atoms = build_king_subgraph(1, 3, 2.0);
  const BitString a = BitString::parse("110"), b = BitString::parse("011");
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    const int da = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
    expect += da * da;
    for (int j = i + 1; j < 3; ++j) {
      const int dp = a[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(j)] -
                     b[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];
      expect += 2.0 * dp * dp / distance(atoms, i, j);
    }
  }
  const double got = quadratic_hamming(atoms, a, b);
  push("quadratic_hamming_value", std::abs(got - expect) <= 1e-12,
       "got " + fmt_double(got) + ", expected " + fmt_double(expect));
}

void balance_suite(std::vector<CheckResult>& out, const RunConfig* cfg) {
  auto push = [&out](const std::string& name, bool pass, const std::string& detail) {
    out.push_back({"balance", name, pass, detail});
  };
  RydbergParams params;
  std::string fixture = "built-in 3-atom fixture";
  if (cfg && lattice_from_config(cfg->lattice).n() <= 6) {
    params = params_from_config(*cfg);
    fixture = "config lattice";
  } else {
    params.atoms = build_king_subgraph(1, 3, 8.0);
    params.omega = 2.0;
    params.delta = 1.5;
    params.c6 = 5.42e6;
  }
  const double tau = 0.7;
  CounterRng table_rng(7);
  std::vector<double> table(1ull << params.n());
  for (auto& e : table) e = 2.0 * table_rng.next_double();
  const auto energy = [&table](const BitString& z) { return table[z.index()]; };
  const DiscreteDistribution mu = boltzmann(energy, params.n(), tau);

  QuenchSpec spec;
  spec.params = params;
  spec.t = 0.35;
  Eigen::MatrixXd corrupt;
  for (SamplerKind kind :
       {SamplerKind::bitflip, SamplerKind::uniform, SamplerKind::quantum}) {
    const Channel ch =
        kind == SamplerKind::quantum
            ? make_channel(kind, params.n(), tau, 1, energy, spec)
            : make_channel(kind, params.n(), tau, 1, energy);
    const Eigen::MatrixXd p = channel_matrix(ch);
    if (kind == SamplerKind::bitflip) corrupt = p;
    const double residual = detailed_balance_residual(p, mu);
    push(std::string(sampler_name(kind)) + "_detailed_balance", residual <= 1e-12,
         "max residual " + fmt_double(residual) + " on " + fixture);
    const double col_err = (p.colwise().sum().array() - 1.0).abs().maxCoeff();
    push(std::string(sampler_name(kind)) + "_stochastic", col_err <= 1e-10,
         "max |column sum - 1| = " + fmt_double(col_err));
  }

  // Negative control: an injected asymmetry must trip the detector.
  corrupt(0, 1) += 0.05;
  corrupt(1, 1) -= 0.05;
  const double planted = detailed_balance_residual(corrupt, mu);
  push("negative_control", planted > 1e-3,
       "injected asymmetry gives residual " + fmt_double(planted));
}

void isometry_suite(std::vector<CheckResult>& out) {
  auto push = [&out](const std::string& name, bool pass, const std::string& detail) {
    out.push_back({"isometry", name, pass, detail});
  };
  const AtomArray atoms = build_king_subgraph(1, 2, 5.0);
  const auto d_z = [&atoms](const BitString& a, const BitString& b) {
    return quadratic_hamming(atoms, a, b);
  };
  const auto d_x = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return mean_abs_pixel_distance(x, y);
  };

  // Pixel distances built to equal d_Z / lambda_d exactly.
  const double lambda_d = 2.0;
  std::vector<IsometryPair> pairs;
  const std::vector<std::pair<std::string, std::string>> latents = {
      {"00", "11"}, {"01", "10"}, {"00", "01"}};
  for (const auto& [sa, sb] : latents) {
    IsometryPair pr;
    pr.za = BitString::parse(sa);
    pr.zb = BitString::parse(sb);
    const double want = d_z(pr.za, pr.zb) / lambda_d;
    pr.xa = {Eigen::VectorXd::Zero(4)};
    pr.xb = {Eigen::VectorXd::Constant(4, want)};
    pairs.push_back(std::move(pr));
  }
  const double gap0 = expected_isometry_gap(pairs, d_z, d_x, lambda_d);
  push("exact_scaling", std::abs(gap0) <= 1e-12, "gap " + fmt_double(gap0));

  std::vector<IsometryPair> swapped = pairs;
  for (auto& pr : swapped) {
    std::swap(pr.za, pr.zb);
    std::swap(pr.xa, pr.xb);
  }
  const double gap1 = expected_isometry_gap(swapped, d_z, d_x, lambda_d);
  push("endpoint_symmetry", std::abs(gap1 - gap0) <= 1e-15,
       "gap " + fmt_double(gap1) + " vs " + fmt_double(gap0));

  // Decoded designs from a random model: the gap is finite and nonnegative.
  const AutoencoderModel model = init_model(6, {5}, 2, 11);
  std::vector<IsometryPair> decoded;
  double mean_dz = 0.0, mean_dx = 0.0;
  for (const auto& [sa, sb] : latents) {
    IsometryPair pr;
    pr.za = BitString::parse(sa);
    pr.zb = BitString::parse(sb);
    pr.xa = {decode(model, binary_to_real(pr.za))};
    pr.xb = {decode(model, binary_to_real(pr.zb))};
    mean_dz += d_z(pr.za, pr.zb);
    mean_dx += d_x(pr.xa.front(), pr.xb.front());
    decoded.push_back(std::move(pr));
  }
  const double lam = mean_dz / mean_dx;
  const double gap2 = expected_isometry_gap(decoded, d_z, d_x, lam);
  push("decoded_pairs_finite", std::isfinite(gap2) && gap2 >= 0.0,
       "gap " + fmt_double(gap2) + " at lambda_d " + fmt_double(lam));
}

void gradient_suite(std::vector<CheckResult>& out) {
  auto push = [&out](const std::string& name, bool pass, const std::string& detail) {
    out.push_back({"gradient", name, pass, detail});
  };
  RydbergParams params;
  params.atoms = build_king_subgraph(1, 4, 5.4);
  params.omega = 2.1;
  params.delta = 1.3;
  params.c6 = 5.42e6;
  const EnergyTerms terms = energy_terms(params);
  TrainContext ctx;
  ctx.channel = make_channel(SamplerKind::bitflip, 4, 1.0, 2,
                             [terms](const BitString& z) { return terms.eval(z); });
  ctx.energy = terms;
  ctx.atoms = params.atoms;
  ctx.graph = unit_disk_graph(params.atoms, blockade_radius(params.c6, params.omega));
  const Objective objective = make_synthetic_objective(8, 16, 0.14 * std::numbers::pi, 3);
  ctx.design_cost = [&objective](const Eigen::VectorXd& x) { return evaluate(objective, x); };

  AutoencoderModel model = init_model(8, {6}, 4, 17);
  CounterRng data_rng(23);
  std::vector<Eigen::VectorXd> designs(3);
  for (auto& d : designs) {
    d.resize(8);
    for (int k = 0; k < 8; ++k) d[k] = data_rng.next_double() < 0.5 ? 0.0 : 1.0;
  }
  TrainConfig tc;
  tc.w_rec = 1.0;
  tc.w_energy = 0.5;
  tc.w_is = 0.25;
  tc.w_dist = 0.75;
  const double lambda = 0.7, lambda_d = 1.3;
  CounterRng rng(29);
  const FrozenBatch fb = freeze_batch(model, designs, ctx, rng);
  const BatchGradients bg = surrogate_gradients(model, designs, ctx, fb, tc, lambda, lambda_d);

  const LossBreakdown direct = surrogate_loss(model, designs, ctx, fb, tc, lambda, lambda_d);
  const double loss_err = std::abs(direct.total(tc) - bg.losses.total(tc));
  push("loss_consistency", loss_err <= 1e-10,
       "analytic vs direct total differ by " + fmt_double(loss_err));

  const auto loss_at = [&](const AutoencoderModel& m) {
    return surrogate_loss(m, designs, ctx, fb, tc, lambda, lambda_d).total(tc);
  };
  CounterRng probe_rng(31);
  double max_rel = 0.0;
  for (int probe = 0; probe < 8; ++probe) {
    const bool enc = probe_rng.next_double() < 0.5;
    const auto& layers = enc ? model.encoder : model.decoder;
    const auto& grads = enc ? bg.encoder : bg.decoder;
    const std::size_t l = probe_rng.next_below(layers.size());
    const auto r = static_cast<Eigen::Index>(
        probe_rng.next_below(static_cast<std::uint64_t>(layers[l].w.rows())));
    const auto c = static_cast<Eigen::Index>(
        probe_rng.next_below(static_cast<std::uint64_t>(layers[l].w.cols())));
    const double w0 = layers[l].w(r, c);
    const double h = 1e-5 * std::max(1.0, std::abs(w0));
    AutoencoderModel mp = model;
    (enc ? mp.encoder : mp.decoder)[l].w(r, c) = w0 + h;
    const double lp = loss_at(mp);
    (enc ? mp.encoder : mp.decoder)[l].w(r, c) = w0 - h;
    const double lm = loss_at(mp);
    const double fd = (lp - lm) / (2.0 * h);
    const double an = grads[l].w(r, c);
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  push("finite_difference", max_rel <= 1e-4,
       "max relative error " + fmt_double(max_rel) + " over 8 probes");
}

int cmd_check(const RunConfig* cfg, const std::vector<std::string>& suites) {
  std::vector<CheckResult> results;
  for (const auto& s : suites) {
    if (s == "metric") metric_suite(results);
    else if (s == "balance") balance_suite(results, cfg);
    else if (s == "isometry") isometry_suite(results);
    else if (s == "gradient") gradient_suite(results);
    else throw std::invalid_argument("check: unknown suite " + s);
  }
  bool all = true;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& r : results) {
    all = all && r.pass;
    checks.push_back({{"suite", r.suite},
                      {"name", r.name},
                      {"pass", r.pass},
                      {"detail", r.detail}});
  }
  const nlohmann::json report = {{"checks", checks}, {"pass", all}};
  std::cout << report.dump(1) << "\n";
  return all ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Rydberg-quench MCMC toolkit: quantum-proposal Markov chains over a "
      "latent atom register.  Units: rates rad/us, times us, lengths um."};
  app.require_subcommand(1);

  CommonOpts sweep_opts, train_opts, sample_opts, bench_opts, diffuse_opts, check_opts;
  std::string sweep_delta_range, sweep_t_range;
  std::string train_data;
  std::string sample_model, sample_data;
  long sample_count = 8;
  std::string bench_model, bench_data;
  bool bench_selftest = false;
  std::string diffuse_target, diffuse_model;
  std::vector<std::string> check_suites;

  auto* sweep = app.add_subcommand(
      "phase-sweep", "Spectral gap of the quantum channel over a (delta, t) grid");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--delta-range", sweep_delta_range,
                    "detuning grid lo:hi:count (rad/us, endpoint excluded)");
  sweep->add_option("--t-range", sweep_t_range,
                    "quench time grid lo:hi:count (us, endpoint excluded)");

  auto* train = app.add_subcommand("train", "Train the design autoencoder");
  add_common(train, train_opts, true);
  train->add_option("--data", train_data, "design dataset (.pgm file or directory)");

  auto* sample = app.add_subcommand("sample", "Run sampling chains and decode designs");
  add_common(sample, sample_opts, true);
  sample->add_option("--model", sample_model, "trained model JSON")->required();
  sample->add_option("--data", sample_data, "design dataset for encode starts");
  sample->add_option("--count", sample_count, "number of chains");

  auto* bench = app.add_subcommand(
      "benchmark", "Divergence between sampled and target cost distributions");
  add_common(bench, bench_opts, true);
  bench->add_option("--model", bench_model, "trained model JSON")->required();
  bench->add_option("--data", bench_data, "design dataset for chain starts");
  bench->add_flag("--selftest", bench_selftest,
                  "draw from the exact target instead of running chains");

  auto* diffuse = app.add_subcommand(
      "diffuse", "Masked state preparation plus a quarter-period drive");
  add_common(diffuse, diffuse_opts, true);
  diffuse->add_option("--target", diffuse_target, "target bitstring (atom 0 first)");
  diffuse->add_option("--model", diffuse_model, "optional model for decoded distances");

  auto* check = app.add_subcommand("check", "Property-check suites (JSON report)");
  add_common(check, check_opts, false);
  check->add_option("--suite", check_suites,
                    "suites to run: metric, balance, isometry, gradient (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sweep) {
      const RunConfig cfg = load_config(sweep_opts.config_path);
      return cmd_phase_sweep(
          cfg, sweep_opts,
          sweep_delta_range.empty() ? std::vector<double>{} : parse_range(sweep_delta_range),
          sweep_t_range.empty() ? std::vector<double>{} : parse_range(sweep_t_range));
    }
    if (*train) {
      const RunConfig cfg = load_config(train_opts.config_path);
      return cmd_train(cfg, train_opts, train_data);
    }
    if (*sample) {
      const RunConfig cfg = load_config(sample_opts.config_path);
      return cmd_sample(cfg, sample_opts, sample_model, sample_data, sample_count);
    }
    if (*bench) {
      const RunConfig cfg = load_config(bench_opts.config_path);
      return cmd_benchmark(cfg, bench_opts, bench_model, bench_data, bench_selftest);
    }
    if (*diffuse) {
      const RunConfig cfg = load_config(diffuse_opts.config_path);
      return cmd_diffuse(cfg, diffuse_opts, diffuse_target, diffuse_model);
    }
    if (*check) {
      RunConfig cfg;
      const bool have_cfg = !check_opts.config_path.empty();
      if (have_cfg) cfg = load_config(check_opts.config_path);
      std::vector<std::string> suites = check_suites;
      if (suites.empty()) suites = {"metric", "balance", "isometry", "gradient"};
      return cmd_check(have_cfg ? &cfg : nullptr, suites);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
