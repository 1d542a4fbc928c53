#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quenchmc/autoenc.hpp"
#include "quenchmc/config.hpp"
#include "quenchmc/csv.hpp"
#include "quenchmc/designspace.hpp"
#include "quenchmc/mcmc.hpp"
#include "quenchmc/metrics.hpp"
#include "quenchmc/rydberg.hpp"

using namespace quenchmc;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args, bool merge_stderr = false) {
  const std::string cmd = std::string(QUENCHMC_CLI_PATH) + " " + args +
                          (merge_stderr ? " 2>&1" : " 2>/dev/null");
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "qmc_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << j.dump(1) << '\n';
  return path.string();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Three-atom chain, weak drive, quantum channel by default.
nlohmann::json base_config() {
  return {
      {"seed", 11},
      {"lattice", {{"rows", 1}, {"cols", 3}, {"spacing", 5.4}}},
      {"params", {{"omega", 2.1}, {"delta", 1.3}, {"c6", 5.42e6}}},
  };
}

std::string write_dataset(const fs::path& dir, int count, std::uint64_t seed) {
  const fs::path data = dir / "designs";
  fs::create_directories(data);
  CounterRng rng(seed);
  for (int i = 0; i < count; ++i) {
    Design d;
    d.h = 3;
    d.w = 2;
    d.pixels.resize(6);
    for (auto& p : d.pixels) p = rng.next_double() < 0.5 ? 0 : 1;
    std::ostringstream name;
    name << "d" << i << ".pgm";
    write_pgm(d, (data / name.str()).string());
  }
  return data.string();
}

}  // namespace

TEST(Cli, RequiresASubcommand) {
  EXPECT_EQ(run_cli("", true).code, 1);
}

TEST(Cli, HelpExitsZero) {
  const RunResult r = run_cli("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("phase-sweep"), std::string::npos);
  EXPECT_NE(r.out.find("diffuse"), std::string::npos);
}

TEST(Cli, CheckReportsAllSuitesPassing) {
  const RunResult r = run_cli("check");
  EXPECT_EQ(r.code, 0);
  const nlohmann::json report = nlohmann::json::parse(r.out);
  EXPECT_TRUE(report.at("pass").get<bool>());
  std::set<std::string> suites;
  for (const auto& c : report.at("checks")) {
    suites.insert(c.at("suite").get<std::string>());
    EXPECT_TRUE(c.at("pass").get<bool>()) << c.dump();
  }
  EXPECT_EQ(suites, (std::set<std::string>{"metric", "balance", "isometry", "gradient"}));
}

TEST(Cli, CheckRejectsUnknownSuite) {
  const RunResult r = run_cli("check --suite bogus", true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("unknown suite"), std::string::npos);
}

TEST(Cli, PhaseSweepWritesSortedGridWithIdentityRows) {
  const fs::path dir = scratch("sweep");
  nlohmann::json j = base_config();
  // Wide spacing keeps the energy range small enough for tau = 0.1.
  j["lattice"]["spacing"] = 30.0;
  const std::string cfg = write_config(dir, j);
  const RunResult r = run_cli("phase-sweep --config " + cfg + " --out " + dir.string() +
                              " --delta-range 0:2:2 --t-range 0:1.2:2");
  ASSERT_EQ(r.code, 0);
  const auto rows = read_csv((dir / "sweep.csv").string());
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"delta", "t", "gap"}));
  // Rows sorted by (delta, t); at t = 0 the kernel is the identity, gap 0.
  EXPECT_EQ(rows[1], (std::vector<std::string>{"0", "0", "0"}));
  EXPECT_EQ(rows[2][0], "0");
  EXPECT_EQ(rows[2][1], "0.6");
  EXPECT_EQ(rows[3], (std::vector<std::string>{"1", "0", "0"}));
  EXPECT_EQ(rows[4][0], "1");

  // The nontrivial point must match the library computation bit for bit.
  RunConfig point = load_config(cfg);
  point.params.delta = 1.0;
  point.quench.t = 0.6;
  point.channel.sampler = "quantum";
  point.channel.tau = point.sweep.tau;
  point.channel.depth = 1;
  const RydbergParams params = params_from_config(point);
  const Channel ch = channel_from_config(
      point, [params](const BitString& z) { return classical_energy(params, z); });
  const double gap = spectral_gap(channel_matrix(ch), boltzmann(params, point.sweep.tau));
  EXPECT_GT(gap, 0.0);
  EXPECT_DOUBLE_EQ(std::stod(rows[4][2]), gap);
}

TEST(Cli, PhaseSweepMarksUnderflowedPointsAsNan) {
  const fs::path dir = scratch("sweep_nan");
  // Blockade-dominated lattice: Boltzmann weights underflow at tau = 0.1.
  const std::string cfg = write_config(dir, base_config());
  const RunResult r = run_cli("phase-sweep --config " + cfg + " --out " + dir.string() +
                                  " --delta-range 1:2:1 --t-range 0.3:1:1",
                              true);
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("skipped"), std::string::npos);
  const auto rows = read_csv((dir / "sweep.csv").string());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], (std::vector<std::string>{"1", "0.3", "nan"}));
}

TEST(Cli, PhaseSweepWithoutGridIsUsageError) {
  const fs::path dir = scratch("sweep_empty");
  const std::string cfg = write_config(dir, base_config());
  const RunResult r = run_cli("phase-sweep --config " + cfg, true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("delta_list"), std::string::npos);
  EXPECT_EQ(run_cli("phase-sweep --config " + cfg + " --delta-range oops", true).code, 1);
}

TEST(Cli, TrainIsDeterministicAndWritesLossCsv) {
  const fs::path dir = scratch("train");
  const std::string data = write_dataset(dir, 4, 3);
  nlohmann::json j = base_config();
  j["channel"] = {{"sampler", "bitflip"}, {"tau", 1.0}, {"depth", 2}};
  j["train"] = {{"data", data}, {"hidden", {4}}, {"epochs", 3}, {"lr", 0.01}};
  const std::string cfg = write_config(dir, j);

  const fs::path out1 = dir / "run1";
  const fs::path out2 = dir / "run2";
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out1.string()).code, 0);
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out2.string()).code, 0);

  const auto rows = read_csv((out1 / "losses.csv").string());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"epoch", "rec", "energy", "is", "dist", "total"}));
  for (std::size_t e = 1; e < rows.size(); ++e) {
    EXPECT_EQ(rows[e][0], std::to_string(e));
    double total = 0.0;
    for (int c = 1; c <= 4; ++c) total += std::stod(rows[e][c]);
    EXPECT_NEAR(total, std::stod(rows[e][5]), 1e-10);
  }
  EXPECT_EQ(slurp(out1 / "losses.csv"), slurp(out2 / "losses.csv"));
  EXPECT_EQ(slurp(out1 / "model.json"), slurp(out2 / "model.json"));
  EXPECT_NO_THROW(load_model((out1 / "model.json").string()));
}

TEST(Cli, TrainWithZeroWeightsReportsFlatZeroLosses) {
  const fs::path dir = scratch("train_zero");
  const std::string data = write_dataset(dir, 3, 5);
  nlohmann::json j = base_config();
  j["channel"] = {{"sampler", "bitflip"}, {"tau", 1.0}, {"depth", 2}};
  j["train"] = {{"data", data},  {"hidden", {4}},  {"epochs", 3}, {"lr", 0.01},
                {"w_rec", 0.0},  {"w_energy", 0.0}, {"w_is", 0.0}, {"w_dist", 0.0}};
  const std::string cfg = write_config(dir, j);
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + dir.string()).code, 0);
  const auto rows = read_csv((dir / "losses.csv").string());
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t e = 1; e < rows.size(); ++e)
    for (int c = 1; c <= 5; ++c) EXPECT_EQ(rows[e][static_cast<std::size_t>(c)], "0");
}

TEST(Cli, SampleWithIdentityChannelKeepsEncodedStarts) {
  const fs::path dir = scratch("sample");
  const std::string data = write_dataset(dir, 2, 9);
  nlohmann::json j = base_config();
  j["quench"] = {{"t", 0.0}};  // zero-time quench: the proposal is the identity
  j["sample"] = {{"steps", 3}, {"start", "encode"}};
  const std::string cfg = write_config(dir, j);

  const AutoencoderModel model = init_model(6, {4}, 3, 21);
  const std::string model_path = (dir / "model.json").string();
  save_model(model, model_path);

  const fs::path empty_out = dir / "empty";
  ASSERT_EQ(run_cli("sample --config " + cfg + " --model " + model_path + " --data " +
                    data + " --count 0 --out " + empty_out.string())
                .code,
            0);
  const auto none = read_csv((empty_out / "samples.csv").string());
  ASSERT_EQ(none.size(), 1u);
  EXPECT_EQ(none[0], (std::vector<std::string>{"chain", "seed", "final_state",
                                               "final_energy", "design_file", "chain_file"}));

  const fs::path out = dir / "chains";
  ASSERT_EQ(run_cli("sample --config " + cfg + " --model " + model_path + " --data " +
                    data + " --count 3 --out " + out.string())
                .code,
            0);
  const auto rows = read_csv((out / "samples.csv").string());
  ASSERT_EQ(rows.size(), 4u);
  const std::vector<Design> dataset = load_dataset(data);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& d = dataset[i % dataset.size()];
    const BitString want = spin_to_binary(quantize(encode(model, design_to_vector(d))).spin);
    EXPECT_EQ(rows[i + 1][2], want.str()) << "chain " << i;
    const ChainRecord rec = read_chain_csv((out / rows[i + 1][5]).string());
    ASSERT_EQ(rec.steps.size(), 4u);
    EXPECT_EQ(rec.steps.front().state.str(), want.str());
    const Design decoded = read_pgm((out / rows[i + 1][4]).string());
    EXPECT_EQ(decoded.pixel_count(), 6);
  }
}

TEST(Cli, BenchmarkSelftestReportsExactSampler) {
  const fs::path dir = scratch("bench");
  nlohmann::json j = base_config();
  j["objective"] = {{"seed", 5}};
  j["benchmark"] = {{"tau_list", {1.0}}, {"n_samples", 400}, {"bins", 8}, {"selftest", true}};
  const std::string cfg = write_config(dir, j);

  const AutoencoderModel model = init_model(6, {4}, 3, 7);
  const std::string model_path = (dir / "model.json").string();
  save_model(model, model_path);

  ASSERT_EQ(run_cli("benchmark --config " + cfg + " --model " + model_path + " --out " +
                    dir.string())
                .code,
            0);
  const auto summary = read_csv((dir / "summary.csv").string());
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0][0], "tau");
  EXPECT_EQ(summary[1][0], "1");
  EXPECT_EQ(summary[1][2], "exact");
  EXPECT_GE(std::stod(summary[1][4]), 0.0);

  const auto bins = read_csv((dir / "bins.csv").string());
  ASSERT_EQ(bins.size(), 9u);
  double p_sum = 0.0, mu_sum = 0.0;
  for (std::size_t b = 1; b < bins.size(); ++b) {
    p_sum += std::stod(bins[b][3]);
    mu_sum += std::stod(bins[b][4]);
  }
  EXPECT_NEAR(p_sum, 1.0, 1e-9);
  EXPECT_NEAR(mu_sum, 1.0, 1e-9);
}

TEST(Cli, DiffuseQuarterDriveSplitsSingleAtom) {
  const fs::path dir = scratch("diffuse");
  nlohmann::json j = {
      {"seed", 4},
      {"lattice", {{"rows", 1}, {"cols", 1}}},
      {"params", {{"omega", 2.0}, {"delta", 0.0}, {"c6", 5.42e6}}},
      {"diffuse", {{"target", "0"}, {"shots", 2000}}},
  };
  const std::string cfg = write_config(dir, j);
  const RunResult r = run_cli("diffuse --config " + cfg + " --out " + dir.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("fidelity"), std::string::npos);

  const auto rows = read_csv((dir / "diffuse.csv").string());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"state", "count", "hamming",
                                               "quad_hamming", "pixel_dist"}));
  long total = 0, excited = 0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const long c = std::stol(rows[k][1]);
    total += c;
    if (rows[k][0] == "1") {
      excited = c;
      EXPECT_EQ(rows[k][2], "1");
      EXPECT_EQ(rows[k][3], "1");
      EXPECT_EQ(rows[k][4], "nan");
    }
  }
  EXPECT_EQ(total, 2000);
  // Resonant quarter-period drive from |0>: P(1) = 1/2, checked to 3 sigma.
  EXPECT_NEAR(static_cast<double>(excited) / 2000.0, 0.5, 0.034);
}

TEST(Cli, DiffusePrepOnlyPinsTheTarget) {
  const fs::path dir = scratch("diffuse_prep");
  nlohmann::json j = {
      {"seed", 2},
      {"lattice", {{"rows", 1}, {"cols", 2}, {"spacing", 30.0}}},
      {"params", {{"omega", 2.0}, {"delta", 0.0}, {"c6", 5.42e6}}},
      {"diffuse",
       {{"target", "01"},
        {"shots", 400},
        {"delta_mask_over_omega", 1000.0},
        {"diffusion_step", false}}},
  };
  const std::string cfg = write_config(dir, j);
  ASSERT_EQ(run_cli("diffuse --config " + cfg + " --out " + dir.string()).code, 0);
  const auto rows = read_csv((dir / "diffuse.csv").string());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "01");
  EXPECT_EQ(rows[1][1], "400");
  EXPECT_EQ(rows[1][2], "0");
  EXPECT_EQ(rows[1][3], "0");
}

TEST(Cli, ExitCodesSeparateUsageFromRuntime) {
  const fs::path dir = scratch("errors");

  // Missing config file fails option validation.
  EXPECT_EQ(run_cli("train --config /nonexistent/qmc.json", true).code, 1);

  // Unparseable JSON is a runtime failure.
  const fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ nope";
  }
  EXPECT_EQ(run_cli("check --config " + bad.string(), true).code, 2);

  // Unknown config keys are a usage error.
  const std::string unknown =
      write_config(dir, {{"params", {{"c6", 1.0}}}, {"bogus", 1}});
  EXPECT_EQ(run_cli("check --config " + unknown + " --suite metric", true).code, 1);

  // Model/lattice mismatch is a usage error.
  const AutoencoderModel model = init_model(6, {4}, 3, 21);
  const std::string model_path = (dir / "model.json").string();
  save_model(model, model_path);
  nlohmann::json j = base_config();
  j["lattice"] = {{"rows", 1}, {"cols", 2}};
  const std::string cfg = write_config(dir, j);
  const RunResult r =
      run_cli("sample --config " + cfg + " --model " + model_path + " --count 1", true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("does not match"), std::string::npos);
}
