#include <gtest/gtest.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hebm/cli.hpp"

using namespace hebm;
using namespace hebm::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("hebm_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HEBM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kMinimalToyConfig =
    "# toy run\n"
    "model.hidden = 32,32\n"
    "training.epochs = 20\n"
    "schedule.sigma_min = 0.05\n"
    "statistic.kind = raw_moment\n"
    "seed = 4\n";

/// A one-dimensional model whose score is exactly -x: zero network, T = x^2, eta = -1/2.
cli::Run oracle_gaussian_run() {
  Rng rng(1);
  ScoreModel m = ScoreModel::create(StatisticFn::raw_moment(1, 2), {4}, Activation::tanh, rng);
  m.eta = {-0.5};
  DataLayout layout;
  layout.kind = DataKind::toy2d;
  layout.vector_dim = 1;
  SamplerConfig sc;
  sc.steps_per_level = 10;
  sc.eps = 0.01;
  return cli::Run{m, layout, NoiseSchedule::from_sigmas({1.0, 0.1}), sc};
}

Dataset column_dataset(std::vector<double> values) {
  Dataset ds;
  ds.layout.kind = DataKind::toy2d;
  ds.layout.vector_dim = 1;
  const std::size_t n = values.size();
  ds.items = Array({n, 1}, std::move(values));
  return ds;
}

}  // namespace

TEST(Config, DefaultsResolveEveryKey) {
  const Config c;
  const std::string text = c.resolved_text();
  for (const auto& [k, v] : Config::defaults()) EXPECT_NE(text.find(k + " = " + v + "\n"), std::string::npos) << k;
  EXPECT_EQ(Config::parse(text).resolved_text(), text);
}

TEST(Config, ParsesCommentsAndWhitespace) {
  const Config c = Config::parse("  training.epochs=7   # seven\n\n# comment only\nmodel.hidden = 8, 4\n");
  EXPECT_EQ(c.count("training.epochs"), 7u);
  EXPECT_EQ(c.counts("model.hidden"), (std::vector<std::size_t>{8, 4}));
}

TEST(Config, UnknownKeyNamesTheKey) {
  try {
    Config::parse("training.epochz = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("training.epochz"), std::string::npos);
  }
  EXPECT_THROW(Config::parse("no equals sign\n"), ConfigError);
}

TEST(Config, BadValuesNameTheKey) {
  auto expect_key = [](const std::string& text, const std::string& key, auto getter) {
    const Config c = Config::parse(text);
    try {
      getter(c);
      FAIL() << "expected ConfigError for " << key;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  expect_key("training.lr = fast\n", "training.lr", [](const Config& c) { c.train_config(); });
  expect_key("training.mode = sometimes\n", "training.mode", [](const Config& c) { c.train_config(); });
  expect_key("model.hidden = 8,,2\n", "model.hidden", [](const Config& c) { c.counts("model.hidden"); });
  expect_key("sampling.denoise = maybe\n", "sampling.denoise",
             [](const Config& c) { c.sampler_config(NoiseSchedule::from_sigmas({1.0})); });
}

TEST(Config, SeedPrecedence) {
  Config c = Config::parse("seed = 3\n");
  ::unsetenv("HEBM_SEED");
  c.apply_seed_overrides(std::nullopt);
  EXPECT_EQ(c.seed(), 3u);
  ::setenv("HEBM_SEED", "17", 1);
  c.apply_seed_overrides(std::nullopt);
  EXPECT_EQ(c.seed(), 17u);
  c.apply_seed_overrides(5);
  EXPECT_EQ(c.seed(), 5u);
  ::setenv("HEBM_SEED", "x1", 1);
  EXPECT_THROW(c.apply_seed_overrides(std::nullopt), ConfigError);
  ::unsetenv("HEBM_SEED");
}

TEST(Config, StatisticFollowsDatasetLayout) {
  const Dataset images = gen_margin_images(12, 12, 8, 6, 2, 1);
  Config c = Config::parse("statistic.kind = margin\n");
  const StatisticFn s = c.statistic(images);
  EXPECT_EQ(s.kind(), StatisticKind::margin);
  EXPECT_EQ(s.margin_geometry().inner_h, 8u);
  EXPECT_EQ(s.margin_geometry().inner_w, 6u);

  const Dataset clouds = gen_point_clouds("two_spheres", 16, 2, 0.01, 1);
  EXPECT_THROW(c.statistic(clouds), ConfigError);
  c.set("statistic.kind", "laplacian_smoothness");
  EXPECT_EQ(c.statistic(clouds).neighbor_count(), 8u);
  c.set("statistic.kind", "valency");
  EXPECT_EQ(c.statistic(gen_molecules(5, {4, 3, 2}, 2, 1)).kind(), StatisticKind::valency);
  c.set("statistic.kind", "entropy");
  EXPECT_THROW(c.statistic(clouds), ConfigError);
}

TEST(RunCheckpoint, RoundTripIsExact) {
  const cli::Run run = oracle_gaussian_run();
  const std::string text = to_text(to_checkpoint(run));
  const cli::Run back = run_from_checkpoint(parse_checkpoint(text));
  EXPECT_EQ(to_text(to_checkpoint(back)), text);
  EXPECT_EQ(back.schedule.sigmas, run.schedule.sigmas);
  EXPECT_EQ(back.sampler.eps, run.sampler.eps);
  EXPECT_EQ(back.layout.describe(), run.layout.describe());
}

TEST(CmdTrain, MinimalToyConfigRunsAndIsReproducible) {
  TempDir tmp;
  write_dataset(tmp / "data", gen_toy2d("mixture", 500, 3));
  write_file(tmp / "c.cfg", kMinimalToyConfig);
  std::ostringstream out;
  const auto t0 = std::chrono::steady_clock::now();
  cmd_train({tmp / "c.cfg", tmp / "data", tmp / "a", false, std::nullopt}, out);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  cmd_train({tmp / "c.cfg", tmp / "data", tmp / "b", false, std::nullopt}, out);
  EXPECT_EQ(slurp(tmp / "a/model.ckpt"), slurp(tmp / "b/model.ckpt"));

  const std::string log = slurp(tmp / "a/train.log");
  EXPECT_NE(log.find("# statistic.kind = raw_moment"), std::string::npos);
  EXPECT_NE(log.find("\nepoch 19 loss "), std::string::npos);
  EXPECT_NE(slurp(tmp / "a/config.resolved").find("training.epochs = 20"), std::string::npos);
  const cli::Run run = load_run(tmp / "a/model.ckpt");
  EXPECT_EQ(run.model.statistic.kind(), StatisticKind::raw_moment);
  EXPECT_NE(run.model.eta, (std::vector<double>{0.0, 0.0}));
}

TEST(CmdTrain, NoStatisticFreezesEtaAtZero) {
  TempDir tmp;
  write_dataset(tmp / "data", gen_toy2d("ring", 200, 5));
  write_file(tmp / "c.cfg", kMinimalToyConfig);
  std::ostringstream out;
  cmd_train({tmp / "c.cfg", tmp / "data", tmp / "r", true, std::nullopt}, out);
  const cli::Run run = load_run(tmp / "r/model.ckpt");
  EXPECT_EQ(run.model.statistic.kind(), StatisticKind::raw_moment);
  EXPECT_EQ(run.model.eta, (std::vector<double>{0.0, 0.0}));
  std::istringstream log(slurp(tmp / "r/train.log"));
  for (std::string line; std::getline(log, line);) {
    if (line.rfind("epoch", 0) == 0) EXPECT_NE(line.find(" eta 0 0"), std::string::npos) << line;
  }
}

TEST(CmdTrain, CheckpointEveryWritesIntermediateFiles) {
  TempDir tmp;
  write_dataset(tmp / "data", gen_toy2d("gaussian", 100, 5));
  write_file(tmp / "c.cfg", std::string(kMinimalToyConfig) + "training.epochs = 4\ntraining.checkpoint_every = 2\n");
  std::ostringstream out;
  cmd_train({tmp / "c.cfg", tmp / "data", tmp / "r", false, std::nullopt}, out);
  EXPECT_TRUE(fs::exists(tmp / "r/model.epoch2.ckpt"));
  EXPECT_EQ(slurp(tmp / "r/model.epoch4.ckpt"), slurp(tmp / "r/model.ckpt"));
}

TEST(CmdTrain, ErrorsMapToExitCodes) {
  TempDir tmp;
  write_dataset(tmp / "data", gen_toy2d("gaussian", 100, 5));
  write_file(tmp / "bad.cfg", "bogus.key = 1\n");
  std::ostringstream out, err;
  EXPECT_EQ(guarded([&] { cmd_train({tmp / "bad.cfg", tmp / "data", tmp / "r", false, std::nullopt}, out); return 0; }, err),
            kUsage);
  EXPECT_NE(err.str().find("bogus.key"), std::string::npos);

  write_file(tmp / "div.cfg", std::string(kMinimalToyConfig) + "training.divergence_threshold = 1e-9\n");
  EXPECT_EQ(guarded([&] { cmd_train({tmp / "div.cfg", tmp / "data", tmp / "r", false, std::nullopt}, out); return 0; }, err),
            kNumeric);
  EXPECT_EQ(guarded([&] { cmd_train({"", "", tmp / "r", false, std::nullopt}, out); return 0; }, err), kUsage);
}

TEST(CmdSample, WritesDeterministicDatasets) {
  TempDir tmp;
  write_checkpoint(tmp / "m.ckpt", to_checkpoint(oracle_gaussian_run()));
  std::ostringstream out;
  cmd_sample({tmp / "m.ckpt", 1, 7, tmp / "one"}, out);
  const Dataset one = read_dataset(tmp / "one");
  EXPECT_EQ(one.size(), 1u);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(tmp / "one")) files += e.is_regular_file() ? 1 : 0;
  EXPECT_EQ(files, 2u);

  cmd_sample({tmp / "m.ckpt", 20, 7, tmp / "a"}, out);
  cmd_sample({tmp / "m.ckpt", 20, 7, tmp / "b"}, out);
  for (const auto& e : fs::directory_iterator(tmp / "a")) {
    EXPECT_EQ(slurp(e.path().string()), slurp(tmp / ("b/" + e.path().filename().string())));
  }
  std::ostringstream err;
  EXPECT_EQ(guarded([&] { cmd_sample({tmp / "missing.ckpt", 1, 7, tmp / "c"}, out); return 0; }, err), kUsage);
}

TEST(CmdEval, OracleModelNllMatchesExactNll) {
  TempDir tmp;
  write_checkpoint(tmp / "m.ckpt", to_checkpoint(oracle_gaussian_run()));
  write_dataset(tmp / "data", column_dataset({0.0, 1.0}));
  std::ostringstream out;
  const MetricReport r = cmd_eval({tmp / "m.ckpt", tmp / "data", {"nll"}, "", 0, 3, tmp / "metrics.txt"}, out);
  const double exact = oracle::exact_nll(oracle::gaussian_1d(), column_dataset({0.0, 1.0}).items);
  EXPECT_NEAR(r.at("nll").value, exact, 1e-9);
  EXPECT_NEAR(r.at("nll").value, 1.168939, 1e-6);
  // the model has a statistic, so delta_t is always reported
  EXPECT_NO_THROW(r.at("delta_t"));
  EXPECT_NE(slurp(tmp / "metrics.txt").find("metric nll "), std::string::npos);
  EXPECT_NE(out.str().find("metric"), std::string::npos);
}

TEST(CmdEval, NllOnWiderDataMatchesExactNll) {
  TempDir tmp;
  write_checkpoint(tmp / "m.ckpt", to_checkpoint(oracle_gaussian_run()));
  Rng rng(8);
  std::vector<double> v(300);
  for (double& x : v) x = 1.5 * rng.normal();
  write_dataset(tmp / "data", column_dataset(v));
  std::ostringstream out;
  const MetricReport r = cmd_eval({tmp / "m.ckpt", tmp / "data", {"nll"}, "", 10, 3, ""}, out);
  EXPECT_NEAR(r.at("nll").value, oracle::exact_nll(oracle::gaussian_1d(), column_dataset(v).items), 1e-9);
}

TEST(CmdEval, EmptyOrUnknownMetricsAreUsageErrors) {
  TempDir tmp;
  write_checkpoint(tmp / "m.ckpt", to_checkpoint(oracle_gaussian_run()));
  write_dataset(tmp / "data", column_dataset({0.0, 1.0}));
  std::ostringstream out, err;
  EXPECT_EQ(guarded([&] { cmd_eval({tmp / "m.ckpt", tmp / "data", {}, "", 0, 3, ""}, out); return 0; }, err), kUsage);
  EXPECT_EQ(guarded([&] { cmd_eval({tmp / "m.ckpt", tmp / "data", {""}, "", 0, 3, ""}, out); return 0; }, err), kUsage);
  EXPECT_EQ(guarded([&] { cmd_eval({tmp / "m.ckpt", tmp / "data", {"fid"}, "", 0, 3, ""}, out); return 0; }, err),
            kUsage);
  EXPECT_EQ(guarded([&] { cmd_eval({tmp / "m.ckpt", tmp / "data", {"validity"}, "", 0, 3, ""}, out); return 0; }, err),
            kUsage);
}

TEST(CmdEval, ValidityOfGeneratedMoleculesIsOne) {
  TempDir tmp;
  const Dataset mols = gen_molecules(5, {4, 3, 2}, 200, 2);
  write_dataset(tmp / "mols", mols);
  Rng rng(2);
  ScoreModel m = ScoreModel::create(StatisticFn::valency(mols.layout.molecule), {8}, Activation::tanh, rng);
  write_checkpoint(tmp / "m.ckpt", to_checkpoint(cli::Run{m, mols.layout, NoiseSchedule::from_sigmas({1.0}), SamplerConfig{}}));
  std::ostringstream out;
  const MetricReport r = cmd_eval({tmp / "m.ckpt", tmp / "mols", {"validity"}, tmp / "mols", 0, 1, ""}, out);
  EXPECT_EQ(r.at("validity").value, 1.0);
  EXPECT_EQ(r.at("delta_t").value, 0.0);
}

TEST(CmdEval, PointCloudSetMetricsAgainstItself) {
  TempDir tmp;
  const Dataset clouds = gen_point_clouds("sphere", 32, 20, 0.01, 4);
  write_dataset(tmp / "clouds", clouds);
  Rng rng(3);
  ScoreModel m = ScoreModel::create(StatisticFn::laplacian(32, 8), {8}, Activation::tanh, rng);
  write_checkpoint(tmp / "m.ckpt", to_checkpoint(cli::Run{m, clouds.layout, NoiseSchedule::from_sigmas({1.0}), SamplerConfig{}}));
  std::ostringstream out;
  const MetricReport r = cmd_eval({tmp / "m.ckpt", tmp / "clouds", {"mmd", "cov", "1nna"}, tmp / "clouds", 0, 1, ""}, out);
  EXPECT_EQ(r.at("mmd_chamfer").value, 0.0);
  EXPECT_EQ(r.at("cov_chamfer").value, 1.0);
  EXPECT_EQ(r.at("delta_t").value, 0.0);
}

TEST(IntegratedScoreDensity, GaussLegendreIsExactForPolynomials) {
  const auto [x, w] = oracle::gauss_legendre(16);
  double total = 0.0, odd = 0.0, deg30 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    total += w[i];
    odd += w[i] * std::pow(x[i], 29);
    deg30 += w[i] * std::pow(x[i], 30);
  }
  EXPECT_NEAR(total, 2.0, 1e-14);
  EXPECT_NEAR(odd, 0.0, 1e-14);
  EXPECT_NEAR(deg30, 2.0 / 31.0, 1e-14);
}

TEST(IntegratedScoreDensity, LinearScoreGivesTheGaussian) {
  const auto spec = oracle::integrated_score_density([](double x) { return -(x - 0.5) / 4.0; }, -20.0, 20.0);
  const Array pts({2, 1}, std::vector<double>{0.5, 2.5});
  // N(0.5, 4): -log p(0.5) = log(2 sqrt(2 pi)), -log p(2.5) adds 1/2
  const double base = std::log(2.0 * std::sqrt(2.0 * std::numbers::pi));
  EXPECT_NEAR(oracle::exact_nll(spec, pts), base + 0.25, 1e-9);
  EXPECT_THROW(spec.base(std::vector<double>{30.0}), ArgumentError);
}

TEST(CmdVerify, AllSuitesPassAndFaultInjectionFails) {
  std::ostringstream out;
  EXPECT_TRUE(cmd_verify({"all", false, 0}, out)) << out.str();
  EXPECT_NE(out.str().find("theorem1: PASS"), std::string::npos);
  EXPECT_NE(out.str().find("tolerance"), std::string::npos);
  std::ostringstream bad;
  EXPECT_FALSE(cmd_verify({"gradcheck", true, 0}, bad));
  EXPECT_NE(bad.str().find("FAIL"), std::string::npos);
  std::ostringstream knn;
  EXPECT_TRUE(cmd_verify({"knn", false, 5}, knn));
}

TEST(CmdGenData, DeterministicAndValidated) {
  TempDir tmp;
  std::ostringstream out, err;
  cmd_gendata({"point_clouds", "points=16,n=3", 9, tmp / "a"}, out);
  cmd_gendata({"point_clouds", "points=16,n=3", 9, tmp / "b"}, out);
  for (const auto& e : fs::directory_iterator(tmp / "a")) {
    EXPECT_EQ(slurp(e.path().string()), slurp(tmp / ("b/" + e.path().filename().string())));
  }
  EXPECT_EQ(read_dataset(tmp / "a").layout.n_points, 16u);
  cmd_gendata({"molecules", "atoms=4,valences=4:3:2,n=5", 1, tmp / "m"}, out);
  EXPECT_EQ(read_dataset(tmp / "m").layout.molecule.valences, (std::vector<int>{0, 4, 3, 2}));
  EXPECT_EQ(guarded([&] { cmd_gendata({"faces", "", 1, tmp / "x"}, out); return 0; }, err), kUsage);
  EXPECT_EQ(guarded([&] { cmd_gendata({"toy2d", "colour=red", 1, tmp / "x"}, out); return 0; }, err), kUsage);
  EXPECT_EQ(guarded([&] { cmd_gendata({"toy2d", "n=ten", 1, tmp / "x"}, out); return 0; }, err), kUsage);
}

TEST(Executable, ExitCodeContract) {
  TempDir tmp;
  EXPECT_EQ(run_cli("gen-data --kind toy2d --params n=200 --seed 1 --out " + (tmp / "d")), 0);
  write_file(tmp / "c.cfg", kMinimalToyConfig);
  EXPECT_EQ(run_cli("train --config " + (tmp / "c.cfg") + " --data " + (tmp / "d") + " --out " + (tmp / "r")), 0);
  EXPECT_EQ(run_cli("sample --ckpt " + (tmp / "r/model.ckpt") + " --n 3 --seed 2 --out " + (tmp / "s")), 0);
  EXPECT_EQ(run_cli("eval --ckpt " + (tmp / "r/model.ckpt") + " --data " + (tmp / "d") + " --metrics delta_t --n 50"), 0);
  EXPECT_EQ(run_cli("eval --ckpt " + (tmp / "r/model.ckpt") + " --data " + (tmp / "d") + " --metrics ''"), 2);
  EXPECT_EQ(run_cli("sample --ckpt " + (tmp / "none.ckpt") + " --n 1 --out " + (tmp / "x")), 2);
  EXPECT_EQ(run_cli("gen-data --kind faces --out " + (tmp / "x")), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  write_file(tmp / "bad.cfg", "model.depth = 3\n");
  EXPECT_EQ(run_cli("train --config " + (tmp / "bad.cfg") + " --data " + (tmp / "d") + " --out " + (tmp / "q")), 2);
  write_file(tmp / "div.cfg", std::string(kMinimalToyConfig) + "training.divergence_threshold = 1e-9\n");
  EXPECT_EQ(run_cli("train --config " + (tmp / "div.cfg") + " --data " + (tmp / "d") + " --out " + (tmp / "q")), 3);
  EXPECT_EQ(run_cli("verify --suite knn"), 0);
  EXPECT_EQ(run_cli("verify --suite gradcheck --inject-fault"), 3);
  EXPECT_EQ(run_cli("verify --suite everything"), 2);
}
