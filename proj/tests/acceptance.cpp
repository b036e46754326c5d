// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hebm/hebm.hpp"

using namespace hebm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Config config_from(const std::string& text) { return Config::parse(text, "acceptance"); }

// 1. every catalog pair: fitted E_p[T] matches the data mean of T
Outcome theorem1() {
  const VerifyReport r = verify_theorem1();
  double worst = 0.0;
  for (const auto& c : r.checks) worst = std::max(worst, c.value);
  return {r.passed() && r.checks.size() >= 6,
          std::to_string(r.checks.size()) + " pairs, worst |E_p[T] - mean T| " + fmt("%.2e (tol 1e-4)", worst)};
}

// 2. analytic gradients against central differences
Outcome gradients() {
  const VerifyReport r = verify_gradcheck();
  double worst = 0.0;
  for (const auto& c : r.checks) worst = std::max(worst, c.value);
  return {r.passed(), std::to_string(r.checks.size()) + " gradient families x 20 configs, worst rel err " +
                          fmt("%.2e (tol 1e-4)", worst)};
}

// 3. DSM on N(0,1) recovers -x / (1 + sigma_K^2)
Outcome gaussian_score() {
  Rng rng(1);
  Array data({2000, 1});
  for (double& v : data.data()) v = rng.normal();
  ScoreModel m = ScoreModel::create(StatisticFn::none(1), {32, 32}, Activation::tanh, rng);
  const NoiseSchedule sched = NoiseSchedule::geometric(estimate_sigma_max(data), 0.1, 10);
  TrainConfig c;
  c.epochs = 300;
  c.batch_size = 128;
  c.lr = 1e-3;
  c.decay_start = 0.5;
  c.mode = NoiseMode::exact;
  c.antithetic = true;
  c.seed = 1;
  train(m, data, sched, c);
  double err2 = 0.0, ref2 = 0.0;
  const double s = sched.smallest();
  for (int i = 0; i <= 40; ++i) {
    const double x = -2.0 + 0.1 * i;
    const double want = -x / (1.0 + s * s);
    const double got = score(m, std::vector<double>{x}, s)[0];
    err2 += (got - want) * (got - want);
    ref2 += want * want;
  }
  const double err = std::sqrt(err2 / ref2);
  return {err <= 0.05, fmt("sigma_K %.2f, relative L2 error %.4f (tol 0.05)", s, err)};
}

struct Paired {
  double with = 0.0, without = 0.0;
  double validity_with = 0.0, validity_without = 0.0;
};

Paired paired_delta_t(const Dataset& data, const std::string& config, std::size_t n_samples, std::uint64_t seed) {
  const Config cfg = config_from(config + "seed = " + std::to_string(seed) + "\n");
  Paired p;
  for (bool no_statistic : {false, true}) {
    const cli::TrainOutcome out = cli::train_from_config(cfg, data, no_statistic);
    const Array samples = cli::draw_samples(out.run, n_samples, seed + 100);
    const double dt = delta_t(samples, data.items, out.run.model.statistic).abs_diff[0];
    double validity = 0.0;
    if (data.layout.kind == DataKind::molecules) {
      validity = validity_ratio(decode_molecules(samples, data.layout.molecule));
    }
    (no_statistic ? p.without : p.with) = dt;
    (no_statistic ? p.validity_without : p.validity_with) = validity;
  }
  return p;
}

// 4. Delta_T with the statistic below Delta_T without it, every seed
Outcome delta_t_ablation() {
  const std::string common =
      "training.epochs = 200\ntraining.batch_size = 32\nmodel.hidden = 256\n"
      "schedule.sigma_max = 1\nschedule.sigma_min = 0.02\n";
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Paired p = paired_delta_t(gen_margin_images(12, 12, 8, 6, 500, seed), common + "statistic.kind = margin\n",
                                    200, seed);
    pass = pass && p.with < p.without;
    detail += fmt("margin s%.0f %.4f vs %.4f, ", static_cast<double>(seed), p.with, p.without);
  }
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Paired p = paired_delta_t(gen_point_clouds("two_spheres", 64, 200, 0.01, seed),
                                    common + "statistic.kind = laplacian_smoothness\n", 100, seed);
    pass = pass && p.with < p.without;
    detail += fmt("clouds s%.0f %.2f vs %.2f, ", static_cast<double>(seed), p.with, p.without);
  }
  return {pass, "Delta_T with vs without: " + detail.substr(0, detail.size() - 2)};
}

// 5. valency statistic: validity no worse and Delta_T lower, every seed
Outcome validity_direction() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Paired p = paired_delta_t(gen_molecules(5, {4, 3, 2}, 1000, seed),
                                    "training.epochs = 200\nstatistic.kind = valency\n", 1000, seed);
    pass = pass && p.validity_with >= p.validity_without && p.with < p.without;
    detail += fmt("s%.0f validity %.3f vs %.3f ", static_cast<double>(seed), p.validity_with, p.validity_without) +
              fmt("Delta_T %.3f vs %.3f, ", p.with, p.without);
  }
  return {pass, "with vs without: " + detail.substr(0, detail.size() - 2)};
}

// 6. a meaningless statistic's eta decays while the margin eta does not
Outcome sine_control() {
  const Dataset data = gen_margin_images(12, 12, 8, 6, 500, 1);
  auto final_eta = [&](const std::string& kind) {
    const Config cfg = config_from("statistic.kind = " + kind + "\ntraining.epochs = 200\nseed = 1\n");
    return cli::train_from_config(cfg, data, false).run.model.eta[0];
  };
  const double sine = final_eta("sine");
  const double margin = final_eta("margin");
  const bool pass = std::abs(sine) < 0.05 && std::abs(margin) > 5.0 * std::abs(sine);
  return {pass, fmt("|eta_sine| %.4f (tol 0.05), |eta_margin| %.4f (> %.4f)", std::abs(sine), std::abs(margin),
                    5.0 * std::abs(sine))};
}

// 7. fitting eta on a gap statistic lowers the exact NLL of a learned mixture
Outcome oracle_nll() {
  Rng rng(1);
  const Array data = oracle::sample_exact(oracle::mixture_1d(), 2000, rng);
  ScoreModel m = ScoreModel::create(StatisticFn::none(1), {32, 32}, Activation::tanh, rng);
  const NoiseSchedule sched = NoiseSchedule::geometric(estimate_sigma_max(data), 0.1, 10);
  TrainConfig c;
  c.epochs = 100;
  c.batch_size = 128;
  c.lr = 1e-3;
  c.decay_start = 0.5;
  c.mode = NoiseMode::exact;
  c.antithetic = true;
  c.seed = 1;
  train(m, data, sched, c);
  const double s = sched.smallest();
  auto learned = [&](double x) { return score(m, std::vector<double>{x}, s)[0]; };
  oracle::DensitySpec spec =
      oracle::with_statistic(oracle::integrated_score_density(learned, -10.0, 10.0), oracle::bump(0.25));
  const double nll_zero = oracle::exact_nll(spec, data);
  const oracle::EtaFit fit = oracle::fit_eta_exact(spec, data);
  spec.eta = fit.eta;
  const double nll_fit = oracle::exact_nll(spec, data);
  return {nll_fit <= nll_zero - 1e-3,
          fmt("nll(eta=0) %.5f, nll(fitted eta=%.3f) %.5f, gain %.5f (>= 1e-3)", nll_zero, fit.eta[0], nll_fit,
              nll_zero - nll_fit)};
}

// 8. kd-tree exact against brute force; metric hand cases
Outcome knn_and_metrics() {
  const VerifyReport r = verify_knn();
  const double single = chamfer(std::vector<double>{0, 0, 0}, std::vector<double>{1, 1, 1});
  Rng rng(9);
  auto cloud_set = [&rng](std::size_t count, std::size_t points) {
    Array a({count, 3 * points});
    for (double& v : a.data()) v = rng.normal();
    return a;
  };
  const Array a = cloud_set(100, 32);
  const Array b = cloud_set(100, 32);
  const double nna = mmd_cov_1nna(a, b).nna;
  const bool pass = r.passed() && single == 6.0 && nna >= 0.40 && nna <= 0.60;
  return {pass, std::string("knn ") + (r.passed() ? "exact" : "MISMATCH") + fmt(", chamfer single point %.6g, 1-NNA null %.3f", single, nna)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. two training runs with one seed give identical checkpoints
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("hebm_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_dataset((dir / "data").string(), gen_toy2d("mixture", 1000, 2));
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "statistic.kind = raw_moment\ntraining.epochs = 30\nmodel.hidden = 64,64\nthreads = 1\nseed = 11\n";
  }
  std::ostringstream log;
  for (const char* out : {"a", "b"}) {
    cli::cmd_train({(dir / "run.cfg").string(), (dir / "data").string(), (dir / out).string(), false, std::nullopt},
                   log);
  }
  const std::string a = slurp((dir / "a" / "model.ckpt").string());
  const std::string b = slurp((dir / "b" / "model.ckpt").string());
  fs::remove_all(dir);
  return {!a.empty() && a == b, std::to_string(a.size()) + " byte checkpoints " + (a == b ? "identical" : "differ")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"statistics matching on the oracle catalog", theorem1},
      {"gradient integrity", gradients},
      {"score matching on N(0,1)", gaussian_score},
      {"Delta_T ablation on images and point clouds", delta_t_ablation},
      {"validity direction on molecules", validity_direction},
      {"sine control statistic", sine_control},
      {"oracle NLL with a gap statistic", oracle_nll},
      {"kd-tree exactness and metric cases", knn_and_metrics},
      {"training determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("criterion %zu %s: %s  [%.1f s]  %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
