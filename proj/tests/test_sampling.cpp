#include <gtest/gtest.h>

#include <algorithm>

#include "hebm/sampling.hpp"
#include "test_support.hpp"

using namespace hebm;

namespace {

const ScoreFn kZeroScore = [](std::span<const double> x, double) { return std::vector<double>(x.size(), 0.0); };
const ScoreFn kStandardNormal = [](std::span<const double> x, double) {
  std::vector<double> s(x.begin(), x.end());
  for (double& v : s) v = -v;
  return s;
};

double energy_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  auto mean_abs = [](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (double x : u) {
      for (double y : v) s += std::abs(x - y);
    }
    return s / static_cast<double>(u.size() * v.size());
  };
  return 2.0 * mean_abs(a, b) - mean_abs(a, a) - mean_abs(b, b);
}

/// Permutation p-value of the two-sample energy distance.
double energy_test_pvalue(std::vector<double> a, std::vector<double> b, Rng& rng, int perms = 199) {
  const double observed = energy_statistic(a, b);
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  int at_least = 0;
  for (int p = 0; p < perms; ++p) {
    std::shuffle(pooled.begin(), pooled.end(), rng.engine());
    std::vector<double> x(pooled.begin(), pooled.begin() + a.size());
    std::vector<double> y(pooled.begin() + a.size(), pooled.end());
    at_least += energy_statistic(x, y) >= observed ? 1 : 0;
  }
  return (1.0 + at_least) / (1.0 + perms);
}

}  // namespace

TEST(LangevinStep, ZeroScoreZeroStepIsIdentity) {
  Rng rng(1);
  std::vector<double> x{0.3, -1.2};
  langevin_step(kZeroScore, x, 1.0, 0.0, rng);
  EXPECT_EQ(x, (std::vector<double>{0.3, -1.2}));
}

TEST(LangevinStep, ZeroScoreIncrementIsGaussianWithVarianceEps) {
  Rng rng(2);
  const double eps = 0.04;
  const std::size_t n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x{1.0};
    langevin_step(kZeroScore, x, 1.0, eps, rng);
    const double dx = x[0] - 1.0;
    sum += dx;
    sum2 += dx * dx;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  EXPECT_LE(std::abs(mean), 4.0 * std::sqrt(eps / n));
  EXPECT_NEAR(var / eps, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(LangevinStep, StandardNormalScoreIsStationary) {
  SamplerConfig c;
  c.steps_per_level = 500;
  c.eps = 0.02;
  c.denoise = false;
  c.seed = 3;
  const Array s = sample(kStandardNormal, 1, 10000, NoiseSchedule::from_sigmas({1.0}), c);
  double sum = 0.0, sum2 = 0.0;
  for (double v : s.data()) {
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / 10000.0;
  const double var = sum2 / 10000.0 - mean * mean;
  EXPECT_LE(std::abs(mean), 0.05);
  EXPECT_GE(var, 0.9);
  EXPECT_LE(var, 1.1);
}

TEST(Sample, EmptyRequestGivesEmptySet) {
  SamplerConfig c;
  const Array s = sample(kZeroScore, 3, 0, NoiseSchedule::from_sigmas({1.0}), c);
  EXPECT_EQ(s.rows(), 0u);
}

TEST(Sample, DeterministicAndThreadCountInvariant) {
  SamplerConfig c;
  c.steps_per_level = 20;
  c.eps = 0.01;
  c.seed = 9;
  auto sched = NoiseSchedule::geometric(2.0, 0.1, 4);
  const Array a = sample(kStandardNormal, 2, 37, sched, c);
  const Array b = sample(kStandardNormal, 2, 37, sched, c);
  EXPECT_EQ(a, b);
  c.threads = 4;
  EXPECT_EQ(sample(kStandardNormal, 2, 37, sched, c), a);
}

TEST(Sample, ChainsAreIndependentStreams) {
  SamplerConfig c;
  c.steps_per_level = 10;
  c.eps = 0.01;
  c.seed = 5;
  auto sched = NoiseSchedule::geometric(2.0, 0.1, 3);
  const Array all = sample(kStandardNormal, 2, 10, sched, c);
  // chain 7 alone reproduces row 7
  std::vector<double> x(2);
  run_chain(kStandardNormal, x, sched, c, 7);
  EXPECT_EQ(x[0], all(7, 0));
  EXPECT_EQ(x[1], all(7, 1));
}

TEST(Sample, ZeroScoreTerminalVarianceMatchesInjectedNoise) {
  SamplerConfig c;
  c.steps_per_level = 5;
  c.eps = 1e-3;
  c.denoise = false;
  c.seed = 11;
  auto sched = NoiseSchedule::geometric(1.0, 0.2, 4);
  double expected = sched.largest() * sched.largest();
  for (double s : sched.sigmas) expected += c.steps_per_level * c.eps * s * s / (sched.smallest() * sched.smallest());
  const Array out = sample(kZeroScore, 4, 20000, sched, c);
  double sum2 = 0.0;
  for (double v : out.data()) sum2 += v * v;
  EXPECT_NEAR(sum2 / out.size() / expected, 1.0, 0.02);
}

TEST(Sample, NonFiniteStateReportsLevelAndStep) {
  const ScoreFn explode = [](std::span<const double> x, double) {
    return std::vector<double>(x.size(), std::numeric_limits<double>::infinity());
  };
  SamplerConfig c;
  c.steps_per_level = 3;
  try {
    sample(explode, 1, 2, NoiseSchedule::from_sigmas({1.0, 0.5}), c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("level 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
  }
}

TEST(Sample, InvalidConfigIsConfigError) {
  SamplerConfig c;
  c.steps_per_level = 0;
  EXPECT_THROW(sample(kZeroScore, 1, 1, NoiseSchedule::from_sigmas({1.0}), c), ConfigError);
}

// Trained on N(0, 1): samples pass an energy-distance two-sample test at alpha = 0.01.
TEST(Sample, TrainedGaussianModelPassesTwoSampleTest) {
  Rng rng(21);
  Array data({1000, 1});
  for (double& v : data.data()) v = rng.normal();
  ScoreModel m = ScoreModel::create(StatisticFn::none(1), {32, 32}, Activation::tanh, rng);
  auto sched = NoiseSchedule::geometric(3.0, 0.1, 6);
  TrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 64;
  tc.lr = 3e-3;
  tc.decay_start = 0.5;
  train(m, data, sched, tc);

  SamplerConfig sc;
  sc.steps_per_level = 100;
  sc.eps = default_step_size(sched);
  sc.seed = 4;
  const Array s = sample(m, 300, sched, sc);
  std::vector<double> fresh(300);
  for (double& v : fresh) v = rng.normal();
  EXPECT_GT(energy_test_pvalue(s.values(), fresh, rng), 0.01);
}
