#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hebm/config.hpp"
#include "hebm/datasets.hpp"
#include "hebm/hybrid_model.hpp"
#include "hebm/metrics.hpp"
#include "hebm/oracle.hpp"
#include "hebm/sampling.hpp"
#include "hebm/training.hpp"
#include "hebm/verify.hpp"

namespace hebm::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNumeric = 3 };

/// A trained model together with everything needed to sample and evaluate it.
struct Run {
  ScoreModel model;
  DataLayout layout;
  NoiseSchedule schedule;
  SamplerConfig sampler;
};

inline Checkpoint to_checkpoint(const Run& run) {
  Checkpoint c;
  c.header.push_back("layout " + run.layout.describe());
  std::string sched = "schedule " + std::to_string(run.schedule.levels());
  for (double s : run.schedule.sigmas) sched += " " + format_double(s);
  c.header.push_back(sched);
  c.header.push_back("sampler steps_per_level=" + std::to_string(run.sampler.steps_per_level) +
                     " eps=" + format_double(run.sampler.eps) + " denoise=" + (run.sampler.denoise ? "1" : "0") +
                     " seed=" + std::to_string(run.sampler.seed) + " threads=" + std::to_string(run.sampler.threads));
  append_to_checkpoint(run.model, c);
  return c;
}

inline Run run_from_checkpoint(const Checkpoint& c) {
  auto layout_tokens = c.header_record("layout");
  layout_tokens.erase(layout_tokens.begin());
  const DataLayout layout = DataLayout::parse(layout_tokens);

  const auto sched = c.header_record("schedule");
  if (sched.size() < 2) throw ParseError("checkpoint", 0, "malformed 'schedule' record");
  const std::size_t k = std::stoul(sched[1]);
  if (sched.size() != k + 2) throw ParseError("checkpoint", 0, "schedule level count does not match its values");
  std::vector<double> sigmas(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!parse_double(sched[i + 2], sigmas[i])) throw ParseError("checkpoint", 0, "bad noise level '" + sched[i + 2] + "'");
  }

  const auto smp = c.header_record("sampler");
  std::map<std::string, std::string> kv;
  for (std::size_t i = 1; i < smp.size(); ++i) {
    const auto eq = smp[i].find('=');
    if (eq == std::string::npos) throw ParseError("checkpoint", 0, "bad sampler field '" + smp[i] + "'");
    kv[smp[i].substr(0, eq)] = smp[i].substr(eq + 1);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("checkpoint", 0, "sampler field '" + key + "' missing");
    return it->second;
  };
  SamplerConfig sampler;
  sampler.steps_per_level = std::stoul(field("steps_per_level"));
  if (!parse_double(field("eps"), sampler.eps)) throw ParseError("checkpoint", 0, "bad sampler eps");
  sampler.denoise = field("denoise") == "1";
  sampler.seed = std::stoull(field("seed"));
  sampler.threads = std::stoul(field("threads"));

  Run run{model_from_checkpoint(c), layout, NoiseSchedule::from_sigmas(std::move(sigmas)), sampler};
  if (run.layout.dim() != run.model.dim()) throw ParseError("checkpoint", 0, "layout does not match the model");
  return run;
}

inline Run load_run(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ArgumentError("checkpoint '" + path + "' does not exist");
  return run_from_checkpoint(read_checkpoint(path));
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOutcome {
  Run run;
  std::vector<EpochRecord> log;
};

/// Builds and trains a model as the config describes. The statistic stays in
/// the model under `no_statistic`; only eta is frozen at zero.
inline TrainOutcome train_from_config(const Config& config, const Dataset& data, bool no_statistic,
                                      const EpochCallback& on_epoch = {}) {
  TrainConfig tc = config.train_config();
  tc.freeze_eta = no_statistic;
  Rng init(config.seed(), 0x696e);
  const NoiseSchedule schedule = config.schedule(data.items);
  Run run{ScoreModel::create(config.statistic(data), config.counts("model.hidden"), config.activation(), init),
          data.layout, schedule, config.sampler_config(schedule)};
  auto log = train(run.model, data.items, run.schedule, tc, on_epoch);
  return {std::move(run), std::move(log)};
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool no_statistic = false;
  std::optional<std::uint64_t> seed;
};

inline Config resolve_config(const std::string& path, std::optional<std::uint64_t> seed) {
  Config c = path.empty() ? Config() : Config::load(path);
  c.apply_seed_overrides(seed);
  return c;
}

inline void cmd_train(const TrainArgs& args, std::ostream& out) {
  namespace fs = std::filesystem;
  Config config = resolve_config(args.config, args.seed);
  if (!args.data.empty()) config.set("dataset.path", args.data);
  const std::string data_path = config.get("dataset.path");
  if (data_path.empty()) throw ConfigError("no dataset: pass --data or set dataset.path");
  if (args.out.empty()) throw ConfigError("no output directory: pass --out");
  const Dataset data = read_dataset(data_path);
  const TrainConfig checked = config.train_config();

  fs::create_directories(args.out);
  const std::string resolved = config.resolved_text() + "no_statistic = " + (args.no_statistic ? "true" : "false") + "\n";
  detail::write_text((fs::path(args.out) / "config.resolved").string(), resolved);
  std::ofstream log((fs::path(args.out) / "train.log").string(), std::ios::binary);
  if (!log) throw ArgumentError("cannot write to '" + args.out + "'");
  std::istringstream lines(resolved);
  for (std::string line; std::getline(lines, line);) log << "# " << line << "\n";

  const NoiseSchedule schedule = config.schedule(data.items);
  const SamplerConfig sampler = config.sampler_config(schedule);
  auto on_epoch = [&](const EpochRecord& rec, const ScoreModel& m) {
    log << format_log_line(rec) << "\n";
    log.flush();
    if (checked.checkpoint_every > 0 && (rec.epoch + 1) % checked.checkpoint_every == 0) {
      write_checkpoint((fs::path(args.out) / ("model.epoch" + std::to_string(rec.epoch + 1) + ".ckpt")).string(),
                       to_checkpoint(Run{m, data.layout, schedule, sampler}));
    }
  };
  const TrainOutcome result = train_from_config(config, data, args.no_statistic, on_epoch);
  write_checkpoint((fs::path(args.out) / "model.ckpt").string(), to_checkpoint(result.run));
  out << "trained " << result.log.size() << " epochs on " << data.size() << " items; final loss "
      << format_double(result.log.back().loss) << "\n";
  if (result.run.model.statistic.kind() != StatisticKind::none) {
    out << "eta";
    for (double e : result.run.model.eta) out << " " << format_double(e);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

/// Draws n samples; molecule samples are quantized to graphs and re-flattened.
inline Array draw_samples(const Run& run, std::size_t n, std::uint64_t seed) {
  SamplerConfig sc = run.sampler;
  sc.seed = seed;
  Array s = sample(run.model, n, run.schedule, sc);
  if (run.layout.kind == DataKind::molecules) {
    for (std::size_t r = 0; r < s.rows(); ++r) {
      const auto flat = flatten(quantize_molecule(s.row(r), run.layout.molecule), run.layout.molecule);
      std::copy(flat.begin(), flat.end(), s.row(r).begin());
    }
  }
  return s;
}

struct SampleArgs {
  std::string ckpt;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline void cmd_sample(const SampleArgs& args, std::ostream& out) {
  if (args.out.empty()) throw ConfigError("no output directory: pass --out");
  const Run run = load_run(args.ckpt);
  const std::uint64_t seed = args.seed.value_or(run.sampler.seed);
  Dataset ds;
  ds.layout = run.layout;
  ds.seed = seed;
  ds.params = {{"source", "sample"}, {"n", std::to_string(args.n)}};
  ds.items = draw_samples(run, args.n, seed);
  write_dataset(args.out, ds);
  out << "wrote " << args.n << " samples to " << args.out << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/**
 * Mean NLL of one-dimensional data under the density whose log-gradient is
 * the model score at the smallest noise level.
 *
 * The box starts at the data range widened by six standard deviations and
 * doubles its margin until the boundary mass is negligible.
 */
inline MetricEntry score_nll(const Run& run, const Array& data) {
  if (run.model.dim() != 1) throw ConfigError("the nll metric needs one-dimensional data");
  double lo = data[0], hi = data[0], sum = 0.0, sum2 = 0.0;
  const std::size_t n = data.rows();
  for (std::size_t i = 0; i < n; ++i) {
    lo = std::min(lo, data[i]);
    hi = std::max(hi, data[i]);
    sum += data[i];
    sum2 += data[i] * data[i];
  }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(std::max(sum2 / static_cast<double>(n) - mean * mean, 0.0));
  double margin = 6.0 * std::max(sd, 0.1);
  const double sigma = run.schedule.smallest();
  const ScoreModel& model = run.model;
  auto score1 = [&model, sigma](double x) {
    const double v[1] = {x};
    return score(model, v, sigma)[0];
  };
  for (int attempt = 0;; ++attempt) {
    const oracle::DensitySpec spec = oracle::integrated_score_density(score1, lo - margin, hi + margin);
    double log_z;
    try {
      log_z = oracle::log_partition(spec);
    } catch (const NumericError&) {
      if (attempt == 5) throw;
      margin *= 2.0;
      continue;
    }
    double total = 0.0, total2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = log_z - spec.log_unnormalized(data.row(i));
      total += v;
      total2 += v * v;
    }
    const double m = total / static_cast<double>(n);
    const double var = n > 1 ? std::max(total2 / static_cast<double>(n) - m * m, 0.0) * n / (n - 1.0) : 0.0;
    return {"nll", m, std::sqrt(var / static_cast<double>(n)), n};
  }
}

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> m{"delta_t", "nll", "validity", "mmd", "cov", "1nna"};
  return m;
}

/// Evaluates the requested metrics; delta_t is added whenever the model has a statistic.
inline MetricReport evaluate(const Run& run, const Dataset& data, const Array& samples,
                             std::vector<std::string> metrics) {
  if (metrics.empty()) throw ConfigError("no metrics requested");
  for (const auto& m : metrics) {
    if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end()) {
      throw ConfigError("unknown metric '" + m + "'");
    }
  }
  if (data.layout.dim() != run.model.dim()) throw ConfigError("dataset layout does not match the checkpoint");
  if (samples.rank() != 2 || samples.cols() != run.model.dim()) throw ConfigError("samples do not match the checkpoint");
  const bool has_stat = run.model.statistic.kind() != StatisticKind::none;
  if (has_stat && std::find(metrics.begin(), metrics.end(), "delta_t") == metrics.end()) {
    metrics.insert(metrics.begin(), "delta_t");
  }

  MetricReport report;
  bool set_done = false;
  for (const auto& m : metrics) {
    if (m == "delta_t") {
      if (!has_stat) throw ConfigError("delta_t needs a model with a statistic");
      const DeltaT d = delta_t(samples, data.items, run.model.statistic);
      if (d.abs_diff.size() == 1) {
        report.add("delta_t", d.abs_diff[0], d.stderr_[0], samples.rows());
      } else {
        for (std::size_t j = 0; j < d.abs_diff.size(); ++j) {
          report.add("delta_t[" + std::to_string(j) + "]", d.abs_diff[j], d.stderr_[j], samples.rows());
        }
      }
    } else if (m == "nll") {
      report.entries.push_back(score_nll(run, data.items));
    } else if (m == "validity") {
      if (run.layout.kind != DataKind::molecules) throw ConfigError("validity needs a molecule dataset");
      const double p = validity_ratio(decode_molecules(samples, run.layout.molecule));
      report.add("validity", p, std::sqrt(p * (1.0 - p) / static_cast<double>(samples.rows())), samples.rows());
    } else if (!set_done) {
      if (run.layout.kind != DataKind::point_clouds) throw ConfigError(m + " needs a point cloud dataset");
      const SetMetrics s = mmd_cov_1nna(samples, data.items);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      report.add("mmd_chamfer", s.mmd, nan, samples.rows());
      report.add("cov_chamfer", s.cov, nan, samples.rows());
      report.add("1nna_chamfer", s.nna, nan, samples.rows());
      set_done = true;
    }
  }
  return report;
}

inline std::string format_metric_table(const MetricReport& r) {
  std::size_t width = 6;
  for (const auto& e : r.entries) width = std::max(width, e.name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %14s  %12s  %8s\n", static_cast<int>(width), "metric", "value", "stderr", "count");
  out += buf;
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%-*s  %14.8g  %12.4g  %8zu\n", static_cast<int>(width), e.name.c_str(), e.value,
                  e.stderr_, e.count);
    out += buf;
  }
  return out;
}

/// One `metric <name> <value> <stderr> <count>` record per line.
inline std::string format_metric_records(const MetricReport& r) {
  std::string out;
  for (const auto& e : r.entries) {
    out += "metric " + e.name + " " + format_double(e.value) + " " + format_double(e.stderr_) + " " +
           std::to_string(e.count) + "\n";
  }
  return out;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::vector<std::string> metrics;
  std::string samples;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline MetricReport cmd_eval(const EvalArgs& args, std::ostream& out) {
  std::vector<std::string> metrics;
  for (const auto& m : args.metrics) {
    if (!m.empty()) metrics.push_back(m);
  }
  if (metrics.empty()) throw ConfigError("no metrics requested: pass --metrics");
  const Run run = load_run(args.ckpt);
  if (args.data.empty()) throw ConfigError("no dataset: pass --data");
  const Dataset data = read_dataset(args.data);
  Array samples;
  const std::uint64_t seed = args.seed.value_or(run.sampler.seed);
  const bool needs_samples = std::any_of(metrics.begin(), metrics.end(), [](const std::string& m) {
    return m != "nll";
  }) || run.model.statistic.kind() != StatisticKind::none;
  if (!args.samples.empty()) {
    samples = read_dataset(args.samples).items;
  } else if (needs_samples) {
    samples = draw_samples(run, args.n ? args.n : data.size(), seed);
  } else {
    samples = Array({0, run.model.dim()});
  }
  MetricReport report = evaluate(run, data, samples, metrics);
  report.seed = seed;
  out << format_metric_table(report) << format_metric_records(report);
  if (!args.out.empty()) detail::write_text(args.out, format_metric_records(report));
  return report;
}

// ---------------------------------------------------------------------------
// verify, gen-data
// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string suite = "all";
  bool inject_fault = false;
  std::uint64_t seed = 0;
};

/// Returns whether every requested check passed.
inline bool cmd_verify(const VerifyArgs& args, std::ostream& out) {
  std::vector<std::string> suites;
  if (args.suite == "all") {
    suites = verify_suites();
  } else {
    suites = {args.suite};
  }
  VerifyOptions opt;
  opt.seed = args.seed;
  opt.inject_fault = args.inject_fault;
  bool ok = true;
  for (const auto& s : suites) {
    const VerifyReport r = run_verify_suite(s, opt);
    r.print(out);
    ok = ok && r.passed();
  }
  return ok;
}

struct GenDataArgs {
  std::string kind;
  std::string params;
  std::uint64_t seed = 0;
  std::string out;
};

/// Parses `k=v,k=v` against per-kind defaults; unknown keys are rejected.
inline std::map<std::string, std::string> parse_params(const std::string& text,
                                                       std::map<std::string, std::string> defaults) {
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("bad parameter '" + tok + "': expected key=value");
    const std::string key = tok.substr(0, eq);
    auto it = defaults.find(key);
    if (it == defaults.end()) throw ConfigError("unknown parameter '" + key + "'");
    it->second = tok.substr(eq + 1);
  }
  return defaults;
}

inline Dataset generate(const std::string& kind, const std::string& params, std::uint64_t seed) {
  auto num = [](const std::map<std::string, std::string>& p, const std::string& k) -> std::size_t {
    const std::string& s = p.at(k);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("parameter '" + k + "' must be an integer");
    return v;
  };
  if (kind == "toy2d") {
    const auto p = parse_params(params, {{"shape", "gaussian"}, {"n", "1000"}});
    return gen_toy2d(p.at("shape"), num(p, "n"), seed);
  }
  if (kind == "margin_images") {
    const auto p = parse_params(params, {{"h", "12"}, {"w", "12"}, {"interior_h", "8"}, {"interior_w", "6"}, {"n", "500"}});
    return gen_margin_images(num(p, "h"), num(p, "w"), num(p, "interior_h"), num(p, "interior_w"), num(p, "n"), seed);
  }
  if (kind == "point_clouds") {
    const auto p = parse_params(params, {{"shape", "two_spheres"}, {"points", "64"}, {"n", "200"}, {"noise", "0.01"}});
    double noise;
    if (!parse_double(p.at("noise"), noise)) throw ConfigError("parameter 'noise' must be a number");
    return gen_point_clouds(p.at("shape"), num(p, "points"), num(p, "n"), noise, seed);
  }
  if (kind == "molecules") {
    const auto p = parse_params(params, {{"atoms", "5"}, {"valences", "4:3:2"}, {"n", "1000"}});
    std::vector<int> valences;
    std::stringstream ss(p.at("valences"));
    for (std::string tok; std::getline(ss, tok, ':');) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || v <= 0) {
        throw ConfigError("parameter 'valences' must be colon-separated positive integers");
      }
      valences.push_back(v);
    }
    return gen_molecules(num(p, "atoms"), valences, num(p, "n"), seed);
  }
  throw ConfigError("unknown dataset kind '" + kind + "'");
}

inline void cmd_gendata(const GenDataArgs& args, std::ostream& out) {
  if (args.out.empty()) throw ConfigError("no output directory: pass --out");
  const Dataset ds = generate(args.kind, args.params, args.seed);
  write_dataset(args.out, ds);
  out << "wrote " << ds.size() << " " << to_string(ds.layout.kind) << " items to " << args.out << "\n";
}

/// Runs a command body, mapping failures onto the exit-code contract.
inline int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace hebm::cli
