#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hebm/datasets.hpp"
#include "hebm/errors.hpp"
#include "hebm/hybrid_model.hpp"
#include "hebm/numcore/checkpoint.hpp"
#include "hebm/sampling.hpp"
#include "hebm/training.hpp"

namespace hebm {

/**
 * Flat `key = value` run configuration with dotted section prefixes.
 *
 * Every known key has a default; unknown keys are rejected. `#` starts a
 * comment. The resolved form lists every key in a fixed order.
 */
class Config {
 public:
  Config() {
    for (const auto& [k, v] : defaults()) values_.emplace(k, v);
  }

  static const std::vector<std::pair<std::string, std::string>>& defaults() {
    static const std::vector<std::pair<std::string, std::string>> d{
        {"model.hidden", "128,128"},
        {"model.activation", "tanh"},
        {"schedule.levels", "10"},
        {"schedule.sigma_max", "auto"},
        {"schedule.sigma_min", "0.01"},
        {"training.epochs", "100"},
        {"training.batch_size", "128"},
        {"training.lr", "0.001"},
        {"training.lr_eta", "0.01"},
        {"training.decay_start", "1"},
        {"training.mode", "stochastic"},
        {"training.antithetic", "false"},
        {"training.statistic_at", "perturbed"},
        {"training.checkpoint_every", "0"},
        {"training.divergence_threshold", "1e6"},
        {"sampling.steps_per_level", "100"},
        {"sampling.eps", "auto"},
        {"sampling.denoise", "true"},
        {"statistic.kind", "none"},
        {"statistic.k", "8"},
        {"statistic.order", "2"},
        {"statistic.interior_h", "auto"},
        {"statistic.interior_w", "auto"},
        {"dataset.path", ""},
        {"seed", "0"},
        {"threads", "1"},
    };
    return d;
  }

  static Config parse(const std::string& text, const std::string& where = "config") {
    Config c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ":" + std::to_string(lineno) + ": expected 'key = value'");
      c.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  bool is_auto(const std::string& key) const { return get(key) == "auto"; }

  double number(const std::string& key) const {
    double v;
    if (!parse_double(get(key), v)) throw ConfigError("config key '" + key + "': expected a number, got '" + get(key) + "'");
    return v;
  }

  std::size_t count(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + s + "'");
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(get(key));
    for (std::string tok; std::getline(ss, tok, ',');) {
      tok = trim(tok);
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size() || v == 0) {
        throw ConfigError("config key '" + key + "': expected a comma-separated list of positive integers");
      }
      out.push_back(v);
    }
    return out;
  }

  /// Applies HEBM_SEED, then an explicit seed, in increasing precedence.
  void apply_seed_overrides(std::optional<std::uint64_t> explicit_seed) {
    if (const char* env = std::getenv("HEBM_SEED"); env && *env) {
      std::uint64_t v = 0;
      const std::string s = env;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("HEBM_SEED must be a non-negative integer");
      set("seed", s);
    }
    if (explicit_seed) set("seed", std::to_string(*explicit_seed));
  }

  std::uint64_t seed() const {
    const std::string& s = get("seed");
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config key 'seed': expected an integer");
    return v;
  }

  std::string resolved_text() const {
    std::string out;
    for (const auto& [k, v] : defaults()) out += k + " = " + values_.at(k) + "\n";
    return out;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = count("training.epochs");
    t.batch_size = count("training.batch_size");
    t.lr = number("training.lr");
    t.lr_eta = number("training.lr_eta");
    t.decay_start = number("training.decay_start");
    const std::string& mode = get("training.mode");
    if (mode == "stochastic") {
      t.mode = NoiseMode::stochastic;
    } else if (mode == "exact") {
      t.mode = NoiseMode::exact;
    } else {
      throw ConfigError("config key 'training.mode': expected stochastic or exact, got '" + mode + "'");
    }
    t.antithetic = flag("training.antithetic");
    const std::string& at = get("training.statistic_at");
    if (at == "perturbed") {
      t.statistic_at = StatisticPoint::perturbed;
    } else if (at == "clean") {
      t.statistic_at = StatisticPoint::clean;
    } else {
      throw ConfigError("config key 'training.statistic_at': expected perturbed or clean, got '" + at + "'");
    }
    t.checkpoint_every = count("training.checkpoint_every");
    t.divergence_threshold = number("training.divergence_threshold");
    t.seed = seed();
    t.validate();
    return t;
  }

  NoiseSchedule schedule(const Array& data) const {
    const double sigma_max = is_auto("schedule.sigma_max") ? estimate_sigma_max(data) : number("schedule.sigma_max");
    return NoiseSchedule::geometric(sigma_max, number("schedule.sigma_min"), count("schedule.levels"));
  }

  SamplerConfig sampler_config(const NoiseSchedule& schedule) const {
    SamplerConfig s;
    s.steps_per_level = count("sampling.steps_per_level");
    s.eps = is_auto("sampling.eps") ? default_step_size(schedule) : number("sampling.eps");
    s.denoise = flag("sampling.denoise");
    s.seed = seed();
    s.threads = count("threads");
    s.validate();
    return s;
  }

  Activation activation() const {
    try {
      return parse_activation(get("model.activation"));
    } catch (const Error&) {
      throw ConfigError("config key 'model.activation': unknown activation '" + get("model.activation") + "'");
    }
  }

  /// The configured statistic, shaped by the dataset it will be trained on.
  StatisticFn statistic(const Dataset& data) const {
    const std::string& kind = get("statistic.kind");
    const DataLayout& layout = data.layout;
    if (kind == "none") return StatisticFn::none(layout.dim());
    if (kind == "sine") return StatisticFn::sine(layout.dim());
    if (kind == "raw_moment") return StatisticFn::raw_moment(layout.dim(), static_cast<int>(count("statistic.order")));
    if (kind == "margin") {
      if (layout.kind != DataKind::margin_images) throw ConfigError("margin statistic needs an image dataset");
      auto interior = [&](const std::string& key, const std::string& param) -> std::size_t {
        if (!is_auto(key)) return count(key);
        for (const auto& [k, v] : data.params) {
          if (k == param) return std::stoul(v);
        }
        throw ConfigError("config key '" + key + "' is auto but the dataset does not record '" + param + "'");
      };
      return StatisticFn::margin(MarginGeometry::centered(layout.h, layout.w, interior("statistic.interior_h", "interior_h"),
                                                          interior("statistic.interior_w", "interior_w")));
    }
    if (kind == "laplacian_smoothness") {
      if (layout.kind != DataKind::point_clouds) throw ConfigError("laplacian statistic needs a point cloud dataset");
      return StatisticFn::laplacian(layout.n_points, count("statistic.k"));
    }
    if (kind == "valency") {
      if (layout.kind != DataKind::molecules) throw ConfigError("valency statistic needs a molecule dataset");
      return StatisticFn::valency(layout.molecule);
    }
    throw ConfigError("config key 'statistic.kind': unknown statistic '" + kind + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace hebm
