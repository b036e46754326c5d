#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hebm/errors.hpp"

namespace hebm {

/// Shortest round-trip text for a double (17 significant digits).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool parse_double(std::string_view text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

/**
 * Text checkpoint shared by every serialized model.
 *
 *     HEBM v1
 *     <header lines...>
 *     param <name> <count>
 *     <count whitespace-separated floats>
 *
 * Header lines are free-form records whose first token is not `param`.
 */
struct Checkpoint {
  std::vector<std::string> header;
  std::vector<std::pair<std::string, std::vector<double>>> params;

  const std::vector<double>& param(const std::string& name) const {
    for (const auto& [n, v] : params) {
      if (n == name) return v;
    }
    throw ParseError("checkpoint", 0, "missing parameter block '" + name + "'");
  }

  /// First header line whose leading token equals `key`, tokenized.
  std::vector<std::string> header_record(const std::string& key) const {
    for (const auto& line : header) {
      auto toks = split_ws(line);
      if (!toks.empty() && toks[0] == key) return toks;
    }
    throw ParseError("checkpoint", 0, "missing header record '" + key + "'");
  }
};

inline std::string to_text(const Checkpoint& ckpt) {
  std::string out = "HEBM v1\n";
  for (const auto& line : ckpt.header) out += line + "\n";
  for (const auto& [name, values] : ckpt.params) {
    out += "param " + name + " " + std::to_string(values.size()) + "\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      out += format_double(values[i]);
      out += (i + 1) % 6 == 0 || i + 1 == values.size() ? '\n' : ' ';
    }
  }
  return out;
}

inline Checkpoint parse_checkpoint(std::istream& in, const std::string& where = "checkpoint") {
  Checkpoint ckpt;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line) || line != "HEBM v1") throw ParseError(where, 1, "expected header 'HEBM v1'");
  ++lineno;

  std::vector<double>* block = nullptr;
  std::size_t remaining = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (remaining > 0) {
      for (const auto& tok : toks) {
        double v;
        if (!parse_double(tok, v)) throw ParseError(where, lineno, "bad float '" + tok + "'");
        if (remaining == 0) throw ParseError(where, lineno, "too many values in parameter block");
        block->push_back(v);
        --remaining;
      }
      continue;
    }
    if (toks[0] == "param") {
      if (toks.size() != 3) throw ParseError(where, lineno, "expected 'param <name> <count>'");
      std::size_t count = 0;
      auto [p, ec] = std::from_chars(toks[2].data(), toks[2].data() + toks[2].size(), count);
      if (ec != std::errc() || p != toks[2].data() + toks[2].size()) {
        throw ParseError(where, lineno, "bad parameter count '" + toks[2] + "'");
      }
      ckpt.params.emplace_back(toks[1], std::vector<double>{});
      block = &ckpt.params.back().second;
      block->reserve(count);
      remaining = count;
    } else if (ckpt.params.empty()) {
      ckpt.header.push_back(line);
    } else {
      throw ParseError(where, lineno, "unexpected record after parameter blocks");
    }
  }
  if (remaining > 0) throw ParseError(where, lineno, "truncated parameter block");
  return ckpt;
}

inline Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  return parse_checkpoint(in);
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
  out << to_text(ckpt);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open checkpoint '" + path + "'");
  return parse_checkpoint(in, path);
}

}  // namespace hebm
