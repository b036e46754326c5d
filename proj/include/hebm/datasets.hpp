#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "hebm/numcore/array.hpp"
#include "hebm/numcore/checkpoint.hpp"
#include "hebm/rng.hpp"
#include "hebm/statistics.hpp"

namespace hebm {

enum class DataKind { toy2d, margin_images, point_clouds, molecules };

inline std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::toy2d: return "toy2d";
    case DataKind::margin_images: return "margin_images";
    case DataKind::point_clouds: return "point_clouds";
    case DataKind::molecules: return "molecules";
  }
  return "?";
}

inline DataKind parse_data_kind(const std::string& s) {
  if (s == "toy2d") return DataKind::toy2d;
  if (s == "margin_images") return DataKind::margin_images;
  if (s == "point_clouds") return DataKind::point_clouds;
  if (s == "molecules") return DataKind::molecules;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

/// How one flat item vector maps back onto its structured form.
struct DataLayout {
  DataKind kind = DataKind::toy2d;
  std::size_t vector_dim = 2;  // toy2d
  std::size_t h = 0, w = 0;    // images
  std::size_t n_points = 0;    // point clouds
  MoleculeLayout molecule;     // molecules

  std::size_t dim() const {
    switch (kind) {
      case DataKind::toy2d: return vector_dim;
      case DataKind::margin_images: return h * w;
      case DataKind::point_clouds: return 3 * n_points;
      case DataKind::molecules: return molecule.flat_dim();
    }
    return 0;
  }

  std::string describe() const {
    std::string s = to_string(kind);
    switch (kind) {
      case DataKind::toy2d: s += " dim=" + std::to_string(vector_dim); break;
      case DataKind::margin_images: s += " h=" + std::to_string(h) + " w=" + std::to_string(w); break;
      case DataKind::point_clouds: s += " points=" + std::to_string(n_points); break;
      case DataKind::molecules: {
        s += " atoms=" + std::to_string(molecule.n_atoms) + " valences=";
        for (std::size_t t = 0; t < molecule.valences.size(); ++t) {
          s += (t ? "," : "") + std::to_string(molecule.valences[t]);
        }
        break;
      }
    }
    return s;
  }

  static DataLayout parse(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw ConfigError("empty layout description");
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos) throw ConfigError("bad layout field '" + tokens[i] + "'");
      kv[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> const std::string& {
      auto it = kv.find(k);
      if (it == kv.end()) throw ConfigError("layout field '" + k + "' missing");
      return it->second;
    };
    DataLayout l;
    l.kind = parse_data_kind(tokens[0]);
    switch (l.kind) {
      case DataKind::toy2d: l.vector_dim = std::stoul(get("dim")); break;
      case DataKind::margin_images:
        l.h = std::stoul(get("h"));
        l.w = std::stoul(get("w"));
        break;
      case DataKind::point_clouds: l.n_points = std::stoul(get("points")); break;
      case DataKind::molecules: {
        l.molecule.n_atoms = std::stoul(get("atoms"));
        std::stringstream ss(get("valences"));
        for (std::string tok; std::getline(ss, tok, ',');) l.molecule.valences.push_back(std::stoi(tok));
        break;
      }
    }
    if (l.dim() == 0) throw ConfigError("layout has zero dimension");
    return l;
  }
};

/// Flat items plus the configuration that regenerates them.
struct Dataset {
  DataLayout layout;
  std::vector<std::pair<std::string, std::string>> params;
  std::uint64_t seed = 0;
  Array items;  // (n, layout.dim())

  std::size_t size() const { return items.rank() == 2 ? items.rows() : 0; }
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/**
 * Two-dimensional toy sets:
 *  - gaussian: N(0, I); mean 0, covariance I.
 *  - mixture: equal mixture of N(c, 0.25 I) for c in {(+-2, 0), (0, +-2)}; mean 0, E[x_1^2] = 2.25.
 *  - ring: radius 1 + N(0, 0.05^2) at a uniform angle; mean radius 1.
 */
inline Dataset gen_toy2d(const std::string& kind, std::size_t n, std::uint64_t seed) {
  if (kind != "gaussian" && kind != "mixture" && kind != "ring") throw ConfigError("unknown toy2d kind '" + kind + "'");
  Rng rng(seed);
  Dataset ds;
  ds.layout.kind = DataKind::toy2d;
  ds.layout.vector_dim = 2;
  ds.params = {{"kind", kind}, {"n", std::to_string(n)}};
  ds.seed = seed;
  ds.items = Array({n, 2});
  const double centers[4][2] = {{2, 0}, {-2, 0}, {0, 2}, {0, -2}};
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == "gaussian") {
      ds.items(i, 0) = rng.normal();
      ds.items(i, 1) = rng.normal();
    } else if (kind == "mixture") {
      const std::size_t c = rng.index(4);
      ds.items(i, 0) = centers[c][0] + 0.5 * rng.normal();
      ds.items(i, 1) = centers[c][1] + 0.5 * rng.normal();
    } else {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = 1.0 + 0.05 * rng.normal();
      ds.items(i, 0) = r * std::cos(angle);
      ds.items(i, 1) = r * std::sin(angle);
    }
  }
  return ds;
}

/// Smooth random blobs inside a centered interior rectangle; the margin is exactly zero. Pixels in [0, 1].
inline Dataset gen_margin_images(std::size_t h, std::size_t w, std::size_t inner_h, std::size_t inner_w,
                                 std::size_t n, std::uint64_t seed) {
  const MarginGeometry g = MarginGeometry::centered(h, w, inner_h, inner_w);
  Rng rng(seed);
  Dataset ds;
  ds.layout.kind = DataKind::margin_images;
  ds.layout.h = h;
  ds.layout.w = w;
  ds.params = {{"h", std::to_string(h)},
               {"w", std::to_string(w)},
               {"interior_h", std::to_string(inner_h)},
               {"interior_w", std::to_string(inner_w)},
               {"n", std::to_string(n)}};
  ds.seed = seed;
  ds.items = Array({n, h * w});
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t blobs = 1 + rng.index(3);
    struct Blob {
      double ci, cj, sd, amp;
    };
    std::vector<Blob> bl;
    for (std::size_t b = 0; b < blobs; ++b) {
      bl.push_back({static_cast<double>(g.top) + rng.uniform() * static_cast<double>(inner_h - 1),
                    static_cast<double>(g.left) + rng.uniform() * static_cast<double>(inner_w - 1),
                    rng.uniform(0.8, 1.6), rng.uniform(0.5, 1.0)});
    }
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        if (g.in_margin(i, j)) continue;
        double v = 0.0;
        for (const auto& b : bl) {
          const double di = static_cast<double>(i) - b.ci;
          const double dj = static_cast<double>(j) - b.cj;
          v += b.amp * std::exp(-(di * di + dj * dj) / (2.0 * b.sd * b.sd));
        }
        ds.items(k, i * w + j) = std::min(1.0, v);
      }
    }
  }
  return ds;
}

/**
 * Uniform surface samples plus isotropic Gaussian jitter of scale `noise`.
 *  - sphere: unit sphere at the origin.
 *  - plane: the square [-1, 1]^2 at z = 0.
 *  - two_spheres: radius-0.5 spheres at (+-0.75, 0, 0), half the points each.
 */
inline Dataset gen_point_clouds(const std::string& shape, std::size_t n_points, std::size_t n, double noise,
                                std::uint64_t seed) {
  if (shape != "sphere" && shape != "plane" && shape != "two_spheres") {
    throw ConfigError("unknown point cloud shape '" + shape + "'");
  }
  if (n_points == 0) throw ArgumentError("point clouds need at least one point");
  Rng rng(seed);
  Dataset ds;
  ds.layout.kind = DataKind::point_clouds;
  ds.layout.n_points = n_points;
  ds.params = {{"shape", shape}, {"points", std::to_string(n_points)}, {"n", std::to_string(n)},
               {"noise", format_double(noise)}};
  ds.seed = seed;
  ds.items = Array({n, 3 * n_points});
  auto on_sphere = [&](double radius, double cx) {
    double v[3] = {rng.normal(), rng.normal(), rng.normal()};
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return Point3{cx + radius * v[0] / norm, radius * v[1] / norm, radius * v[2] / norm};
  };
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t p = 0; p < n_points; ++p) {
      Point3 pt;
      if (shape == "sphere") {
        pt = on_sphere(1.0, 0.0);
      } else if (shape == "plane") {
        pt = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0};
      } else {
        pt = on_sphere(0.5, p < n_points / 2 ? -0.75 : 0.75);
      }
      if (noise > 0.0) {
        for (double& c : pt) c += noise * rng.normal();
      }
      for (std::size_t c = 0; c < 3; ++c) ds.items(k, 3 * p + c) = pt[c];
    }
  }
  return ds;
}

/**
 * Random valid molecules with 1..n_atoms_max atoms.
 *
 * Type 0 is reserved for empty slots (valence 0); `valences` lists the real
 * atom types, stored as types 1..k. Each new atom attaches with a single bond
 * to an earlier atom with spare valence; random extra bonds are then raised
 * only while both endpoints keep degree <= valence.
 */
inline Dataset gen_molecules(std::size_t n_atoms_max, const std::vector<int>& valences, std::size_t n,
                             std::uint64_t seed) {
  if (n_atoms_max == 0 || valences.empty()) throw ConfigError("molecules need atoms and atom types");
  for (int v : valences) {
    if (v < 1) throw ConfigError("atom valences must be positive");
  }
  MoleculeLayout layout{n_atoms_max, {0}};
  layout.valences.insert(layout.valences.end(), valences.begin(), valences.end());
  Rng rng(seed);
  Dataset ds;
  ds.layout.kind = DataKind::molecules;
  ds.layout.molecule = layout;
  std::string vs;
  for (std::size_t t = 0; t < valences.size(); ++t) vs += (t ? "," : "") + std::to_string(valences[t]);
  ds.params = {{"atoms", std::to_string(n_atoms_max)}, {"valences", vs}, {"n", std::to_string(n)}};
  ds.seed = seed;
  ds.items = Array({n, layout.flat_dim()});

  for (std::size_t k = 0; k < n; ++k) {
    MolGraph g = MolGraph::empty(n_atoms_max, layout.valences);
    const std::size_t atoms = 1 + rng.index(n_atoms_max);
    for (std::size_t i = 0; i < atoms; ++i) g.types[i] = 1 + static_cast<int>(rng.index(valences.size()));
    auto spare = [&](std::size_t i) { return g.valences[static_cast<std::size_t>(g.types[i])] - g.degree(i); };
    for (std::size_t i = 1; i < atoms; ++i) {
      std::vector<std::size_t> candidates;
      for (std::size_t j = 0; j < i; ++j) {
        if (spare(j) >= 1.0) candidates.push_back(j);
      }
      if (!candidates.empty()) g.set_bond(i, candidates[rng.index(candidates.size())], 1.0);
    }
    const std::size_t extra = atoms > 1 ? rng.index(atoms + 1) : 0;
    for (std::size_t e = 0; e < extra; ++e) {
      const std::size_t i = rng.index(atoms);
      const std::size_t j = rng.index(atoms);
      if (i == j) continue;
      if (spare(i) >= 1.0 && spare(j) >= 1.0 && g.bonds(i, j) < 3.0) g.set_bond(i, j, g.bonds(i, j) + 1.0);
    }
    const auto flat = flatten(g, layout);
    std::copy(flat.begin(), flat.end(), ds.items.row(k).begin());
  }
  return ds;
}

/// Bond orders rounded half-up into {0..3} after symmetrizing; diagonal cleared.
inline MolGraph quantize_molecule(const MolGraph& relaxed) {
  const std::size_t n = relaxed.size();
  if (relaxed.bonds.shape() != Shape{n, n}) throw ShapeError("molecule bond matrix must be n x n");
  MolGraph out{relaxed.types, Array({n, n}), relaxed.valences};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (relaxed.bonds(i, j) + relaxed.bonds(j, i));
      out.set_bond(i, j, std::clamp(std::floor(avg + 0.5), 0.0, 3.0));
    }
  }
  return out;
}

/// Decodes a relaxed flat molecule: types by argmax (lowest index on ties), bonds quantized.
inline MolGraph quantize_molecule(std::span<const double> flat, const MoleculeLayout& layout) {
  if (flat.size() != layout.flat_dim()) throw ShapeError("flat molecule has the wrong length");
  MolGraph relaxed = MolGraph::empty(layout.n_atoms, layout.valences);
  for (std::size_t i = 0; i < layout.n_atoms; ++i) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < layout.k_types(); ++t) {
      if (flat[layout.type_slot(i, t)] > flat[layout.type_slot(i, best)]) best = t;
    }
    relaxed.types[i] = static_cast<int>(best);
    for (std::size_t j = i + 1; j < layout.n_atoms; ++j) relaxed.set_bond(i, j, flat[layout.bond_slot(i, j)]);
  }
  return quantize_molecule(relaxed);
}

inline std::vector<MolGraph> decode_molecules(const Array& items, const MoleculeLayout& layout) {
  std::vector<MolGraph> out;
  out.reserve(items.rows());
  for (std::size_t r = 0; r < items.rows(); ++r) out.push_back(quantize_molecule(items.row(r), layout));
  return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
  out << text;
}

inline double parse_float(const std::string& tok, const std::string& path, std::size_t line) {
  double v;
  if (!parse_double(tok, v)) throw ParseError(path, line, "bad float '" + tok + "'");
  return v;
}

inline long parse_int(const std::string& tok, const std::string& path, std::size_t line) {
  long v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) throw ParseError(path, line, "bad integer '" + tok + "'");
  return v;
}

}  // namespace detail

/// `vec <d>` then one line of d floats.
inline void write_vector_file(const std::string& path, std::span<const double> v) {
  std::string s = "vec " + std::to_string(v.size()) + "\n";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  detail::write_text(path, s + "\n");
}

inline std::vector<double> read_vector_file(const std::string& path) {
  const auto lines = detail::read_lines(path);
  const auto head = lines.empty() ? std::vector<std::string>{} : split_ws(lines[0]);
  if (head.size() != 2 || head[0] != "vec") throw ParseError(path, 1, "expected header 'vec <d>'");
  const auto d = static_cast<std::size_t>(detail::parse_int(head[1], path, 1));
  if (lines.size() < 2) throw ParseError(path, 2, "missing values");
  const auto toks = split_ws(lines[1]);
  if (toks.size() != d) throw ParseError(path, 2, "expected " + std::to_string(d) + " values");
  std::vector<double> v;
  for (const auto& t : toks) v.push_back(detail::parse_float(t, path, 2));
  return v;
}

/// One `x y z` triple per line.
inline void write_point_cloud(const std::string& path, std::span<const double> flat) {
  const auto pts = to_points(flat);
  std::string s;
  for (const auto& p : pts) s += format_double(p[0]) + " " + format_double(p[1]) + " " + format_double(p[2]) + "\n";
  detail::write_text(path, s);
}

inline std::vector<double> read_point_cloud(const std::string& path) {
  const auto lines = detail::read_lines(path);
  std::vector<double> flat;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = split_ws(lines[i]);
    if (toks.empty()) continue;
    if (toks.size() != 3) throw ParseError(path, i + 1, "expected 'x y z'");
    for (const auto& t : toks) flat.push_back(detail::parse_float(t, path, i + 1));
  }
  return flat;
}

/// `img <h> <w>` then h lines of w comma-separated floats.
inline void write_image(const std::string& path, std::size_t h, std::size_t w, std::span<const double> pixels) {
  if (pixels.size() != h * w) throw ShapeError("image size does not match h x w");
  std::string s = "img " + std::to_string(h) + " " + std::to_string(w) + "\n";
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) s += (j ? "," : "") + format_double(pixels[i * w + j]);
    s += "\n";
  }
  detail::write_text(path, s);
}

struct Image {
  std::size_t h = 0, w = 0;
  std::vector<double> pixels;
};

inline Image read_image(const std::string& path) {
  const auto lines = detail::read_lines(path);
  const auto head = lines.empty() ? std::vector<std::string>{} : split_ws(lines[0]);
  if (head.size() != 3 || head[0] != "img") throw ParseError(path, 1, "expected header 'img <h> <w>'");
  Image img;
  img.h = static_cast<std::size_t>(detail::parse_int(head[1], path, 1));
  img.w = static_cast<std::size_t>(detail::parse_int(head[2], path, 1));
  if (lines.size() < img.h + 1) throw ParseError(path, lines.size() + 1, "missing image rows");
  for (std::size_t i = 0; i < img.h; ++i) {
    std::stringstream ss(lines[i + 1]);
    std::size_t count = 0;
    for (std::string tok; std::getline(ss, tok, ',');) {
      img.pixels.push_back(detail::parse_float(tok, path, i + 2));
      ++count;
    }
    if (count != img.w) throw ParseError(path, i + 2, "expected " + std::to_string(img.w) + " values");
  }
  return img;
}

/// `mol <n> <k_types>`, a line of n atom types, then n lines of n integer bond orders.
inline void write_molecule(const std::string& path, const MolGraph& g) {
  g.validate();
  const std::size_t n = g.size();
  std::string s = "mol " + std::to_string(n) + " " + std::to_string(g.valences.size()) + "\n";
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + std::to_string(g.types[i]);
  s += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double b = g.bonds(i, j);
      if (b != std::floor(b)) throw ArgumentError("molecule files store integer bond orders; quantize first");
      s += (j ? " " : "") + std::to_string(static_cast<long>(b));
    }
    s += "\n";
  }
  detail::write_text(path, s);
}

/// Reads a molecule; the valence table comes from the dataset layout.
inline MolGraph read_molecule(const std::string& path, const std::vector<int>& valences) {
  const auto lines = detail::read_lines(path);
  const auto head = lines.empty() ? std::vector<std::string>{} : split_ws(lines[0]);
  if (head.size() != 3 || head[0] != "mol") throw ParseError(path, 1, "expected header 'mol <n> <k_types>'");
  const auto n = static_cast<std::size_t>(detail::parse_int(head[1], path, 1));
  const auto k = static_cast<std::size_t>(detail::parse_int(head[2], path, 1));
  if (k != valences.size()) throw ParseError(path, 1, "type count does not match the valence table");
  if (lines.size() < n + 2) throw ParseError(path, lines.size() + 1, "truncated molecule");
  MolGraph g = MolGraph::empty(n, valences);
  const auto types = split_ws(lines[1]);
  if (types.size() != n) throw ParseError(path, 2, "expected " + std::to_string(n) + " atom types");
  for (std::size_t i = 0; i < n; ++i) g.types[i] = static_cast<int>(detail::parse_int(types[i], path, 2));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = split_ws(lines[i + 2]);
    if (row.size() != n) throw ParseError(path, i + 3, "expected " + std::to_string(n) + " bond orders");
    for (std::size_t j = 0; j < n; ++j) g.bonds(i, j) = static_cast<double>(detail::parse_int(row[j], path, i + 3));
  }
  try {
    g.validate();
  } catch (const Error& e) {
    throw ParseError(path, 1, e.what());
  }
  return g;
}

inline std::string item_extension(DataKind k) {
  switch (k) {
    case DataKind::toy2d: return ".vec";
    case DataKind::margin_images: return ".img";
    case DataKind::point_clouds: return ".xyz";
    case DataKind::molecules: return ".mol";
  }
  return "";
}

/// Writes one file per item plus a `manifest` describing layout and generation config.
inline void write_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (ds.items.rank() != 2 || ds.items.cols() != ds.layout.dim()) throw ShapeError("dataset items do not match layout");
  std::string manifest = "kind " + to_string(ds.layout.kind) + "\n";
  manifest += "layout " + ds.layout.describe() + "\n";
  manifest += "seed " + std::to_string(ds.seed) + "\n";
  for (const auto& [k, v] : ds.params) manifest += "param " + k + " " + v + "\n";
  manifest += "count " + std::to_string(ds.size()) + "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "item_%05zu", i);
    const std::string file = name + item_extension(ds.layout.kind);
    const std::string path = (fs::path(dir) / file).string();
    const auto row = ds.items.row(i);
    switch (ds.layout.kind) {
      case DataKind::toy2d: write_vector_file(path, row); break;
      case DataKind::margin_images: write_image(path, ds.layout.h, ds.layout.w, row); break;
      case DataKind::point_clouds: write_point_cloud(path, row); break;
      case DataKind::molecules: write_molecule(path, quantize_molecule(row, ds.layout.molecule)); break;
    }
    manifest += "item " + file + "\n";
  }
  detail::write_text((fs::path(dir) / "manifest").string(), manifest);
}

inline Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string mpath = (fs::path(dir) / "manifest").string();
  const auto lines = detail::read_lines(mpath);
  Dataset ds;
  bool have_layout = false;
  std::size_t count = 0;
  bool have_count = false;
  std::vector<std::string> files;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = split_ws(lines[i]);
    const std::size_t ln = i + 1;
    if (toks.empty()) continue;
    if (toks[0] == "kind") {
      if (toks.size() != 2) throw ParseError(mpath, ln, "expected 'kind <kind>'");
    } else if (toks[0] == "layout") {
      try {
        ds.layout = DataLayout::parse(std::vector<std::string>(toks.begin() + 1, toks.end()));
      } catch (const std::exception& e) {
        throw ParseError(mpath, ln, e.what());
      }
      have_layout = true;
    } else if (toks[0] == "seed") {
      if (toks.size() != 2) throw ParseError(mpath, ln, "expected 'seed <n>'");
      ds.seed = static_cast<std::uint64_t>(detail::parse_int(toks[1], mpath, ln));
    } else if (toks[0] == "param") {
      if (toks.size() != 3) throw ParseError(mpath, ln, "expected 'param <key> <value>'");
      ds.params.emplace_back(toks[1], toks[2]);
    } else if (toks[0] == "count") {
      if (toks.size() != 2) throw ParseError(mpath, ln, "expected 'count <n>'");
      count = static_cast<std::size_t>(detail::parse_int(toks[1], mpath, ln));
      have_count = true;
    } else if (toks[0] == "item") {
      if (toks.size() != 2) throw ParseError(mpath, ln, "expected 'item <file>'");
      files.push_back(toks[1]);
    } else {
      throw ParseError(mpath, ln, "unknown manifest record '" + toks[0] + "'");
    }
  }
  if (!have_layout) throw ParseError(mpath, lines.size(), "manifest has no layout record");
  if (!have_count || count != files.size()) throw ParseError(mpath, lines.size(), "item count does not match 'count'");

  const std::size_t d = ds.layout.dim();
  ds.items = Array({files.size(), d});
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string path = (fs::path(dir) / files[i]).string();
    std::vector<double> flat;
    switch (ds.layout.kind) {
      case DataKind::toy2d: flat = read_vector_file(path); break;
      case DataKind::margin_images: {
        Image img = read_image(path);
        if (img.h != ds.layout.h || img.w != ds.layout.w) throw ParseError(path, 1, "image size does not match layout");
        flat = std::move(img.pixels);
        break;
      }
      case DataKind::point_clouds: flat = read_point_cloud(path); break;
      case DataKind::molecules: {
        MolGraph g = read_molecule(path, ds.layout.molecule.valences);
        if (g.size() != ds.layout.molecule.n_atoms) throw ParseError(path, 1, "atom count does not match layout");
        flat = flatten(g, ds.layout.molecule);
        break;
      }
    }
    if (flat.size() != d) throw ParseError(path, 1, "item has " + std::to_string(flat.size()) + " values, expected " +
                                                        std::to_string(d));
    std::copy(flat.begin(), flat.end(), ds.items.row(i).begin());
  }
  return ds;
}

}  // namespace hebm
