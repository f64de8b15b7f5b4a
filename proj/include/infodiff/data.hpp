// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "infodiff/archive.hpp"
#include "infodiff/image_io.hpp"
#include "infodiff/metrics.hpp"

namespace infodiff::data {

// u8 lattice <-> [-1, 1]; PNG round trips are exact on this grid.
inline double u8_to_unit(uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }
inline uint8_t unit_to_u8(double v) {
  double r = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<uint8_t>(r);
}

struct Dataset {
  Tensor<double> x;  // (n, C, H, W) images or (n, d) vectors, in [-1, 1]
  metrics::AttributeTable attrs;
  bool image = true;

  int64_t n() const { return x.rank() > 0 ? x.dim(0) : 0; }
};

// ---- synthetic factor dataset ------------------------------------------------------

struct FactorDef {
  std::string name;
  int cardinality = 2;
};

// Procedural stand-in for 3DShapes: one colored shape per image, every
// attribute a deterministic function of the factor tuple.
struct SyntheticFactorSpec {
  std::vector<FactorDef> factors{
      {"shape", 3}, {"scale", 4}, {"x_pos", 8}, {"y_pos", 8}, {"hue", 6}};
  int64_t image_size = 32;

  int64_t combinations() const {
    int64_t c = 1;
    for (const auto& f : factors) c *= f.cardinality;
    return c;
  }

  void validate() const {
    if (factors.empty())
      throw std::invalid_argument("synthetic spec: no factors");
    for (const auto& f : factors)
      if (f.cardinality < 1)
        throw std::invalid_argument("synthetic spec: bad cardinality for " + f.name);
    if (combinations() > 100000)
      throw std::invalid_argument("synthetic spec: > 1e5 combinations");
    if (image_size < 16)
      throw std::invalid_argument("synthetic spec: image_size >= 16");
  }
};

namespace detail {

// fixed u8 palette; hue never changes geometry, only color
inline const uint8_t kPalette[6][3] = {{220, 50, 50},  {50, 220, 50},
                                       {50, 50, 220},  {220, 220, 50},
                                       {220, 50, 220}, {50, 220, 220}};
inline const uint8_t kBackground = 20;

constexpr int64_t kMargin = 8;  // first object center
constexpr int64_t kStride = 2;  // center shift per position step

inline bool in_shape(int shape, int64_t dy, int64_t dx, int64_t r) {
  switch (shape) {
    case 0: return std::abs(dx) <= r && std::abs(dy) <= r;       // square
    case 1: return dx * dx + dy * dy <= r * r;                   // disc
    default: return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;  // triangle
  }
}

}  // namespace detail

// Renders one tuple as an (C=3, H, W) u8 image. Geometry depends only on
// (shape, scale, x_pos, y_pos); hue only picks the palette entry.
inline io::ImageU8 render_synthetic(const SyntheticFactorSpec& spec,
                                    const std::vector<int>& tuple) {
  spec.validate();
  if (tuple.size() != spec.factors.size())
    throw std::invalid_argument("render_synthetic: tuple arity mismatch");
  for (size_t i = 0; i < tuple.size(); ++i)
    if (tuple[i] < 0 || tuple[i] >= spec.factors[i].cardinality)
      throw std::invalid_argument("render_synthetic: factor " +
                                  spec.factors[i].name + " out of range");

  auto idx = [&](const std::string& name) -> int {
    for (size_t i = 0; i < spec.factors.size(); ++i)
      if (spec.factors[i].name == name) return tuple[i];
    return 0;
  };
  int shape = idx("shape");
  int64_t r = 3 + idx("scale");
  int64_t cx = detail::kMargin + detail::kStride * idx("x_pos");
  int64_t cy = detail::kMargin + detail::kStride * idx("y_pos");
  const uint8_t* color = detail::kPalette[idx("hue") % 6];

  io::ImageU8 img;
  img.width = img.height = spec.image_size;
  img.channels = 3;
  img.pixels.assign(static_cast<size_t>(spec.image_size * spec.image_size * 3),
                    detail::kBackground);
  for (int64_t y = 0; y < spec.image_size; ++y)
    for (int64_t x = 0; x < spec.image_size; ++x)
      if (detail::in_shape(shape, y - cy, x - cx, r))
        for (int64_t c = 0; c < 3; ++c)
          img.pixels[static_cast<size_t>((y * spec.image_size + x) * 3 + c)] =
              color[c];
  return img;
}

inline std::vector<int> tuple_of_index(const SyntheticFactorSpec& spec,
                                       int64_t index) {
  std::vector<int> t(spec.factors.size());
  for (size_t f = 0; f < spec.factors.size(); ++f) {
    t[f] = static_cast<int>(index % spec.factors[f].cardinality);
    index /= spec.factors[f].cardinality;
  }
  return t;
}

inline Tensor<double> image_to_tensor_row(const io::ImageU8& img) {
  Tensor<double> t({3, img.height, img.width});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < img.height; ++y)
      for (int64_t x = 0; x < img.width; ++x)
        t[(c * img.height + y) * img.width + x] = u8_to_unit(
            img.pixels[static_cast<size_t>((y * img.width + x) * 3 + c)]);
  return t;
}

// Full factorial enumeration in mixed-radix order (factor 0 fastest).
inline Dataset synthetic_factor_dataset(const SyntheticFactorSpec& spec = {}) {
  spec.validate();
  int64_t n = spec.combinations();
  Dataset ds;
  ds.image = true;
  ds.x = Tensor<double>({n, 3, spec.image_size, spec.image_size});
  int64_t row = 3 * spec.image_size * spec.image_size;
  std::vector<std::vector<int>> cols(spec.factors.size(),
                                     std::vector<int>(static_cast<size_t>(n)));
  for (int64_t i = 0; i < n; ++i) {
    auto tuple = tuple_of_index(spec, i);
    Tensor<double> img = image_to_tensor_row(render_synthetic(spec, tuple));
    std::copy(img.data(), img.data() + row, ds.x.data() + i * row);
    for (size_t f = 0; f < tuple.size(); ++f)
      cols[f][static_cast<size_t>(i)] = tuple[f];
  }
  ds.attrs.n = n;
  for (size_t f = 0; f < spec.factors.size(); ++f)
    ds.attrs.add(spec.factors[f].name, std::move(cols[f]),
                 spec.factors[f].cardinality);
  return ds;
}

// True factors scaled to [-1, 1]: the reference encoder for metric oracles.
inline Tensor<double> oracle_factor_codes(const metrics::AttributeTable& attrs) {
  int64_t k = static_cast<int64_t>(attrs.columns.size());
  Tensor<double> z({attrs.n, k});
  for (int64_t j = 0; j < k; ++j) {
    const auto& col = attrs.columns[static_cast<size_t>(j)];
    double denom = std::max(1, col.cardinality - 1);
    for (int64_t i = 0; i < attrs.n; ++i)
      z[i * k + j] = -1.0 + 2.0 * col.values[static_cast<size_t>(i)] / denom;
  }
  return z;
}

// Median-split binary view of categorical factors (TAD needs binary columns).
inline metrics::AttributeTable binarize_attributes(
    const metrics::AttributeTable& attrs) {
  metrics::AttributeTable out;
  out.n = attrs.n;
  for (const auto& col : attrs.columns) {
    if (col.binary()) {
      out.columns.push_back(col);
      continue;
    }
    std::vector<int> b(col.values.size());
    int thr = col.cardinality / 2;
    for (size_t i = 0; i < col.values.size(); ++i) b[i] = col.values[i] >= thr;
    out.add(col.name + "_hi", std::move(b), 2);
  }
  return out;
}

// ---- two moons ---------------------------------------------------------------------

// Interleaved half-circles; even rows on the unit upper arc, odd rows on the
// shifted lower arc.
inline std::pair<Tensor<double>, std::vector<int>> make_two_moons(
    int64_t n, double noise_sigma, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("two_moons: n >= 2");
  Tensor<double> x({n, 2});
  std::vector<int> y(static_cast<size_t>(n));
  Rng rng(splitmix64(seed ^ 0x6d6f6f6e73ULL));
  for (int64_t i = 0; i < n; ++i) {
    double t = rng.uniform(0.0, 3.14159265358979323846);
    int label = static_cast<int>(i % 2);
    double px = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double py = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x[i * 2] = px + noise_sigma * rng.normal();
    x[i * 2 + 1] = py + noise_sigma * rng.normal();
    y[static_cast<size_t>(i)] = label;
  }
  return {std::move(x), std::move(y)};
}

inline Dataset two_moons_dataset(int64_t n, double noise_sigma, uint64_t seed) {
  auto [x, y] = make_two_moons(n, noise_sigma, seed);
  Dataset ds;
  ds.image = false;
  ds.x = std::move(x);
  ds.attrs.n = n;
  ds.attrs.add("moon", std::move(y), 2);
  return ds;
}

// Energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| between (n, d) batches.
inline double energy_distance(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("energy_distance: need (n, d) batches");
  int64_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
  if (n < 2 || m < 2) throw std::invalid_argument("energy_distance: n, m >= 2");
  auto dist = [d](const double* p, const double* q) {
    double s = 0;
    for (int64_t k = 0; k < d; ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
    return std::sqrt(s);
  };
  double ab = 0, aa = 0, bb = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) ab += dist(a.data() + i * d, b.data() + j * d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) aa += dist(a.data() + i * d, a.data() + j * d);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = i + 1; j < m; ++j) bb += dist(b.data() + i * d, b.data() + j * d);
  return 2.0 * ab / (static_cast<double>(n) * m) -
         2.0 * aa / (static_cast<double>(n) * (n - 1)) -
         2.0 * bb / (static_cast<double>(m) * (m - 1));
}

// ---- splits ------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<int64_t> train, test;
  double fraction = 0.8;
  uint64_t seed = 0;
};

inline DatasetSplit split_dataset(int64_t n, double fraction = 0.8,
                                  uint64_t seed = 0) {
  if (n < 2) throw std::invalid_argument("split: n >= 2");
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("split: fraction in (0, 1)");
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(splitmix64(seed ^ 0x73706c6974ULL));
  rng.shuffle(perm);
  int64_t cut = static_cast<int64_t>(std::llround(fraction * static_cast<double>(n)));
  cut = std::clamp<int64_t>(cut, 1, n - 1);
  DatasetSplit s;
  s.fraction = fraction;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.begin() + cut);
  s.test.assign(perm.begin() + cut, perm.end());
  return s;
}

inline Dataset take(const Dataset& ds, const std::vector<int64_t>& idx) {
  Dataset out;
  out.image = ds.image;
  Shape shape = ds.x.shape();
  shape[0] = static_cast<int64_t>(idx.size());
  out.x = Tensor<double>(shape);
  int64_t row = ds.n() > 0 ? ds.x.size() / ds.n() : 0;
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(ds.x.data() + idx[i] * row, ds.x.data() + (idx[i] + 1) * row,
              out.x.data() + static_cast<int64_t>(i) * row);
  out.attrs.n = static_cast<int64_t>(idx.size());
  for (const auto& col : ds.attrs.columns) {
    std::vector<int> v(idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
      v[i] = col.values[static_cast<size_t>(idx[i])];
    out.attrs.add(col.name, std::move(v), col.cardinality);
  }
  return out;
}

// ---- image folders -----------------------------------------------------------------

struct IngestOptions {
  int64_t image_size = 32;
};

// Reads dir/*.png (sorted) plus optional dir/attributes.csv. CSV rows are
// matched by filename; files named by the CSV must exist.
inline Dataset ingest_image_folder(const std::string& dir,
                                   IngestOptions opt = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw IngestError("ingest: not a directory: " + dir);

  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());

  std::optional<io::AttrCsv> csv;
  if (fs::exists(fs::path(dir) / "attributes.csv")) {
    csv = io::read_attr_csv((fs::path(dir) / "attributes.csv").string());
    std::vector<std::string> missing;
    for (const auto& f : csv->filenames)
      if (!fs::exists(fs::path(dir) / f)) missing.push_back(f);
    if (!missing.empty()) {
      std::string msg = "ingest: attributes.csv references missing files:";
      for (const auto& f : missing) msg += " " + f;
      throw IngestError(msg);
    }
    files = csv->filenames;  // CSV defines content and order
  }
  if (files.empty()) throw IngestError("ingest: no png files in " + dir);

  int64_t n = static_cast<int64_t>(files.size());
  Dataset ds;
  ds.image = true;
  ds.x = Tensor<double>({n, 3, opt.image_size, opt.image_size});
  int64_t row = 3 * opt.image_size * opt.image_size;
  for (int64_t i = 0; i < n; ++i) {
    io::ImageU8 img = io::resize_nearest(
        io::read_png((fs::path(dir) / files[static_cast<size_t>(i)]).string()),
        opt.image_size);
    Tensor<double> t = image_to_tensor_row(img);
    std::copy(t.data(), t.data() + row, ds.x.data() + i * row);
  }
  ds.attrs.n = n;
  if (csv) {
    for (size_t j = 0; j < csv->attr_names.size(); ++j) {
      std::vector<int> col(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i)
        col[static_cast<size_t>(i)] = csv->rows[static_cast<size_t>(i)][j];
      ds.attrs.add(csv->attr_names[j], std::move(col), 2);
    }
  }
  return ds;
}

// Inverse of ingest for round-trip checks and sample dumps.
inline void export_image_folder(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  if (!ds.image || ds.x.rank() != 4)
    throw std::invalid_argument("export: needs (n, 3, h, w) images");
  fs::create_directories(dir);
  int64_t n = ds.n(), h = ds.x.dim(2), w = ds.x.dim(3);
  for (int64_t i = 0; i < n; ++i) {
    io::ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(h * w * 3));
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          img.pixels[static_cast<size_t>((y * w + x) * 3 + c)] =
              unit_to_u8(ds.x[((i * 3 + c) * h + y) * w + x]);
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i));
    io::write_png((fs::path(dir) / name).string(), img);
  }
  if (!ds.attrs.columns.empty()) {
    std::ofstream f((fs::path(dir) / "attributes.csv").string());
    f << "filename";
    for (const auto& c : ds.attrs.columns) f << "," << c.name;
    f << "\n";
    for (int64_t i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i));
      f << name;
      for (const auto& c : ds.attrs.columns)
        f << "," << c.values[static_cast<size_t>(i)];
      f << "\n";
    }
  }
}

// ---- caching -----------------------------------------------------------------------

inline nlohmann::json spec_json(const SyntheticFactorSpec& spec) {
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& f : spec.factors) fs.push_back({{"name", f.name},
                                                   {"cardinality", f.cardinality}});
  return {{"factors", fs}, {"image_size", spec.image_size}};
}

// Render once, then reload from an archive keyed by the spec itself.
inline Dataset cached_synthetic_dataset(const SyntheticFactorSpec& spec,
                                        const std::string& cache_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(cache_dir);
  std::string key = spec_json(spec).dump();
  std::string path =
      (fs::path(cache_dir) /
       ("synthetic_" + std::to_string(splitmix64(std::hash<std::string>{}(key))) +
        ".idarch"))
          .string();
  if (fs::exists(path)) {
    auto r = archive::Reader::load(path);
    if (r.manifest().value("spec", "") == key) {
      Dataset ds;
      ds.image = true;
      ds.x = r.get<double>("x");
      ds.attrs.n = ds.x.dim(0);
      for (const auto& f : spec.factors) {
        Tensor<int64_t> col = r.get<int64_t>("attr." + f.name);
        std::vector<int> v(static_cast<size_t>(col.size()));
        for (int64_t i = 0; i < col.size(); ++i)
          v[static_cast<size_t>(i)] = static_cast<int>(col[i]);
        ds.attrs.add(f.name, std::move(v), f.cardinality);
      }
      return ds;
    }
  }
  Dataset ds = synthetic_factor_dataset(spec);
  archive::Writer w;
  w.set_manifest({{"spec", key}});
  w.add("x", ds.x);
  for (const auto& col : ds.attrs.columns) {
    Tensor<int64_t> t({static_cast<int64_t>(col.values.size())});
    for (size_t i = 0; i < col.values.size(); ++i)
      t[static_cast<int64_t>(i)] = col.values[i];
    w.add("attr." + col.name, t);
  }
  w.write(path);
  return ds;
}

}  // namespace infodiff::data
