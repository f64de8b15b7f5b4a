// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "infodiff/data.hpp"

using namespace infodiff;
namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> fg_mask(const io::ImageU8& img) {
  std::vector<uint8_t> m(static_cast<size_t>(img.width * img.height));
  for (size_t i = 0; i < m.size(); ++i) {
    const uint8_t* p = img.pixels.data() + 3 * i;
    m[i] = p[0] != 20 || p[1] != 20 || p[2] != 20;
  }
  return m;
}

std::pair<double, double> centroid(const io::ImageU8& img) {
  double sx = 0, sy = 0, cnt = 0;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      if (fg_mask(img)[static_cast<size_t>(y * img.width + x)]) {
        sx += static_cast<double>(x);
        sy += static_cast<double>(y);
        cnt += 1;
      }
  return {sx / cnt, sy / cnt};
}

int fg_count(const io::ImageU8& img) {
  auto m = fg_mask(img);
  int c = 0;
  for (uint8_t v : m) c += v;
  return c;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("infodiff_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic renderer is deterministic and factor-faithful") {
  data::SyntheticFactorSpec spec;

  auto a = data::render_synthetic(spec, {0, 0, 0, 0, 0});
  auto b = data::render_synthetic(spec, {0, 0, 0, 0, 0});
  CHECK(a.pixels == b.pixels);

  // pixel counts for radius 3, derived by enumerating the masks by hand
  CHECK(fg_count(data::render_synthetic(spec, {0, 0, 3, 3, 0})) == 49);  // square
  CHECK(fg_count(data::render_synthetic(spec, {1, 0, 3, 3, 0})) == 29);  // disc
  CHECK(fg_count(data::render_synthetic(spec, {2, 0, 3, 3, 0})) == 25);  // triangle

  SUBCASE("hue recolors without touching geometry") {
    auto h0 = data::render_synthetic(spec, {1, 2, 4, 4, 0});
    for (int h = 1; h < 6; ++h) {
      auto hi = data::render_synthetic(spec, {1, 2, 4, 4, h});
      CHECK(fg_mask(hi) == fg_mask(h0));
      CHECK(hi.pixels != h0.pixels);
    }
  }

  SUBCASE("position steps move the centroid by exactly the stride") {
    for (int shape : {0, 1, 2}) {
      auto i0 = data::render_synthetic(spec, {shape, 2, 3, 5, 1});
      auto ix = data::render_synthetic(spec, {shape, 2, 4, 5, 1});
      auto iy = data::render_synthetic(spec, {shape, 2, 3, 6, 1});
      auto [x0, y0] = centroid(i0);
      auto [x1, y1] = centroid(ix);
      auto [x2, y2] = centroid(iy);
      CHECK(x1 - x0 == doctest::Approx(2.0).epsilon(1e-12));
      CHECK(y1 == doctest::Approx(y0).epsilon(1e-12));
      CHECK(y2 - y0 == doctest::Approx(2.0).epsilon(1e-12));
      CHECK(x2 == doctest::Approx(x0).epsilon(1e-12));
    }
    // symmetric shapes sit exactly on their center
    auto sq = data::render_synthetic(spec, {0, 1, 2, 6, 0});
    auto [cx, cy] = centroid(sq);
    CHECK(cx == 8.0 + 2.0 * 2.0);
    CHECK(cy == 8.0 + 2.0 * 6.0);
  }

  SUBCASE("invalid tuples are rejected") {
    CHECK_THROWS_AS(data::render_synthetic(spec, {0, 0, 0, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(data::render_synthetic(spec, {3, 0, 0, 0, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(data::render_synthetic(spec, {0, 0, -1, 0, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(data::render_synthetic(spec, {0, 0, 0, 8, 0}),
                    std::invalid_argument);
  }
}

TEST_CASE("factor grid enumerates every combination with distinct images") {
  data::SyntheticFactorSpec spec;
  spec.factors = {{"shape", 3}, {"scale", 4}, {"x_pos", 1}, {"y_pos", 1}, {"hue", 1}};
  auto ds = data::synthetic_factor_dataset(spec);
  REQUIRE(ds.n() == 12);
  REQUIRE(ds.x.shape() == Shape{12, 3, 32, 32});
  CHECK(ds.attrs.columns.size() == 5);

  int64_t row = ds.x.size() / ds.n();
  std::set<std::vector<double>> seen;
  for (int64_t i = 0; i < ds.n(); ++i) {
    seen.emplace(ds.x.data() + i * row, ds.x.data() + (i + 1) * row);
    // attribute columns replay the mixed-radix enumeration
    auto t = data::tuple_of_index(spec, i);
    for (size_t f = 0; f < t.size(); ++f)
      CHECK(ds.attrs.columns[f].values[static_cast<size_t>(i)] == t[f]);
  }
  CHECK(seen.size() == 12);

  // every value lives on the u8 lattice of [-1, 1]
  for (int64_t i = 0; i < ds.x.size(); ++i) {
    double v = ds.x[i];
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    double steps = (v + 1.0) * 127.5;
    CHECK(std::abs(steps - std::round(steps)) < 1e-9);
  }
}

TEST_CASE("two moons lie exactly on their circles at zero noise") {
  auto [x, y] = data::make_two_moons(400, 0.0, 7);
  REQUIRE(x.shape() == Shape{400, 2});
  int ones = 0;
  for (int64_t i = 0; i < 400; ++i) {
    double px = x[i * 2], py = x[i * 2 + 1];
    if (y[static_cast<size_t>(i)] == 0) {
      CHECK(std::abs(px * px + py * py - 1.0) < 1e-12);
      CHECK(py >= 0.0);
    } else {
      double dx = px - 1.0, dy = py - 0.5;
      CHECK(std::abs(dx * dx + dy * dy - 1.0) < 1e-12);
      CHECK(py <= 0.5);
      ones++;
    }
    CHECK(y[static_cast<size_t>(i)] == i % 2);
  }
  CHECK(ones == 200);

  auto [x2, y2] = data::make_two_moons(400, 0.0, 7);
  CHECK(std::memcmp(x.data(), x2.data(), sizeof(double) * 800) == 0);
  auto [x3, y3] = data::make_two_moons(400, 0.0, 8);
  CHECK(std::memcmp(x.data(), x3.data(), sizeof(double) * 800) != 0);

  CHECK_THROWS_AS(data::make_two_moons(1, 0.0, 0), std::invalid_argument);
}

TEST_CASE("energy distance separates equal from shifted samples") {
  auto [a, ya] = data::make_two_moons(2000, 0.05, 101);
  auto [b, yb] = data::make_two_moons(2000, 0.05, 201);
  double null = data::energy_distance(a, b);
  CHECK(std::abs(null) < 0.01);

  Tensor<double> c = b.clone();
  for (int64_t i = 0; i < 2000; ++i) c[i * 2] += 2.0;
  CHECK(data::energy_distance(a, c) > 1.0);

  Tensor<double> bad({4, 3});
  CHECK_THROWS_AS(data::energy_distance(a, bad), std::invalid_argument);
  Tensor<double> tiny({1, 2});
  CHECK_THROWS_AS(data::energy_distance(tiny, tiny), std::invalid_argument);
}

TEST_CASE("dataset split is disjoint, exhaustive and deterministic") {
  auto s = data::split_dataset(103, 0.8, 5);
  CHECK(s.train.size() == 82);
  CHECK(s.test.size() == 21);

  std::vector<int64_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (int64_t i = 0; i < 103; ++i) CHECK(all[static_cast<size_t>(i)] == i);

  auto s2 = data::split_dataset(103, 0.8, 5);
  CHECK(s2.train == s.train);
  CHECK(s2.test == s.test);
  auto s3 = data::split_dataset(103, 0.8, 6);
  CHECK(s3.train != s.train);

  // extreme fractions still leave both sides non-empty
  auto lo = data::split_dataset(10, 0.01, 0);
  CHECK(lo.train.size() == 1);
  auto hi = data::split_dataset(10, 0.99, 0);
  CHECK(hi.test.size() == 1);

  CHECK_THROWS_AS(data::split_dataset(1, 0.8, 0), std::invalid_argument);
  CHECK_THROWS_AS(data::split_dataset(10, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(data::split_dataset(10, 1.0, 0), std::invalid_argument);
}

TEST_CASE("take() copies the selected rows and attributes") {
  data::SyntheticFactorSpec spec;
  spec.factors = {{"shape", 2}, {"scale", 1}, {"x_pos", 2}, {"y_pos", 1}, {"hue", 2}};
  auto ds = data::synthetic_factor_dataset(spec);
  auto sub = data::take(ds, {5, 0, 3});
  REQUIRE(sub.n() == 3);
  int64_t row = ds.x.size() / ds.n();
  const int64_t picks[3] = {5, 0, 3};
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(std::memcmp(sub.x.data() + i * row, ds.x.data() + picks[i] * row,
                      sizeof(double) * static_cast<size_t>(row)) == 0);
    for (size_t f = 0; f < ds.attrs.columns.size(); ++f)
      CHECK(sub.attrs.columns[f].values[static_cast<size_t>(i)] ==
            ds.attrs.columns[f].values[static_cast<size_t>(picks[i])]);
  }
}

TEST_CASE("oracle factor codes score a perfect DCI") {
  data::SyntheticFactorSpec spec;
  spec.factors = {{"shape", 2}, {"scale", 2}, {"x_pos", 3}, {"y_pos", 3}, {"hue", 2}};
  auto ds = data::synthetic_factor_dataset(spec);
  Tensor<double> z = data::oracle_factor_codes(ds.attrs);
  REQUIRE(z.shape() == Shape{72, 5});
  for (int64_t i = 0; i < z.size(); ++i) {
    CHECK(z[i] >= -1.0);
    CHECK(z[i] <= 1.0);
  }
  double dci = metrics::dci_disentanglement(z, ds.attrs);
  CHECK(std::abs(dci - 1.0) < 1e-12);
}

TEST_CASE("binarize_attributes median-splits categorical columns") {
  metrics::AttributeTable t;
  t.n = 4;
  t.add("level", {0, 1, 2, 3}, 4);
  t.add("flag", {1, 0, 1, 0}, 2);
  auto b = data::binarize_attributes(t);
  REQUIRE(b.columns.size() == 2);
  CHECK(b.columns[0].name == "level_hi");
  CHECK(b.columns[0].values == std::vector<int>{0, 0, 1, 1});
  CHECK(b.columns[0].cardinality == 2);
  CHECK(b.columns[1].name == "flag");
  CHECK(b.columns[1].values == std::vector<int>{1, 0, 1, 0});
}

TEST_CASE("png io round trips exactly on the u8 lattice") {
  for (int v = 0; v < 256; ++v)
    CHECK(data::unit_to_u8(data::u8_to_unit(static_cast<uint8_t>(v))) == v);

  auto dir = fresh_dir("pngio");
  io::ImageU8 img;
  img.width = 8;
  img.height = 6;
  img.channels = 3;
  Rng rng(11);
  img.pixels.resize(8 * 6 * 3);
  for (auto& p : img.pixels)
    p = static_cast<uint8_t>(rng.uniform_int(0, 255));
  io::write_png((dir / "t.png").string(), img);
  auto back = io::read_png((dir / "t.png").string());
  CHECK(back.width == 8);
  CHECK(back.height == 6);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);

  SUBCASE("grayscale files come back as replicated rgb") {
    io::ImageU8 gray;
    gray.width = 4;
    gray.height = 2;
    gray.channels = 1;
    gray.pixels = {0, 10, 20, 30, 200, 210, 220, 255};
    io::write_png((dir / "g.png").string(), gray);
    auto rgb = io::read_png((dir / "g.png").string());
    REQUIRE(rgb.channels == 3);
    for (size_t i = 0; i < gray.pixels.size(); ++i)
      for (int c = 0; c < 3; ++c)
        CHECK(rgb.pixels[3 * i + static_cast<size_t>(c)] == gray.pixels[i]);
  }

  SUBCASE("nearest resize picks the expected source pixels") {
    io::ImageU8 four;
    four.width = four.height = 4;
    four.channels = 3;
    four.pixels.resize(4 * 4 * 3);
    for (int i = 0; i < 16; ++i)
      for (int c = 0; c < 3; ++c)
        four.pixels[static_cast<size_t>(3 * i + c)] = static_cast<uint8_t>(i);
    auto half = io::resize_nearest(four, 2);
    REQUIRE(half.width == 2);
    // scale 2: output (y, x) samples source (2y, 2x)
    CHECK(half.pixels[0] == 0);
    CHECK(half.pixels[3] == 2);
    CHECK(half.pixels[6] == 8);
    CHECK(half.pixels[9] == 10);
    auto same = io::resize_nearest(four, 4);
    CHECK(same.pixels == four.pixels);
  }

  CHECK_THROWS_AS(io::read_png((dir / "absent.png").string()), IngestError);
}

TEST_CASE("image folder export/ingest round trips bitwise") {
  data::SyntheticFactorSpec spec;
  spec.factors = {{"shape", 3}, {"scale", 2}, {"x_pos", 2}, {"y_pos", 1}, {"hue", 2}};
  spec.image_size = 16;
  auto ds = data::synthetic_factor_dataset(spec);
  ds.attrs = data::binarize_attributes(ds.attrs);  // csv carries binary columns

  auto dir = fresh_dir("folder");
  data::export_image_folder(ds, dir.string());
  CHECK(fs::exists(dir / "000000.png"));
  CHECK(fs::exists(dir / "attributes.csv"));

  auto back = data::ingest_image_folder(dir.string(), {.image_size = 16});
  REQUIRE(back.x.shape() == ds.x.shape());
  CHECK(std::memcmp(back.x.data(), ds.x.data(),
                    sizeof(double) * static_cast<size_t>(ds.x.size())) == 0);
  REQUIRE(back.attrs.columns.size() == ds.attrs.columns.size());
  for (size_t f = 0; f < ds.attrs.columns.size(); ++f) {
    CHECK(back.attrs.columns[f].name == ds.attrs.columns[f].name);
    CHECK(back.attrs.columns[f].values == ds.attrs.columns[f].values);
  }

  SUBCASE("ingest can resize on the way in") {
    auto small = data::ingest_image_folder(dir.string(), {.image_size = 8});
    CHECK(small.x.shape() == Shape{ds.n(), 3, 8, 8});
  }
}

TEST_CASE("attribute csv ingestion remaps and validates") {
  auto dir = fresh_dir("csv");
  io::ImageU8 px;
  px.width = px.height = 16;
  px.channels = 3;
  px.pixels.assign(16 * 16 * 3, 100);
  io::write_png((dir / "a.png").string(), px);
  io::write_png((dir / "b.png").string(), px);

  SUBCASE("celeba-style -1 becomes 0") {
    std::ofstream((dir / "attributes.csv").string())
        << "filename,male,young\na.png,1,-1\nb.png,-1,1\n";
    auto ds = data::ingest_image_folder(dir.string(), {.image_size = 16});
    REQUIRE(ds.attrs.columns.size() == 2);
    CHECK(ds.attrs.columns[0].values == std::vector<int>{1, 0});
    CHECK(ds.attrs.columns[1].values == std::vector<int>{0, 1});
  }

  SUBCASE("csv order overrides filename order") {
    std::ofstream((dir / "attributes.csv").string())
        << "filename,male\nb.png,1\na.png,0\n";
    auto ds = data::ingest_image_folder(dir.string(), {.image_size = 16});
    CHECK(ds.attrs.columns[0].values == std::vector<int>{1, 0});
  }

  SUBCASE("missing referenced files are listed") {
    std::ofstream((dir / "attributes.csv").string())
        << "filename,male\na.png,1\ngone.png,0\nlost.png,1\n";
    try {
      data::ingest_image_folder(dir.string(), {.image_size = 16});
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      std::string msg = e.what();
      CHECK(msg.find("gone.png") != std::string::npos);
      CHECK(msg.find("lost.png") != std::string::npos);
    }
  }

  SUBCASE("values outside {-1,0,1} are rejected") {
    std::ofstream((dir / "attributes.csv").string())
        << "filename,male\na.png,2\n";
    CHECK_THROWS_AS(data::ingest_image_folder(dir.string(), {.image_size = 16}),
                    IngestError);
  }

  SUBCASE("no csv means no attributes") {
    auto ds = data::ingest_image_folder(dir.string(), {.image_size = 16});
    CHECK(ds.attrs.columns.empty());
    CHECK(ds.n() == 2);
  }

  SUBCASE("empty or absent directories fail") {
    auto empty = fresh_dir("empty");
    CHECK_THROWS_AS(data::ingest_image_folder(empty.string(), {}), IngestError);
    CHECK_THROWS_AS(data::ingest_image_folder((dir / "nope").string(), {}),
                    IngestError);
  }
}

TEST_CASE("synthetic cache round trips through the archive") {
  auto dir = fresh_dir("cache");
  data::SyntheticFactorSpec spec;
  spec.factors = {{"shape", 2}, {"scale", 2}, {"x_pos", 2}, {"y_pos", 2}, {"hue", 2}};
  spec.image_size = 16;

  auto first = data::cached_synthetic_dataset(spec, dir.string());
  int files = 0;
  for (auto& e : fs::directory_iterator(dir)) {
    (void)e;
    files++;
  }
  CHECK(files == 1);

  auto second = data::cached_synthetic_dataset(spec, dir.string());
  REQUIRE(second.x.shape() == first.x.shape());
  CHECK(std::memcmp(second.x.data(), first.x.data(),
                    sizeof(double) * static_cast<size_t>(first.x.size())) == 0);
  REQUIRE(second.attrs.columns.size() == first.attrs.columns.size());
  for (size_t f = 0; f < first.attrs.columns.size(); ++f) {
    CHECK(second.attrs.columns[f].values == first.attrs.columns[f].values);
    CHECK(second.attrs.columns[f].cardinality ==
          first.attrs.columns[f].cardinality);
  }

  // a different spec does not collide with the cached entry
  spec.factors[0].cardinality = 3;
  auto third = data::cached_synthetic_dataset(spec, dir.string());
  CHECK(third.n() == first.n() * 3 / 2);
}
