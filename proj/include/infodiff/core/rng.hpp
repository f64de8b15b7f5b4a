// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "infodiff/core/tensor.hpp"

namespace infodiff {

// SplitMix64 finalizer; used to derive well-separated stream seeds.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded RNG stream. Training derives one Rng per (seed, step, purpose) so
// that resuming from a checkpoint replays the identical draws.
class Rng {
 public:
  explicit Rng(uint64_t seed)
      : engine_(splitmix64(seed)), seed_words_(splitmix64(seed)) {}

  // Derived stream: mixes the extra words into a fresh seed.
  Rng child(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t s = seed_words_;
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ (b * 0x9e3779b97f4a7c15ULL));
    s = splitmix64(s ^ (c * 0xd1342543de82ef95ULL));
    Rng r(0);
    r.engine_.seed(s);
    r.seed_words_ = s;
    return r;
  }

  static Rng stream(uint64_t seed, uint64_t step, uint64_t purpose) {
    uint64_t s = splitmix64(seed ^ splitmix64(step ^ splitmix64(purpose)));
    Rng r(0);
    r.engine_.seed(s);
    r.seed_words_ = s;
    return r;
  }

  double uniform() { return unif_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unif_(engine_); }
  double normal() { return norm_(engine_); }

  double gumbel() {
    // -log(-log(U)), U in (0,1); uniform_real_distribution can return 0.
    double u = unif_(engine_);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    return -std::log(-std::log(u));
  }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    std::uniform_int_distribution<int64_t> d(lo, hi);
    return d(engine_);
  }

  template <typename T>
  Tensor<T> normal_tensor(Shape shape) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(normal());
    return t;
  }

  template <typename T>
  Tensor<T> uniform_tensor(Shape shape, T lo = T(0), T hi = T(1)) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i)
      t[i] = lo + static_cast<T>(uniform()) * (hi - lo);
    return t;
  }

  template <typename T>
  Tensor<T> gumbel_tensor(Shape shape) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(gumbel());
    return t;
  }

  // Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<int64_t>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  uint64_t seed_words_ = 0;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace infodiff
