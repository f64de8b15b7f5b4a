// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "infodiff/core/errors.hpp"
#include "infodiff/core/tensor.hpp"

namespace infodiff {

// Single-file named-array archive: a JSON manifest followed by raw
// little-endian tensors. Used for checkpoints and dataset caches; loading a
// float archive restores the exact training bytes.
namespace archive {

inline constexpr char kMagic[8] = {'I', 'D', 'A', 'R', 'C', 'H', '0', '1'};

enum class DType : uint8_t { f32 = 0, f64 = 1, i64 = 2, u8 = 3 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }
template <>
constexpr DType dtype_of<int64_t>() { return DType::i64; }
template <>
constexpr DType dtype_of<uint8_t>() { return DType::u8; }

inline size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  throw NumericalFault("archive: unknown dtype");
}

struct RawArray {
  DType dtype;
  Shape shape;
  std::vector<char> bytes;
};

class Writer {
 public:
  void set_manifest(nlohmann::json m) { manifest_ = std::move(m); }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    if (arrays_.count(name))
      throw std::invalid_argument("archive: duplicate array name " + name);
    RawArray a;
    a.dtype = dtype_of<T>();
    a.shape = t.shape();
    a.bytes.resize(static_cast<size_t>(t.size()) * sizeof(T));
    std::memcpy(a.bytes.data(), t.data(), a.bytes.size());
    arrays_.emplace(name, std::move(a));
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("archive: cannot open for write: " + path);
    f.write(kMagic, 8);
    std::string m = manifest_.dump();
    write_u64(f, m.size());
    f.write(m.data(), static_cast<std::streamsize>(m.size()));
    write_u64(f, arrays_.size());
    for (const auto& [name, a] : arrays_) {
      write_u32(f, static_cast<uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      char d = static_cast<char>(a.dtype);
      f.write(&d, 1);
      char r = static_cast<char>(a.shape.size());
      f.write(&r, 1);
      for (int64_t dim : a.shape) write_u64(f, static_cast<uint64_t>(dim));
      f.write(a.bytes.data(), static_cast<std::streamsize>(a.bytes.size()));
    }
    if (!f) throw std::runtime_error("archive: write failed: " + path);
  }

 private:
  static void write_u64(std::ofstream& f, uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
  static void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
  }

  nlohmann::json manifest_;
  std::map<std::string, RawArray> arrays_;
};

class Reader {
 public:
  static Reader load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("archive: cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
      throw std::runtime_error("archive: bad magic in " + path);
    Reader r;
    uint64_t mlen = read_u64(f);
    std::string m(mlen, '\0');
    f.read(m.data(), static_cast<std::streamsize>(mlen));
    r.manifest_ = nlohmann::json::parse(m);
    uint64_t n = read_u64(f);
    for (uint64_t i = 0; i < n; ++i) {
      uint32_t nlen = read_u32(f);
      std::string name(nlen, '\0');
      f.read(name.data(), nlen);
      char d, rank;
      f.read(&d, 1);
      f.read(&rank, 1);
      RawArray a;
      a.dtype = static_cast<DType>(d);
      for (int k = 0; k < rank; ++k)
        a.shape.push_back(static_cast<int64_t>(read_u64(f)));
      a.bytes.resize(static_cast<size_t>(numel(a.shape)) * dtype_size(a.dtype));
      f.read(a.bytes.data(), static_cast<std::streamsize>(a.bytes.size()));
      if (!f) throw std::runtime_error("archive: truncated file " + path);
      r.arrays_.emplace(std::move(name), std::move(a));
    }
    return r;
  }

  const nlohmann::json& manifest() const { return manifest_; }
  bool has(const std::string& name) const { return arrays_.count(name) > 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : arrays_) out.push_back(k);
    return out;
  }

  template <typename T>
  Tensor<T> get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end())
      throw std::runtime_error("archive: missing array " + name);
    const RawArray& a = it->second;
    if (a.dtype != dtype_of<T>())
      throw std::runtime_error("archive: dtype mismatch for " + name);
    Tensor<T> t(a.shape);
    std::memcpy(t.data(), a.bytes.data(), a.bytes.size());
    return t;
  }

 private:
  static uint64_t read_u64(std::ifstream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }
  static uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }

  nlohmann::json manifest_;
  std::map<std::string, RawArray> arrays_;
};

}  // namespace archive
}  // namespace infodiff
