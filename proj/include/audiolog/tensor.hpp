// Copyright 2026 AudioLog Authors
// Dense row-major tensor of doubles plus a deterministic RNG.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "audiolog/error.hpp"

namespace audiolog::nn {

// Row-major dense tensor. Double precision throughout: the training stack is
// validated against central finite differences, which float32 cannot support
// at the required tolerance.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw ShapeMismatch("tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw ShapeMismatch("negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  size_t rank() const { return shape.size(); }
  int64_t dim(size_t i) const { return shape.at(i); }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 2-D accessor for [rows, cols] tensors.
  double& at2(int64_t r, int64_t c) {
    return data[static_cast<size_t>(r * shape[1] + c)];
  }
  double at2(int64_t r, int64_t c) const {
    return data[static_cast<size_t>(r * shape[1] + c)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i)
      os << shape[i] << (i + 1 < shape.size() ? ", " : "");
    os << "]";
    return os.str();
  }
};

// splitmix64-based generator. Self-contained so that dataset synthesis and
// parameter init are reproducible across standard library implementations.
struct Rng {
  uint64_t state = 0x9e3779b97f4a7c15ULL;

  explicit Rng(uint64_t seed = 0) { state = seed + 0x9e3779b97f4a7c15ULL; }

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int64_t randint(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Normal(0, std) resampled until within +/- 2 std.
  double trunc_normal(double std_dev) {
    double v = normal();
    while (std::abs(v) > 2.0) v = normal();
    return v * std_dev;
  }

  void fill_trunc_normal(Tensor& t, double std_dev) {
    for (double& v : t.data) v = trunc_normal(std_dev);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next() % i);
      std::swap(v[i - 1], v[j]);
    }
  }
};

}  // namespace audiolog::nn
