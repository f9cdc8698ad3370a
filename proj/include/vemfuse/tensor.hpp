#pragma once
// Dense row-major tensor (rank 0..2 in practice) used by the autodiff tape.

#include <cstdint>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vemfuse/rng.hpp"

namespace vemfuse {

template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;

  static Tensor scalar(S v) {
    Tensor t;
    t.shape = {};
    t.data = {v};
    return t;
  }

  static Tensor zeros(std::vector<int64_t> shp) {
    Tensor t;
    t.shape = std::move(shp);
    t.data.assign(static_cast<size_t>(t.count(t.shape)), S(0));
    return t;
  }

  static Tensor full(std::vector<int64_t> shp, S v) {
    Tensor t = zeros(std::move(shp));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor vec(std::vector<S> values) {
    Tensor t;
    t.shape = {static_cast<int64_t>(values.size())};
    t.data = std::move(values);
    return t;
  }

  static Tensor matrix(int64_t r, int64_t c) { return zeros({r, c}); }

  // Xavier-uniform init in [-sqrt(6/(fan_in+fan_out)), +...], seed-driven.
  static Tensor glorot(int64_t r, int64_t c, Rng& rng) {
    Tensor t = zeros({r, c});
    const double bound = std::sqrt(6.0 / static_cast<double>(r + c));
    for (auto& v : t.data) v = static_cast<S>((rng.uniform() * 2.0 - 1.0) * bound);
    return t;
  }

  static int64_t count(const std::vector<int64_t>& shp) {
    int64_t n = 1;
    for (int64_t d : shp) n *= d;
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  bool is_scalar() const { return data.size() == 1 && shape.empty(); }

  // 1-D tensors are treated as a single row.
  int64_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  int64_t cols() const {
    if (shape.size() >= 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    return 1;
  }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  S& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
  S at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

  const S* row_ptr(int64_t i) const { return data.data() + i * cols(); }
  S* row_ptr(int64_t i) { return data.data() + i * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (S v : data) out.data.push_back(static_cast<T>(v));
    return out;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

// Named trainable tensor with a persistent, explicitly-zeroed gradient buffer.
// backward() accumulates into grad; nothing zeroes it implicitly.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<S> v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor<S>::zeros(value.shape);
  }

  void zero_grad() { grad.fill(S(0)); }
};

}  // namespace vemfuse
