#pragma once
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "harcl/errors.hpp"

namespace harcl {

// Dense row-major numeric array. Scalar is double by default; float is the
// per-run speed option. Hot loops index data() directly with precomputed
// offsets; at() helpers exist for tests and cold paths.
template <class S>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw StructuralError("tensor dimension must be positive");
      n *= d;
    }
    v.assign(n, S(0));
  }

  std::size_t size() const { return v.size(); }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  S& operator[](std::size_t i) { return v[i]; }
  const S& operator[](std::size_t i) const { return v[i]; }

  S& at(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
  const S& at(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }
  S& at(std::size_t i, std::size_t j, std::size_t k) {
    return v[(i * shape[1] + j) * shape[2] + k];
  }
  const S& at(std::size_t i, std::size_t j, std::size_t k) const {
    return v[(i * shape[1] + j) * shape[2] + k];
  }

  void fill(S x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(S(0)); }

  bool all_finite() const {
    for (S x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace harcl
