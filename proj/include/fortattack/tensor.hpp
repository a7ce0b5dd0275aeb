#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fortattack/errors.hpp"

namespace fortattack::nn {

// Dense row-major tensor of 64-bit floats. 1-D and 2-D shapes cover
// everything this project needs.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw DimensionError("tensor data length does not match shape");
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw DimensionError("negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor vec(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
  }

  static Tensor matrix(int rows, int cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  int ndim() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const { return data.size(); }

  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }

  double& at(int r, int c) {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
  }
  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_str(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.shape[i]);
  }
  return s + ")";
}

}  // namespace fortattack::nn
