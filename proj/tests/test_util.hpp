#pragma once

#include <cstring>
#include <random>
#include <vector>

#include "cips/tensor.hpp"

namespace cips::test {

inline Tensor randn(Shape shape, std::uint64_t seed, double stddev = 1.0, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  Tensor t = Tensor::from(std::move(shape), std::move(v));
  t.set_requires_grad(requires_grad);
  return t;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace cips::test
