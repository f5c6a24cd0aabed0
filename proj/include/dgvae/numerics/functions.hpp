#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "dgvae/error.hpp"
#include "dgvae/numerics/tensor.hpp"

namespace dgvae {

// Norms below this are treated as zero by l2_normalize.
inline constexpr double kNormEpsilon = 1e-12;

// ln(1 + e^x) without overflow for large x or loss of precision for very negative x.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax of x / temperature along `axis` (0 = down columns, 1 = across rows).
inline DenseTensor softmax(const DenseTensor& x, int axis, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
  DenseTensor out = x;
  const std::size_t outer = axis == 1 ? x.rows() : x.cols();
  const std::size_t inner = axis == 1 ? x.cols() : x.rows();
  auto at = [&](std::size_t o, std::size_t i) -> double& { return axis == 1 ? out(o, i) : out(i, o); };
  for (std::size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, at(o, i) / temperature);
    double total = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      double& v = at(o, i);
      v = std::exp(v / temperature - mx);
      total += v;
    }
    for (std::size_t i = 0; i < inner; ++i) at(o, i) /= total;
  }
  return out;
}

inline double l2_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Scales x in place to unit Euclidean norm; leaves it untouched when the norm is below kNormEpsilon.
inline void l2_normalize_inplace(std::span<double> x) {
  const double n = l2_norm(x);
  if (n < kNormEpsilon) return;
  for (double& v : x) v /= n;
}

inline DenseTensor l2_normalize(const DenseTensor& x) {
  DenseTensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) l2_normalize_inplace(out.row(r));
  return out;
}

}  // namespace dgvae
