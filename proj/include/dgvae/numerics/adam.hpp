#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dgvae/error.hpp"
#include "dgvae/numerics/tensor.hpp"

namespace dgvae {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<DenseTensor> first_moment;
  std::vector<DenseTensor> second_moment;

  AdamState() = default;
  explicit AdamState(AdamOptions o) : options(o) {}

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return a.step == b.step && a.first_moment == b.first_moment && a.second_moment == b.second_moment &&
           a.options.learning_rate == b.options.learning_rate && a.options.beta1 == b.options.beta1 &&
           a.options.beta2 == b.options.beta2 && a.options.epsilon == b.options.epsilon;
  }
};

// One bias-corrected Adam update applied in place. Moment buffers are created
// on the first call and must keep matching the parameter shapes afterwards.
inline void adam_step(std::span<DenseTensor> params, std::span<const DenseTensor> grads, AdamState& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape(), 0.0);
      state.second_moment.emplace_back(p.shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state tracks a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.first_moment[i])) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i) + " " +
                       params[i].shape_string() + " vs gradient " + grads[i].shape_string());
    }
  }
  state.step += 1;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace dgvae
