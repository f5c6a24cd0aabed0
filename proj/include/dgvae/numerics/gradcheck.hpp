#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dgvae/error.hpp"
#include "dgvae/numerics/autodiff.hpp"

namespace dgvae {

// Builds a scalar loss on `tape` from the given parameter leaves. Must be
// deterministic: any noise has to be drawn once outside and captured.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Lower clamp for the relative-error denominator.
  double denominator_floor = 1e-8;
};

struct ParamCheck {
  std::string name;
  std::size_t count = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<ParamCheck> params;
  double max_relative_error = 0.0;
  double loss = 0.0;
  bool passed = true;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

inline double evaluate_loss(const LossBuilder& loss_fn, std::span<const DenseTensor> values) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(values.size());
  for (const auto& v : values) leaves.push_back(tape.leaf(v));
  const double loss = loss_fn(tape, leaves).value().item();
  if (!std::isfinite(loss)) throw NumericError("gradcheck: non-finite loss");
  return loss;
}

// Reverse-mode gradients of the loss against central differences
// (L(θ+h) − L(θ−h)) / 2h, one scalar at a time.
inline GradcheckReport gradcheck(const LossBuilder& loss_fn, std::vector<DenseTensor> params,
                                 std::span<const std::string> names = {}, GradcheckOptions opt = {}) {
  GradcheckReport report;
  std::vector<DenseTensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    Var loss = loss_fn(tape, leaves);
    report.loss = loss.value().item();
    if (!std::isfinite(report.loss)) throw NumericError("gradcheck: non-finite loss");
    tape.backward(loss);
    for (const auto& l : leaves) analytic.push_back(tape.grad(l));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    ParamCheck pc;
    pc.name = p < names.size() ? names[p] : "param" + std::to_string(p);
    pc.count = params[p].size();
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double original = params[p][i];
      params[p][i] = original + opt.step;
      const double up = evaluate_loss(loss_fn, params);
      params[p][i] = original - opt.step;
      const double down = evaluate_loss(loss_fn, params);
      params[p][i] = original;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[p][i];
      const double rel = relative_error(a, numeric, opt.denominator_floor);
      pc.max_absolute_error = std::max(pc.max_absolute_error, std::fabs(a - numeric));
      if (i == 0 || rel > pc.max_relative_error) {
        pc.max_relative_error = rel;
        pc.worst_index = i;
        pc.worst_analytic = a;
        pc.worst_numeric = numeric;
      }
    }
    pc.passed = pc.max_relative_error < opt.tolerance;
    report.passed = report.passed && pc.passed;
    report.max_relative_error = std::max(report.max_relative_error, pc.max_relative_error);
    report.params.push_back(pc);
  }
  return report;
}

}  // namespace dgvae
