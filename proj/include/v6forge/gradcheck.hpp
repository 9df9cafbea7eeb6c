#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "v6forge/autograd.hpp"

namespace v6forge::nn {

/// Builds a scalar loss on `tape` from leaves holding the evaluation point.
template <typename T>
using LossFn = std::function<Var(Tape<T>& tape, std::span<const Var> inputs)>;

template <typename T>
struct GradResult {
  T loss{};
  std::vector<Tensor2<T>> grads;
};

/// Loss value and exact reverse-mode gradients at `at`.
template <typename T>
GradResult<T> grad(const LossFn<T>& loss, const std::vector<Tensor2<T>>& at);

/// Loss value only.
template <typename T>
T evaluate_loss(const LossFn<T>& loss, const std::vector<Tensor2<T>>& at);

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  bool passed = true;
};

/// Relative error |a - n| / max(|a|, |n|, abs_floor).
double relative_error(double analytic, double numeric, double abs_floor) noexcept;

/// Compares `analytic` against central differences of `loss` at `at`.
FiniteDiffReport finite_diff_compare(const LossFn<double>& loss, const std::vector<Tensor2<double>>& at,
                                     const std::vector<Tensor2<double>>& analytic, double step, double tolerance,
                                     double abs_floor = 1e-6);

/// Central-difference check of grad() for `loss`.
FiniteDiffReport finite_diff_check(const LossFn<double>& loss, const std::vector<Tensor2<double>>& at, double step,
                                   double tolerance, double abs_floor = 1e-6);

}  // namespace v6forge::nn
