#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "v6forge/tensor.hpp"

namespace v6forge::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment state; `first` and `second` mirror the parameter shapes.
template <typename T>
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor2<T>> first;
  std::vector<Tensor2<T>> second;

  static OptimizerState for_params(std::span<const Tensor2<T>> params, AdamConfig config = {}) {
    OptimizerState s;
    s.config = config;
    for (const auto& p : params) {
      s.first.emplace_back(p.rows(), p.cols());
      s.second.emplace_back(p.rows(), p.cols());
    }
    return s;
  }
};

/// One bias-corrected Adam update applied in place. Throws ShapeMismatch
/// when params, grads and moments disagree.
template <typename T>
void optimizer_step(OptimizerState<T>& state, std::span<Tensor2<T>> params, std::span<const Tensor2<T>> grads);

extern template void optimizer_step<float>(OptimizerState<float>&, std::span<Tensor2<float>>,
                                           std::span<const Tensor2<float>>);
extern template void optimizer_step<double>(OptimizerState<double>&, std::span<Tensor2<double>>,
                                            std::span<const Tensor2<double>>);

}  // namespace v6forge::nn
