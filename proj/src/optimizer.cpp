#include "v6forge/optimizer.hpp"

#include <cmath>
#include <string>

namespace v6forge::nn {

template <typename T>
void optimizer_step(OptimizerState<T>& state, std::span<Tensor2<T>> params, std::span<const Tensor2<T>> grads) {
  if (params.size() != grads.size() || params.size() != state.first.size() || params.size() != state.second.size())
    throw ShapeMismatch("optimizer: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                        " grads, " + std::to_string(state.first.size()) + " moments");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.first[i]) ||
        !params[i].same_shape(state.second[i]))
      throw ShapeMismatch("optimizer: tensor " + std::to_string(i) + " is " + shape_string(params[i]) +
                          " but gradient is " + shape_string(grads[i]));

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.learning_rate / correction1);
  const T root2 = static_cast<T>(std::sqrt(correction2));
  const T eps = static_cast<T>(c.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) / root2 + eps);
    }
  }
}

template void optimizer_step<float>(OptimizerState<float>&, std::span<Tensor2<float>>,
                                    std::span<const Tensor2<float>>);
template void optimizer_step<double>(OptimizerState<double>&, std::span<Tensor2<double>>,
                                     std::span<const Tensor2<double>>);

}  // namespace v6forge::nn
