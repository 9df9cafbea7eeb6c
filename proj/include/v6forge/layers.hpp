#pragma once

#include <cmath>
#include <cstddef>

#include "v6forge/autograd.hpp"
#include "v6forge/random.hpp"

namespace v6forge::nn {

/// Width-3 convolution producing 2*channels outputs, split into a value half
/// A and a gate half B.
template <typename T>
struct GatedConvParams {
  Tensor2<T> kernel;  // (3 * in_channels) x (2 * channels)
  Tensor2<T> bias;    // 1 x (2 * channels)

  static GatedConvParams zeros(std::size_t in_channels, std::size_t channels) {
    return {Tensor2<T>(3 * in_channels, 2 * channels), Tensor2<T>(1, 2 * channels)};
  }
  [[nodiscard]] std::size_t in_channels() const noexcept { return kernel.rows() / 3; }
  [[nodiscard]] std::size_t channels() const noexcept { return kernel.cols() / 2; }
};

/// H = A * sigmoid(B) on the tape.
template <typename T>
Var gated_conv(Tape<T>& tape, Var input, Var kernel, Var bias) {
  return tape.glu(tape.conv1d_same3(input, kernel, bias));
}

/// Forward-only gated convolution. Throws ShapeMismatch when the input
/// channel count does not match the kernel.
template <typename T>
Tensor2<T> gated_conv_forward(const GatedConvParams<T>& p, const Tensor2<T>& input) {
  if (input.cols() != p.in_channels() || p.kernel.rows() % 3 != 0 || p.kernel.cols() % 2 != 0)
    throw ShapeMismatch("gated conv: input " + shape_string(input) + " with kernel " + shape_string(p.kernel));
  Tape<T> tape;
  const Var out = gated_conv(tape, tape.constant(input), tape.constant(p.kernel), tape.constant(p.bias));
  return tape.value(out);
}

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor2<T> glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor2<T> t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace v6forge::nn
