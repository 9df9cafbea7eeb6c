#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "v6forge/tensor.hpp"

namespace v6forge::nn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode differentiation over whole-matrix primitives.
///
/// Every operation appends a node holding its forward value and a closure
/// that propagates the node's gradient to its inputs. A Tape is single-use
/// and not thread-safe; build one per example when evaluating in parallel.
template <typename T>
class Tape {
 public:
  /// Differentiable input; its gradient is available after backward().
  Var leaf(Tensor2<T> value);
  /// Input that never receives a gradient.
  Var constant(Tensor2<T> value);

  [[nodiscard]] const Tensor2<T>& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() root; zeros if the node was unreached.
  [[nodiscard]] Tensor2<T> grad(Var v) const;
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  /// Throws UnsupportedComposition if a non-differentiable node lies on a
  /// gradient path.
  void backward(Var root);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T factor);
  /// x (n x m) + bias (1 x m) broadcast over rows.
  Var add_bias(Var x, Var bias);
  /// x * w + b.
  Var dense(Var x, Var w, Var b);
  Var sigmoid(Var x);
  Var exp(Var x);
  Var sum(Var x);
  /// Column means: (n x m) -> (1 x m).
  Var mean_rows(Var x);
  Var reshape(Var x, std::size_t rows, std::size_t cols);
  Var softmax_rows(Var x);

  /// Width-3, stride-1 convolution along rows with one zero row of padding
  /// on each side. x: (P x Cin), kernel: (3*Cin x Cout) with row index
  /// tap*Cin + channel (tap 0 looks at position p-1), bias: (1 x Cout).
  Var conv1d_same3(Var x, Var kernel, Var bias);
  /// x: (P x 2C) -> A * sigmoid(B), A the first C columns, B the last C.
  Var glu(Var x);

  /// Sum over all entries of -(x log y + (1 - x) log(1 - y)), y clamped to
  /// [eps, 1 - eps]. Throws DomainError for y outside [0, 1] or NaN.
  Var binary_cross_entropy(Var y, Var target, T eps);
  /// Sum over all entries of -x log y, y clamped below at eps.
  Var categorical_cross_entropy(Var y, Var target, T eps);
  /// Sum over entries of -1/2 (1 + log_var - mu^2 - exp(log_var)).
  Var kl_divergence(Var mu, Var log_var);
  /// mu + eps * exp(log_var / 2).
  Var reparameterize(Var mu, Var log_var, Var eps);

  /// One-hot of the per-row maximum. Has no gradient.
  Var argmax_rows(Var x);

 private:
  struct Node {
    Tensor2<T> value;
    Tensor2<T> grad;
    bool requires_grad = false;
    bool reached = false;
    std::vector<Tensor2<T>> saved;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var push(Tensor2<T> value, std::initializer_list<Var> parents, std::function<void(Tape&, std::size_t)> backward);
  /// Accumulates `g` into the gradient of `v` if it participates.
  void accumulate(Var v, const Tensor2<T>& g);
  Tensor2<T>& grad_ref(Var v);
  bool tracks(Var v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

/// C += A * B for row-major matrices; shapes are the caller's contract.
template <typename T>
void gemm_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c);
/// C += A^T * B.
template <typename T>
void gemm_tn_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c);
/// C += A * B^T.
template <typename T>
void gemm_nt_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c);

template <typename T>
T sigmoid_scalar(T x) noexcept;

}  // namespace v6forge::nn
