#include "v6forge/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace v6forge::nn {
namespace {

template <typename T>
Var build(Tape<T>& tape, const LossFn<T>& loss, const std::vector<Tensor2<T>>& at, std::vector<Var>& leaves) {
  leaves.clear();
  for (const auto& t : at) leaves.push_back(tape.leaf(t));
  const Var root = loss(tape, leaves);
  if (tape.value(root).size() != 1) throw ShapeMismatch("loss must be a scalar");
  return root;
}

}  // namespace

template <typename T>
GradResult<T> grad(const LossFn<T>& loss, const std::vector<Tensor2<T>>& at) {
  Tape<T> tape;
  std::vector<Var> leaves;
  const Var root = build(tape, loss, at, leaves);
  tape.backward(root);
  GradResult<T> r;
  r.loss = tape.value(root)[0];
  for (auto v : leaves) r.grads.push_back(tape.grad(v));
  return r;
}

template <typename T>
T evaluate_loss(const LossFn<T>& loss, const std::vector<Tensor2<T>>& at) {
  Tape<T> tape;
  std::vector<Var> leaves;
  return tape.value(build(tape, loss, at, leaves))[0];
}

double relative_error(double analytic, double numeric, double abs_floor) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

FiniteDiffReport finite_diff_compare(const LossFn<double>& loss, const std::vector<Tensor2<double>>& at,
                                     const std::vector<Tensor2<double>>& analytic, double step, double tolerance,
                                     double abs_floor) {
  if (analytic.size() != at.size()) throw ShapeMismatch("gradient count differs from input count");
  FiniteDiffReport rep;
  auto probe = at;
  for (std::size_t t = 0; t < at.size(); ++t) {
    if (!analytic[t].same_shape(at[t])) throw ShapeMismatch("gradient shape differs from input shape");
    for (std::size_t i = 0; i < at[t].size(); ++i) {
      const double orig = at[t][i];
      probe[t][i] = orig + step;
      const double up = evaluate_loss(loss, probe);
      probe[t][i] = orig - step;
      const double down = evaluate_loss(loss, probe);
      probe[t][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[t][i], numeric, abs_floor);
      ++rep.coordinates;
      if (err > rep.max_relative_error || rep.coordinates == 1) {
        rep.max_relative_error = err;
        rep.worst_input = t;
        rep.worst_index = i;
        rep.analytic = analytic[t][i];
        rep.numeric = numeric;
      }
    }
  }
  rep.passed = rep.max_relative_error < tolerance;
  return rep;
}

FiniteDiffReport finite_diff_check(const LossFn<double>& loss, const std::vector<Tensor2<double>>& at, double step,
                                   double tolerance, double abs_floor) {
  const auto g = grad(loss, at);
  return finite_diff_compare(loss, at, g.grads, step, tolerance, abs_floor);
}

template GradResult<float> grad<float>(const LossFn<float>&, const std::vector<Tensor2<float>>&);
template GradResult<double> grad<double>(const LossFn<double>&, const std::vector<Tensor2<double>>&);
template float evaluate_loss<float>(const LossFn<float>&, const std::vector<Tensor2<float>>&);
template double evaluate_loss<double>(const LossFn<double>&, const std::vector<Tensor2<double>>&);

}  // namespace v6forge::nn
