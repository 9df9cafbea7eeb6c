#include "v6forge/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace v6forge::nn {
namespace {

template <typename T>
void require_same_shape(const Tensor2<T>& a, const Tensor2<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeMismatch(std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace

template <typename T>
T sigmoid_scalar(T x) noexcept {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void gemm_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    T* crow = &c(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a(i, p);
      if (av == T(0)) continue;
      const T* brow = &b(p, 0);
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_tn_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  // a: n x k, b: n x m, c: k x m
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const T* brow = &b(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a(i, p);
      if (av == T(0)) continue;
      T* crow = &c(p, 0);
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  // a: n x m, b: k x m, c: n x k
  const std::size_t n = a.rows(), m = a.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = &a(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = &b(p, 0);
      T s = T(0);
      for (std::size_t j = 0; j < m; ++j) s += arow[j] * brow[j];
      c(i, p) += s;
    }
  }
}

template <typename T>
Var Tape<T>::leaf(Tensor2<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::constant(Tensor2<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor2<T> Tape<T>::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.reached && n.grad.size() == n.value.size()) return n.grad;
  return Tensor2<T>(n.value.rows(), n.value.cols());
}

template <typename T>
Var Tape<T>::push(Tensor2<T> value, std::initializer_list<Var> parents,
                  std::function<void(Tape&, std::size_t)> backward) {
  Node n;
  n.value = std::move(value);
  for (auto p : parents) n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor2<T>& Tape<T>::grad_ref(Var v) {
  auto& n = nodes_[v.id];
  if (!n.reached) {
    n.grad = Tensor2<T>(n.value.rows(), n.value.cols());
    n.reached = true;
  }
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor2<T>& g) {
  if (!tracks(v)) return;
  auto& dst = grad_ref(v);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <typename T>
void Tape<T>::backward(Var root) {
  if (nodes_[root.id].value.size() != 1) throw ShapeMismatch("backward root must be a scalar");
  for (auto& n : nodes_) {
    n.reached = false;
    n.grad = Tensor2<T>();
  }
  if (!nodes_[root.id].requires_grad) return;
  grad_ref(root)[0] = T(1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.reached || !n.requires_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.cols() != bv.rows()) throw ShapeMismatch("matmul: " + shape_string(av) + " * " + shape_string(bv));
  Tensor2<T> out(av.rows(), bv.cols());
  gemm_acc(av, bv, out);
  return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.tracks(a)) gemm_nt_acc(g, t.value(b), t.grad_ref(a));
    if (t.tracks(b)) gemm_tn_acc(t.value(a), g, t.grad_ref(b));
  });
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor2<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Tensor2<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    auto g = t.nodes_[self].grad;
    t.accumulate(a, g);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
    t.accumulate(b, g);
  });
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor2<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.tracks(a)) {
      auto& ga = t.grad_ref(a);
      const auto& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.tracks(b)) {
      auto& gb = t.grad_ref(b);
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T factor) {
  Tensor2<T> out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return push(std::move(out), {a}, [a, factor](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var Tape<T>::add_bias(Var x, Var bias) {
  const auto& xv = value(x);
  const auto& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw ShapeMismatch("add_bias: " + shape_string(xv) + " + " + shape_string(bv));
  Tensor2<T> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return push(std::move(out), {x, bias}, [x, bias](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    t.accumulate(x, g);
    if (t.tracks(bias)) {
      auto& gb = t.grad_ref(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

template <typename T>
Var Tape<T>::dense(Var x, Var w, Var b) {
  return add_bias(matmul(x, w), b);
}

template <typename T>
Var Tape<T>::sigmoid(Var x) {
  Tensor2<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(out[i]);
  return push(std::move(out), {x}, [x](Tape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    auto& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i] * n.value[i] * (T(1) - n.value[i]);
  });
}

template <typename T>
Var Tape<T>::exp(Var x) {
  Tensor2<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return push(std::move(out), {x}, [x](Tape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    auto& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i] * n.value[i];
  });
}

template <typename T>
Var Tape<T>::sum(Var x) {
  T s = T(0);
  for (auto v : value(x).span()) s += v;
  return push(Tensor2<T>(1, 1, s), {x}, [x](Tape& t, std::size_t self) {
    const T g = t.nodes_[self].grad[0];
    auto& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Var Tape<T>::mean_rows(Var x) {
  const auto& xv = value(x);
  if (xv.rows() == 0) throw ShapeMismatch("mean_rows of an empty tensor");
  Tensor2<T> out(1, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out[c] += xv(r, c);
  const T inv = T(1) / static_cast<T>(xv.rows());
  for (std::size_t c = 0; c < out.cols(); ++c) out[c] *= inv;
  return push(std::move(out), {x}, [x, inv](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& gx = t.grad_ref(x);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[c] * inv;
  });
}

template <typename T>
Var Tape<T>::reshape(Var x, std::size_t rows, std::size_t cols) {
  auto out = value(x).reshaped(rows, cols);
  return push(std::move(out), {x}, [x](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var Tape<T>::softmax_rows(Var x) {
  Tensor2<T> out = value(x);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T z = T(0);
    for (auto& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (auto& v : row) v /= z;
  }
  return push(std::move(out), {x}, [x](Tape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    auto& gx = t.grad_ref(x);
    for (std::size_t r = 0; r < n.value.rows(); ++r) {
      const auto y = n.value.row(r);
      const auto g = n.grad.row(r);
      T dot = T(0);
      for (std::size_t c = 0; c < y.size(); ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < y.size(); ++c) gx(r, c) += y[c] * (g[c] - dot);
    }
  });
}

template <typename T>
Var Tape<T>::conv1d_same3(Var x, Var kernel, Var bias) {
  const auto& xv = value(x);
  const auto& kv = value(kernel);
  const auto& bv = value(bias);
  const std::size_t positions = xv.rows(), cin = xv.cols(), cout = kv.cols();
  if (kv.rows() != 3 * cin || bv.rows() != 1 || bv.cols() != cout)
    throw ShapeMismatch("conv1d_same3: input " + shape_string(xv) + ", kernel " + shape_string(kv) + ", bias " +
                        shape_string(bv));

  // im2col with zero padding
  Tensor2<T> cols(positions, 3 * cin);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t tap = 0; tap < 3; ++tap) {
      if ((p == 0 && tap == 0) || (p + 1 == positions && tap == 2)) continue;
      const std::size_t src = p + tap - 1;
      for (std::size_t c = 0; c < cin; ++c) cols(p, tap * cin + c) = xv(src, c);
    }
  Tensor2<T> out(positions, cout);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t c = 0; c < cout; ++c) out(p, c) = bv[c];
  gemm_acc(cols, kv, out);

  auto v = push(std::move(out), {x, kernel, bias}, [x, kernel, bias](Tape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    const auto& g = n.grad;
    const auto& cols = n.saved[0];
    if (t.tracks(kernel)) gemm_tn_acc(cols, g, t.grad_ref(kernel));
    if (t.tracks(bias)) {
      auto& gb = t.grad_ref(bias);
      for (std::size_t p = 0; p < g.rows(); ++p)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(p, c);
    }
    if (t.tracks(x)) {
      Tensor2<T> dcols(cols.rows(), cols.cols());
      gemm_nt_acc(g, t.value(kernel), dcols);
      auto& gx = t.grad_ref(x);
      const std::size_t positions = gx.rows(), cin = gx.cols();
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t tap = 0; tap < 3; ++tap) {
          if ((p == 0 && tap == 0) || (p + 1 == positions && tap == 2)) continue;
          const std::size_t dst = p + tap - 1;
          for (std::size_t c = 0; c < cin; ++c) gx(dst, c) += dcols(p, tap * cin + c);
        }
    }
  });
  if (nodes_[v.id].requires_grad) nodes_[v.id].saved.push_back(std::move(cols));
  return v;
}

template <typename T>
Var Tape<T>::glu(Var x) {
  const auto& xv = value(x);
  if (xv.cols() % 2 != 0) throw ShapeMismatch("glu needs an even channel count, got " + shape_string(xv));
  const std::size_t half = xv.cols() / 2;
  Tensor2<T> out(xv.rows(), half);
  Tensor2<T> gate(xv.rows(), half);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < half; ++c) {
      gate(r, c) = sigmoid_scalar(xv(r, c + half));
      out(r, c) = xv(r, c) * gate(r, c);
    }
  auto v = push(std::move(out), {x}, [x, half](Tape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    const auto& gate = n.saved[0];
    const auto& xv = t.value(x);
    auto& gx = t.grad_ref(x);
    for (std::size_t r = 0; r < gate.rows(); ++r)
      for (std::size_t c = 0; c < half; ++c) {
        const T g = n.grad(r, c);
        const T s = gate(r, c);
        gx(r, c) += g * s;
        gx(r, c + half) += g * xv(r, c) * s * (T(1) - s);
      }
  });
  if (nodes_[v.id].requires_grad) nodes_[v.id].saved.push_back(std::move(gate));
  return v;
}

template <typename T>
Var Tape<T>::binary_cross_entropy(Var y, Var target, T eps) {
  const auto& yv = value(y);
  const auto& xv = value(target);
  require_same_shape(yv, xv, "binary_cross_entropy");
  T loss = T(0);
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const T p = yv[i];
    if (!(p >= T(0) && p <= T(1))) throw DomainError("prediction outside [0, 1]: " + std::to_string(p));
    const T pc = std::clamp(p, eps, T(1) - eps);
    loss -= xv[i] * std::log(pc) + (T(1) - xv[i]) * std::log(T(1) - pc);
  }
  return push(Tensor2<T>(1, 1, loss), {y, target}, [y, target, eps](Tape& t, std::size_t self) {
    const T g = t.nodes_[self].grad[0];
    const auto& yv = t.value(y);
    const auto& xv = t.value(target);
    if (t.tracks(y)) {
      auto& gy = t.grad_ref(y);
      for (std::size_t i = 0; i < yv.size(); ++i) {
        const T p = yv[i];
        if (p <= eps || p >= T(1) - eps) continue;  // clamped: flat
        gy[i] += g * (-xv[i] / p + (T(1) - xv[i]) / (T(1) - p));
      }
    }
    if (t.tracks(target)) {
      auto& gx = t.grad_ref(target);
      for (std::size_t i = 0; i < yv.size(); ++i) {
        const T pc = std::clamp(yv[i], eps, T(1) - eps);
        gx[i] += g * (std::log(T(1) - pc) - std::log(pc));
      }
    }
  });
}

template <typename T>
Var Tape<T>::categorical_cross_entropy(Var y, Var target, T eps) {
  const auto& yv = value(y);
  const auto& xv = value(target);
  require_same_shape(yv, xv, "categorical_cross_entropy");
  T loss = T(0);
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const T p = yv[i];
    if (!(p >= T(0) && p <= T(1))) throw DomainError("prediction outside [0, 1]: " + std::to_string(p));
    if (xv[i] != T(0)) loss -= xv[i] * std::log(std::max(p, eps));
  }
  return push(Tensor2<T>(1, 1, loss), {y, target}, [y, target, eps](Tape& t, std::size_t self) {
    const T g = t.nodes_[self].grad[0];
    const auto& yv = t.value(y);
    const auto& xv = t.value(target);
    if (t.tracks(y)) {
      auto& gy = t.grad_ref(y);
      for (std::size_t i = 0; i < yv.size(); ++i)
        if (xv[i] != T(0) && yv[i] > eps) gy[i] -= g * xv[i] / yv[i];
    }
    if (t.tracks(target)) {
      auto& gx = t.grad_ref(target);
      for (std::size_t i = 0; i < yv.size(); ++i) gx[i] -= g * std::log(std::max(yv[i], eps));
    }
  });
}

template <typename T>
Var Tape<T>::kl_divergence(Var mu, Var log_var) {
  const auto& m = value(mu);
  const auto& lv = value(log_var);
  require_same_shape(m, lv, "kl_divergence");
  T loss = T(0);
  for (std::size_t i = 0; i < m.size(); ++i) loss += -T(0.5) * (T(1) + lv[i] - m[i] * m[i] - std::exp(lv[i]));
  return push(Tensor2<T>(1, 1, loss), {mu, log_var}, [mu, log_var](Tape& t, std::size_t self) {
    const T g = t.nodes_[self].grad[0];
    const auto& m = t.value(mu);
    const auto& lv = t.value(log_var);
    if (t.tracks(mu)) {
      auto& gm = t.grad_ref(mu);
      for (std::size_t i = 0; i < m.size(); ++i) gm[i] += g * m[i];
    }
    if (t.tracks(log_var)) {
      auto& gl = t.grad_ref(log_var);
      for (std::size_t i = 0; i < lv.size(); ++i) gl[i] += g * T(0.5) * (std::exp(lv[i]) - T(1));
    }
  });
}

template <typename T>
Var Tape<T>::reparameterize(Var mu, Var log_var, Var eps) {
  return add(mu, mul(eps, exp(scale(log_var, T(0.5)))));
}

template <typename T>
Var Tape<T>::argmax_rows(Var x) {
  const auto& xv = value(x);
  Tensor2<T> out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto row = xv.row(r);
    out(r, static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())) = T(1);
  }
  return push(std::move(out), {x}, [](Tape&, std::size_t) {
    throw UnsupportedComposition("argmax has no gradient");
  });
}

template class Tape<float>;
template class Tape<double>;
template float sigmoid_scalar<float>(float) noexcept;
template double sigmoid_scalar<double>(double) noexcept;
template void gemm_acc<float>(const Tensor2<float>&, const Tensor2<float>&, Tensor2<float>&);
template void gemm_acc<double>(const Tensor2<double>&, const Tensor2<double>&, Tensor2<double>&);
template void gemm_tn_acc<float>(const Tensor2<float>&, const Tensor2<float>&, Tensor2<float>&);
template void gemm_tn_acc<double>(const Tensor2<double>&, const Tensor2<double>&, Tensor2<double>&);
template void gemm_nt_acc<float>(const Tensor2<float>&, const Tensor2<float>&, Tensor2<float>&);
template void gemm_nt_acc<double>(const Tensor2<double>&, const Tensor2<double>&, Tensor2<double>&);

}  // namespace v6forge::nn
