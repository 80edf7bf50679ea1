// Copyright 2026 AudioLog Authors
// Reverse-mode automatic differentiation over dense tensors.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "audiolog/tensor.hpp"

namespace audiolog::nn {

// Define-by-run tape. Each op allocates a Node holding the forward value; the
// backward closure scatters the node's gradient into its inputs. Graphs are
// DAGs freed by shared_ptr once the root goes out of scope.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::string name;  // non-empty for parameters
  std::vector<Var> inputs;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor::zeros(value.shape);
  }
  void zero_grad() {
    if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0);
  }
};

// When grad mode is off (inference), ops do not record backward closures.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

inline Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

inline Var scalar_const(double v) { return constant(Tensor::scalar(v)); }

inline Var parameter(Tensor v, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

namespace detail {

inline bool track(std::initializer_list<const Var*> ins) {
  if (!grad_mode()) return false;
  for (const Var* v : ins)
    if ((*v)->requires_grad) return true;
  return false;
}

inline Var make(Tensor value, bool tracked, std::vector<Var> inputs,
                std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (tracked) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(fn);
  }
  return n;
}

// C[M,N] (+)= op(A) * op(B). Plain loops ordered for row-major locality.
inline void mm(const double* A, const double* B, double* C, int64_t M,
               int64_t K, int64_t N, bool ta, bool tb) {
  if (!ta && !tb) {
    for (int64_t i = 0; i < M; ++i) {
      double* c = C + i * N;
      const double* a = A + i * K;
      for (int64_t k = 0; k < K; ++k) {
        const double av = a[k];
        if (av == 0.0) continue;
        const double* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else if (ta && !tb) {  // A is [K,M]
    for (int64_t k = 0; k < K; ++k) {
      const double* a = A + k * M;
      const double* b = B + k * N;
      for (int64_t i = 0; i < M; ++i) {
        const double av = a[i];
        if (av == 0.0) continue;
        double* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else if (!ta && tb) {  // B is [N,K]
    for (int64_t i = 0; i < M; ++i) {
      const double* a = A + i * K;
      double* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) {
        const double* b = B + j * K;
        double acc = 0.0;
        for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
  } else {  // A [K,M], B [N,K]
    for (int64_t i = 0; i < M; ++i) {
      double* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) {
        const double* b = B + j * K;
        double acc = 0.0;
        for (int64_t k = 0; k < K; ++k) acc += A[k * M + i] * b[k];
        c[j] += acc;
      }
    }
  }
}

}  // namespace detail

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeMismatch("add: " + a->value.shape_str() + " vs " +
                        b->value.shape_str());
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return detail::make(std::move(out), detail::track({&a, &b}), {a, b},
                      [a, b](Node& n) {
                        if (a->requires_grad) {
                          a->ensure_grad();
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            a->grad[i] += n.grad[i];
                        }
                        if (b->requires_grad) {
                          b->ensure_grad();
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            b->grad[i] += n.grad[i];
                        }
                      });
}

inline Var sub(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeMismatch("sub: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return detail::make(std::move(out), detail::track({&a, &b}), {a, b},
                      [a, b](Node& n) {
                        if (a->requires_grad) {
                          a->ensure_grad();
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            a->grad[i] += n.grad[i];
                        }
                        if (b->requires_grad) {
                          b->ensure_grad();
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            b->grad[i] -= n.grad[i];
                        }
                      });
}

inline Var mul(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeMismatch("mul: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return detail::make(std::move(out), detail::track({&a, &b}), {a, b},
                      [a, b](Node& n) {
                        if (a->requires_grad) {
                          a->ensure_grad();
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            a->grad[i] += n.grad[i] * b->value[i];
                        }
                        if (b->requires_grad) {
                          b->ensure_grad();
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            b->grad[i] += n.grad[i] * a->value[i];
                        }
                      });
}

inline Var scale(const Var& a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v *= c;
  return detail::make(std::move(out), detail::track({&a}), {a},
                      [a, c](Node& n) {
                        a->ensure_grad();
                        for (int64_t i = 0; i < n.grad.numel(); ++i)
                          a->grad[i] += n.grad[i] * c;
                      });
}

inline Var add_scalar(const Var& a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v += c;
  return detail::make(std::move(out), detail::track({&a}), {a},
                      [a](Node& n) {
                        a->ensure_grad();
                        for (int64_t i = 0; i < n.grad.numel(); ++i)
                          a->grad[i] += n.grad[i];
                      });
}

// Generic unary op: f(x) with df(x, y) = dy/dx where y = f(x).
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tensor out = a->value;
  for (double& v : out.data) v = f(v);
  Tensor saved = out;  // df may use y
  return detail::make(
      std::move(out), detail::track({&a}), {a},
      [a, df, saved = std::move(saved)](Node& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
          a->grad[i] += n.grad[i] * df(a->value[i], saved[i]);
      });
}

inline Var vexp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}
inline Var vlog(const Var& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}
inline Var vtanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}
inline Var vsigmoid(const Var& a) {
  return unary(a,
               [](double x) {
                 return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
               },
               [](double, double y) { return y * (1.0 - y); });
}
inline Var vrelu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
inline Var vgelu(const Var& a) {
  return unary(a,
               [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); },
               [](double x, double) {
                 const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                 const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
                 return cdf + x * pdf;
               });
}
// log(1 + e^x), overflow-safe.
inline Var vsoftplus(const Var& a) {
  return unary(a,
               [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
               [](double x, double) {
                 return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
               });
}
inline Var vpow(const Var& a, double p) {
  return unary(a, [p](double x) { return std::pow(x, p); },
               [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

// ---- matrix products ----

inline Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 ||
      a->value.shape[1] != b->value.shape[0])
    throw ShapeMismatch("matmul: " + a->value.shape_str() + " x " +
                        b->value.shape_str());
  const int64_t M = a->value.shape[0], K = a->value.shape[1],
                N = b->value.shape[1];
  Tensor out({M, N});
  detail::mm(a->value.data.data(), b->value.data.data(), out.data.data(), M, K,
             N, false, false);
  return detail::make(std::move(out), detail::track({&a, &b}), {a, b},
                      [a, b, M, K, N](Node& n) {
                        if (a->requires_grad) {
                          a->ensure_grad();  // dA = dC * B^T
                          detail::mm(n.grad.data.data(), b->value.data.data(),
                                     a->grad.data.data(), M, N, K, false, true);
                        }
                        if (b->requires_grad) {
                          b->ensure_grad();  // dB = A^T * dC
                          detail::mm(a->value.data.data(), n.grad.data.data(),
                                     b->grad.data.data(), K, M, N, true, false);
                        }
                      });
}

inline Var bmm(const Var& a, const Var& b) {
  if (a->value.rank() != 3 || b->value.rank() != 3 ||
      a->value.shape[0] != b->value.shape[0] ||
      a->value.shape[2] != b->value.shape[1])
    throw ShapeMismatch("bmm: " + a->value.shape_str() + " x " +
                        b->value.shape_str());
  const int64_t B = a->value.shape[0], M = a->value.shape[1],
                K = a->value.shape[2], N = b->value.shape[2];
  Tensor out({B, M, N});
  for (int64_t i = 0; i < B; ++i)
    detail::mm(a->value.data.data() + i * M * K,
               b->value.data.data() + i * K * N, out.data.data() + i * M * N,
               M, K, N, false, false);
  return detail::make(
      std::move(out), detail::track({&a, &b}), {a, b},
      [a, b, B, M, K, N](Node& n) {
        if (a->requires_grad) {
          a->ensure_grad();
          for (int64_t i = 0; i < B; ++i)
            detail::mm(n.grad.data.data() + i * M * N,
                       b->value.data.data() + i * K * N,
                       a->grad.data.data() + i * M * K, M, N, K, false, true);
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (int64_t i = 0; i < B; ++i)
            detail::mm(a->value.data.data() + i * M * K,
                       n.grad.data.data() + i * M * N,
                       b->grad.data.data() + i * K * N, K, M, N, true, false);
        }
      });
}

// ---- data movement ----

// out[i] = idx[i] < 0 ? 0 : a.flat[idx[i]]. One primitive covers permutes,
// rolls, window partitions, patch merges, im2col and broadcast expansion;
// backward is a scatter-add.
inline Var gather(const Var& a,
                  std::shared_ptr<const std::vector<int64_t>> idx,
                  std::vector<int64_t> out_shape) {
  Tensor out(std::move(out_shape));
  if (static_cast<int64_t>(idx->size()) != out.numel())
    throw ShapeMismatch("gather: index count does not match output shape");
  const auto& ix = *idx;
  for (size_t i = 0; i < ix.size(); ++i)
    out.data[i] = ix[i] < 0 ? 0.0 : a->value.data[static_cast<size_t>(ix[i])];
  return detail::make(std::move(out), detail::track({&a}), {a},
                      [a, idx](Node& n) {
                        a->ensure_grad();
                        const auto& ix = *idx;
                        for (size_t i = 0; i < ix.size(); ++i)
                          if (ix[i] >= 0)
                            a->grad.data[static_cast<size_t>(ix[i])] +=
                                n.grad.data[i];
                      });
}

inline Var reshape(const Var& a, std::vector<int64_t> new_shape) {
  if (Tensor::numel_of(new_shape) != a->value.numel())
    throw ShapeMismatch("reshape: element count mismatch");
  Tensor out(std::move(new_shape), a->value.data);
  return detail::make(std::move(out), detail::track({&a}), {a},
                      [a](Node& n) {
                        a->ensure_grad();
                        for (int64_t i = 0; i < n.grad.numel(); ++i)
                          a->grad[i] += n.grad[i];
                      });
}

// ---- broadcasting against trailing dimension ----

inline Var add_bias(const Var& a, const Var& b) {
  const int64_t D = b->value.numel();
  if (b->value.rank() != 1 || a->value.shape.back() != D)
    throw ShapeMismatch("add_bias: bias must match trailing dim");
  Tensor out = a->value;
  const int64_t rows = out.numel() / D;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t d = 0; d < D; ++d) out[r * D + d] += b->value[d];
  return detail::make(std::move(out), detail::track({&a, &b}), {a, b},
                      [a, b, rows, D](Node& n) {
                        if (a->requires_grad) {
                          a->ensure_grad();
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            a->grad[i] += n.grad[i];
                        }
                        if (b->requires_grad) {
                          b->ensure_grad();
                          for (int64_t r = 0; r < rows; ++r)
                            for (int64_t d = 0; d < D; ++d)
                              b->grad[d] += n.grad[r * D + d];
                        }
                      });
}

inline Var mul_bias(const Var& a, const Var& g) {
  const int64_t D = g->value.numel();
  if (g->value.rank() != 1 || a->value.shape.back() != D)
    throw ShapeMismatch("mul_bias: scale must match trailing dim");
  Tensor out = a->value;
  const int64_t rows = out.numel() / D;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t d = 0; d < D; ++d) out[r * D + d] *= g->value[d];
  return detail::make(std::move(out), detail::track({&a, &g}), {a, g},
                      [a, g, rows, D](Node& n) {
                        if (a->requires_grad) {
                          a->ensure_grad();
                          for (int64_t r = 0; r < rows; ++r)
                            for (int64_t d = 0; d < D; ++d)
                              a->grad[r * D + d] += n.grad[r * D + d] * g->value[d];
                        }
                        if (g->requires_grad) {
                          g->ensure_grad();
                          for (int64_t r = 0; r < rows; ++r)
                            for (int64_t d = 0; d < D; ++d)
                              g->grad[d] += n.grad[r * D + d] * a->value[r * D + d];
                        }
                      });
}

// ---- reductions ----

inline Var reduce_sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a->value.data) s += v;
  return detail::make(Tensor::scalar(s), detail::track({&a}), {a},
                      [a](Node& n) {
                        a->ensure_grad();
                        const double g = n.grad[0];
                        for (int64_t i = 0; i < a->grad.numel(); ++i)
                          a->grad[i] += g;
                      });
}

inline Var reduce_mean_all(const Var& a) {
  return scale(reduce_sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

inline Var reduce_sum_axis(const Var& a, size_t axis) {
  if (axis >= a->value.rank()) throw ShapeMismatch("reduce axis out of range");
  const auto& s = a->value.shape;
  int64_t pre = 1, post = 1;
  for (size_t i = 0; i < axis; ++i) pre *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) post *= s[i];
  const int64_t n_ax = s[axis];
  std::vector<int64_t> out_shape;
  for (size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  for (int64_t p = 0; p < pre; ++p)
    for (int64_t k = 0; k < n_ax; ++k)
      for (int64_t q = 0; q < post; ++q)
        out[p * post + q] += a->value[(p * n_ax + k) * post + q];
  return detail::make(std::move(out), detail::track({&a}), {a},
                      [a, pre, n_ax, post](Node& n) {
                        a->ensure_grad();
                        for (int64_t p = 0; p < pre; ++p)
                          for (int64_t k = 0; k < n_ax; ++k)
                            for (int64_t q = 0; q < post; ++q)
                              a->grad[(p * n_ax + k) * post + q] +=
                                  n.grad[p * post + q];
                      });
}

inline Var reduce_mean_axis(const Var& a, size_t axis) {
  const double n = static_cast<double>(a->value.shape.at(axis));
  return scale(reduce_sum_axis(a, axis), 1.0 / n);
}

// ---- normalization and attention pieces ----

// Softmax along the last dimension. Backward: dx = y * (dy - sum(dy * y)).
inline Var softmax_lastdim(const Var& a) {
  const int64_t D = a->value.shape.back();
  const int64_t rows = a->value.numel() / D;
  Tensor out = a->value;
  for (int64_t r = 0; r < rows; ++r) {
    double* x = out.data.data() + r * D;
    double mx = x[0];
    for (int64_t d = 1; d < D; ++d) mx = std::max(mx, x[d]);
    double denom = 0.0;
    for (int64_t d = 0; d < D; ++d) {
      x[d] = std::exp(x[d] - mx);
      denom += x[d];
    }
    for (int64_t d = 0; d < D; ++d) x[d] /= denom;
  }
  Tensor y = out;
  return detail::make(std::move(out), detail::track({&a}), {a},
                      [a, y = std::move(y), rows, D](Node& n) {
                        a->ensure_grad();
                        for (int64_t r = 0; r < rows; ++r) {
                          const double* yr = y.data.data() + r * D;
                          const double* gr = n.grad.data.data() + r * D;
                          double dot = 0.0;
                          for (int64_t d = 0; d < D; ++d) dot += gr[d] * yr[d];
                          double* ar = a->grad.data.data() + r * D;
                          for (int64_t d = 0; d < D; ++d)
                            ar[d] += yr[d] * (gr[d] - dot);
                        }
                      });
}

// LayerNorm over the last dimension with learnable gamma/beta.
inline Var layer_norm(const Var& a, const Var& gamma, const Var& beta,
                      double eps = 1e-5) {
  const int64_t D = a->value.shape.back();
  if (gamma->value.numel() != D || beta->value.numel() != D)
    throw ShapeMismatch("layer_norm: gamma/beta must match trailing dim");
  const int64_t rows = a->value.numel() / D;
  Tensor xhat(a->value.shape);
  Tensor inv_std({rows});
  Tensor out(a->value.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = a->value.data.data() + r * D;
    double mean = 0.0;
    for (int64_t d = 0; d < D; ++d) mean += x[d];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t d = 0; d < D; ++d) var += (x[d] - mean) * (x[d] - mean);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int64_t d = 0; d < D; ++d) {
      const double xh = (x[d] - mean) * is;
      xhat[r * D + d] = xh;
      out[r * D + d] = xh * gamma->value[d] + beta->value[d];
    }
  }
  return detail::make(
      std::move(out), detail::track({&a, &gamma, &beta}), {a, gamma, beta},
      [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std),
       rows, D](Node& n) {
        if (gamma->requires_grad) gamma->ensure_grad();
        if (beta->requires_grad) beta->ensure_grad();
        if (a->requires_grad) a->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double* dy = n.grad.data.data() + r * D;
          const double* xh = xhat.data.data() + r * D;
          if (gamma->requires_grad)
            for (int64_t d = 0; d < D; ++d)
              gamma->grad[d] += dy[d] * xh[d];
          if (beta->requires_grad)
            for (int64_t d = 0; d < D; ++d) beta->grad[d] += dy[d];
          if (a->requires_grad) {
            double m1 = 0.0, m2 = 0.0;
            for (int64_t d = 0; d < D; ++d) {
              const double dxh = dy[d] * gamma->value[d];
              m1 += dxh;
              m2 += dxh * xh[d];
            }
            m1 /= static_cast<double>(D);
            m2 /= static_cast<double>(D);
            const double is = inv_std[r];
            double* da = a->grad.data.data() + r * D;
            for (int64_t d = 0; d < D; ++d) {
              const double dxh = dy[d] * gamma->value[d];
              da[d] += is * (dxh - m1 - xh[d] * m2);
            }
          }
        }
      });
}

// Inverted-dropout applied with a caller-supplied mask draw.
inline Var dropout(const Var& a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  Tensor mask(a->value.shape);
  const double keep = 1.0 - rate;
  for (double& m : mask.data) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(a, constant(std::move(mask)));
}

// ---- backward pass ----

inline void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw ShapeMismatch("backward: root must be scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS; graphs can be thousands of nodes deep.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->inputs.size()) {
      Node* child = node->inputs[next_child++].get();
      if (child->requires_grad && visited.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---- index-map builders (used with gather) ----

namespace idx {

using Map = std::shared_ptr<std::vector<int64_t>>;

inline Map make_map(size_t n) {
  auto m = std::make_shared<std::vector<int64_t>>();
  m->reserve(n);
  return m;
}

// [B, M, N] -> [B, N, M]
inline Map transpose_last2(int64_t B, int64_t M, int64_t N) {
  auto m = make_map(static_cast<size_t>(B * M * N));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t j = 0; j < N; ++j)
      for (int64_t i = 0; i < M; ++i)
        m->push_back((b * M + i) * N + j);
  return m;
}

}  // namespace idx

}  // namespace audiolog::nn
