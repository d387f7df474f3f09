#pragma once

// Matrix-level reverse-mode differentiation. A Tape records every operation
// in creation order, which is already a topological order, so backward()
// walks the node list once in reverse.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uavsac/errors.hpp"
#include "uavsac/matrix.hpp"
#include "uavsac/params.hpp"

namespace uavsac {

struct Var {
  std::size_t id = 0;
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Matrix<T>& value(Var v) const { return nodes_[v.id].value; }
  T scalar(Var v) const { return nodes_[v.id].value.data.at(0); }
  // Gradient of the last backward() target w.r.t. `v`; empty if unreached.
  const Matrix<T>& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix<T> m) { return push(std::move(m), false); }

  // Differentiable input that is not a parameter (used for input-gradient checks).
  Var input(Matrix<T> m) { return push(std::move(m), true); }

  // Parameter leaf. Trainable leaves accumulate into `p.grad` on backward();
  // frozen leaves are constants.
  Var param(Param<T>& p, bool trainable = true) {
    Var v = push(p.value, trainable);
    if (trainable) nodes_[v.id].param = &p;
    return v;
  }

  void backward(Var loss) {
    auto& root = nodes_[loss.id];
    if (root.value.size() != 1) throw TopologyError("backward: loss must be a scalar");
    if (!std::isfinite(static_cast<double>(root.value.data[0]))) throw NumericalError("backward: non-finite loss");
    for (auto& n : nodes_) n.grad = Matrix<T>();
    root.grad = Matrix<T>(1, 1, T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.size() == 0 || !n.requires_grad) continue;
      if (n.backward) n.backward();
    }
    for (auto& n : nodes_) {
      if (!n.param || n.grad.size() == 0) continue;
      auto& dst = n.param->grad.data;
      for (std::size_t k = 0; k < dst.size(); ++k) {
        dst[k] += n.grad.data[k];
        if (!std::isfinite(static_cast<double>(dst[k])))
          throw NumericalError("non-finite gradient for parameter " + n.param->name);
      }
    }
  }

  // ---- linear algebra -------------------------------------------------------

  Var matmul(Var a, Var b) {
    Matrix<T> out;
    gemm(value(a), value(b), out);
    Var r = push(std::move(out), rg(a) || rg(b));
    on_backward(r, [this, a, b, r] {
      const auto& g = nodes_[r.id].grad;
      if (rg(a)) gemm_nt_acc(g, value(b), acc(a));
      if (rg(b)) gemm_tn_acc(value(a), g, acc(b));
    });
    return r;
  }

  // x (n x k) + b (1 x k) broadcast over rows
  Var add_bias(Var x, Var b) {
    const auto& xv = value(x);
    const auto& bv = value(b);
    if (bv.rows != 1 || bv.cols != xv.cols) throw TopologyError("add_bias: shape mismatch");
    Matrix<T> out = xv;
    for (std::size_t i = 0; i < out.rows; ++i)
      for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += bv.data[j];
    Var r = push(std::move(out), rg(x) || rg(b));
    on_backward(r, [this, x, b, r] {
      const auto& g = nodes_[r.id].grad;
      if (rg(x)) add_into(acc(x), g);
      if (rg(b)) {
        auto& gb = acc(b);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < g.cols; ++j) gb.data[j] += g(i, j);
      }
    });
    return r;
  }

  Var concat_cols(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (av.rows != bv.rows) throw TopologyError("concat_cols: row count mismatch");
    Matrix<T> out(av.rows, av.cols + bv.cols);
    for (std::size_t i = 0; i < av.rows; ++i) {
      std::copy(av.row(i), av.row(i) + av.cols, out.row(i));
      std::copy(bv.row(i), bv.row(i) + bv.cols, out.row(i) + av.cols);
    }
    Var r = push(std::move(out), rg(a) || rg(b));
    on_backward(r, [this, a, b, r] {
      const auto& g = nodes_[r.id].grad;
      const std::size_t ac = value(a).cols;
      if (rg(a)) {
        auto& ga = acc(a);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < ac; ++j) ga(i, j) += g(i, j);
      }
      if (rg(b)) {
        auto& gb = acc(b);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < gb.cols; ++j) gb(i, j) += g(i, ac + j);
      }
    });
    return r;
  }

  Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const auto& av = value(a);
    if (begin + count > av.cols) throw TopologyError("slice_cols: out of range");
    Matrix<T> out(av.rows, count);
    for (std::size_t i = 0; i < av.rows; ++i) std::copy(av.row(i) + begin, av.row(i) + begin + count, out.row(i));
    Var r = push(std::move(out), rg(a));
    on_backward(r, [this, a, begin, count, r] {
      const auto& g = nodes_[r.id].grad;
      auto& ga = acc(a);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < count; ++j) ga(i, begin + j) += g(i, j);
    });
    return r;
  }

  // Rows offset, offset + stride, offset + 2*stride, ...
  Var select_rows(Var a, std::size_t stride, std::size_t offset) {
    const auto& av = value(a);
    if (stride == 0 || offset >= stride || av.rows % stride != 0) throw TopologyError("select_rows: bad stride");
    const std::size_t n = av.rows / stride;
    Matrix<T> out(n, av.cols);
    for (std::size_t k = 0; k < n; ++k) std::copy(av.row(k * stride + offset), av.row(k * stride + offset) + av.cols, out.row(k));
    Var r = push(std::move(out), rg(a));
    on_backward(r, [this, a, stride, offset, r] {
      const auto& g = nodes_[r.id].grad;
      auto& ga = acc(a);
      for (std::size_t k = 0; k < g.rows; ++k)
        for (std::size_t j = 0; j < g.cols; ++j) ga(k * stride + offset, j) += g(k, j);
    });
    return r;
  }

  // n x k -> n x 1
  Var sum_cols(Var a) {
    const auto& av = value(a);
    Matrix<T> out(av.rows, 1);
    for (std::size_t i = 0; i < av.rows; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < av.cols; ++j) s += av(i, j);
      out.data[i] = s;
    }
    Var r = push(std::move(out), rg(a));
    on_backward(r, [this, a, r] {
      const auto& g = nodes_[r.id].grad;
      auto& ga = acc(a);
      for (std::size_t i = 0; i < ga.rows; ++i)
        for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += g.data[i];
    });
    return r;
  }

  Var mean(Var a) {
    const auto& av = value(a);
    T s = 0;
    for (T x : av.data) s += x;
    const T inv = T(1) / static_cast<T>(av.size());
    Var r = push(Matrix<T>(1, 1, s * inv), rg(a));
    on_backward(r, [this, a, r, inv] {
      const T g = nodes_[r.id].grad.data[0] * inv;
      for (auto& x : acc(a).data) x += g;
    });
    return r;
  }

  // ---- elementwise ----------------------------------------------------------

  Var add(Var a, Var b) {
    return binary(a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
  }
  Var sub(Var a, Var b) {
    return binary(a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
  }
  Var mul(Var a, Var b) {
    return binary(a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
  }
  // Ties route the gradient to the first argument.
  Var min(Var a, Var b) {
    return binary(
        a, b, [](T x, T y) { return x <= y ? x : y; }, [](T x, T y) { return x <= y ? T(1) : T(0); },
        [](T x, T y) { return x <= y ? T(0) : T(1); });
  }

  Var scale(Var a, T c) {
    return unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
  }
  Var add_scalar(Var a, T c) {
    return unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
  }
  Var square(Var a) {
    return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
  }
  Var exp(Var a) {
    return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
  }
  Var log(Var a) {
    return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
  }
  Var tanh(Var a) {
    return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
  }
  // Smooth rectifier log(1 + e^x).
  Var softplus(Var a) {
    return unary(
        a, [](T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
  }
  // Zero gradient outside [lo, hi].
  Var clamp(Var a, T lo, T hi) {
    return unary(
        a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
  }

  // ---- random-feature attention ----------------------------------------------

  // Positive random features phi(x) = exp(W x - |x|^2/2 - s) / sqrt(m) per row
  // of `x` (n x d), with W the fixed m x d feature matrix. The shift s is the
  // max exponent over each block of `block` consecutive rows; it is constant
  // inside a block and cancels in normalised attention, so it is treated as a
  // constant by the gradient. block = 0 disables the shift.
  Var feature_map(Var x, const Matrix<T>& features, std::size_t block) {
    const auto& xv = value(x);
    if (features.cols != xv.cols) throw TopologyError("feature_map: feature dimension mismatch");
    if (block != 0 && xv.rows % block != 0) throw TopologyError("feature_map: rows not divisible by block");
    const std::size_t m = features.rows;
    Matrix<T> out(xv.rows, m);
    gemm_nt_acc(xv, features, out);
    for (std::size_t i = 0; i < xv.rows; ++i) {
      T sq = 0;
      for (std::size_t j = 0; j < xv.cols; ++j) sq += xv(i, j) * xv(i, j);
      for (std::size_t k = 0; k < m; ++k) out(i, k) -= sq / T(2);
    }
    if (block != 0) {
      for (std::size_t b0 = 0; b0 < xv.rows; b0 += block) {
        T shift = out(b0, 0);
        for (std::size_t i = b0; i < b0 + block; ++i)
          for (std::size_t k = 0; k < m; ++k) shift = std::max(shift, out(i, k));
        for (std::size_t i = b0; i < b0 + block; ++i)
          for (std::size_t k = 0; k < m; ++k) out(i, k) -= shift;
      }
    }
    const T norm = T(1) / std::sqrt(static_cast<T>(m));
    for (auto& v : out.data) v = std::exp(v) * norm;
    Var r = push(std::move(out), rg(x));
    on_backward(r, [this, x, r, &features] {
      const auto& phi = nodes_[r.id].value;
      const auto& g = nodes_[r.id].grad;
      Matrix<T> gu(phi.rows, phi.cols);
      for (std::size_t i = 0; i < gu.size(); ++i) gu.data[i] = g.data[i] * phi.data[i];
      auto& gx = acc(x);
      Matrix<T> tmp(gx.rows, gx.cols);
      // d/dx [w_k.x - |x|^2/2] = w_k - x
      for (std::size_t i = 0; i < gu.rows; ++i) {
        T s = 0;
        for (std::size_t k = 0; k < gu.cols; ++k) s += gu(i, k);
        const auto& xv2 = value(x);
        for (std::size_t j = 0; j < gx.cols; ++j) tmp(i, j) -= s * xv2(i, j);
      }
      for (std::size_t i = 0; i < gu.rows; ++i) {
        for (std::size_t k = 0; k < gu.cols; ++k) {
          const T c = gu(i, k);
          if (c == T(0)) continue;
          const T* wk = features.row(k);
          for (std::size_t j = 0; j < gx.cols; ++j) tmp(i, j) += c * wk[j];
        }
      }
      add_into(gx, tmp);
    });
    return r;
  }

  // Normalised linear attention per sequence: for each of the
  // rows(phi_k)/k_len sequences, out_i = phi_q_i^T (sum_j phi_k_j v_j^T) /
  // phi_q_i^T (sum_j phi_k_j). phi_q holds q_len query rows per sequence.
  Var linear_attention(Var phi_q, Var phi_k, Var v, std::size_t q_len, std::size_t k_len) {
    const auto& qv = value(phi_q);
    const auto& kv = value(phi_k);
    const auto& vv = value(v);
    if (qv.cols != kv.cols || kv.rows != vv.rows || q_len == 0 || k_len == 0 || kv.rows % k_len != 0 ||
        qv.rows != (kv.rows / k_len) * q_len)
      throw TopologyError("linear_attention: shape mismatch");
    const std::size_t seqs = kv.rows / k_len;
    const std::size_t m = kv.cols;
    const std::size_t d = vv.cols;
    Matrix<T> out(qv.rows, d);
    Matrix<T> den(qv.rows, 1);
    for (std::size_t s = 0; s < seqs; ++s) {
      Matrix<T> kvs(m, d);
      std::vector<T> z(m, T(0));
      for (std::size_t j = s * k_len; j < (s + 1) * k_len; ++j) {
        const T* kj = kv.row(j);
        const T* vj = vv.row(j);
        for (std::size_t f = 0; f < m; ++f) {
          z[f] += kj[f];
          T* dst = kvs.row(f);
          for (std::size_t c = 0; c < d; ++c) dst[c] += kj[f] * vj[c];
        }
      }
      for (std::size_t i = s * q_len; i < (s + 1) * q_len; ++i) {
        const T* qi = qv.row(i);
        T dn = 0;
        for (std::size_t f = 0; f < m; ++f) dn += qi[f] * z[f];
        T* oi = out.row(i);
        for (std::size_t f = 0; f < m; ++f) {
          const T* src = kvs.row(f);
          for (std::size_t c = 0; c < d; ++c) oi[c] += qi[f] * src[c];
        }
        for (std::size_t c = 0; c < d; ++c) oi[c] /= dn;
        den.data[i] = dn;
      }
    }
    Var r = push(std::move(out), rg(phi_q) || rg(phi_k) || rg(v));
    on_backward(r, [this, phi_q, phi_k, v, r, q_len, k_len, seqs, m, d, den = std::move(den)] {
      const auto& g = nodes_[r.id].grad;
      const auto& o = nodes_[r.id].value;
      const auto& qv2 = value(phi_q);
      const auto& kv2 = value(phi_k);
      const auto& vv2 = value(v);
      Matrix<T>* gq = rg(phi_q) ? &acc(phi_q) : nullptr;
      Matrix<T>* gk = rg(phi_k) ? &acc(phi_k) : nullptr;
      Matrix<T>* gv = rg(v) ? &acc(v) : nullptr;
      for (std::size_t s = 0; s < seqs; ++s) {
        Matrix<T> kvs(m, d);
        std::vector<T> z(m, T(0));
        for (std::size_t j = s * k_len; j < (s + 1) * k_len; ++j) {
          for (std::size_t f = 0; f < m; ++f) {
            z[f] += kv2(j, f);
            for (std::size_t c = 0; c < d; ++c) kvs(f, c) += kv2(j, f) * vv2(j, c);
          }
        }
        Matrix<T> d_kvs(m, d);
        std::vector<T> dz(m, T(0));
        for (std::size_t i = s * q_len; i < (s + 1) * q_len; ++i) {
          const T dn = den.data[i];
          // d num_i = g_i / den_i ; d den_i = -(g_i . out_i) / den_i
          T go = 0;
          for (std::size_t c = 0; c < d; ++c) go += g(i, c) * o(i, c);
          const T dden = -go / dn;
          for (std::size_t f = 0; f < m; ++f) {
            const T q = qv2(i, f);
            if (gq) {
              T acc_q = 0;
              for (std::size_t c = 0; c < d; ++c) acc_q += kvs(f, c) * g(i, c);
              (*gq)(i, f) += acc_q / dn + z[f] * dden;
            }
            for (std::size_t c = 0; c < d; ++c) d_kvs(f, c) += q * g(i, c) / dn;
            dz[f] += q * dden;
          }
        }
        for (std::size_t j = s * k_len; j < (s + 1) * k_len; ++j) {
          for (std::size_t f = 0; f < m; ++f) {
            if (gk) {
              T acc_k = dz[f];
              for (std::size_t c = 0; c < d; ++c) acc_k += d_kvs(f, c) * vv2(j, c);
              (*gk)(j, f) += acc_k;
            }
            if (gv) {
              const T k = kv2(j, f);
              for (std::size_t c = 0; c < d; ++c) (*gv)(j, c) += d_kvs(f, c) * k;
            }
          }
        }
      }
    });
    return r;
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Param<T>* param = nullptr;
    std::function<void()> backward;
  };

  Var push(Matrix<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr, {}});
    return Var{nodes_.size() - 1};
  }

  bool rg(Var v) const { return nodes_[v.id].requires_grad; }

  template <typename F>
  void on_backward(Var r, F&& f) {
    if (nodes_[r.id].requires_grad) nodes_[r.id].backward = std::forward<F>(f);
  }

  Matrix<T>& acc(Var v) {
    auto& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Matrix<T>(n.value.rows, n.value.cols);
    return n.grad;
  }

  static void add_into(Matrix<T>& dst, const Matrix<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
  }

  template <typename F, typename D>
  Var unary(Var a, F f, D df) {
    const auto& av = value(a);
    Matrix<T> out(av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = f(av.data[i]);
    Var r = push(std::move(out), rg(a));
    on_backward(r, [this, a, r, df] {
      const auto& g = nodes_[r.id].grad;
      const auto& x = value(a);
      const auto& y = nodes_[r.id].value;
      auto& ga = acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * df(x.data[i], y.data[i]);
    });
    return r;
  }

  template <typename F, typename DA, typename DB>
  Var binary(Var a, Var b, F f, DA da, DB db) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (!av.same_shape(bv)) throw TopologyError("elementwise op: shape mismatch");
    Matrix<T> out(av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = f(av.data[i], bv.data[i]);
    Var r = push(std::move(out), rg(a) || rg(b));
    on_backward(r, [this, a, b, r, da, db] {
      const auto& g = nodes_[r.id].grad;
      const auto& x = value(a);
      const auto& y = value(b);
      if (rg(a)) {
        auto& ga = acc(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * da(x.data[i], y.data[i]);
      }
      if (rg(b)) {
        auto& gb = acc(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * db(x.data[i], y.data[i]);
      }
    });
    return r;
  }

  std::vector<Node> nodes_;
};

}  // namespace uavsac
