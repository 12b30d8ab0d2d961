// Core tensor operations with reverse-mode rules.
//
// Shape rules are strict: no implicit broadcasting anywhere, mismatches throw
// with both shapes in the message. Clamping used to keep outputs finite:
//   exp_op       input clamped to <= 700 (derivative 0 beyond the clamp)
//   softplus     returns x for x > 30, exp(x) path for x <= 30
//   sqrt_op      inputs in [-1e-12, 0) treated as 0; more negative throws
// Subgradient conventions: relu'(0) = 0, |.|'(0) = 0, sqrt'(0) = 0, and max /
// min reductions route the gradient to the first extremal element.
#ifndef MBPU_OPS_HPP
#define MBPU_OPS_HPP

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "mbpu/tape.hpp"
#include "mbpu/tensor.hpp"

namespace mbpu {

namespace detail {

inline void record_op(
    std::vector<const Tensor*> inputs, Tensor& out, std::function<void()> fwd,
    std::function<void(const double*, const std::vector<double*>&)> bwd) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    require(tape == nullptr || tape == t->tape(),
            "op mixes tensors from different tapes");
    tape = t->tape();
  }
  if (!tape) return;
  tape->record(inputs, out, std::move(fwd), std::move(bwd));
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), op, ": shape mismatch ",
          shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

// Unary elementwise out = f(x), with df(x) = f'(x).
template <typename F, typename DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  Tensor out(x.shape());
  auto fwd = [px = x.buffer(), po = out.buffer(), f]() {
    for (std::size_t i = 0; i < po->size(); ++i) (*po)[i] = f((*px)[i]);
  };
  fwd();
  record_op({&x}, out, fwd,
            [px = x.buffer(), df](const double* dout,
                                  const std::vector<double*>& din) {
              if (!din[0]) return;
              for (std::size_t i = 0; i < px->size(); ++i)
                din[0][i] += dout[i] * df((*px)[i]);
            });
  return out;
}

struct AxisSplit {
  std::size_t outer, axis, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  require(axis < s.size(), "axis ", axis, " out of range for shape ",
          shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

inline Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  Tensor out(a.shape());
  auto fwd = [pa = a.buffer(), pb = b.buffer(), po = out.buffer()]() {
    for (std::size_t i = 0; i < po->size(); ++i)
      (*po)[i] = (*pa)[i] + (*pb)[i];
  };
  fwd();
  detail::record_op({&a, &b}, out, fwd,
                    [n = out.size()](const double* dout,
                                     const std::vector<double*>& din) {
                      for (int k = 0; k < 2; ++k)
                        if (din[k])
                          for (std::size_t i = 0; i < n; ++i)
                            din[k][i] += dout[i];
                    });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  Tensor out(a.shape());
  auto fwd = [pa = a.buffer(), pb = b.buffer(), po = out.buffer()]() {
    for (std::size_t i = 0; i < po->size(); ++i)
      (*po)[i] = (*pa)[i] - (*pb)[i];
  };
  fwd();
  detail::record_op({&a, &b}, out, fwd,
                    [n = out.size()](const double* dout,
                                     const std::vector<double*>& din) {
                      if (din[0])
                        for (std::size_t i = 0; i < n; ++i)
                          din[0][i] += dout[i];
                      if (din[1])
                        for (std::size_t i = 0; i < n; ++i)
                          din[1][i] -= dout[i];
                    });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  Tensor out(a.shape());
  auto fwd = [pa = a.buffer(), pb = b.buffer(), po = out.buffer()]() {
    for (std::size_t i = 0; i < po->size(); ++i)
      (*po)[i] = (*pa)[i] * (*pb)[i];
  };
  fwd();
  detail::record_op(
      {&a, &b}, out, fwd,
      [pa = a.buffer(), pb = b.buffer()](const double* dout,
                                         const std::vector<double*>& din) {
        const std::size_t n = pa->size();
        if (din[0])
          for (std::size_t i = 0; i < n; ++i) din[0][i] += dout[i] * (*pb)[i];
        if (din[1])
          for (std::size_t i = 0; i < n; ++i) din[1][i] += dout[i] * (*pa)[i];
      });
  return out;
}

inline Tensor scalar_mul(const Tensor& x, double c) {
  return detail::unary_op(
      x, [c](double v) { return c * v; }, [c](double) { return c; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_scalar(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return sigmoid_scalar(v); },
      [](double v) {
        double s = sigmoid_scalar(v);
        return s * (1.0 - s);
      });
}

inline Tensor silu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v) {
        double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

inline Tensor softplus(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v) { return sigmoid_scalar(v); });
}

inline Tensor exp_op(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::exp(std::min(v, 700.0)); },
      [](double v) { return v <= 700.0 ? std::exp(v) : 0.0; });
}

inline Tensor abs_op(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor sqrt_op(const Tensor& x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    require(x[i] >= -1e-12, "sqrt: negative input ", x[i]);
  return detail::unary_op(
      x, [](double v) { return std::sqrt(std::max(v, 0.0)); },
      [](double v) { return v > 0.0 ? 0.5 / std::sqrt(v) : 0.0; });
}

/// Matrix product of 2-D tensors, (n x k) * (k x m) -> (n x m).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out({n, m});
  auto fwd = [pa = a.buffer(), pb = b.buffer(), po = out.buffer(), n, k, m]() {
    std::fill(po->begin(), po->end(), 0.0);
    const double* A = pa->data();
    const double* B = pb->data();
    double* O = po->data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const double av = A[i * k + t];
        if (av == 0.0) continue;
        const double* brow = B + t * m;
        double* orow = O + i * m;
        for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
      }
  };
  fwd();
  detail::record_op(
      {&a, &b}, out, fwd,
      [pa = a.buffer(), pb = b.buffer(), n, k, m](
          const double* dout, const std::vector<double*>& din) {
        const double* A = pa->data();
        const double* B = pb->data();
        if (din[0]) {
          // dA = dout * B^T
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double dv = dout[i * m + j];
              if (dv == 0.0) continue;
              for (std::size_t t = 0; t < k; ++t)
                din[0][i * k + t] += dv * B[t * m + j];
            }
        }
        if (din[1]) {
          // dB = A^T * dout
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < k; ++t) {
              const double av = A[i * k + t];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < m; ++j)
                din[1][t * m + j] += av * dout[i * m + j];
            }
        }
      });
  return out;
}

/// Adds a length-c bias vector to every row of an (n x c) tensor.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  require(x.rank() == 2 && b.rank() == 1 && x.dim(1) == b.dim(0),
          "add_bias: shapes ", shape_str(x.shape()), " vs ",
          shape_str(b.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor out(x.shape());
  auto fwd = [px = x.buffer(), pb = b.buffer(), po = out.buffer(), n, c]() {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j)
        (*po)[i * c + j] = (*px)[i * c + j] + (*pb)[j];
  };
  fwd();
  detail::record_op({&x, &b}, out, fwd,
                    [n, c](const double* dout,
                           const std::vector<double*>& din) {
                      if (din[0])
                        for (std::size_t i = 0; i < n * c; ++i)
                          din[0][i] += dout[i];
                      if (din[1])
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < c; ++j)
                            din[1][j] += dout[i * c + j];
                    });
  return out;
}

inline Tensor transpose2d(const Tensor& x) {
  require(x.rank() == 2, "transpose2d: need rank 2, got ",
          shape_str(x.shape()));
  const std::size_t n = x.dim(0), m = x.dim(1);
  Tensor out({m, n});
  auto fwd = [px = x.buffer(), po = out.buffer(), n, m]() {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) (*po)[j * n + i] = (*px)[i * m + j];
  };
  fwd();
  detail::record_op({&x}, out, fwd,
                    [n, m](const double* dout,
                           const std::vector<double*>& din) {
                      if (!din[0]) return;
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < m; ++j)
                          din[0][i * m + j] += dout[j * n + i];
                    });
  return out;
}

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  require(shape_numel(new_shape) == x.size(), "reshape: numel mismatch ",
          shape_str(x.shape()), " -> ", shape_str(new_shape));
  Tensor out(std::move(new_shape));
  auto fwd = [px = x.buffer(), po = out.buffer()]() {
    std::copy(px->begin(), px->end(), po->begin());
  };
  fwd();
  detail::record_op({&x}, out, fwd,
                    [n = x.size()](const double* dout,
                                   const std::vector<double*>& din) {
                      if (!din[0]) return;
                      for (std::size_t i = 0; i < n; ++i) din[0][i] += dout[i];
                    });
  return out;
}

/// Concatenates tensors of equal rank along `axis`; all other dims must match.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  require(axis < s0.size(), "concat: axis ", axis, " out of range for ",
          shape_str(s0));
  Shape out_shape = s0;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == s0.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      require(i == axis || p.shape()[i] == s0[i], "concat: shape mismatch ",
              shape_str(p.shape()), " vs ", shape_str(s0));
    total += p.dim(axis);
  }
  out_shape[axis] = total;
  Tensor out(out_shape);
  const auto sp = detail::split_axis(out_shape, axis);

  std::vector<std::shared_ptr<std::vector<double>>> bufs;
  std::vector<std::size_t> axis_sizes;
  for (const Tensor& p : parts) {
    bufs.push_back(p.buffer());
    axis_sizes.push_back(p.dim(axis));
  }
  auto fwd = [bufs, axis_sizes, sp, po = out.buffer()]() {
    std::size_t off = 0;
    for (std::size_t k = 0; k < bufs.size(); ++k) {
      const std::size_t ak = axis_sizes[k], block = ak * sp.inner;
      for (std::size_t o = 0; o < sp.outer; ++o)
        std::memcpy(po->data() + (o * sp.axis + off) * sp.inner,
                    bufs[k]->data() + o * block, block * sizeof(double));
      off += ak;
    }
  };
  fwd();
  std::vector<const Tensor*> ins;
  for (const Tensor& p : parts) ins.push_back(&p);
  detail::record_op(ins, out, fwd,
                    [axis_sizes, sp](const double* dout,
                                     const std::vector<double*>& din) {
                      std::size_t off = 0;
                      for (std::size_t k = 0; k < axis_sizes.size(); ++k) {
                        const std::size_t ak = axis_sizes[k];
                        if (din[k]) {
                          for (std::size_t o = 0; o < sp.outer; ++o)
                            for (std::size_t i = 0; i < ak * sp.inner; ++i)
                              din[k][o * ak * sp.inner + i] +=
                                  dout[(o * sp.axis + off) * sp.inner + i];
                        }
                        off += ak;
                      }
                    });
  return out;
}

/// Gathers rows (axis 0) of a rank >= 1 tensor by index; duplicates allowed.
inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx) {
  require(x.rank() >= 1, "gather_rows: need rank >= 1");
  const std::size_t rows = x.dim(0), stride = x.size() / std::max<std::size_t>(rows, 1);
  for (std::size_t i : idx)
    require(i < rows, "gather_rows: index ", i, " out of range ", rows);
  Shape out_shape = x.shape();
  out_shape[0] = idx.size();
  Tensor out(out_shape);
  auto fwd = [px = x.buffer(), po = out.buffer(), idx, stride]() {
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::memcpy(po->data() + r * stride, px->data() + idx[r] * stride,
                  stride * sizeof(double));
  };
  fwd();
  detail::record_op({&x}, out, fwd,
                    [idx, stride](const double* dout,
                                  const std::vector<double*>& din) {
                      if (!din[0]) return;
                      for (std::size_t r = 0; r < idx.size(); ++r)
                        for (std::size_t j = 0; j < stride; ++j)
                          din[0][idx[r] * stride + j] += dout[r * stride + j];
                    });
  return out;
}

/// Inserts a new axis of length `copies` at position `axis`, replicating.
inline Tensor broadcast_new_axis(const Tensor& x, std::size_t axis,
                                 std::size_t copies) {
  require(axis <= x.rank(), "broadcast: axis ", axis, " out of range");
  require(copies >= 1, "broadcast: copies must be positive");
  Shape out_shape;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) {
    out_shape.push_back(x.shape()[i]);
    outer *= x.shape()[i];
  }
  out_shape.push_back(copies);
  for (std::size_t i = axis; i < x.rank(); ++i) {
    out_shape.push_back(x.shape()[i]);
    inner *= x.shape()[i];
  }
  Tensor out(out_shape);
  auto fwd = [px = x.buffer(), po = out.buffer(), outer, inner, copies]() {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < copies; ++c)
        std::memcpy(po->data() + (o * copies + c) * inner,
                    px->data() + o * inner, inner * sizeof(double));
  };
  fwd();
  detail::record_op({&x}, out, fwd,
                    [outer, inner, copies](const double* dout,
                                           const std::vector<double*>& din) {
                      if (!din[0]) return;
                      for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t c = 0; c < copies; ++c)
                          for (std::size_t i = 0; i < inner; ++i)
                            din[0][o * inner + i] +=
                                dout[(o * copies + c) * inner + i];
                    });
  return out;
}

namespace detail {

enum class ReduceKind { Sum, Mean, Max, Min };

inline Tensor reduce_axis(const Tensor& x, std::size_t axis, ReduceKind kind) {
  const auto sp = split_axis(x.shape(), axis);
  require(sp.axis >= 1, "reduce: empty axis");
  Tensor out(drop_axis(x.shape(), axis));
  const bool extremal = kind == ReduceKind::Max || kind == ReduceKind::Min;
  auto arg = extremal ? std::make_shared<std::vector<std::size_t>>(out.size())
                      : nullptr;
  auto fwd = [px = x.buffer(), po = out.buffer(), sp, kind, arg]() {
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.axis * sp.inner + i;
        double acc;
        std::size_t best = 0;
        switch (kind) {
          case ReduceKind::Sum:
          case ReduceKind::Mean:
            acc = 0.0;
            for (std::size_t a = 0; a < sp.axis; ++a)
              acc += (*px)[base + a * sp.inner];
            if (kind == ReduceKind::Mean) acc /= static_cast<double>(sp.axis);
            break;
          case ReduceKind::Max:
            acc = (*px)[base];
            for (std::size_t a = 1; a < sp.axis; ++a)
              if ((*px)[base + a * sp.inner] > acc) {
                acc = (*px)[base + a * sp.inner];
                best = a;
              }
            break;
          case ReduceKind::Min:
            acc = (*px)[base];
            for (std::size_t a = 1; a < sp.axis; ++a)
              if ((*px)[base + a * sp.inner] < acc) {
                acc = (*px)[base + a * sp.inner];
                best = a;
              }
            break;
        }
        (*po)[o * sp.inner + i] = acc;
        if (arg) (*arg)[o * sp.inner + i] = best;
      }
  };
  fwd();
  record_op({&x}, out, fwd,
            [sp, kind, arg](const double* dout,
                            const std::vector<double*>& din) {
              if (!din[0]) return;
              const double scale =
                  kind == ReduceKind::Mean ? 1.0 / static_cast<double>(sp.axis)
                                           : 1.0;
              for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t i = 0; i < sp.inner; ++i) {
                  const double dv = dout[o * sp.inner + i];
                  const std::size_t base = o * sp.axis * sp.inner + i;
                  if (arg) {
                    din[0][base + (*arg)[o * sp.inner + i] * sp.inner] += dv;
                  } else {
                    for (std::size_t a = 0; a < sp.axis; ++a)
                      din[0][base + a * sp.inner] += dv * scale;
                  }
                }
            });
  return out;
}

}  // namespace detail

inline Tensor reduce_sum(const Tensor& x, std::size_t axis) {
  return detail::reduce_axis(x, axis, detail::ReduceKind::Sum);
}
inline Tensor reduce_mean(const Tensor& x, std::size_t axis) {
  return detail::reduce_axis(x, axis, detail::ReduceKind::Mean);
}
/// Gradient goes to the first maximal element along the axis.
inline Tensor reduce_max(const Tensor& x, std::size_t axis) {
  return detail::reduce_axis(x, axis, detail::ReduceKind::Max);
}
inline Tensor reduce_min(const Tensor& x, std::size_t axis) {
  return detail::reduce_axis(x, axis, detail::ReduceKind::Min);
}

/// Sum of all entries -> rank-0 scalar.
inline Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::scalar(0.0);
  auto fwd = [px = x.buffer(), po = out.buffer()]() {
    double acc = 0.0;
    for (double v : *px) acc += v;
    (*po)[0] = acc;
  };
  fwd();
  detail::record_op({&x}, out, fwd,
                    [n = x.size()](const double* dout,
                                   const std::vector<double*>& din) {
                      if (!din[0]) return;
                      for (std::size_t i = 0; i < n; ++i) din[0][i] += dout[0];
                    });
  return out;
}

inline Tensor mean_all(const Tensor& x) {
  require(x.size() > 0, "mean_all: empty tensor");
  return scalar_mul(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

/// Row-wise layer normalization of an (n x c) tensor with learned gain/bias,
/// epsilon inside the square root. An all-equal row maps to bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias, double eps = 1e-5) {
  require(x.rank() == 2, "layer_norm: need rank 2, got ",
          shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  require(gain.rank() == 1 && gain.dim(0) == c && bias.rank() == 1 &&
              bias.dim(0) == c,
          "layer_norm: gain/bias must be length ", c);
  Tensor out(x.shape());
  auto fwd = [px = x.buffer(), pg = gain.buffer(), pb = bias.buffer(),
              po = out.buffer(), n, c, eps]() {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = px->data() + i * c;
      double mu = 0.0;
      for (std::size_t j = 0; j < c; ++j) mu += row[j];
      mu /= static_cast<double>(c);
      double var = 0.0;
      for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < c; ++j)
        (*po)[i * c + j] = (row[j] - mu) * inv * (*pg)[j] + (*pb)[j];
    }
  };
  fwd();
  detail::record_op(
      {&x, &gain, &bias}, out, fwd,
      [px = x.buffer(), pg = gain.buffer(), n, c, eps](
          const double* dout, const std::vector<double*>& din) {
        std::vector<double> xhat(c), dxhat(c);
        for (std::size_t i = 0; i < n; ++i) {
          const double* row = px->data() + i * c;
          const double* drow = dout + i * c;
          double mu = 0.0;
          for (std::size_t j = 0; j < c; ++j) mu += row[j];
          mu /= static_cast<double>(c);
          double var = 0.0;
          for (std::size_t j = 0; j < c; ++j)
            var += (row[j] - mu) * (row[j] - mu);
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + eps);
          for (std::size_t j = 0; j < c; ++j) xhat[j] = (row[j] - mu) * inv;
          if (din[2])
            for (std::size_t j = 0; j < c; ++j) din[2][j] += drow[j];
          if (din[1])
            for (std::size_t j = 0; j < c; ++j)
              din[1][j] += drow[j] * xhat[j];
          if (din[0]) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              dxhat[j] = drow[j] * (*pg)[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[j];
            }
            m1 /= static_cast<double>(c);
            m2 /= static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j)
              din[0][i * c + j] += (dxhat[j] - m1 - xhat[j] * m2) * inv;
          }
        }
      });
  return out;
}

/// Depthwise 1-D convolution along the sequence axis of an (n x d) tensor.
/// One width-w kernel and one bias per channel; zero padding, "same" length,
/// output t reads inputs [t - floor((w-1)/2), t + ceil((w-1)/2)].
inline Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel,
                               const Tensor& bias) {
  require(x.rank() == 2, "conv1d: need rank 2 input, got ",
          shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  require(kernel.rank() == 2 && kernel.dim(0) == d, "conv1d: kernel shape ",
          shape_str(kernel.shape()), " does not match ", d, " channels");
  require(bias.rank() == 1 && bias.dim(0) == d, "conv1d: bias length");
  const std::size_t w = kernel.dim(1);
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>((w - 1) / 2);
  Tensor out(x.shape());
  auto fwd = [px = x.buffer(), pk = kernel.buffer(), pb = bias.buffer(),
              po = out.buffer(), n, d, w, off]() {
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t ch = 0; ch < d; ++ch) {
        double acc = (*pb)[ch];
        for (std::size_t j = 0; j < w; ++j) {
          const std::ptrdiff_t u =
              static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - off;
          if (u < 0 || u >= static_cast<std::ptrdiff_t>(n)) continue;
          acc += (*pk)[ch * w + j] * (*px)[static_cast<std::size_t>(u) * d + ch];
        }
        (*po)[t * d + ch] = acc;
      }
  };
  fwd();
  detail::record_op(
      {&x, &kernel, &bias}, out, fwd,
      [px = x.buffer(), pk = kernel.buffer(), n, d, w, off](
          const double* dout, const std::vector<double*>& din) {
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t ch = 0; ch < d; ++ch) {
            const double dv = dout[t * d + ch];
            if (dv == 0.0) continue;
            if (din[2]) din[2][ch] += dv;
            for (std::size_t j = 0; j < w; ++j) {
              const std::ptrdiff_t u = static_cast<std::ptrdiff_t>(t) +
                                       static_cast<std::ptrdiff_t>(j) - off;
              if (u < 0 || u >= static_cast<std::ptrdiff_t>(n)) continue;
              const std::size_t ui = static_cast<std::size_t>(u);
              if (din[1]) din[1][ch * w + j] += dv * (*px)[ui * d + ch];
              if (din[0]) din[0][ui * d + ch] += dv * (*pk)[ch * w + j];
            }
          }
      });
  return out;
}

}  // namespace mbpu

#endif  // MBPU_OPS_HPP
