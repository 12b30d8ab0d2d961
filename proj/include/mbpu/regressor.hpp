// Two-branch distance regressor: a shared three-layer trunk, a softplus
// 1-channel point-to-point distance head, and a linear 3-channel shift head.
#ifndef MBPU_REGRESSOR_HPP
#define MBPU_REGRESSOR_HPP

#include "mbpu/ops.hpp"

namespace mbpu {

struct RegressorParams {
  Tensor w0, b0, w1, b1, w2, b2;  // trunk
  Tensor wd, bd;                  // distance head -> 1 channel
  Tensor ws, bs;                  // shift head -> 3 channels
};

inline RegressorParams make_regressor_params(std::size_t c_in,
                                             std::size_t hidden, Rng& rng) {
  RegressorParams p;
  p.w0 = detail::uniform_init({c_in, hidden}, c_in, rng);
  p.b0 = detail::uniform_init({hidden}, c_in, rng);
  p.w1 = detail::uniform_init({hidden, hidden}, hidden, rng);
  p.b1 = detail::uniform_init({hidden}, hidden, rng);
  p.w2 = detail::uniform_init({hidden, hidden}, hidden, rng);
  p.b2 = detail::uniform_init({hidden}, hidden, rng);
  p.wd = detail::uniform_init({hidden, 1}, hidden, rng);
  p.bd = detail::uniform_init({1}, hidden, rng);
  p.ws = detail::uniform_init({hidden, 3}, hidden, rng);
  p.bs = detail::uniform_init({3}, hidden, rng);
  return p;
}

struct RegressorOutput {
  Tensor distance;  // n x 1, softplus-constrained >= 0
  Tensor shift;     // n x 3, unconstrained
};

/// Point-major form: X is (n x c) with one feature row per point.
inline RegressorOutput regress_points(const Tensor& X,
                                      const RegressorParams& p) {
  require(X.rank() == 2 && X.dim(1) == p.w0.dim(0),
          "regress: feature width ", shape_str(X.shape()),
          " does not match trunk input ", p.w0.dim(0));
  Tensor t = silu(add_bias(matmul(X, p.w0), p.b0));
  t = silu(add_bias(matmul(t, p.w1), p.b1));
  t = silu(add_bias(matmul(t, p.w2), p.b2));
  RegressorOutput out;
  out.distance = softplus(add_bias(matmul(t, p.wd), p.bd));
  out.shift = add_bias(matmul(t, p.ws), p.bs);
  return out;
}

/// Channel-major contract: X is (b x c x n); returns (b x 1 x n) distances
/// and (b x 3 x n) shifts.
inline RegressorOutput regress(const Tensor& X, const RegressorParams& p) {
  require(X.rank() == 3, "regress: X must be (b x c x n), got ",
          shape_str(X.shape()));
  const std::size_t b = X.dim(0), c = X.dim(1), n = X.dim(2);
  std::vector<Tensor> dists, shifts;
  for (std::size_t i = 0; i < b; ++i) {
    Tensor slice = reshape(gather_rows(reshape(X, {b, c * n}), {i}), {c, n});
    RegressorOutput o = regress_points(transpose2d(slice), p);
    dists.push_back(reshape(transpose2d(o.distance), {std::size_t(1), std::size_t(1), n}));
    shifts.push_back(reshape(transpose2d(o.shift), {std::size_t(1), std::size_t(3), n}));
  }
  RegressorOutput out;
  out.distance = b == 1 ? dists[0] : concat(dists, 0);
  out.shift = b == 1 ? shifts[0] : concat(shifts, 0);
  return out;
}

}  // namespace mbpu

#endif  // MBPU_REGRESSOR_HPP
