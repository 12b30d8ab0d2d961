// Central finite-difference verification of taped gradients.
#ifndef MBPU_GRAD_CHECK_HPP
#define MBPU_GRAD_CHECK_HPP

#include <functional>
#include <vector>

#include "mbpu/ops.hpp"
#include "mbpu/tape.hpp"

namespace mbpu {

/// Scalar-valued function of several tensors. Inputs may or may not be taped;
/// the function must not care (it only calls ops).
using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Distance from coordinate `coord` of input `input` to the nearest
/// non-differentiable point of the function, used to skip kink-adjacent
/// coordinates (anything closer than 10h).
using KinkDistanceFn = std::function<double(std::size_t input, std::size_t coord)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Compares the tape gradient of f at xs against central differences with
/// step h. Returns max over coordinates of
/// |analytic - central| / max(1e-8, |central|).
inline FiniteDiffReport finite_diff_check_multi(
    const TensorFn& f, const std::vector<Tensor>& xs, double h,
    const KinkDistanceFn& kink_distance = nullptr) {
  Tape tape;
  std::vector<Tensor> watched;
  watched.reserve(xs.size());
  for (const Tensor& x : xs) watched.push_back(tape.watch(x.detached()));
  Tensor out = f(watched);
  require(out.size() == 1, "finite_diff_check: f must be scalar-valued");
  require(out.finite(), "finite_diff_check: non-finite evaluation");
  Gradients grads = tape.backward(out);

  std::vector<Tensor> probe;
  probe.reserve(xs.size());
  for (const Tensor& x : xs) probe.push_back(x.detached());

  FiniteDiffReport report;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Tensor g = grads.grad(watched[i]);
    for (std::size_t j = 0; j < probe[i].size(); ++j) {
      if (kink_distance && kink_distance(i, j) < 10.0 * h) {
        ++report.skipped;
        continue;
      }
      const double saved = probe[i][j];
      probe[i][j] = saved + h;
      const double fp = f(probe).value();
      probe[i][j] = saved - h;
      const double fm = f(probe).value();
      probe[i][j] = saved;
      require(std::isfinite(fp) && std::isfinite(fm),
              "finite_diff_check: non-finite evaluation at input ", i,
              " coord ", j);
      const double central = (fp - fm) / (2.0 * h);
      const double rel =
          std::fabs(g[j] - central) / std::max(1e-8, std::fabs(central));
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
    }
  }
  return report;
}

/// Single-input form; returns the max relative error.
inline double finite_diff_check(const TensorFn& f, const Tensor& x, double h,
                                const KinkDistanceFn& kink_distance = nullptr) {
  return finite_diff_check_multi(f, {x}, h, kink_distance).max_rel_error;
}

}  // namespace mbpu

#endif  // MBPU_GRAD_CHECK_HPP
