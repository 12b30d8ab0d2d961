#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "mbpu/common.hpp"
#include "mbpu/grad_check.hpp"
#include "mbpu/regressor.hpp"

using namespace mbpu;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

std::vector<Tensor*> slots(RegressorParams& p) {
  return {&p.w0, &p.b0, &p.w1, &p.b1, &p.w2, &p.b2,
          &p.wd, &p.bd, &p.ws, &p.bs};
}

}  // namespace

TEST_CASE("regress output shapes and distance range", "[regressor]") {
  Rng rng(2);
  RegressorParams p = make_regressor_params(8, 6, rng);
  Tensor X = random_tensor({1, 8, 5}, rng, -2, 2);
  RegressorOutput o = regress(X, p);
  REQUIRE(o.distance.shape() == Shape{1, 1, 5});
  REQUIRE(o.shift.shape() == Shape{1, 3, 5});
  for (std::size_t i = 0; i < o.distance.size(); ++i)
    REQUIRE(o.distance[i] >= 0.0);

  Tensor Xb = random_tensor({3, 8, 4}, rng);
  RegressorOutput ob = regress(Xb, p);
  REQUIRE(ob.distance.shape() == Shape{3, 1, 4});
  REQUIRE(ob.shift.shape() == Shape{3, 3, 4});
  REQUIRE_THROWS(regress_points(random_tensor({4, 7}, rng), p));
}

TEST_CASE("batched regress agrees with the point-major path", "[regressor]") {
  Rng rng(3);
  RegressorParams p = make_regressor_params(6, 5, rng);
  Tensor Xp = random_tensor({4, 6}, rng);  // n x c
  RegressorOutput a = regress_points(Xp, p);
  // same data in (1 x c x n) layout
  Tensor Xc({1, 6, 4});
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t n = 0; n < 4; ++n) Xc[c * 4 + n] = Xp[n * 6 + c];
  RegressorOutput b = regress(Xc, p);
  for (std::size_t n = 0; n < 4; ++n) {
    REQUIRE(b.distance[n] == a.distance[n]);
    for (std::size_t k = 0; k < 3; ++k)
      REQUIRE(b.shift[k * 4 + n] == a.shift[n * 3 + k]);
  }
}

TEST_CASE("trunk is shared, heads are separate", "[regressor][property]") {
  Rng rng(5);
  RegressorParams p = make_regressor_params(6, 5, rng);
  Tensor X = random_tensor({4, 6}, rng);
  RegressorOutput base = regress_points(X, p);

  // Tensors share buffers on copy, so nudged weights must be detached first.
  RegressorParams p_trunk = p;
  p_trunk.w1 = p.w1.detached();
  p_trunk.w1[0] += 0.5;
  RegressorOutput t = regress_points(X, p_trunk);
  bool dist_changed = false, shift_changed = false;
  for (std::size_t i = 0; i < t.distance.size(); ++i)
    dist_changed |= t.distance[i] != base.distance[i];
  for (std::size_t i = 0; i < t.shift.size(); ++i)
    shift_changed |= t.shift[i] != base.shift[i];
  REQUIRE(dist_changed);
  REQUIRE(shift_changed);

  RegressorParams p_dist = p;
  p_dist.wd = p.wd.detached();
  p_dist.wd[0] += 0.5;
  RegressorOutput d = regress_points(X, p_dist);
  for (std::size_t i = 0; i < d.shift.size(); ++i)
    REQUIRE(d.shift[i] == base.shift[i]);
  bool only_dist = false;
  for (std::size_t i = 0; i < d.distance.size(); ++i)
    only_dist |= d.distance[i] != base.distance[i];
  REQUIRE(only_dist);

  RegressorParams p_shift = p;
  p_shift.ws = p.ws.detached();
  p_shift.ws[0] += 0.5;
  RegressorOutput s = regress_points(X, p_shift);
  for (std::size_t i = 0; i < s.distance.size(); ++i)
    REQUIRE(s.distance[i] == base.distance[i]);
}

TEST_CASE("regressor gradients pass finite differences",
          "[regressor][gradcheck]") {
  Rng rng(7);
  RegressorParams p = make_regressor_params(8, 5, rng);
  Tensor X = random_tensor({5, 8}, rng);
  std::vector<Tensor> xs = {X};
  for (Tensor* t : slots(p)) xs.push_back(*t);
  auto f = [&](const std::vector<Tensor>& t) {
    RegressorParams q = p;
    auto qs = slots(q);
    for (std::size_t i = 0; i < qs.size(); ++i) *qs[i] = t[i + 1];
    RegressorOutput o = regress_points(t[0], q);
    return add(sum_all(o.distance), sum_all(mul(o.shift, o.shift)));
  };
  auto report = finite_diff_check_multi(f, xs, 1e-6);
  REQUIRE(report.max_rel_error < 1e-4);
}
