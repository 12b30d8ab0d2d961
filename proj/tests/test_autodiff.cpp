#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "mbpu/common.hpp"
#include "mbpu/grad_check.hpp"
#include "mbpu/ops.hpp"

using namespace mbpu;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("grad of sum of squares", "[autodiff]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({3}, {1, 2, 3}));
  Tensor loss = sum_all(mul(x, x));
  Gradients g = tape.backward(loss);
  Tensor gx = g.grad(x);
  REQUIRE(gx[0] == 2.0);
  REQUIRE(gx[1] == 4.0);
  REQUIRE(gx[2] == 6.0);
}

TEST_CASE("max subgradient routes to first argmax", "[autodiff]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({3}, {3, 1, 3}));
  Tensor loss = reduce_max(x, 0);
  REQUIRE(loss.value() == 3.0);
  Tensor gx = tape.backward(loss).grad(x);
  REQUIRE(gx[0] == 1.0);
  REQUIRE(gx[1] == 0.0);
  REQUIRE(gx[2] == 0.0);
}

TEST_CASE("backward validates its argument", "[autodiff]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({2}, {1, 2}));
  Tensor y = mul(x, x);
  REQUIRE_THROWS(tape.backward(y));  // non-scalar
  Tensor off_tape = Tensor::scalar(1.0);
  REQUIRE_THROWS(tape.backward(off_tape));
}

TEST_CASE("unreachable watched input gets zero gradient", "[autodiff]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({2}, {1, 2}));
  Tensor y = tape.watch(Tensor({2}, {5, 5}));
  Tensor loss = sum_all(x);
  Gradients g = tape.backward(loss);
  Tensor gy = g.grad(y);
  REQUIRE(gy[0] == 0.0);
  REQUIRE(gy[1] == 0.0);
  REQUIRE_FALSE(g.nonzero(y));
}

TEST_CASE("forward results are tape-independent", "[autodiff][property]") {
  Rng rng(3);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  Tensor plain = matmul(silu(a), b);
  Tape tape;
  Tensor taped = matmul(silu(tape.watch(a)), tape.watch(b));
  for (std::size_t i = 0; i < plain.size(); ++i)
    REQUIRE(plain[i] == taped[i]);
}

TEST_CASE("replay reproduces recorded outputs exactly", "[autodiff]") {
  Rng rng(5);
  Tape tape;
  Tensor x = tape.watch(random_tensor({4, 2}, rng));
  Tensor y = silu(matmul(x, random_tensor({2, 3}, rng)));
  Tensor loss = sum_all(y);
  std::vector<double> y_saved(y.data(), y.data() + y.size());
  const double loss_saved = loss.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = -99.0;
  loss[0] = -99.0;
  tape.replay();
  for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == y_saved[i]);
  REQUIRE(loss.value() == loss_saved);
}

TEST_CASE("backward is linear in the loss", "[autodiff][property]") {
  Rng rng(9);
  Tensor x0 = random_tensor({5}, rng);
  const double a = 1.7, b = -0.4;
  auto grad_of = [&](auto make_loss) {
    Tape tape;
    Tensor x = tape.watch(x0);
    return tape.backward(make_loss(x)).grad(x);
  };
  Tensor gf = grad_of([](const Tensor& x) { return sum_all(mul(x, x)); });
  Tensor gg = grad_of([](const Tensor& x) { return sum_all(silu(x)); });
  Tensor gc = grad_of([&](const Tensor& x) {
    return add(scalar_mul(sum_all(mul(x, x)), a),
               scalar_mul(sum_all(silu(x)), b));
  });
  for (std::size_t i = 0; i < x0.size(); ++i)
    REQUIRE(std::fabs(gc[i] - (a * gf[i] + b * gg[i])) < 1e-12);
}

TEST_CASE("finite differences on linear and smooth functions", "[gradcheck]") {
  Rng rng(13);
  Tensor x = random_tensor({6}, rng);
  double err = finite_diff_check(
      [](const std::vector<Tensor>& in) { return sum_all(in[0]); }, x, 1e-6);
  REQUIRE(err < 1e-10);
  err = finite_diff_check(
      [](const std::vector<Tensor>& in) { return sum_all(softplus(in[0])); },
      x, 1e-6);
  REQUIRE(err < 1e-6);
}

TEST_CASE("kink coordinates are skipped", "[gradcheck]") {
  Tensor x({3}, {0.5, 0.0, -0.7});  // middle coordinate sits on the ReLU kink
  auto f = [](const std::vector<Tensor>& in) { return sum_all(relu(in[0])); };
  auto report = finite_diff_check_multi(
      f, {x}, 1e-6, [&](std::size_t, std::size_t j) { return std::fabs(x[j]); });
  REQUIRE(report.skipped == 1);
  REQUIRE(report.checked == 2);
  REQUIRE(report.max_rel_error < 1e-5);
}

TEST_CASE("a wrong backward rule is caught", "[gradcheck]") {
  // Hand-recorded op with a sign error in its backward: y = 2x, grad -2.
  auto bad_double = [](const std::vector<Tensor>& in) {
    const Tensor& x = in[0];
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i];
    if (x.on_tape()) {
      x.tape()->record(
          {&x}, out, [] {},
          [n = x.size()](const double* dout, const std::vector<double*>& din) {
            if (din[0])
              for (std::size_t i = 0; i < n; ++i) din[0][i] += -2.0 * dout[i];
          });
    }
    return sum_all(out);
  };
  Rng rng(1);
  double err = finite_diff_check(bad_double, random_tensor({4}, rng), 1e-6);
  REQUIRE(err > 0.5);
}

TEST_CASE("every core op passes finite differences", "[gradcheck]") {
  Rng rng(21);
  auto check = [&](const char* name, const TensorFn& f,
                   const std::vector<Tensor>& xs, double tol = 1e-5) {
    auto report = finite_diff_check_multi(f, xs, 1e-6);
    INFO(name);
    REQUIRE(report.max_rel_error < tol);
  };

  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor m = random_tensor({4, 2}, rng);
  Tensor v = random_tensor({4}, rng);

  check("add", [](const std::vector<Tensor>& t) { return sum_all(mul(add(t[0], t[1]), t[1])); }, {a, b});
  check("sub", [](const std::vector<Tensor>& t) { return sum_all(mul(sub(t[0], t[1]), t[0])); }, {a, b});
  check("mul", [](const std::vector<Tensor>& t) { return sum_all(mul(t[0], t[1])); }, {a, b});
  check("scalar_mul", [](const std::vector<Tensor>& t) { return sum_all(scalar_mul(t[0], -1.3)); }, {a});
  check("matmul", [](const std::vector<Tensor>& t) { return sum_all(mul(matmul(t[0], t[1]), matmul(t[0], t[1]))); }, {a, m});
  check("add_bias", [](const std::vector<Tensor>& t) { return sum_all(silu(add_bias(t[0], t[1]))); }, {a, v});
  check("transpose", [](const std::vector<Tensor>& t) { return sum_all(mul(transpose2d(t[0]), transpose2d(t[0]))); }, {a});
  check("reshape", [](const std::vector<Tensor>& t) { return sum_all(silu(reshape(t[0], {12}))); }, {a});
  check("concat", [](const std::vector<Tensor>& t) { return sum_all(silu(concat({t[0], t[1]}, 1))); }, {a, b});
  check("gather", [](const std::vector<Tensor>& t) { return sum_all(silu(gather_rows(t[0], {2, 0, 2}))); }, {a});
  check("broadcast", [](const std::vector<Tensor>& t) { return sum_all(mul(broadcast_new_axis(t[0], 0, 3), broadcast_new_axis(t[0], 0, 3))); }, {v});
  check("reduce_sum", [](const std::vector<Tensor>& t) { return sum_all(mul(reduce_sum(t[0], 1), reduce_sum(t[0], 1))); }, {a});
  check("reduce_mean", [](const std::vector<Tensor>& t) { return sum_all(mul(reduce_mean(t[0], 0), reduce_mean(t[0], 0))); }, {a});
  check("reduce_max", [](const std::vector<Tensor>& t) { return sum_all(mul(reduce_max(t[0], 1), reduce_max(t[0], 1))); }, {a});
  check("reduce_min", [](const std::vector<Tensor>& t) { return sum_all(mul(reduce_min(t[0], 0), reduce_min(t[0], 0))); }, {a});
  check("silu", [](const std::vector<Tensor>& t) { return sum_all(silu(t[0])); }, {a});
  check("sigmoid", [](const std::vector<Tensor>& t) { return sum_all(sigmoid(t[0])); }, {a});
  check("softplus", [](const std::vector<Tensor>& t) { return sum_all(softplus(t[0])); }, {a});
  check("exp", [](const std::vector<Tensor>& t) { return sum_all(exp_op(t[0])); }, {a});
  check("layer_norm", [&](const std::vector<Tensor>& t) {
    return sum_all(mul(layer_norm(t[0], t[1], t[2]), layer_norm(t[0], t[1], t[2])));
  }, {a, random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)});
  check("conv1d", [](const std::vector<Tensor>& t) {
    return sum_all(silu(depthwise_conv1d(t[0], t[1], t[2])));
  }, {random_tensor({6, 3}, rng), random_tensor({3, 4}, rng), random_tensor({3}, rng)});

  // Kinked ops checked away from their kinks.
  Tensor pos = random_tensor({3, 4}, rng, 0.2, 1.0);
  Tensor mixed({6}, {-0.9, -0.4, -0.2, 0.3, 0.6, 1.2});
  auto away = [&](std::size_t, std::size_t j) { return std::fabs(mixed[j]); };
  REQUIRE(finite_diff_check_multi(
              [](const std::vector<Tensor>& t) { return sum_all(relu(t[0])); },
              {mixed}, 1e-6, away)
              .max_rel_error < 1e-5);
  REQUIRE(finite_diff_check_multi(
              [](const std::vector<Tensor>& t) { return sum_all(abs_op(t[0])); },
              {mixed}, 1e-6, away)
              .max_rel_error < 1e-5);
  check("sqrt", [](const std::vector<Tensor>& t) { return sum_all(sqrt_op(t[0])); }, {pos});
}
