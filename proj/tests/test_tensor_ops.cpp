#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "mbpu/common.hpp"
#include "mbpu/ops.hpp"

using namespace mbpu;

TEST_CASE("elementwise add", "[ops]") {
  Tensor a({2}, {1, 2}), b({2}, {3, 4});
  Tensor c = add(a, b);
  REQUIRE(c[0] == 4.0);
  REQUIRE(c[1] == 6.0);
}

TEST_CASE("shape mismatch reports both shapes", "[ops]") {
  Tensor a({2}, {1, 2}), b({3}, {1, 2, 3});
  REQUIRE_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("[2]") &&
                                     Catch::Matchers::ContainsSubstring("[3]"));
}

TEST_CASE("reduce axis out of range", "[ops]") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  REQUIRE_THROWS_WITH(reduce_sum(a, 2),
                      Catch::Matchers::ContainsSubstring("axis"));
}

TEST_CASE("matmul matches triple-loop oracle", "[ops]") {
  Rng rng(7);
  const std::size_t n = 5, k = 4, m = 6;
  Tensor a({n, k}), b({k, m});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-1, 1);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * m + j];
      REQUIRE(std::fabs(c[i * m + j] - acc) < 1e-12);
    }
}

TEST_CASE("layer_norm of an all-equal row is the bias", "[ops]") {
  Tensor x({1, 4}, {5, 5, 5, 5});
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias({4});
  Tensor out = layer_norm(x, gain, bias);
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(out[i] == 0.0);
}

TEST_CASE("layer_norm normalizes rows", "[ops]") {
  Tensor x({2, 3}, {1, 2, 3, -4, 0, 4});
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias({3});
  Tensor out = layer_norm(x, gain, bias);
  for (std::size_t r = 0; r < 2; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 3; ++j) mu += out[r * 3 + j];
    REQUIRE(std::fabs(mu) < 1e-12);
    for (std::size_t j = 0; j < 3; ++j) var += out[r * 3 + j] * out[r * 3 + j];
    REQUIRE(var / 3.0 < 1.0 + 1e-9);  // epsilon shrinks the unit variance
    REQUIRE(var / 3.0 > 0.99);
  }
}

TEST_CASE("depthwise conv1d hand example", "[ops]") {
  // n=4, one channel, kernel [a,b,c], window covers t-1..t+1.
  Tensor x({4, 1}, {1, 2, 3, 4});
  Tensor k({1, 3}, {10, 1, 0.1});
  Tensor b({1}, {0.5});
  Tensor out = depthwise_conv1d(x, k, b);
  REQUIRE(std::fabs(out[0] - (0.5 + 1 * 1 + 2 * 0.1)) < 1e-12);
  REQUIRE(std::fabs(out[1] - (0.5 + 1 * 10 + 2 * 1 + 3 * 0.1)) < 1e-12);
  REQUIRE(std::fabs(out[2] - (0.5 + 2 * 10 + 3 * 1 + 4 * 0.1)) < 1e-12);
  REQUIRE(std::fabs(out[3] - (0.5 + 3 * 10 + 4 * 1)) < 1e-12);
}

TEST_CASE("concat and gather", "[ops]") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {9, 8});
  Tensor c = concat({a, b}, 1);
  REQUIRE(c.shape() == Shape{2, 3});
  REQUIRE(c[2] == 9.0);
  REQUIRE(c[5] == 8.0);

  Tensor g = gather_rows(c, {1, 1, 0});
  REQUIRE(g.shape() == Shape{3, 3});
  REQUIRE(g[0] == 3.0);
  REQUIRE(g[8] == 9.0);
}

TEST_CASE("broadcast_new_axis replicates", "[ops]") {
  Tensor v({2}, {3, 7});
  Tensor rows = broadcast_new_axis(v, 0, 3);
  REQUIRE(rows.shape() == Shape{3, 2});
  for (std::size_t r = 0; r < 3; ++r) {
    REQUIRE(rows[r * 2 + 0] == 3.0);
    REQUIRE(rows[r * 2 + 1] == 7.0);
  }
  Tensor cols = broadcast_new_axis(v, 1, 2);
  REQUIRE(cols.shape() == Shape{2, 2});
  REQUIRE(cols[0] == 3.0);
  REQUIRE(cols[1] == 3.0);
  REQUIRE(cols[2] == 7.0);
}

TEST_CASE("reductions", "[ops]") {
  Tensor x({2, 3}, {1, 5, 2, 4, 0, 6});
  Tensor mx = reduce_max(x, 1);
  REQUIRE(mx.shape() == Shape{2});
  REQUIRE(mx[0] == 5.0);
  REQUIRE(mx[1] == 6.0);
  Tensor mn = reduce_min(x, 0);
  REQUIRE(mn[0] == 1.0);
  REQUIRE(mn[1] == 0.0);
  REQUIRE(mn[2] == 2.0);
  REQUIRE(sum_all(x).value() == 18.0);
  REQUIRE(mean_all(x).value() == 3.0);
  Tensor ms = reduce_mean(x, 1);
  REQUIRE(std::fabs(ms[0] - 8.0 / 3.0) < 1e-15);
}

TEST_CASE("activations at reference points", "[ops]") {
  Tensor x({3}, {-1.0, 0.0, 2.0});
  Tensor r = relu(x);
  REQUIRE(r[0] == 0.0);
  REQUIRE(r[2] == 2.0);
  Tensor sp = softplus(x);
  REQUIRE(std::fabs(sp[1] - std::log(2.0)) < 1e-15);
  Tensor s = silu(x);
  REQUIRE(s[1] == 0.0);
  REQUIRE(std::fabs(s[2] - 2.0 / (1.0 + std::exp(-2.0))) < 1e-15);
  // softplus stays exact for large inputs instead of overflowing
  Tensor big = softplus(Tensor({1}, {800.0}));
  REQUIRE(big[0] == 800.0);
  Tensor e = exp_op(Tensor({1}, {1000.0}));
  REQUIRE(std::isfinite(e[0]));
}

TEST_CASE("outputs stay finite for finite inputs", "[ops][property]") {
  Rng rng(11);
  Tensor x({4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-50, 50);
  Tensor gain = Tensor::full({4}, 1.0), bias({4});
  REQUIRE(layer_norm(x, gain, bias).finite());
  REQUIRE(softplus(x).finite());
  REQUIRE(silu(x).finite());
  REQUIRE(exp_op(x).finite());
  REQUIRE(sqrt_op(abs_op(x)).finite());
}
