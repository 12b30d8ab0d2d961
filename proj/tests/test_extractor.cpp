#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "mbpu/common.hpp"
#include "mbpu/extractor.hpp"
#include "mbpu/grad_check.hpp"

using namespace mbpu;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.init_channels = 4;
  a.mixer_channels = 4;
  a.transition_channels = 6;
  a.state_dim = 3;
  a.conv_width = 3;
  a.expand = 2;
  a.k_conv = 3;
  return a;
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1),
                        rng.uniform(-1, 1)});
  return c;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void collect_params(ExtractorParams& p, std::vector<Tensor*>& out) {
  out.push_back(&p.init_w);
  out.push_back(&p.init_b);
  for (auto& block : p.blocks) {
    for (auto& m : block.mixers) {
      out.push_back(&m.reduce_w);
      out.push_back(&m.reduce_b);
      MambaBlockParams& mb = m.mamba;
      for (Tensor* t : {&mb.ln_in_gain, &mb.ln_in_bias, &mb.w_in, &mb.b_in,
                        &mb.conv_kernel, &mb.conv_bias, &mb.w_delta,
                        &mb.b_delta, &mb.w_b, &mb.w_c, &mb.a_log, &mb.d_skip,
                        &mb.w_gate, &mb.b_gate, &mb.ln_t_gain, &mb.ln_t_bias,
                        &mb.w_out, &mb.b_out})
        out.push_back(t);
      out.push_back(&m.p3d_w);
      out.push_back(&m.p3d_b);
    }
    out.push_back(&block.trans_w);
    out.push_back(&block.trans_b);
  }
}

}  // namespace

TEST_CASE("p3dconv degenerate coincident points give a constant output",
          "[extractor]") {
  Rng rng(2);
  const std::size_t n = 5, c = 4;
  PointCloud coords;
  for (std::size_t i = 0; i < n; ++i) coords.points.push_back({1, 2, 3});
  Tensor feat = Tensor::full({n, c}, 0.7);
  IndexMatrix nb{n, 2, {}};
  nb.data = {1, 2, 0, 2, 0, 1, 1, 0, 2, 3};
  Tensor w = random_tensor({c + 3, c}, rng);
  Tensor b = random_tensor({c}, rng);
  Tensor out = p3dconv(feat, coords, nb, w, b);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      REQUIRE(out[i * c + j] == out[j]);
}

TEST_CASE("p3dconv is invariant to neighbor order", "[extractor][property]") {
  Rng rng(3);
  const std::size_t n = 6, c = 5, k = 3;
  PointCloud coords = random_cloud(n, rng);
  Tensor feat = random_tensor({n, c}, rng);
  IndexMatrix nb = knn(coords, coords, k, true);
  Tensor w = random_tensor({c + 3, c}, rng);
  Tensor b = random_tensor({c}, rng);
  Tensor base = p3dconv(feat, coords, nb, w, b);
  IndexMatrix shuffled = nb;
  std::swap(shuffled.data[2 * k + 0], shuffled.data[2 * k + 2]);
  std::swap(shuffled.data[2 * k + 1], shuffled.data[2 * k + 0]);
  Tensor perm = p3dconv(feat, coords, shuffled, w, b);
  for (std::size_t j = 0; j < c; ++j)
    REQUIRE(perm[2 * c + j] == base[2 * c + j]);
}

TEST_CASE("p3dconv rejects bad neighbor indices", "[extractor]") {
  Rng rng(4);
  PointCloud coords = random_cloud(3, rng);
  Tensor feat = random_tensor({3, 2}, rng);
  IndexMatrix nb{3, 1, {1, 2, 7}};
  REQUIRE_THROWS_WITH(
      p3dconv(feat, coords, nb, random_tensor({5, 2}, rng),
              random_tensor({2}, rng)),
      Catch::Matchers::ContainsSubstring("out of range"));
}

TEST_CASE("p3dconv gradients pass finite differences", "[extractor][gradcheck]") {
  Rng rng(5);
  const std::size_t n = 6, c = 4, k = 3;
  PointCloud coords = random_cloud(n, rng);
  IndexMatrix nb = knn(coords, coords, k, true);
  Tensor feat = random_tensor({n, c}, rng);
  Tensor w = random_tensor({c + 3, c}, rng);
  Tensor b = random_tensor({c}, rng);
  auto f = [&](const std::vector<Tensor>& t) {
    Tensor y = p3dconv(t[0], coords, nb, t[1], t[2]);
    return sum_all(mul(y, y));
  };
  auto report = finite_diff_check_multi(f, {feat, w, b}, 1e-6);
  REQUIRE(report.max_rel_error < 1e-4);
}

TEST_CASE("extract produces the contracted shapes", "[extractor]") {
  Rng rng(7);
  ArchConfig arch = tiny_arch();
  ExtractorParams p = make_extractor_params(arch, rng);
  PointCloud cloud = random_cloud(16, rng);
  FeatureSet fs = extract(cloud, p, arch);
  REQUIRE(fs.l0.shape() == Shape{16, arch.init_channels});
  REQUIRE(fs.l1.shape() == Shape{16, arch.transition_channels});
  REQUIRE(fs.l2.shape() == Shape{16, arch.transition_channels});
  REQUIRE(fs.l3.shape() == Shape{16, arch.transition_channels});
  REQUIRE(fs.g.shape() == Shape{arch.global_channels()});
}

TEST_CASE("max pooling is idempotent under duplication", "[extractor]") {
  Rng rng(8);
  ArchConfig arch = tiny_arch();
  ExtractorParams p = make_extractor_params(arch, rng);
  PointCloud cloud = random_cloud(10, rng);
  FeatureSet fs = extract(cloud, p, arch);
  Tensor doubled = concat({fs.l3, fs.l3}, 0);
  Tensor g2 = reduce_max(doubled, 0);
  for (std::size_t i = 0; i < fs.g.size(); ++i) REQUIRE(g2[i] == fs.g[i]);
  // and invariant to a row permutation of the pooled features
  std::vector<std::size_t> perm(cloud.count());
  for (std::size_t i = 0; i < perm.size(); ++i)
    perm[i] = (i * 7 + 3) % perm.size();
  Tensor g3 = reduce_max(gather_rows(fs.l3, perm), 0);
  for (std::size_t i = 0; i < fs.g.size(); ++i) REQUIRE(g3[i] == fs.g[i]);
}

TEST_CASE("dense connectivity places mixer outputs in fixed channel blocks",
          "[extractor]") {
  Rng rng(9);
  ArchConfig arch = tiny_arch();
  ExtractorParams base = make_extractor_params(arch, rng);
  PointCloud cloud = random_cloud(12, rng);

  ExtractorTrace t0;
  extract(cloud, base, arch, &t0);

  // Zero mixer 2's point-conv output (block 0): its channel block inside
  // mixer 3's input must become silu(0)=0 while the rest is untouched.
  ExtractorParams zeroed = base;
  zeroed.blocks[0].mixers[1].p3d_w = Tensor(base.blocks[0].mixers[1].p3d_w.shape());
  zeroed.blocks[0].mixers[1].p3d_b = Tensor(base.blocks[0].mixers[1].p3d_b.shape());
  ExtractorTrace t1;
  extract(cloud, zeroed, arch, &t1);

  const Tensor& in3_base = t0.mixer_inputs[2];
  const Tensor& in3_zero = t1.mixer_inputs[2];
  const std::size_t c0 = arch.init_channels, mc = arch.mixer_channels;
  const std::size_t width = in3_base.dim(1);
  REQUIRE(width == c0 + 2 * mc);
  for (std::size_t i = 0; i < in3_base.dim(0); ++i)
    for (std::size_t c = 0; c < width; ++c) {
      const bool mixer2_block = c >= c0 + mc;
      if (mixer2_block)
        REQUIRE(in3_zero[i * width + c] == 0.0);
      else
        REQUIRE(in3_zero[i * width + c] == in3_base[i * width + c]);
    }
}

TEST_CASE("extractor parameter gradients pass finite differences",
          "[extractor][gradcheck]") {
  Rng rng(11);
  ArchConfig arch;
  arch.init_channels = 3;
  arch.mixer_channels = 3;
  arch.transition_channels = 4;
  arch.state_dim = 2;
  arch.conv_width = 3;
  arch.expand = 1;
  arch.k_conv = 2;
  ExtractorParams p = make_extractor_params(arch, rng);
  PointCloud cloud = random_cloud(8, rng);

  std::vector<Tensor*> slots;
  collect_params(p, slots);
  std::vector<Tensor> xs;
  for (Tensor* t : slots) xs.push_back(*t);

  auto f = [&](const std::vector<Tensor>& t) {
    ExtractorParams q = p;
    std::vector<Tensor*> qs;
    collect_params(q, qs);
    for (std::size_t i = 0; i < qs.size(); ++i) *qs[i] = t[i];
    FeatureSet fs = extract(cloud, q, arch);
    return sum_all(mul(fs.g, fs.g));
  };
  auto report = finite_diff_check_multi(f, xs, 3e-5);
  REQUIRE(report.max_rel_error < 1e-4);
}

TEST_CASE("interpolation hits a seed exactly", "[extractor]") {
  Rng rng(13);
  ArchConfig arch = tiny_arch();
  ExtractorParams p = make_extractor_params(arch, rng);
  PointCloud seeds = random_cloud(9, rng);
  FeatureSet fs = extract(seeds, p, arch);
  Tensor locals = concat({fs.l0, fs.l1, fs.l2, fs.l3}, 1);

  Tensor query({1, 3}, {seeds[4].x, seeds[4].y, seeds[4].z});
  Tensor fb({1, 1});
  Tensor X = interpolate_features(query, seeds, fs, fb);
  const std::size_t c_loc = locals.dim(1);
  for (std::size_t c = 0; c < c_loc; ++c)
    REQUIRE(X[c] == locals[4 * c_loc + c]);
  REQUIRE(X[c_loc] == seeds[4].x);
  REQUIRE(X[X.size() - 1] == 0.0);
}

TEST_CASE("interpolation weights: equidistant pair, and they sum to one",
          "[extractor][oracle]") {
  // One-hot features turn the interpolated block into the weights themselves.
  PointCloud seeds({{1, 0, 0}, {-1, 0, 0}, {0, 9, 0}});
  FeatureSet fs;
  fs.l0 = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  fs.l1 = Tensor({3, 0});
  fs.l2 = Tensor({3, 0});
  fs.l3 = Tensor({3, 0});
  fs.g = Tensor({0});
  Tensor query({1, 3}, {0, 0.3, 0});  // equidistant from seeds 0 and 1
  Tensor fb({1, 1});
  Tensor X = interpolate_features(query, seeds, fs, fb);
  const double w0 = X[0], w1 = X[1], w2 = X[2];
  REQUIRE(std::fabs(w0 - w1) < 1e-9);
  REQUIRE(std::fabs(w0 + w1 + w2 - 1.0) < 1e-12);
  REQUIRE(w2 < w0);

  // hand-computed inverse-squared-distance weights
  const double d01 = 1.0 + 0.09, d2 = 0.3 * 0.3 + 81.0 - 2 * 0.3 * 9 + 0.09;
  (void)d2;
  const double u0 = 1.0 / (d01 + 1e-8);
  const double u2 = 1.0 / ((9.0 - 0.3) * (9.0 - 0.3) + 1e-8);
  REQUIRE(std::fabs(w0 - u0 / (2 * u0 + u2)) < 1e-12);
}

TEST_CASE("zero fed-back distance leaves the last column zero", "[extractor]") {
  Rng rng(17);
  ArchConfig arch = tiny_arch();
  ExtractorParams p = make_extractor_params(arch, rng);
  PointCloud seeds = random_cloud(7, rng);
  FeatureSet fs = extract(seeds, p, arch);
  Tensor query = cloud_to_tensor(random_cloud(5, rng));
  Tensor fb({5, 1});
  Tensor X = interpolate_features(query, seeds, fs, fb);
  const std::size_t c_total = X.dim(1);
  for (std::size_t i = 0; i < 5; ++i)
    REQUIRE(X[i * c_total + c_total - 1] == 0.0);
  REQUIRE_THROWS(interpolate_features(query, PointCloud{}, fs, fb));
}

TEST_CASE("interpolation gradients pass finite differences",
          "[extractor][gradcheck]") {
  Rng rng(19);
  PointCloud seeds = random_cloud(8, rng);
  FeatureSet fs;
  fs.l0 = random_tensor({8, 3}, rng);
  fs.l1 = random_tensor({8, 2}, rng);
  fs.l2 = random_tensor({8, 2}, rng);
  fs.l3 = random_tensor({8, 2}, rng);
  fs.g = random_tensor({2}, rng);
  Tensor query = cloud_to_tensor(random_cloud(4, rng));
  Tensor fb = random_tensor({4, 1}, rng, 0.0, 0.5);

  auto f = [&](const std::vector<Tensor>& t) {
    FeatureSet q;
    q.l0 = t[0];
    q.l1 = t[1];
    q.l2 = t[2];
    q.l3 = t[3];
    q.g = t[4];
    Tensor X = interpolate_features(t[5], seeds, q, t[6]);
    return sum_all(mul(X, X));
  };
  auto report = finite_diff_check_multi(
      f, {fs.l0, fs.l1, fs.l2, fs.l3, fs.g, query, fb}, 1e-6);
  REQUIRE(report.max_rel_error < 1e-4);
}
