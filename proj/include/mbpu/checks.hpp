// Self-check suites: gradient verification, scan fidelity/linearity, and
// brute-force oracle equivalence. Shared by the CLI `check` command and the
// acceptance harness.
#ifndef MBPU_CHECKS_HPP
#define MBPU_CHECKS_HPP

#include <chrono>

#include "mbpu/grad_check.hpp"
#include "mbpu/metrics.hpp"
#include "mbpu/params.hpp"
#include "mbpu/training.hpp"

namespace mbpu {

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckLine> lines;
  double elapsed_seconds = 0.0;

  bool all_pass() const {
    for (const CheckLine& l : lines)
      if (!l.pass) return false;
    return true;
  }
};

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline PointCloud random_cloud(std::size_t n, Rng& rng, double extent = 0.8) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-extent, extent),
                        rng.uniform(-extent, extent),
                        rng.uniform(-extent, extent)});
  return c;
}

}  // namespace detail

/// Finite-difference verification of every differentiable operation:
/// core ops at 1e-5, P3DConv / Mamba block / regressor heads / renderer at
/// 1e-4, and the assembled three-term loss at 1e-3 on an 8-point/2-view
/// instance.
inline CheckReport run_grad_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  CheckReport report;
  Rng rng(2024);
  auto add_line = [&](const std::string& name, double err, double tol) {
    report.lines.push_back(
        {name, err < tol, format("max rel err ", err, " (tol ", tol, ")")});
  };

  {  // core ops, smooth instances
    Tensor a = detail::random_tensor({3, 4}, rng);
    Tensor b = detail::random_tensor({3, 4}, rng);
    Tensor m = detail::random_tensor({4, 2}, rng);
    Tensor v = detail::random_tensor({4}, rng);
    Tensor pos = detail::random_tensor({3, 4}, rng, 0.2, 1.0);
    auto core = [&](const char* name, const TensorFn& f,
                    std::vector<Tensor> xs) {
      add_line(format("core/", name),
               finite_diff_check_multi(f, xs, 1e-6).max_rel_error, 1e-5);
    };
    core("add_mul", [](const std::vector<Tensor>& t) { return sum_all(mul(add(t[0], t[1]), t[1])); }, {a, b});
    core("sub", [](const std::vector<Tensor>& t) { return sum_all(mul(sub(t[0], t[1]), t[0])); }, {a, b});
    core("scalar_mul", [](const std::vector<Tensor>& t) { return sum_all(scalar_mul(t[0], -2.5)); }, {a});
    core("matmul", [](const std::vector<Tensor>& t) { return sum_all(mul(matmul(t[0], t[1]), matmul(t[0], t[1]))); }, {a, m});
    core("add_bias", [](const std::vector<Tensor>& t) { return sum_all(silu(add_bias(t[0], t[1]))); }, {a, v});
    core("concat_gather", [](const std::vector<Tensor>& t) {
      return sum_all(silu(gather_rows(concat({t[0], t[1]}, 1), {2, 0})));
    }, {a, b});
    core("broadcast", [](const std::vector<Tensor>& t) {
      Tensor bc = broadcast_new_axis(t[0], 0, 3);
      return sum_all(mul(bc, bc));
    }, {v});
    core("reduce_sum_mean", [](const std::vector<Tensor>& t) {
      return add(sum_all(mul(reduce_sum(t[0], 1), reduce_sum(t[0], 1))),
                 sum_all(mul(reduce_mean(t[0], 0), reduce_mean(t[0], 0))));
    }, {a});
    core("reduce_max_min", [](const std::vector<Tensor>& t) {
      return add(sum_all(mul(reduce_max(t[0], 1), reduce_max(t[0], 1))),
                 sum_all(mul(reduce_min(t[0], 0), reduce_min(t[0], 0))));
    }, {a});
    core("silu", [](const std::vector<Tensor>& t) { return sum_all(silu(t[0])); }, {a});
    core("sigmoid", [](const std::vector<Tensor>& t) { return sum_all(sigmoid(t[0])); }, {a});
    core("softplus", [](const std::vector<Tensor>& t) { return sum_all(softplus(t[0])); }, {a});
    core("exp", [](const std::vector<Tensor>& t) { return sum_all(exp_op(t[0])); }, {a});
    core("sqrt", [](const std::vector<Tensor>& t) { return sum_all(sqrt_op(t[0])); }, {pos});
    core("layer_norm", [&](const std::vector<Tensor>& t) {
      Tensor y = layer_norm(t[0], t[1], t[2]);
      return sum_all(mul(y, y));
    }, {a, detail::random_tensor({4}, rng, 0.5, 1.5), detail::random_tensor({4}, rng)});
    core("conv1d", [](const std::vector<Tensor>& t) {
      return sum_all(silu(depthwise_conv1d(t[0], t[1], t[2])));
    }, {detail::random_tensor({6, 3}, rng), detail::random_tensor({3, 4}, rng),
        detail::random_tensor({3}, rng)});
    // kinked ops away from their kinks
    Tensor mixed({6}, {-0.9, -0.4, -0.2, 0.3, 0.6, 1.2});
    auto away = [&](std::size_t, std::size_t j) { return std::fabs(mixed[j]); };
    add_line("core/relu",
             finite_diff_check_multi(
                 [](const std::vector<Tensor>& t) { return sum_all(relu(t[0])); },
                 {mixed}, 1e-6, away)
                 .max_rel_error,
             1e-5);
    add_line("core/abs",
             finite_diff_check_multi(
                 [](const std::vector<Tensor>& t) { return sum_all(abs_op(t[0])); },
                 {mixed}, 1e-6, away)
                 .max_rel_error,
             1e-5);
  }

  {  // selective scan
    Tensor x = detail::random_tensor({6, 2}, rng);
    Tensor dt = detail::random_tensor({6, 2}, rng, 0.02, 0.3);
    Tensor B = detail::random_tensor({6, 3}, rng);
    Tensor C = detail::random_tensor({6, 3}, rng);
    Tensor A = detail::random_tensor({2, 3}, rng, -2.0, -0.1);
    Tensor D = detail::random_tensor({2}, rng);
    auto f = [](const std::vector<Tensor>& t) {
      Tensor y = selective_scan(t[0], t[1], t[2], t[3], t[4], t[5]);
      return sum_all(mul(y, y));
    };
    add_line("scan/selective_scan",
             finite_diff_check_multi(f, {x, dt, B, C, A, D}, 1e-6).max_rel_error,
             1e-5);
  }

  {  // p3dconv
    PointCloud coords = detail::random_cloud(6, rng);
    IndexMatrix nb = knn(coords, coords, 3, true);
    Tensor feat = detail::random_tensor({6, 4}, rng);
    Tensor w = detail::random_tensor({7, 4}, rng);
    Tensor b = detail::random_tensor({4}, rng);
    auto f = [&](const std::vector<Tensor>& t) {
      Tensor y = p3dconv(t[0], coords, nb, t[1], t[2]);
      return sum_all(mul(y, y));
    };
    add_line("extractor/p3dconv",
             finite_diff_check_multi(f, {feat, w, b}, 1e-6).max_rel_error,
             1e-4);
  }

  {  // mamba block over all its parameters
    MambaBlockParams p = make_mamba_params(4, 4, 4, 2, rng);
    Tensor F = detail::random_tensor({8, 4}, rng);
    std::vector<Tensor*> slots = {
        &p.ln_in_gain, &p.ln_in_bias, &p.w_in,      &p.b_in,
        &p.conv_kernel, &p.conv_bias, &p.w_delta,   &p.b_delta,
        &p.w_b,         &p.w_c,       &p.a_log,     &p.d_skip,
        &p.w_gate,      &p.b_gate,    &p.ln_t_gain, &p.ln_t_bias,
        &p.w_out,       &p.b_out};
    std::vector<Tensor> xs = {F};
    for (Tensor* t : slots) xs.push_back(*t);
    auto f = [&](const std::vector<Tensor>& t) {
      MambaBlockParams q = p;
      std::vector<Tensor*> qs = {
          &q.ln_in_gain, &q.ln_in_bias, &q.w_in,      &q.b_in,
          &q.conv_kernel, &q.conv_bias, &q.w_delta,   &q.b_delta,
          &q.w_b,         &q.w_c,       &q.a_log,     &q.d_skip,
          &q.w_gate,      &q.b_gate,    &q.ln_t_gain, &q.ln_t_bias,
          &q.w_out,       &q.b_out};
      for (std::size_t i = 0; i < qs.size(); ++i) *qs[i] = t[i + 1];
      Tensor S = mamba_block(t[0], q);
      return sum_all(mul(S, S));
    };
    add_line("mamba/block_params",
             finite_diff_check_multi(f, xs, 3e-5).max_rel_error, 1e-4);
  }

  {  // regressor heads
    RegressorParams p = make_regressor_params(8, 5, rng);
    Tensor X = detail::random_tensor({5, 8}, rng);
    std::vector<Tensor*> slots = {&p.w0, &p.b0, &p.w1, &p.b1, &p.w2,
                                  &p.b2, &p.wd, &p.bd, &p.ws, &p.bs};
    std::vector<Tensor> xs = {X};
    for (Tensor* t : slots) xs.push_back(*t);
    auto f = [&](const std::vector<Tensor>& t) {
      RegressorParams q = p;
      std::vector<Tensor*> qs = {&q.w0, &q.b0, &q.w1, &q.b1, &q.w2,
                                 &q.b2, &q.wd, &q.bd, &q.ws, &q.bs};
      for (std::size_t i = 0; i < qs.size(); ++i) *qs[i] = t[i + 1];
      RegressorOutput o = regress_points(t[0], q);
      return add(sum_all(o.distance), sum_all(mul(o.shift, o.shift)));
    };
    add_line("regressor/heads",
             finite_diff_check_multi(f, xs, 1e-6).max_rel_error, 1e-4);
  }

  {  // renderer + view loss w.r.t. coordinates
    RenderConfig cfg;
    cfg.width = cfg.height = 8;
    cfg.depth_bins = 16;
    PointCloud target = detail::random_cloud(4, rng, 0.5);
    PointCloud start = detail::random_cloud(4, rng, 0.5);
    CameraRig rig = make_camera_rig(2);
    auto gt = render_all_views(target, rig, cfg);
    auto f = [&](const std::vector<Tensor>& t) {
      return view_loss(render_all_views(t[0], rig, cfg), gt);
    };
    add_line("renderer/view_loss",
             finite_diff_check(f, cloud_to_tensor(start), 1e-6), 1e-4);
  }

  {  // the three losses assembled, 8 points, 2 views, 8x8x16 grid
    RenderConfig cfg;
    cfg.width = cfg.height = 8;
    cfg.depth_bins = 16;
    CameraRig rig = make_camera_rig(2);
    PointCloud Q = detail::random_cloud(8, rng, 0.5);
    Tensor refined = cloud_to_tensor(detail::random_cloud(8, rng, 0.5));
    Tensor temp = cloud_to_tensor(detail::random_cloud(8, rng, 0.5));
    LossConfig lc{0.05, 1.0};
    auto f = [&](const std::vector<Tensor>& t) {
      return total_loss(t[0], t[1], Q, rig, cfg, lc);
    };
    add_line("losses/total_loss",
             finite_diff_check_multi(f, {refined, temp}, 3e-5).max_rel_error,
             1e-3);
    add_line("losses/l1_refinement",
             finite_diff_check(
                 [&](const std::vector<Tensor>& t) {
                   return l1_refinement_loss_t(t[0], Q);
                 },
                 refined, 1e-6),
             1e-4);
    add_line("losses/chamfer",
             finite_diff_check(
                 [&](const std::vector<Tensor>& t) {
                   return chamfer_loss_t(t[0], Q);
                 },
                 refined, 1e-6),
             1e-4);
  }

  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

/// Scan equivalence against an independent per-step loop (to 1e-12, n up to
/// 8192) and the near-linear runtime-growth bound t(2n)/t(n) <= 2.5.
inline CheckReport run_scan_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  CheckReport report;
  Rng rng(7);
  for (std::size_t n : {64ul, 1024ul, 8192ul}) {
    const std::size_t d = 8, s = 4;
    Tensor x = detail::random_tensor({n, d}, rng);
    Tensor dt = detail::random_tensor({n, d}, rng, 0.01, 0.2);
    Tensor B = detail::random_tensor({n, s}, rng);
    Tensor C = detail::random_tensor({n, s}, rng);
    Tensor A = detail::random_tensor({d, s}, rng, -2.0, -0.1);
    Tensor D = detail::random_tensor({d}, rng);
    Tensor y = selective_scan(x, dt, B, C, A, D);
    // independent naive recurrence
    double max_err = 0.0;
    for (std::size_t ch = 0; ch < d; ++ch) {
      std::vector<double> h(s, 0.0);
      for (std::size_t t = 0; t < n; ++t) {
        double out = D[ch] * x[t * d + ch];
        for (std::size_t j = 0; j < s; ++j) {
          h[j] = std::exp(dt[t * d + ch] * A[ch * s + j]) * h[j] +
                 dt[t * d + ch] * B[t * s + j] * x[t * d + ch];
          out += C[t * s + j] * h[j];
        }
        max_err = std::max(max_err, std::fabs(out - y[t * d + ch]));
      }
    }
    report.lines.push_back({format("scan/equivalence_n", n), max_err < 1e-12,
                            format("max abs err ", max_err)});
  }

  auto table = scan_benchmark({1024, 2048, 4096, 8192}, 64, 16, 5);
  std::string table_text;
  for (const ScanTiming& row : table)
    table_text += format("n=", row.length, " t=", row.seconds, "s; ");
  for (std::size_t i = 0; i + 1 < table.size(); ++i) {
    const double ratio = table[i + 1].seconds / table[i].seconds;
    report.lines.push_back(
        {format("scan/growth_", table[i].length, "_to_", table[i + 1].length),
         ratio <= 2.5, format("t(2n)/t(n) = ", ratio, "; ", table_text)});
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

/// kNN / FPS / metric equivalence against naive brute-force implementations
/// on randomized instances of up to 200 points.
inline CheckReport run_oracle_checks(std::size_t instances = 200) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckReport report;
  Rng rng(99);
  std::size_t knn_bad = 0, fps_bad = 0;
  double metric_err = 0.0;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t n = 2 + rng.below(199);
    PointCloud P = detail::random_cloud(n, rng);
    const std::size_t m = 2 + rng.below(199);
    PointCloud Q = detail::random_cloud(m, rng);

    {  // knn vs full sort
      const std::size_t k = 1 + rng.below(std::min<std::size_t>(n - 1, 8));
      IndexMatrix got = knn(P, P, k, true);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < n; ++j)
          if (j != i) all.push_back({dist2(P[i], P[j]), j});
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < k; ++j)
          if (got.at(i, j) != all[j].second) ++knn_bad;
      }
    }
    {  // fps vs naive greedy
      const std::size_t mm = 1 + rng.below(n);
      auto got = farthest_point_sample(P, mm, 0);
      std::vector<std::size_t> picks{0};
      while (picks.size() < mm) {
        double best = -1.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < n; ++j) {
          double dmin = 1e300;
          for (std::size_t p : picks) dmin = std::min(dmin, dist2(P[j], P[p]));
          if (dmin > best) {
            best = dmin;
            best_j = j;
          }
        }
        picks.push_back(best_j);
      }
      if (got != picks) ++fps_bad;
    }
    {  // metrics vs double loops
      auto nearest = [](const Point3& p, const PointCloud& c) {
        double best = 1e300;
        for (const Point3& q : c.points) best = std::min(best, dist2(p, q));
        return best;
      };
      double cd_f = 0, cd_b = 0, hd_f = 0, hd_b = 0, p2f = 0, l1 = 0;
      for (const Point3& p : P.points) {
        const double d = nearest(p, Q);
        cd_f += d;
        hd_f = std::max(hd_f, d);
        p2f += std::sqrt(d);
        l1 += std::sqrt(d);
      }
      for (const Point3& q : Q.points) {
        const double d = nearest(q, P);
        cd_b += d;
        hd_b = std::max(hd_b, d);
      }
      const double cd_ref = cd_f / double(n) + cd_b / double(m);
      const double hd_ref = std::sqrt(std::max(hd_f, hd_b));
      const double p2f_ref = p2f / double(n);
      const double l1_ref = l1 / double(n);
      const double thr = 0.01 * bbox_diagonal(Q);
      std::size_t hp = 0, hq = 0;
      for (const Point3& p : P.points)
        if (nearest(p, Q) <= thr * thr) ++hp;
      for (const Point3& q : Q.points)
        if (nearest(q, P) <= thr * thr) ++hq;
      const double prec = double(hp) / double(n), rec = double(hq) / double(m);
      const double f_ref =
          prec + rec == 0.0 ? 0.0 : 2 * prec * rec / (prec + rec);

      metric_err = std::max(metric_err,
                            std::fabs(chamfer_distance(P, Q) - cd_ref));
      metric_err = std::max(metric_err,
                            std::fabs(hausdorff_distance(P, Q) - hd_ref));
      metric_err = std::max(metric_err, std::fabs(p2f_proxy(P, Q) - p2f_ref));
      metric_err =
          std::max(metric_err, std::fabs(f_score(P, Q, thr) - f_ref));
      metric_err =
          std::max(metric_err, std::fabs(l1_refinement_loss(P, Q) - l1_ref));
    }
  }
  report.lines.push_back({"oracle/knn_indices", knn_bad == 0,
                          format(knn_bad, " index mismatches over ", instances,
                                 " instances")});
  report.lines.push_back({"oracle/fps_indices", fps_bad == 0,
                          format(fps_bad, " sequence mismatches")});
  report.lines.push_back({"oracle/metric_values", metric_err < 1e-12,
                          format("max abs err ", metric_err)});
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace mbpu

#endif  // MBPU_CHECKS_HPP
