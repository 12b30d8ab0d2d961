// Point-set metrics (Chamfer, Hausdorff, point-to-surface proxy, F-score)
// and the taped loss variants used in training.
//
// Convention: callers that want the canonical frame map both clouds through
// the reference cloud's unit-sphere transform first (see
// metrics_in_reference_frame); the raw functions below do no normalization.
#ifndef MBPU_METRICS_HPP
#define MBPU_METRICS_HPP

#include "mbpu/geometry.hpp"
#include "mbpu/ops.hpp"

namespace mbpu {

namespace detail {

inline double nearest_dist2(const Point3& p, const PointCloud& Q) {
  double best = 1e300;
  for (const Point3& q : Q.points) best = std::min(best, dist2(p, q));
  return best;
}

inline std::size_t nearest_index(const Point3& p, const PointCloud& Q) {
  double best = 1e300;
  std::size_t best_j = 0;
  for (std::size_t j = 0; j < Q.count(); ++j) {
    const double d = dist2(p, Q[j]);
    if (d < best) {
      best = d;
      best_j = j;
    }
  }
  return best_j;
}

}  // namespace detail

/// Symmetric squared-distance Chamfer (mean per side).
inline double chamfer_distance(const PointCloud& P, const PointCloud& Q) {
  require(!P.empty() && !Q.empty(), "chamfer_distance: empty cloud");
  double forward = 0.0, backward = 0.0;
  for (const Point3& p : P.points) forward += detail::nearest_dist2(p, Q);
  for (const Point3& q : Q.points) backward += detail::nearest_dist2(q, P);
  return forward / double(P.count()) + backward / double(Q.count());
}

/// Max of the two directed worst-case nearest distances, unsquared.
inline double hausdorff_distance(const PointCloud& P, const PointCloud& Q) {
  require(!P.empty() && !Q.empty(), "hausdorff_distance: empty cloud");
  double fwd = 0.0, bwd = 0.0;
  for (const Point3& p : P.points)
    fwd = std::max(fwd, detail::nearest_dist2(p, Q));
  for (const Point3& q : Q.points)
    bwd = std::max(bwd, detail::nearest_dist2(q, P));
  return std::sqrt(std::max(fwd, bwd));
}

/// Surface-distance proxy: mean distance to a much denser reference sampling.
inline double p2f_proxy(const PointCloud& P, const PointCloud& Q_dense) {
  require(!P.empty() && !Q_dense.empty(), "p2f_proxy: empty cloud");
  double acc = 0.0;
  for (const Point3& p : P.points)
    acc += std::sqrt(detail::nearest_dist2(p, Q_dense));
  return acc / double(P.count());
}

inline double bbox_diagonal(const PointCloud& c) {
  require(!c.empty(), "bbox_diagonal: empty cloud");
  Point3 lo = c[0], hi = c[0];
  for (const Point3& p : c.points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  return (hi - lo).norm();
}

/// Harmonic mean of precision/recall at an absolute distance threshold.
inline double f_score(const PointCloud& P, const PointCloud& Q,
                      double threshold) {
  require(!P.empty() && !Q.empty(), "f_score: empty cloud");
  const double t2 = threshold * threshold;
  std::size_t hit_p = 0, hit_q = 0;
  for (const Point3& p : P.points)
    if (detail::nearest_dist2(p, Q) <= t2) ++hit_p;
  for (const Point3& q : Q.points)
    if (detail::nearest_dist2(q, P) <= t2) ++hit_q;
  const double precision = double(hit_p) / double(P.count());
  const double recall = double(hit_q) / double(Q.count());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

struct MetricsReport {
  double cd = 0.0;
  double hd = 0.0;
  double p2f = 0.0;
  double fscore = 0.0;
};

/// All four metrics against one reference cloud. `threshold_fraction` is the
/// F-score threshold as a fraction of the reference bounding-box diagonal
/// (0.005 for the "@0.5%" convention).
inline MetricsReport metrics(const PointCloud& P, const PointCloud& Q_dense,
                             double threshold_fraction) {
  MetricsReport r;
  r.cd = chamfer_distance(P, Q_dense);
  r.hd = hausdorff_distance(P, Q_dense);
  r.p2f = p2f_proxy(P, Q_dense);
  r.fscore = f_score(P, Q_dense, threshold_fraction * bbox_diagonal(Q_dense));
  return r;
}

/// Maps both clouds through the reference cloud's unit-sphere transform.
inline std::pair<PointCloud, PointCloud> to_reference_frame(
    const PointCloud& pred, const PointCloud& reference) {
  auto [ref_norm, xform] = normalize_unit_sphere(reference);
  return {xform.apply(pred), ref_norm};
}

/// Mean L2 distance from each refined point to its nearest ground-truth
/// point (the Eq.-12 pairing rule).
inline double l1_refinement_loss(const PointCloud& refined,
                                 const PointCloud& Q) {
  require(!refined.empty() && !Q.empty(), "l1_refinement_loss: empty cloud");
  double acc = 0.0;
  for (const Point3& p : refined.points)
    acc += std::sqrt(detail::nearest_dist2(p, Q));
  return acc / double(refined.count());
}

// ---------------------------------------------------------------------------
// Taped variants for training. Nearest-neighbor assignments are made from the
// current values and enter the tape as constants; gradients flow through the
// point coordinates.

/// Taped Eq.-12 loss of an (n x 3) coordinate tensor against a fixed cloud.
inline Tensor l1_refinement_loss_t(const Tensor& refined, const PointCloud& Q) {
  require(refined.rank() == 2 && refined.dim(1) == 3,
          "l1_refinement_loss: need (n x 3) coordinates");
  require(!Q.empty() && refined.dim(0) > 0, "l1_refinement_loss: empty input");
  const std::size_t n = refined.dim(0);
  std::vector<std::size_t> assign(n);
  for (std::size_t i = 0; i < n; ++i)
    assign[i] = detail::nearest_index(
        {refined[i * 3], refined[i * 3 + 1], refined[i * 3 + 2]}, Q);
  Tensor targets({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    targets[i * 3 + 0] = Q[assign[i]].x;
    targets[i * 3 + 1] = Q[assign[i]].y;
    targets[i * 3 + 2] = Q[assign[i]].z;
  }
  Tensor diff = sub(refined, targets);
  return mean_all(sqrt_op(reduce_sum(mul(diff, diff), 1)));
}

/// Taped symmetric Chamfer of an (n x 3) tensor against a fixed cloud.
inline Tensor chamfer_loss_t(const Tensor& P, const PointCloud& Qc) {
  require(P.rank() == 2 && P.dim(1) == 3, "chamfer_loss: need (n x 3)");
  require(!Qc.empty() && P.dim(0) > 0, "chamfer_loss: empty input");
  const std::size_t m = Qc.count();
  Tensor Q = cloud_to_tensor(Qc);
  Tensor cross = matmul(P, transpose2d(Q));              // n x m
  Tensor pn = reduce_sum(mul(P, P), 1);                  // n
  Tensor qn = reduce_sum(mul(Q, Q), 1);                  // m
  Tensor d2 = relu(add(sub(broadcast_new_axis(pn, 1, m), scalar_mul(cross, 2.0)),
                       broadcast_new_axis(qn, 0, P.dim(0))));  // n x m
  // relu clips the tiny negatives the norm identity can produce for
  // coincident pairs, keeping the loss nonnegative
  Tensor fwd = mean_all(reduce_min(d2, 1));
  Tensor bwd = mean_all(reduce_min(d2, 0));
  return add(fwd, bwd);
}

}  // namespace mbpu

#endif  // MBPU_METRICS_HPP
