// End-to-end upsampling pipeline: midpoint interpolation with FPS selection,
// then T rounds of gradient descent on the learned point-to-point distance
// field (p <- p - lambda * grad d(p)), with the 3-D shift applied once as a
// coarse correction beforehand.
#ifndef MBPU_UPSAMPLER_HPP
#define MBPU_UPSAMPLER_HPP

#include <functional>
#include <unordered_set>

#include "mbpu/params.hpp"

namespace mbpu {

struct RefinementConfig {
  std::size_t iterations = 10;  // T
  double lambda = 0.1;
  bool apply_shift = true;
  std::size_t k_midpoint = 4;
};

namespace detail {

struct PointKey {
  std::uint64_t a, b, c;
  bool operator==(const PointKey&) const = default;
};

struct PointKeyHash {
  std::size_t operator()(const PointKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t v : {k.a, k.b, k.c}) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return std::size_t(h);
  }
};

inline PointKey key_of(const Point3& p) {
  PointKey k;
  std::memcpy(&k.a, &p.x, 8);
  std::memcpy(&k.b, &p.y, 8);
  std::memcpy(&k.c, &p.z, 8);
  return k;
}

}  // namespace detail

/// Candidate generation by midpoints of each point with its k nearest
/// neighbors, exact-duplicate removal, and FPS (start = 0) down to exactly
/// round(rate * N) points. When one round cannot supply enough candidates
/// (high rates), the expansion repeats on the grown candidate set.
inline PointCloud midpoint_interpolate(const PointCloud& input, double rate,
                                       std::size_t k) {
  require(rate > 1.0, "midpoint_interpolate: rate ", rate,
          " would not add points (need rate > 1)");
  require(input.count() >= k + 1, "midpoint_interpolate: need at least ",
          k + 1, " points for k=", k, ", got ", input.count());
  const auto target = static_cast<std::size_t>(
      std::llround(rate * static_cast<double>(input.count())));

  PointCloud candidates;
  std::unordered_set<detail::PointKey, detail::PointKeyHash> seen;
  auto push_unique = [&](const Point3& p) {
    if (seen.insert(detail::key_of(p)).second) candidates.points.push_back(p);
  };
  for (const Point3& p : input.points) push_unique(p);

  std::size_t generation_start = 0;
  while (candidates.count() < target) {
    const std::size_t gen_end = candidates.count();
    require(gen_end > generation_start,
            "midpoint_interpolate: candidate set stopped growing at ",
            gen_end, " points (target ", target, ")");
    generation_start = gen_end;
    PointCloud base;
    base.points.assign(candidates.points.begin(),
                       candidates.points.begin() + long(gen_end));
    const std::size_t kk = std::min(k, base.count() - 1);
    IndexMatrix nb = knn(base, base, kk, true);
    for (std::size_t i = 0; i < base.count(); ++i)
      for (std::size_t j = 0; j < kk; ++j) {
        const Point3 mid = (base[i] + base[nb.at(i, j)]) * 0.5;
        push_unique(mid);
      }
  }
  return gather(candidates, farthest_point_sample(candidates, target, 0));
}

/// Scalar distance field evaluated at a batch of positions; must return one
/// taped (n x 1) tensor when the positions are taped.
using DistanceField = std::function<Tensor(const Tensor& positions)>;

/// Plain Eq.-3 descent on an arbitrary field; exposed for testing against
/// analytic fields.
inline PointCloud refine_with_field(const PointCloud& start,
                                    const DistanceField& field,
                                    std::size_t iterations, double lambda) {
  Tensor positions = cloud_to_tensor(start);
  for (std::size_t t = 0; t < iterations; ++t) {
    if (lambda == 0.0) break;
    Tape tape;
    Tensor xq = tape.watch(positions.detached());
    Tensor dist = field(xq);
    Tensor grad = tape.backward(sum_all(dist)).grad(xq);
    for (std::size_t i = 0; i < positions.size(); ++i)
      positions[i] -= lambda * grad[i];
    require(positions.finite(),
            "refine: non-finite coordinates at iteration ", t);
  }
  return tensor_to_cloud(positions);
}

/// Network-driven refinement of a unit-sphere-normalized interpolated cloud.
/// Features are extracted once from the input and re-queried by interpolation
/// at the moving positions; the fed-back distance column carries the previous
/// iteration's prediction (zeros at t = 0).
inline PointCloud refine(const PointCloud& interpolated,
                         const NetworkParams& params,
                         const RefinementConfig& cfg) {
  require(!interpolated.empty(), "refine: empty cloud");
  const std::size_t n = interpolated.count();
  FeatureSet fs = extract(interpolated, params.extractor, params.arch);
  const PointCloud& seeds = interpolated;

  Tensor positions = cloud_to_tensor(interpolated);
  Tensor fed_back({n, 1});
  if (cfg.apply_shift) {
    Tensor X = interpolate_features(positions, seeds, fs, fed_back);
    RegressorOutput out = regress_points(X, params.regressor);
    positions = add(positions, out.shift);
    require(positions.finite(), "refine: non-finite shift");
  }
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    Tape tape;
    Tensor xq = tape.watch(positions.detached());
    Tensor X = interpolate_features(xq, seeds, fs, fed_back);
    RegressorOutput out = regress_points(X, params.regressor);
    if (cfg.lambda != 0.0) {
      Tensor grad = tape.backward(sum_all(out.distance)).grad(xq);
      for (std::size_t i = 0; i < positions.size(); ++i)
        positions[i] -= cfg.lambda * grad[i];
    }
    require(positions.finite(),
            "refine: non-finite coordinates at iteration ", t);
    fed_back = out.distance.detached();
  }
  return tensor_to_cloud(positions);
}

/// normalize -> midpoint interpolation -> refinement -> denormalize.
/// Output count is exactly round(rate * |input|).
inline PointCloud upsample(const PointCloud& input, double rate,
                           const NetworkParams& params,
                           const RefinementConfig& cfg) {
  auto [normalized, xform] = normalize_unit_sphere(input);
  PointCloud interpolated =
      midpoint_interpolate(normalized, rate, cfg.k_midpoint);
  PointCloud refined = refine(interpolated, params, cfg);
  return xform.invert(refined);
}

}  // namespace mbpu

#endif  // MBPU_UPSAMPLER_HPP
