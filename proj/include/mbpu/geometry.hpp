// Point-cloud container, normalization, neighbor queries, sampling, noise.
// Every operation is a pure function; ties always break toward the lower
// index so results are fully deterministic.
#ifndef MBPU_GEOMETRY_HPP
#define MBPU_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mbpu/common.hpp"
#include "mbpu/tensor.hpp"

namespace mbpu {

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Point3& o) const = default;

  double dot(const Point3& o) const { return x * o.x + y * o.y + z * o.z; }
  Point3 cross(const Point3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline double dist2(const Point3& a, const Point3& b) {
  return (a - b).norm2();
}

struct PointCloud {
  std::vector<Point3> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts) : points(std::move(pts)) {}

  std::size_t count() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point3& operator[](std::size_t i) const { return points[i]; }
  Point3& operator[](std::size_t i) { return points[i]; }

  bool finite() const {
    for (const Point3& p : points)
      if (!p.finite()) return false;
    return true;
  }
};

/// Shift-and-scale frame: canonical(p) = (p - center) / scale.
struct NormalizationTransform {
  Point3 center{};
  double scale = 1.0;

  Point3 apply(const Point3& p) const { return (p - center) * (1.0 / scale); }
  Point3 invert(const Point3& p) const { return p * scale + center; }

  PointCloud apply(const PointCloud& c) const {
    PointCloud out;
    out.points.reserve(c.count());
    for (const Point3& p : c.points) out.points.push_back(apply(p));
    return out;
  }
  PointCloud invert(const PointCloud& c) const {
    PointCloud out;
    out.points.reserve(c.count());
    for (const Point3& p : c.points) out.points.push_back(invert(p));
    return out;
  }
};

/// Centers on the centroid and scales so the farthest point sits on the unit
/// sphere. A cloud of coincident points keeps scale 1.
inline std::pair<PointCloud, NormalizationTransform> normalize_unit_sphere(
    const PointCloud& c) {
  require(!c.empty(), "normalize_unit_sphere: empty cloud");
  Point3 center{};
  for (const Point3& p : c.points) center = center + p;
  center = center * (1.0 / static_cast<double>(c.count()));
  double max_norm = 0.0;
  for (const Point3& p : c.points)
    max_norm = std::max(max_norm, (p - center).norm());
  NormalizationTransform t{center, max_norm > 0.0 ? max_norm : 1.0};
  return {t.apply(c), t};
}

struct IndexMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> data;

  std::size_t at(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
};

/// Indices of the k nearest points of `c` for every point of `query`,
/// ascending by distance, distance ties broken by lower index.
/// exclude_self skips the equal-index candidate and assumes query aliases c.
inline IndexMatrix knn(const PointCloud& c, const PointCloud& query,
                       std::size_t k, bool exclude_self = false) {
  require(k >= 1, "knn: k must be positive");
  const std::size_t limit = c.count() - (exclude_self ? 1 : 0);
  require(k <= limit, "knn: k=", k, " too large for ", c.count(), " points",
          exclude_self ? " with exclude_self" : "");
  IndexMatrix out{query.count(), k, {}};
  out.data.resize(query.count() * k);
  using Entry = std::pair<double, std::size_t>;  // (squared distance, index)
  std::vector<Entry> heap;
  heap.reserve(k + 1);
  for (std::size_t i = 0; i < query.count(); ++i) {
    heap.clear();
    for (std::size_t j = 0; j < c.count(); ++j) {
      if (exclude_self && j == i) continue;
      Entry e{dist2(query[i], c[j]), j};
      if (heap.size() < k) {
        heap.push_back(e);
        std::push_heap(heap.begin(), heap.end());
      } else if (e < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = e;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    std::sort_heap(heap.begin(), heap.end());
    for (std::size_t j = 0; j < k; ++j) out.data[i * k + j] = heap[j].second;
  }
  return out;
}

/// Greedy farthest-point sampling: first pick is `start`, each next pick
/// maximizes the minimum distance to the picked set (first max wins ties).
inline std::vector<std::size_t> farthest_point_sample(const PointCloud& c,
                                                      std::size_t m,
                                                      std::size_t start = 0) {
  require(m >= 1 && m <= c.count(), "farthest_point_sample: m=", m,
          " out of range for ", c.count(), " points");
  require(start < c.count(), "farthest_point_sample: start index ", start,
          " out of range");
  std::vector<std::size_t> picks;
  picks.reserve(m);
  picks.push_back(start);
  std::vector<double> min_d2(c.count());
  for (std::size_t j = 0; j < c.count(); ++j)
    min_d2[j] = dist2(c[j], c[start]);
  for (std::size_t step = 1; step < m; ++step) {
    std::size_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t j = 0; j < c.count(); ++j) {
      if (min_d2[j] > best_d2) {
        best_d2 = min_d2[j];
        best = j;
      }
    }
    picks.push_back(best);
    for (std::size_t j = 0; j < c.count(); ++j)
      min_d2[j] = std::min(min_d2[j], dist2(c[j], c[best]));
  }
  return picks;
}

inline PointCloud gather(const PointCloud& c,
                         const std::vector<std::size_t>& idx) {
  PointCloud out;
  out.points.reserve(idx.size());
  for (std::size_t i : idx) out.points.push_back(c[i]);
  return out;
}

/// Perturbs every coordinate by tau * N(0,1) from a seeded generator.
/// tau = 0 returns the input bit-identically.
inline PointCloud add_gaussian_noise(const PointCloud& c, double tau,
                                     std::uint64_t seed) {
  require(!c.empty(), "add_gaussian_noise: empty cloud");
  require(tau >= 0.0, "add_gaussian_noise: negative tau ", tau);
  if (tau == 0.0) return c;
  Rng rng(seed);
  PointCloud out = c;
  for (Point3& p : out.points) {
    p.x += tau * rng.gaussian();
    p.y += tau * rng.gaussian();
    p.z += tau * rng.gaussian();
  }
  return out;
}

inline Tensor cloud_to_tensor(const PointCloud& c) {
  Tensor t({c.count(), 3});
  for (std::size_t i = 0; i < c.count(); ++i) {
    t[i * 3 + 0] = c[i].x;
    t[i * 3 + 1] = c[i].y;
    t[i * 3 + 2] = c[i].z;
  }
  return t;
}

inline PointCloud tensor_to_cloud(const Tensor& t) {
  require(t.rank() == 2 && t.dim(1) == 3, "tensor_to_cloud: need (n x 3), got ",
          shape_str(t.shape()));
  PointCloud c;
  c.points.resize(t.dim(0));
  for (std::size_t i = 0; i < c.count(); ++i)
    c[i] = {t[i * 3 + 0], t[i * 3 + 1], t[i * 3 + 2]};
  return c;
}

}  // namespace mbpu

#endif  // MBPU_GEOMETRY_HPP
