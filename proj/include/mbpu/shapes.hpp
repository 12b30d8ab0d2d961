// Uniform surface samplers for the synthetic training shapes. Every sampler
// emits its shape centered at the origin, scaled so the circumradius equals
// `scale` (default 0.95, leaving unit-ball headroom for the renderer).
#ifndef MBPU_SHAPES_HPP
#define MBPU_SHAPES_HPP

#include <string>

#include "mbpu/geometry.hpp"

namespace mbpu {

enum class ShapeKind { Sphere, Torus, Cube, Cylinder, Cone, Ellipsoid };

inline const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::Ellipsoid: return "ellipsoid";
  }
  return "?";
}

inline ShapeKind parse_shape_name(const std::string& s) {
  for (ShapeKind k : {ShapeKind::Sphere, ShapeKind::Torus, ShapeKind::Cube,
                      ShapeKind::Cylinder, ShapeKind::Cone,
                      ShapeKind::Ellipsoid})
    if (s == shape_name(k)) return k;
  fail("unknown shape '", s, "'");
}

namespace detail {

inline Point3 unit_sphere_dir(Rng& rng) {
  while (true) {
    Point3 p{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    const double n = p.norm();
    if (n > 1e-12) return p * (1.0 / n);
  }
}

inline PointCloud sample_sphere(std::size_t n, Rng& rng) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back(unit_sphere_dir(rng));
  return c;  // circumradius 1
}

inline PointCloud sample_torus(std::size_t n, Rng& rng) {
  const double R = 0.7, r = 0.3;  // circumradius R + r = 1
  PointCloud c;
  while (c.count() < n) {
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    // area element ~ (R + r cos(theta)); rejection keeps sampling uniform
    if (rng.uniform01() * (R + r) > R + r * std::cos(theta)) continue;
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double ring = R + r * std::cos(theta);
    c.points.push_back(
        {ring * std::cos(phi), ring * std::sin(phi), r * std::sin(theta)});
  }
  return c;
}

inline PointCloud sample_cube(std::size_t n, Rng& rng) {
  const double a = 1.0 / std::sqrt(3.0);  // circumradius 1
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t face = rng.below(6);
    const double u = rng.uniform(-a, a), v = rng.uniform(-a, a);
    switch (face) {
      case 0: c.points.push_back({+a, u, v}); break;
      case 1: c.points.push_back({-a, u, v}); break;
      case 2: c.points.push_back({u, +a, v}); break;
      case 3: c.points.push_back({u, -a, v}); break;
      case 4: c.points.push_back({u, v, +a}); break;
      default: c.points.push_back({u, v, -a}); break;
    }
  }
  return c;
}

inline PointCloud sample_cylinder(std::size_t n, Rng& rng) {
  const double rho = 0.6, h = 0.8;  // circumradius sqrt(rho^2+h^2) = 1
  const double lateral = 2.0 * M_PI * rho * (2.0 * h);
  const double caps = 2.0 * M_PI * rho * rho;
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    if (rng.uniform01() * (lateral + caps) < lateral) {
      c.points.push_back(
          {rho * std::cos(phi), rho * std::sin(phi), rng.uniform(-h, h)});
    } else {
      const double rr = rho * std::sqrt(rng.uniform01());
      const double z = rng.uniform01() < 0.5 ? -h : h;
      c.points.push_back({rr * std::cos(phi), rr * std::sin(phi), z});
    }
  }
  return c;
}

inline PointCloud sample_cone(std::size_t n, Rng& rng) {
  const double rho = 0.6, apex_z = 0.8, base_z = -0.6;
  const double height = apex_z - base_z;
  const double slant = std::sqrt(rho * rho + height * height);
  const double lateral = M_PI * rho * slant;
  const double base = M_PI * rho * rho;
  const double circum =
      std::max(apex_z, std::sqrt(rho * rho + base_z * base_z));
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    Point3 p;
    if (rng.uniform01() * (lateral + base) < lateral) {
      const double t = std::sqrt(rng.uniform01());  // fraction from apex
      p = {t * rho * std::cos(phi), t * rho * std::sin(phi),
           apex_z - t * height};
    } else {
      const double rr = rho * std::sqrt(rng.uniform01());
      p = {rr * std::cos(phi), rr * std::sin(phi), base_z};
    }
    c.points.push_back(p * (1.0 / circum));
  }
  return c;
}

inline PointCloud sample_ellipsoid(std::size_t n, Rng& rng) {
  const double a = 1.0, b = 0.75, cax = 0.55;  // circumradius a = 1
  const double wmax = std::max({b * cax, a * cax, a * b});
  PointCloud c;
  while (c.count() < n) {
    const Point3 d = unit_sphere_dir(rng);
    // area-distortion rejection keeps the surface sampling uniform
    const double w = std::sqrt((b * cax * d.x) * (b * cax * d.x) +
                               (a * cax * d.y) * (a * cax * d.y) +
                               (a * b * d.z) * (a * b * d.z));
    if (rng.uniform01() * wmax > w) continue;
    c.points.push_back({a * d.x, b * d.y, cax * d.z});
  }
  return c;
}

}  // namespace detail

inline PointCloud sample_shape(ShapeKind kind, std::size_t n, Rng& rng,
                               double scale = 0.95) {
  require(n >= 1, "sample_shape: need at least one point");
  PointCloud c;
  switch (kind) {
    case ShapeKind::Sphere: c = detail::sample_sphere(n, rng); break;
    case ShapeKind::Torus: c = detail::sample_torus(n, rng); break;
    case ShapeKind::Cube: c = detail::sample_cube(n, rng); break;
    case ShapeKind::Cylinder: c = detail::sample_cylinder(n, rng); break;
    case ShapeKind::Cone: c = detail::sample_cone(n, rng); break;
    case ShapeKind::Ellipsoid: c = detail::sample_ellipsoid(n, rng); break;
  }
  for (Point3& p : c.points) p = p * scale;
  return c;
}

/// Sparse/dense training pair: independent draws from the same surface in a
/// shared frame (the dense side is not a subsample).
inline std::pair<PointCloud, PointCloud> sample_pair(ShapeKind kind,
                                                     std::size_t n_sparse,
                                                     double rate, Rng& rng,
                                                     double scale = 0.95) {
  PointCloud sparse = sample_shape(kind, n_sparse, rng, scale);
  PointCloud dense = sample_shape(
      kind, static_cast<std::size_t>(std::llround(rate * double(n_sparse))),
      rng, scale);
  return {sparse, dense};
}

}  // namespace mbpu

#endif  // MBPU_SHAPES_HPP
