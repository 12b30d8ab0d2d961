// Fast differentiable point renderer.
//
// Pipeline per camera: orthographic projection of unit-sphere points to
// (u, v, depth) with depth = (p.view + 1)/2, Gaussian splats (std sigma in
// grid cells, truncated at the 3-sigma ball) summed into a (W x H x D) grid,
// per-cell occupancy o = 1 - exp(-density), front-to-back ray termination
// r_d = o_d * prod_{j<d}(1 - o_j), and expected depth per pixel with the
// leftover probability going to the background depth.
#ifndef MBPU_RENDERER_HPP
#define MBPU_RENDERER_HPP

#include <cstdio>
#include <cstring>
#include <fstream>

#include "mbpu/geometry.hpp"
#include "mbpu/ops.hpp"

namespace mbpu {

struct CameraPose {
  Point3 right, up, view;  // right-handed orthonormal triad
};

struct CameraRig {
  std::vector<CameraPose> poses;
  std::size_t size() const { return poses.size(); }
};

/// Orthonormal pose looking along `view`; up comes from Gram-Schmidt against
/// global +z, falling back to +x when the view is pole-aligned.
inline CameraPose make_pose(Point3 view) {
  const double n = view.norm();
  require(n > 0.0, "make_pose: zero view direction");
  view = view * (1.0 / n);
  Point3 axis{0, 0, 1};
  if (std::fabs(view.dot(axis)) > 1.0 - 1e-9) axis = {1, 0, 0};
  Point3 up = axis - view * axis.dot(view);
  up = up * (1.0 / up.norm());
  return {up.cross(view), up, view};
}

/// Cameras on a Fibonacci-sphere lattice, all looking at the origin.
inline CameraRig make_camera_rig(std::size_t n_views = 32) {
  require(n_views >= 1, "make_camera_rig: need at least one view");
  CameraRig rig;
  const double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n_views; ++i) {
    const double z = 1.0 - (2.0 * double(i) + 1.0) / double(n_views);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * double(i);
    Point3 pos{r * std::cos(phi), r * std::sin(phi), z};
    rig.poses.push_back(make_pose(pos * -1.0));
  }
  return rig;
}

struct RenderConfig {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t depth_bins = 64;
  double sigma = 1.0;       // splat std-dev, in grid cells
  double background = 1.0;  // depth assigned to unterminated rays

  bool operator==(const RenderConfig&) const = default;
};

/// W x H grid of expected depths in [0,1]; values row 0 is the top image row.
struct DepthImage {
  std::size_t width = 0, height = 0;
  Tensor values;  // shape {height, width}
};

namespace detail {

struct Projected {
  double xf, yf, zf;  // fractional grid coordinates (cell centers at integers)
};

inline Projected project_point(const double* p, const CameraPose& pose,
                               const RenderConfig& cfg) {
  const Point3 q{p[0], p[1], p[2]};
  const double u = q.dot(pose.right);
  const double v = q.dot(pose.up);
  const double depth = (q.dot(pose.view) + 1.0) * 0.5;
  return {(u + 1.0) * 0.5 * double(cfg.width) - 0.5,
          (v + 1.0) * 0.5 * double(cfg.height) - 0.5,
          depth * double(cfg.depth_bins) - 0.5};
}

// Density grid layout: index (y*W + x)*D + z, rays contiguous in z.
inline void splat_density(const std::vector<double>& coords,
                          const CameraPose& pose, const RenderConfig& cfg,
                          std::vector<double>& grid) {
  const std::size_t W = cfg.width, H = cfg.height, D = cfg.depth_bins;
  grid.assign(W * H * D, 0.0);
  const double radius = 3.0 * cfg.sigma;
  const double r2max = radius * radius;
  const double inv2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  const std::size_t n = coords.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    const Projected pr = project_point(coords.data() + i * 3, pose, cfg);
    const auto lo = [&](double f) {
      return std::max<long>(0, static_cast<long>(std::ceil(f - radius)));
    };
    const long x0 = lo(pr.xf), y0 = lo(pr.yf), z0 = lo(pr.zf);
    const long x1 = std::min<long>(long(W) - 1, long(std::floor(pr.xf + radius)));
    const long y1 = std::min<long>(long(H) - 1, long(std::floor(pr.yf + radius)));
    const long z1 = std::min<long>(long(D) - 1, long(std::floor(pr.zf + radius)));
    for (long y = y0; y <= y1; ++y) {
      const double dy2 = (double(y) - pr.yf) * (double(y) - pr.yf);
      for (long x = x0; x <= x1; ++x) {
        const double dx2 = (double(x) - pr.xf) * (double(x) - pr.xf);
        double* ray = grid.data() + (std::size_t(y) * W + std::size_t(x)) * D;
        for (long z = z0; z <= z1; ++z) {
          const double r2 =
              dx2 + dy2 + (double(z) - pr.zf) * (double(z) - pr.zf);
          if (r2 <= r2max) ray[std::size_t(z)] += std::exp(-r2 * inv2s2);
        }
      }
    }
  }
}

inline double bin_depth(std::size_t d, const RenderConfig& cfg) {
  return (double(d) + 0.5) / double(cfg.depth_bins);
}

}  // namespace detail

/// Per-ray sum of termination probabilities (a sub-distribution, <= 1).
inline std::vector<double> render_ray_termination_sums(
    const PointCloud& cloud, const CameraPose& pose, const RenderConfig& cfg) {
  std::vector<double> coords;
  for (const Point3& p : cloud.points) {
    coords.push_back(p.x);
    coords.push_back(p.y);
    coords.push_back(p.z);
  }
  std::vector<double> grid;
  detail::splat_density(coords, pose, cfg, grid);
  const std::size_t W = cfg.width, H = cfg.height, D = cfg.depth_bins;
  std::vector<double> sums(W * H);
  for (std::size_t ray = 0; ray < W * H; ++ray) {
    double trans = 1.0;
    for (std::size_t z = 0; z < D; ++z) {
      const double o = 1.0 - std::exp(-grid[ray * D + z]);
      trans *= (1.0 - o);
    }
    sums[ray] = 1.0 - trans;
  }
  return sums;
}

/// Renders one expected-depth image from unit-sphere-normalized coordinates
/// (n x 3). Differentiable w.r.t. the coordinates.
inline DepthImage render_depth(const Tensor& coords, const CameraPose& pose,
                               const RenderConfig& cfg) {
  require(coords.size() == 0 || (coords.rank() == 2 && coords.dim(1) == 3),
          "render_depth: coords must be (n x 3), got ",
          shape_str(coords.shape()));
  const std::size_t n = coords.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    const double r2 = coords[i * 3] * coords[i * 3] +
                      coords[i * 3 + 1] * coords[i * 3 + 1] +
                      coords[i * 3 + 2] * coords[i * 3 + 2];
    require(r2 <= 1.0 + 1e-9, "render_depth: point ", i,
            " outside the unit ball (|p|=", std::sqrt(r2),
            "); normalize the cloud first");
  }
  const std::size_t W = cfg.width, H = cfg.height, D = cfg.depth_bins;
  require(W >= 2 && H >= 2 && D >= 2 && cfg.sigma > 0.0,
          "render_depth: bad config");

  DepthImage img;
  img.width = W;
  img.height = H;
  img.values = Tensor({H, W});
  auto grid = std::make_shared<std::vector<double>>();

  auto fwd = [pc = coords.buffer(), po = img.values.buffer(), grid, pose,
              cfg, W, H, D]() {
    detail::splat_density(*pc, pose, cfg, *grid);
    for (std::size_t ray = 0; ray < W * H; ++ray) {
      double trans = 1.0, ed = 0.0;
      for (std::size_t z = 0; z < D; ++z) {
        const double o = 1.0 - std::exp(-(*grid)[ray * D + z]);
        ed += o * trans * detail::bin_depth(z, cfg);
        trans *= (1.0 - o);
      }
      (*po)[ray] = ed + trans * cfg.background;
    }
  };
  fwd();
  detail::record_op(
      {&coords}, img.values, fwd,
      [pc = coords.buffer(), grid, pose, cfg, W, H, D, n](
          const double* dout, const std::vector<double*>& din) {
        if (!din[0]) return;
        // d(image)/d(density), ray by ray via suffix sums.
        std::vector<double> dgrid(W * H * D);
        std::vector<double> r(D), o(D), tb(D);  // tb[z] = prod_{j<z}(1-o_j)
        for (std::size_t ray = 0; ray < W * H; ++ray) {
          const double dimg = dout[ray];
          if (dimg == 0.0) continue;
          double trans = 1.0;
          for (std::size_t z = 0; z < D; ++z) {
            o[z] = 1.0 - std::exp(-(*grid)[ray * D + z]);
            tb[z] = trans;
            r[z] = o[z] * trans;
            trans *= (1.0 - o[z]);
          }
          double suffix = trans * cfg.background;  // sum_{d>m} r_d c_d + tail
          for (std::size_t z = D; z-- > 0;) {
            // d(ed)/d(density_z), with do/ddensity = 1-o folded in; stays
            // finite even when the occupancy saturates at 1.
            dgrid[ray * D + z] =
                dimg *
                (tb[z] * detail::bin_depth(z, cfg) * (1.0 - o[z]) - suffix);
            suffix += r[z] * detail::bin_depth(z, cfg);
          }
        }
        // Scatter back to the points through the splat.
        const double radius = 3.0 * cfg.sigma;
        const double r2max = radius * radius;
        const double inv2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
        const double invs2 = 1.0 / (cfg.sigma * cfg.sigma);
        for (std::size_t i = 0; i < n; ++i) {
          const detail::Projected pr =
              detail::project_point(pc->data() + i * 3, pose, cfg);
          double dxf = 0.0, dyf = 0.0, dzf = 0.0;
          const auto lo = [&](double f) {
            return std::max<long>(0, static_cast<long>(std::ceil(f - radius)));
          };
          const long x0 = lo(pr.xf), y0 = lo(pr.yf), z0 = lo(pr.zf);
          const long x1 = std::min<long>(long(W) - 1, long(std::floor(pr.xf + radius)));
          const long y1 = std::min<long>(long(H) - 1, long(std::floor(pr.yf + radius)));
          const long z1 = std::min<long>(long(D) - 1, long(std::floor(pr.zf + radius)));
          for (long y = y0; y <= y1; ++y)
            for (long x = x0; x <= x1; ++x) {
              const double* dray =
                  dgrid.data() + (std::size_t(y) * W + std::size_t(x)) * D;
              for (long z = z0; z <= z1; ++z) {
                const double ddx = double(x) - pr.xf;
                const double ddy = double(y) - pr.yf;
                const double ddz = double(z) - pr.zf;
                const double r2 = ddx * ddx + ddy * ddy + ddz * ddz;
                if (r2 > r2max) continue;
                const double g = std::exp(-r2 * inv2s2) * dray[std::size_t(z)];
                if (g == 0.0) continue;
                dxf += g * ddx * invs2;
                dyf += g * ddy * invs2;
                dzf += g * ddz * invs2;
              }
            }
          const double du = dxf * 0.5 * double(W);
          const double dv = dyf * 0.5 * double(H);
          const double dd = dzf * 0.5 * double(D);
          din[0][i * 3 + 0] +=
              du * pose.right.x + dv * pose.up.x + dd * pose.view.x;
          din[0][i * 3 + 1] +=
              du * pose.right.y + dv * pose.up.y + dd * pose.view.y;
          din[0][i * 3 + 2] +=
              du * pose.right.z + dv * pose.up.z + dd * pose.view.z;
        }
      });
  return img;
}

inline DepthImage render_depth(const PointCloud& cloud, const CameraPose& pose,
                               const RenderConfig& cfg) {
  Tensor coords =
      cloud.empty() ? Tensor(Shape{0, 3}) : cloud_to_tensor(cloud);
  return render_depth(coords, pose, cfg);
}

inline std::vector<DepthImage> render_all_views(const Tensor& coords,
                                                const CameraRig& rig,
                                                const RenderConfig& cfg) {
  std::vector<DepthImage> out;
  out.reserve(rig.size());
  for (const CameraPose& pose : rig.poses)
    out.push_back(render_depth(coords, pose, cfg));
  return out;
}

inline std::vector<DepthImage> render_all_views(const PointCloud& cloud,
                                                const CameraRig& rig,
                                                const RenderConfig& cfg) {
  Tensor coords =
      cloud.empty() ? Tensor(Shape{0, 3}) : cloud_to_tensor(cloud);
  return render_all_views(coords, rig, cfg);
}

/// Sum over cameras and pixels of absolute depth differences (Eq.-10 style).
inline Tensor view_loss(const std::vector<DepthImage>& rendered,
                        const std::vector<DepthImage>& reference) {
  require(rendered.size() == reference.size(),
          "view_loss: camera count mismatch ", rendered.size(), " vs ",
          reference.size());
  require(!rendered.empty(), "view_loss: no views");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    require(rendered[i].width == reference[i].width &&
                rendered[i].height == reference[i].height,
            "view_loss: image size mismatch on camera ", i);
    total = add(total, sum_all(abs_op(sub(rendered[i].values,
                                          reference[i].values))));
  }
  return total;
}

/// Grayscale PFM ("Pf"), little-endian (negative scale), rows bottom-to-top.
inline void save_pfm(const DepthImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write '", path, "'");
  out << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
  for (std::size_t y = img.height; y-- > 0;) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const float v = static_cast<float>(img.values[y * img.width + x]);
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
  require(out.good(), "write failed for '", path, "'");
}

inline DepthImage load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '", path, "'");
  std::string magic;
  std::size_t w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  require(magic == "Pf", path, ": not a grayscale PFM");
  require(scale < 0.0, path, ": big-endian PFM not supported");
  in.get();  // single whitespace after the scale header
  DepthImage img;
  img.width = w;
  img.height = h;
  img.values = Tensor({h, w});
  for (std::size_t y = h; y-- > 0;)
    for (std::size_t x = 0; x < w; ++x) {
      float v = 0.0f;
      in.read(reinterpret_cast<char*>(&v), sizeof(float));
      img.values[y * w + x] = v;
    }
  require(in.good(), path, ": truncated PFM payload");
  return img;
}

}  // namespace mbpu

#endif  // MBPU_RENDERER_HPP
