// Mamba-based feature extractor: init MLP, three dense blocks of three
// densely connected mixers (reduction MLP -> Mamba block -> P3DConv) plus a
// transition layer each, global max-pool, and feature interpolation back to
// arbitrary query positions.
#ifndef MBPU_EXTRACTOR_HPP
#define MBPU_EXTRACTOR_HPP

#include <array>

#include "mbpu/geometry.hpp"
#include "mbpu/mamba.hpp"
#include "mbpu/ops.hpp"

namespace mbpu {

/// Widths and neighborhood sizes of the network. All of these are frozen into
/// a checkpoint so inference rebuilds the same layout.
struct ArchConfig {
  std::size_t init_channels = 32;        // l0 width
  std::size_t mixer_channels = 32;       // per-mixer output width
  std::size_t transition_channels = 64;  // l1..l3 width, also the g width
  std::size_t state_dim = 16;
  std::size_t conv_width = 4;
  std::size_t expand = 2;
  std::size_t k_conv = 8;      // P3DConv neighborhood
  std::size_t k_midpoint = 4;  // Eq.-1 neighborhood for interpolation
  std::size_t trunk_hidden = 64;

  std::size_t local_channels() const {
    return init_channels + 3 * transition_channels;
  }
  std::size_t global_channels() const { return transition_channels; }
  /// Interpolated feature width: locals + query coords + g + fed-back dist.
  std::size_t feature_channels() const {
    return local_channels() + 3 + global_channels() + 1;
  }
};

struct MixerParams {
  Tensor reduce_w, reduce_b;
  MambaBlockParams mamba;
  Tensor p3d_w, p3d_b;  // ((c_in + 3) x c_out), (c_out)
};

struct DenseBlockParams {
  std::array<MixerParams, 3> mixers;
  Tensor trans_w, trans_b;
};

struct ExtractorParams {
  Tensor init_w, init_b;  // 3 -> init_channels
  std::array<DenseBlockParams, 3> blocks;
};

/// Local features per stage plus the pooled global feature.
/// g is the per-channel max over points of l3.
struct FeatureSet {
  Tensor l0, l1, l2, l3;
  Tensor g;
};

inline ExtractorParams make_extractor_params(const ArchConfig& arch, Rng& rng) {
  ExtractorParams p;
  p.init_w = detail::uniform_init({3, arch.init_channels}, 3, rng);
  p.init_b = detail::uniform_init({arch.init_channels}, 3, rng);
  std::size_t c = arch.init_channels;
  for (auto& block : p.blocks) {
    for (std::size_t m = 0; m < 3; ++m) {
      const std::size_t in_w = c + m * arch.mixer_channels;
      MixerParams& mp = block.mixers[m];
      mp.reduce_w = detail::uniform_init({in_w, arch.mixer_channels}, in_w, rng);
      mp.reduce_b = detail::uniform_init({arch.mixer_channels}, in_w, rng);
      mp.mamba = make_mamba_params(arch.mixer_channels, arch.state_dim,
                                   arch.conv_width, arch.expand, rng);
      const std::size_t p3d_in = arch.mixer_channels + 3;
      mp.p3d_w = detail::uniform_init({p3d_in, arch.mixer_channels}, p3d_in, rng);
      mp.p3d_b = detail::uniform_init({arch.mixer_channels}, p3d_in, rng);
    }
    const std::size_t cat_w = c + 3 * arch.mixer_channels;
    block.trans_w =
        detail::uniform_init({cat_w, arch.transition_channels}, cat_w, rng);
    block.trans_b =
        detail::uniform_init({arch.transition_channels}, cat_w, rng);
    c = arch.transition_channels;
  }
  return p;
}

/// Point convolution: for each point, SiLU-activated linear transforms of
/// (neighbor feature difference, relative coordinate) pairs are max-reduced
/// over the k neighbors. Output is invariant to neighbor order.
inline Tensor p3dconv(const Tensor& feat, const PointCloud& coords,
                      const IndexMatrix& neighbors, const Tensor& weight,
                      const Tensor& bias) {
  require(feat.rank() == 2, "p3dconv: feat must be (n x c)");
  const std::size_t n = feat.dim(0), c_in = feat.dim(1);
  require(coords.count() == n && neighbors.rows == n,
          "p3dconv: coords/neighbors must match ", n, " points");
  const std::size_t k = neighbors.cols;
  require(weight.rank() == 2 && weight.dim(0) == c_in + 3,
          "p3dconv: weight shape ", shape_str(weight.shape()),
          " does not match ", c_in + 3, " inputs");
  const std::size_t c_out = weight.dim(1);
  require(bias.rank() == 1 && bias.dim(0) == c_out, "p3dconv: bias length");
  for (std::size_t i : neighbors.data)
    require(i < n, "p3dconv: neighbor index ", i, " out of range ", n);

  Tensor out({n, c_out});
  auto argmax = std::make_shared<std::vector<std::uint8_t>>(n * c_out);
  auto rel = [coords = coords.points, nb = neighbors](std::size_t i,
                                                      std::size_t j) {
    const Point3 d = coords[nb.at(i, j)] - coords[i];
    return d;
  };
  auto fwd = [pf = feat.buffer(), pw = weight.buffer(), pb = bias.buffer(),
              po = out.buffer(), argmax, rel, nb = neighbors, n, c_in, c_out,
              k]() {
    std::vector<double> u(c_in + 3), z(c_out);
    for (std::size_t i = 0; i < n; ++i) {
      double* orow = po->data() + i * c_out;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t nj = nb.at(i, j);
        for (std::size_t m = 0; m < c_in; ++m)
          u[m] = (*pf)[nj * c_in + m] - (*pf)[i * c_in + m];
        const Point3 d = rel(i, j);
        u[c_in] = d.x;
        u[c_in + 1] = d.y;
        u[c_in + 2] = d.z;
        for (std::size_t co = 0; co < c_out; ++co) z[co] = (*pb)[co];
        for (std::size_t m = 0; m < c_in + 3; ++m) {
          const double um = u[m];
          if (um == 0.0) continue;
          const double* wrow = pw->data() + m * c_out;
          for (std::size_t co = 0; co < c_out; ++co) z[co] += um * wrow[co];
        }
        for (std::size_t co = 0; co < c_out; ++co) {
          const double t = z[co] * sigmoid_scalar(z[co]);
          if (j == 0 || t > orow[co]) {
            orow[co] = t;
            (*argmax)[i * c_out + co] = static_cast<std::uint8_t>(j);
          }
        }
      }
    }
  };
  fwd();
  detail::record_op(
      {&feat, &weight, &bias}, out, fwd,
      [pf = feat.buffer(), pw = weight.buffer(), pb = bias.buffer(), argmax,
       rel, nb = neighbors, n, c_in, c_out, k](
          const double* dout, const std::vector<double*>& din) {
        std::vector<double> u(c_in + 3);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            // Only channels whose max came from neighbor j contribute.
            bool used = false;
            for (std::size_t co = 0; co < c_out && !used; ++co)
              used = (*argmax)[i * c_out + co] == j;
            if (!used) continue;
            const std::size_t nj = nb.at(i, j);
            for (std::size_t m = 0; m < c_in; ++m)
              u[m] = (*pf)[nj * c_in + m] - (*pf)[i * c_in + m];
            const Point3 d = rel(i, j);
            u[c_in] = d.x;
            u[c_in + 1] = d.y;
            u[c_in + 2] = d.z;
            for (std::size_t co = 0; co < c_out; ++co) {
              if ((*argmax)[i * c_out + co] != j) continue;
              double z = (*pb)[co];
              for (std::size_t m = 0; m < c_in + 3; ++m)
                z += u[m] * (*pw)[m * c_out + co];
              const double sg = sigmoid_scalar(z);
              const double dt = dout[i * c_out + co] * sg * (1.0 + z * (1.0 - sg));
              if (dt == 0.0) continue;
              if (din[2]) din[2][co] += dt;
              for (std::size_t m = 0; m < c_in + 3; ++m) {
                if (din[1]) din[1][m * c_out + co] += dt * u[m];
                if (din[0] && m < c_in) {
                  const double w = (*pw)[m * c_out + co];
                  din[0][nj * c_in + m] += dt * w;
                  din[0][i * c_in + m] -= dt * w;
                }
              }
            }
          }
      });
  return out;
}

/// Optional instrumentation of extract(): the concatenated input each mixer
/// consumed, in evaluation order.
struct ExtractorTrace {
  std::vector<Tensor> mixer_inputs;
};

/// Runs the extractor over a cloud. Point order is the stored order (the
/// scan inside each Mamba block is order-sensitive by design).
inline FeatureSet extract(const PointCloud& cloud, const ExtractorParams& p,
                          const ArchConfig& arch,
                          ExtractorTrace* trace = nullptr) {
  require(!cloud.empty(), "extract: empty cloud");
  const std::size_t k =
      std::min<std::size_t>(arch.k_conv, cloud.count() > 1 ? cloud.count() - 1 : 1);
  IndexMatrix neighbors =
      cloud.count() > 1
          ? knn(cloud, cloud, k, true)
          : IndexMatrix{1, 1, {0}};  // a single point is its own neighborhood
  Tensor coords = cloud_to_tensor(cloud);

  FeatureSet fs;
  Tensor l = silu(add_bias(matmul(coords, p.init_w), p.init_b));
  fs.l0 = l;
  std::array<Tensor*, 3> outs = {&fs.l1, &fs.l2, &fs.l3};
  for (std::size_t b = 0; b < 3; ++b) {
    const DenseBlockParams& block = p.blocks[b];
    std::vector<Tensor> feats = {l};
    for (std::size_t m = 0; m < 3; ++m) {
      const MixerParams& mp = block.mixers[m];
      Tensor mixer_in = feats.size() == 1 ? feats[0] : concat(feats, 1);
      if (trace) trace->mixer_inputs.push_back(mixer_in);
      Tensor r = silu(add_bias(matmul(mixer_in, mp.reduce_w), mp.reduce_b));
      Tensor s = mamba_block(r, mp.mamba);
      feats.push_back(p3dconv(s, cloud, neighbors, mp.p3d_w, mp.p3d_b));
    }
    l = silu(add_bias(matmul(concat(feats, 1), block.trans_w), block.trans_b));
    *outs[b] = l;
  }
  fs.g = reduce_max(fs.l3, 0);
  return fs;
}

/// Inverse-squared-distance interpolation (3 nearest seeds, epsilon 1e-8) of
/// the concatenated local features at arbitrary query positions, concatenated
/// with the query coordinates, the broadcast global feature, and the fed-back
/// distance column. A query exactly on a seed takes that seed's features.
/// Differentiable w.r.t. query positions, features, g, and fed_back.
inline Tensor interpolate_features(const Tensor& query, const PointCloud& seeds,
                                   const FeatureSet& fs, const Tensor& fed_back) {
  require(!seeds.empty(), "interpolate_features: empty seeds");
  require(query.rank() == 2 && query.dim(1) == 3,
          "interpolate_features: query must be (n x 3), got ",
          shape_str(query.shape()));
  const std::size_t n = query.dim(0);
  require(fed_back.rank() == 2 && fed_back.dim(0) == n && fed_back.dim(1) == 1,
          "interpolate_features: fed_back must be (", n, " x 1), got ",
          shape_str(fed_back.shape()));

  Tensor locals = concat({fs.l0, fs.l1, fs.l2, fs.l3}, 1);  // m x c_loc
  require(locals.dim(0) == seeds.count(),
          "interpolate_features: features/seeds mismatch");
  const std::size_t c_loc = locals.dim(1);
  const std::size_t c_g = fs.g.size();
  const std::size_t c_total = c_loc + 3 + c_g + 1;
  const std::size_t kn = std::min<std::size_t>(3, seeds.count());

  IndexMatrix idx = knn(seeds, tensor_to_cloud(query.detached()), kn, false);
  constexpr double kEps = 1e-8;

  Tensor out({n, c_total});
  auto weights_of = [seeds = seeds.points, idx, kn](const double* q,
                                                    std::size_t i,
                                                    double* w, bool* exact) {
    double d2[3];
    *exact = false;
    for (std::size_t j = 0; j < kn; ++j) {
      const Point3& sp = seeds[idx.at(i, j)];
      const double dx = q[0] - sp.x, dy = q[1] - sp.y, dz = q[2] - sp.z;
      d2[j] = dx * dx + dy * dy + dz * dz;
      if (d2[j] == 0.0 && !*exact) {
        *exact = true;
        for (std::size_t m = 0; m < kn; ++m) w[m] = 0.0;
        w[j] = 1.0;
      }
    }
    if (*exact) return;
    double total = 0.0;
    for (std::size_t j = 0; j < kn; ++j) {
      w[j] = 1.0 / (d2[j] + kEps);
      total += w[j];
    }
    for (std::size_t j = 0; j < kn; ++j) w[j] /= total;
  };

  auto fwd = [pl = locals.buffer(), pg = fs.g.buffer(), pq = query.buffer(),
              pf = fed_back.buffer(), po = out.buffer(), weights_of, idx, n,
              c_loc, c_g, c_total, kn]() {
    double w[3];
    bool exact = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double* q = pq->data() + i * 3;
      weights_of(q, i, w, &exact);
      double* orow = po->data() + i * c_total;
      std::fill(orow, orow + c_loc, 0.0);
      for (std::size_t j = 0; j < kn; ++j) {
        const double* frow = pl->data() + idx.at(i, j) * c_loc;
        if (w[j] == 0.0) continue;
        for (std::size_t c = 0; c < c_loc; ++c) orow[c] += w[j] * frow[c];
      }
      orow[c_loc] = q[0];
      orow[c_loc + 1] = q[1];
      orow[c_loc + 2] = q[2];
      for (std::size_t c = 0; c < c_g; ++c) orow[c_loc + 3 + c] = (*pg)[c];
      orow[c_total - 1] = (*pf)[i];
    }
  };
  fwd();
  detail::record_op(
      {&locals, &fs.g, &query, &fed_back}, out, fwd,
      [pl = locals.buffer(), pq = query.buffer(), seeds = seeds.points,
       weights_of, idx, n, c_loc, c_g, c_total, kn](
          const double* dout, const std::vector<double*>& din) {
        double w[3], wt[3], a[3];
        bool exact = false;
        for (std::size_t i = 0; i < n; ++i) {
          const double* q = pq->data() + i * 3;
          const double* drow = dout + i * c_total;
          weights_of(q, i, w, &exact);
          for (std::size_t j = 0; j < kn; ++j) {
            const std::size_t sj = idx.at(i, j);
            const double* frow = pl->data() + sj * c_loc;
            a[j] = 0.0;
            for (std::size_t c = 0; c < c_loc; ++c) a[j] += drow[c] * frow[c];
            if (din[0] && w[j] != 0.0)
              for (std::size_t c = 0; c < c_loc; ++c)
                din[0][sj * c_loc + c] += w[j] * drow[c];
          }
          if (din[2]) {
            if (!exact) {
              // Through the normalized inverse-squared-distance weights.
              double total = 0.0, sa = 0.0;
              for (std::size_t j = 0; j < kn; ++j) {
                const Point3& sp = seeds[idx.at(i, j)];
                const double dx = q[0] - sp.x, dy = q[1] - sp.y,
                             dz = q[2] - sp.z;
                wt[j] = 1.0 / (dx * dx + dy * dy + dz * dz + kEps);
                total += wt[j];
              }
              for (std::size_t j = 0; j < kn; ++j) sa += a[j] * w[j];
              for (std::size_t j = 0; j < kn; ++j) {
                const double dwt = (a[j] - sa) / total;
                const double dd2 = -dwt * wt[j] * wt[j];
                const Point3& sp = seeds[idx.at(i, j)];
                din[2][i * 3 + 0] += dd2 * 2.0 * (q[0] - sp.x);
                din[2][i * 3 + 1] += dd2 * 2.0 * (q[1] - sp.y);
                din[2][i * 3 + 2] += dd2 * 2.0 * (q[2] - sp.z);
              }
            }
            din[2][i * 3 + 0] += drow[c_loc];
            din[2][i * 3 + 1] += drow[c_loc + 1];
            din[2][i * 3 + 2] += drow[c_loc + 2];
          }
          if (din[1])
            for (std::size_t c = 0; c < c_g; ++c)
              din[1][c] += drow[c_loc + 3 + c];
          if (din[3]) din[3][i] += drow[c_total - 1];
        }
      });
  return out;
}

}  // namespace mbpu

#endif  // MBPU_EXTRACTOR_HPP
