// Named parameter collection for the whole network plus the binary
// checkpoint format.
//
// Checkpoint layout (all integers little-endian): magic "MBPU", u32 format
// version, u32 tensor count, then per tensor: u32 name length + UTF-8 name,
// u32 rank, u64 per dimension, f64 row-major payload. Architecture scalars
// ride along as rank-0 "meta/..." tensors so a checkpoint is self-describing.
#ifndef MBPU_PARAMS_HPP
#define MBPU_PARAMS_HPP

#include <cstdint>
#include <fstream>
#include <map>

#include "mbpu/extractor.hpp"
#include "mbpu/regressor.hpp"

namespace mbpu {

struct NetworkParams {
  ArchConfig arch;
  ExtractorParams extractor;
  RegressorParams regressor;
};

inline NetworkParams make_network_params(const ArchConfig& arch, Rng& rng) {
  NetworkParams p;
  p.arch = arch;
  p.extractor = make_extractor_params(arch, rng);
  p.regressor =
      make_regressor_params(arch.feature_channels(), arch.trunk_hidden, rng);
  return p;
}

using NamedTensorList = std::vector<std::pair<std::string, Tensor*>>;

/// Every learnable tensor with a stable name, in a fixed order.
inline NamedTensorList named_tensors(NetworkParams& p) {
  NamedTensorList out;
  auto put = [&](std::string name, Tensor& t) {
    out.emplace_back(std::move(name), &t);
  };
  put("ext/init_w", p.extractor.init_w);
  put("ext/init_b", p.extractor.init_b);
  for (std::size_t b = 0; b < 3; ++b) {
    DenseBlockParams& block = p.extractor.blocks[b];
    const std::string bp = "ext/block" + std::to_string(b) + "/";
    for (std::size_t m = 0; m < 3; ++m) {
      MixerParams& mx = block.mixers[m];
      const std::string mp = bp + "mixer" + std::to_string(m) + "/";
      put(mp + "reduce_w", mx.reduce_w);
      put(mp + "reduce_b", mx.reduce_b);
      MambaBlockParams& mb = mx.mamba;
      put(mp + "mamba/ln_in_gain", mb.ln_in_gain);
      put(mp + "mamba/ln_in_bias", mb.ln_in_bias);
      put(mp + "mamba/w_in", mb.w_in);
      put(mp + "mamba/b_in", mb.b_in);
      put(mp + "mamba/conv_kernel", mb.conv_kernel);
      put(mp + "mamba/conv_bias", mb.conv_bias);
      put(mp + "mamba/w_delta", mb.w_delta);
      put(mp + "mamba/b_delta", mb.b_delta);
      put(mp + "mamba/w_b", mb.w_b);
      put(mp + "mamba/w_c", mb.w_c);
      put(mp + "mamba/a_log", mb.a_log);
      put(mp + "mamba/d_skip", mb.d_skip);
      put(mp + "mamba/w_gate", mb.w_gate);
      put(mp + "mamba/b_gate", mb.b_gate);
      put(mp + "mamba/ln_t_gain", mb.ln_t_gain);
      put(mp + "mamba/ln_t_bias", mb.ln_t_bias);
      put(mp + "mamba/w_out", mb.w_out);
      put(mp + "mamba/b_out", mb.b_out);
      put(mp + "p3d_w", mx.p3d_w);
      put(mp + "p3d_b", mx.p3d_b);
    }
    put(bp + "trans_w", block.trans_w);
    put(bp + "trans_b", block.trans_b);
  }
  put("reg/w0", p.regressor.w0);
  put("reg/b0", p.regressor.b0);
  put("reg/w1", p.regressor.w1);
  put("reg/b1", p.regressor.b1);
  put("reg/w2", p.regressor.w2);
  put("reg/b2", p.regressor.b2);
  put("reg/wd", p.regressor.wd);
  put("reg/bd", p.regressor.bd);
  put("reg/ws", p.regressor.ws);
  put("reg/bs", p.regressor.bs);
  return out;
}

/// A copy whose tensors are watched on the tape (buffers shared, not copied).
inline NetworkParams watch_all(Tape& tape, const NetworkParams& p) {
  NetworkParams w = p;
  for (auto& [name, t] : named_tensors(w)) *t = tape.watch(*t);
  return w;
}

namespace detail {

inline void write_u32le(std::ostream& out, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void write_u64le(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void write_f64le(std::ostream& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  write_u64le(out, v);
}

inline std::uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t read_u64le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double read_f64le(std::istream& in) {
  const std::uint64_t v = read_u64le(in);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline std::vector<std::pair<std::string, double>> arch_meta(
    const ArchConfig& a) {
  return {{"meta/init_channels", double(a.init_channels)},
          {"meta/mixer_channels", double(a.mixer_channels)},
          {"meta/transition_channels", double(a.transition_channels)},
          {"meta/state_dim", double(a.state_dim)},
          {"meta/conv_width", double(a.conv_width)},
          {"meta/expand", double(a.expand)},
          {"meta/k_conv", double(a.k_conv)},
          {"meta/k_midpoint", double(a.k_midpoint)},
          {"meta/trunk_hidden", double(a.trunk_hidden)}};
}

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const NetworkParams& params,
                            const std::string& path) {
  NetworkParams& mut = const_cast<NetworkParams&>(params);
  NamedTensorList named = named_tensors(mut);
  const auto meta = detail::arch_meta(params.arch);

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write checkpoint '", path, "'");
  out.write("MBPU", 4);
  detail::write_u32le(out, kCheckpointVersion);
  detail::write_u32le(out, std::uint32_t(meta.size() + named.size()));
  auto write_tensor = [&](const std::string& name, const Tensor& t) {
    detail::write_u32le(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    detail::write_u32le(out, std::uint32_t(t.rank()));
    for (std::size_t d : t.shape()) detail::write_u64le(out, d);
    for (std::size_t i = 0; i < t.size(); ++i) detail::write_f64le(out, t[i]);
  };
  for (const auto& [name, value] : meta)
    write_tensor(name, Tensor::scalar(value));
  for (const auto& [name, t] : named) write_tensor(name, *t);
  require(out.good(), "write failed for checkpoint '", path, "'");
}

inline NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint '", path, "'");
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "MBPU", 4) == 0, path,
          ": not an MBPU checkpoint");
  const std::uint32_t version = detail::read_u32le(in);
  require(version == kCheckpointVersion, path,
          ": unsupported checkpoint version ", version);
  const std::uint32_t count = detail::read_u32le(in);

  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::read_u32le(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = detail::read_u32le(in);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r)
      shape.push_back(std::size_t(detail::read_u64le(in)));
    Tensor t(shape);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = detail::read_f64le(in);
    require(in.good(), path, ": truncated checkpoint at tensor '", name, "'");
    require(t.finite(), path, ": non-finite values in tensor '", name, "'");
    require(!tensors.count(name), path, ": duplicate tensor name '", name, "'");
    tensors.emplace(std::move(name), std::move(t));
  }

  ArchConfig arch;
  auto meta = [&](const char* key) {
    auto it = tensors.find(key);
    require(it != tensors.end(), path, ": checkpoint lacks ", key);
    return std::size_t(it->second.value());
  };
  arch.init_channels = meta("meta/init_channels");
  arch.mixer_channels = meta("meta/mixer_channels");
  arch.transition_channels = meta("meta/transition_channels");
  arch.state_dim = meta("meta/state_dim");
  arch.conv_width = meta("meta/conv_width");
  arch.expand = meta("meta/expand");
  arch.k_conv = meta("meta/k_conv");
  arch.k_midpoint = meta("meta/k_midpoint");
  arch.trunk_hidden = meta("meta/trunk_hidden");

  Rng rng(0);  // layout only; every value is overwritten below
  NetworkParams params = make_network_params(arch, rng);
  for (auto& [name, slot] : named_tensors(params)) {
    auto it = tensors.find(name);
    require(it != tensors.end(), path, ": checkpoint lacks tensor '", name,
            "'");
    require(it->second.shape() == slot->shape(), path, ": tensor '", name,
            "' has shape ", shape_str(it->second.shape()), ", expected ",
            shape_str(slot->shape()));
    *slot = it->second;
  }
  return params;
}

}  // namespace mbpu

#endif  // MBPU_PARAMS_HPP
