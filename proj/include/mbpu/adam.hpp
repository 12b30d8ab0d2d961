// Adam optimizer over named parameter tensors.
#ifndef MBPU_ADAM_HPP
#define MBPU_ADAM_HPP

#include <map>

#include "mbpu/params.hpp"

namespace mbpu {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

/// One update over the named parameter list; gradients are keyed by the same
/// names and must match shapes. Parameters are updated in place.
inline void adam_step(const NamedTensorList& params,
                      const std::map<std::string, Tensor>& grads,
                      const AdamConfig& cfg, AdamState& state) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (const auto& [name, tensor] : params) {
    auto it = grads.find(name);
    require(it != grads.end(), "adam_step: missing gradient for '", name, "'");
    const Tensor& g = it->second;
    require(g.shape() == tensor->shape(), "adam_step: gradient shape ",
            shape_str(g.shape()), " vs parameter ", shape_str(tensor->shape()),
            " for '", name, "'");
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    double* w = tensor->data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace mbpu

#endif  // MBPU_ADAM_HPP
