#pragma once

// Central finite-difference oracle. The probe loss is L = sum(r * logits) for a
// fixed random r, so the check depends only on forward() and not on any loss
// implementation under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ttn/nn.hpp"
#include "ttn/rng.hpp"

namespace oracle {

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t kinked = 0;  // coordinates whose stencil crossed a relu/max-pool kink
  std::string worst;       // "layer/weight[i]" of the largest error
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

inline ttn::Tensor random_tensor(const ttn::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  ttn::Tensor t(shape);
  ttn::Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Probe value plus the piecewise-linear region it was evaluated in: relu
// input signs and max-pool winners. A central difference is only meaningful
// when both stencil points share the region of the base point.
struct ProbeResult {
  double value = 0.0;
  std::vector<std::uint32_t> region;
};

inline ProbeResult probe(const ttn::nn::NetSpec& spec, const ttn::nn::NetParams& params, const ttn::Tensor& batch,
                         const ttn::Tensor& r) {
  const auto out = ttn::nn::forward(spec, params, batch);
  ProbeResult p;
  for (std::size_t i = 0; i < r.size(); ++i) p.value += r[i] * out.logits[i];
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (spec.layers[l].kind == ttn::nn::LayerKind::Relu) {
      for (double v : out.cache.activations[l].values()) p.region.push_back(v > 0.0 ? 1u : 0u);
    } else if (spec.layers[l].kind == ttn::nn::LayerKind::MaxPool2d) {
      const auto& a = out.cache.pool_argmax[l];
      p.region.insert(p.region.end(), a.begin(), a.end());
    }
  }
  return p;
}

// Checks every parameter when max_per_tensor == 0, otherwise a random subset
// of that size per tensor. Also checks the input gradient when check_input.
inline GradCheck check_gradients(const ttn::nn::NetSpec& spec, ttn::nn::NetParams params, ttn::Tensor batch,
                                 std::uint64_t seed, std::size_t max_per_tensor = 0, bool check_input = true,
                                 double eps = 1e-5) {
  const std::size_t n = batch.dim(0);
  const auto r = random_tensor({n, spec.output_dim()}, seed ^ 0x5151);
  const auto fwd = ttn::nn::forward(spec, params, batch);
  const auto grads = ttn::nn::backward(spec, params, fwd.cache, r, check_input);

  GradCheck result;
  const auto base_region = probe(spec, params, batch, r).region;
  ttn::Rng pick(seed);
  auto check_tensor = [&](ttn::Tensor& target, const ttn::Tensor& analytic, const std::string& label) {
    std::vector<std::size_t> idx(target.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_tensor > 0 && idx.size() > max_per_tensor) {
      pick.shuffle(idx.begin(), idx.end());
      idx.resize(max_per_tensor);
    }
    for (auto i : idx) {
      const double saved = target[i];
      target[i] = saved + eps;
      const auto up = probe(spec, params, batch, r);
      target[i] = saved - eps;
      const auto down = probe(spec, params, batch, r);
      target[i] = saved;
      if (up.region != base_region || down.region != base_region) {
        ++result.kinked;
        continue;
      }
      const double numeric = (up.value - down.value) / (2.0 * eps);
      const double e = rel_error(analytic[i], numeric);
      ++result.checked;
      if (e > result.max_rel) {
        result.max_rel = e;
        result.worst = label + "[" + std::to_string(i) + "]";
      }
    }
  };
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (!spec.layers[l].has_params()) continue;
    check_tensor(params.layers[l].weight, grads.layers[l].weight, spec.layers[l].name + "/weight");
    check_tensor(params.layers[l].bias, grads.layers[l].bias, spec.layers[l].name + "/bias");
  }
  if (check_input) check_tensor(batch, grads.input, "input");
  return result;
}

}  // namespace oracle
