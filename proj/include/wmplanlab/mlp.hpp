#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wmplanlab/errors.hpp"
#include "wmplanlab/rng.hpp"
#include "wmplanlab/tape.hpp"
#include "wmplanlab/tensor.hpp"

namespace wmplan {

/// Fully connected tanh network. Parameters are stored as W_0, b_0, W_1, b_1, ...
/// with W_i of shape [in, out] and b_i of shape [1, out].
struct Mlp {
  std::vector<std::size_t> sizes;
  std::vector<Tensor> params;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; `zero_last` zeroes the output layer.
  static Mlp init(std::vector<std::size_t> sizes, std::uint64_t seed, bool zero_last = false) {
    require(sizes.size() >= 2, "mlp needs at least an input and an output size");
    Mlp m;
    m.sizes = std::move(sizes);
    CounterRng rng(derive_seed(seed, "mlp-init"));
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
      const auto in = m.sizes[l], out = m.sizes[l + 1];
      const bool last = l + 2 == m.sizes.size();
      const double r = 1.0 / std::sqrt(static_cast<double>(in));
      std::vector<double> w(in * out), b(out);
      for (auto& x : w) x = (last && zero_last) ? 0.0 : rng.uniform(-r, r);
      for (auto& x : b) x = (last && zero_last) ? 0.0 : rng.uniform(-r, r);
      m.params.push_back(Tensor::raw({in, out}, std::move(w)));
      m.params.push_back(Tensor::raw({1, out}, std::move(b)));
    }
    return m;
  }

  std::size_t input_dim() const { return sizes.front(); }
  std::size_t output_dim() const { return sizes.back(); }
  std::size_t layers() const { return sizes.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params) h = hash_tensor(p, h);
    return h;
  }

  void check() const {
    require(params.size() == 2 * layers(), "mlp: parameter count does not match layer sizes");
    for (std::size_t l = 0; l < layers(); ++l) {
      require(params[2 * l].shape() == Shape{sizes[l], sizes[l + 1]}, "mlp: weight shape mismatch");
      require(params[2 * l + 1].shape() == Shape{1, sizes[l + 1]}, "mlp: bias shape mismatch");
    }
  }
};

/// Put the parameters on a tape, as variables when training or constants when planning.
inline std::vector<Var> bind_params(Tape& tape, const std::vector<Tensor>& params, bool trainable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(trainable ? tape.variable(p) : tape.constant(p));
  return out;
}

/// x: [B, in] -> [B, out]. Hidden layers use tanh; the output layer is linear.
inline Var mlp_forward(std::span<const Var> params, Var x) {
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    x = add(matmul(x, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < layers) x = tanh(x);
  }
  return x;
}

}  // namespace wmplan
