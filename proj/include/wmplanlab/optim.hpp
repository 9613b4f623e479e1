#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "wmplanlab/errors.hpp"
#include "wmplanlab/tensor.hpp"

namespace wmplan {

inline Tensor sgd_step(const Tensor& params, const Tensor& grads, double lr) {
  require(params.shape() == grads.shape(), "sgd_step: shape mismatch");
  require(lr > 0.0, "sgd_step: step size must be positive");
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = params[i] - lr * grads[i];
  return Tensor::raw(params.shape(), std::move(out));
}

struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros_like(const Tensor& params) {
    return AdamState{Tensor::zeros(params.shape()), Tensor::zeros(params.shape())};
  }
};

/// Adam with bias-corrected moments (Kingma & Ba).
inline std::pair<Tensor, AdamState> adam_step(const Tensor& params, const Tensor& grads, const AdamState& state,
                                              double lr) {
  require(params.shape() == grads.shape(), "adam_step: grads shape mismatch");
  require(state.m.shape() == params.shape() && state.v.shape() == params.shape(), "adam_step: state shape mismatch");
  require(lr > 0.0, "adam_step: step size must be positive");
  const std::size_t n = params.size();
  std::vector<double> m(n), v(n), p(n);
  const auto t = state.t + 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] = params[i] - lr * mhat / (std::sqrt(vhat) + state.eps);
  }
  AdamState next{Tensor::raw(params.shape(), std::move(m)), Tensor::raw(params.shape(), std::move(v)), t,
                 state.beta1, state.beta2, state.eps};
  return {Tensor::raw(params.shape(), std::move(p)), std::move(next)};
}

/// Adam over a list of parameter tensors sharing one step count.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const std::vector<Tensor>& params, double lr) : lr_(lr) {
    require(lr > 0.0, "adam: step size must be positive");
    for (const auto& p : params) states_.push_back(AdamState::zeros_like(p));
  }

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
    require(params.size() == states_.size() && grads.size() == params.size(), "adam: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto [p, s] = adam_step(params[i], grads[i], states_[i], lr_);
      params[i] = std::move(p);
      states_[i] = std::move(s);
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_ = 1e-3;
  std::vector<AdamState> states_;
};

}  // namespace wmplan
