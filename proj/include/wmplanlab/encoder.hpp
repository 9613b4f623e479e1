#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "wmplanlab/errors.hpp"
#include "wmplanlab/rng.hpp"
#include "wmplanlab/tensor.hpp"

namespace wmplan {

using Latent = std::vector<double>;

enum class EncoderKind { identity, random_fourier };

/// Frozen featurizer z = Phi(o). The random-Fourier kind emits
/// sqrt(2/d_f) * [sin(W o + b); cos(W o + b)], so d_z = 2 d_f.
class Encoder {
 public:
  static Encoder identity(std::size_t obs_dim) {
    Encoder e;
    e.kind_ = EncoderKind::identity;
    e.obs_dim_ = obs_dim;
    e.latent_dim_ = obs_dim;
    return e;
  }

  static Encoder random_fourier(std::size_t obs_dim, std::size_t latent_dim, double sigma, std::uint64_t seed) {
    require(latent_dim >= 2 && latent_dim % 2 == 0, "random-fourier latent dim must be even");
    Encoder e;
    e.kind_ = EncoderKind::random_fourier;
    e.obs_dim_ = obs_dim;
    e.latent_dim_ = latent_dim;
    e.sigma_ = sigma;
    e.seed_ = seed;
    const std::size_t df = latent_dim / 2;
    CounterRng rng(derive_seed(seed, "encoder"));
    std::vector<double> w(df * obs_dim), b(df);
    for (auto& x : w) x = rng.normal(0.0, sigma);
    for (auto& x : b) x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    e.W_ = Tensor({df, obs_dim}, std::move(w));
    e.b_ = Tensor({df}, std::move(b));
    return e;
  }

  /// Rebuild from stored matrices (checkpoint load).
  static Encoder from_tensors(std::size_t obs_dim, double sigma, std::uint64_t seed, Tensor W, Tensor b) {
    require(W.rank() == 2 && W.shape()[1] == obs_dim && b.size() == W.shape()[0], "encoder: bad stored shapes");
    Encoder e;
    e.kind_ = EncoderKind::random_fourier;
    e.obs_dim_ = obs_dim;
    e.latent_dim_ = 2 * W.shape()[0];
    e.sigma_ = sigma;
    e.seed_ = seed;
    e.W_ = std::move(W);
    e.b_ = std::move(b);
    return e;
  }

  Latent encode(const std::vector<double>& o) const {
    require(o.size() == obs_dim_, "encode: observation has dim " + std::to_string(o.size()) + ", expected " +
                                      std::to_string(obs_dim_));
    if (kind_ == EncoderKind::identity) return o;
    const std::size_t df = latent_dim_ / 2;
    const double s = std::sqrt(2.0 / static_cast<double>(df));
    Latent z(latent_dim_);
    for (std::size_t i = 0; i < df; ++i) {
      double u = b_[i];
      for (std::size_t j = 0; j < obs_dim_; ++j) u += W_[i * obs_dim_ + j] * o[j];
      z[i] = s * std::sin(u);
      z[df + i] = s * std::cos(u);
    }
    return z;
  }

  EncoderKind kind() const { return kind_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t latent_dim() const { return latent_dim_; }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  const Tensor& W() const { return W_; }
  const Tensor& b() const { return b_; }

  /// Hash of the frozen parameters; recorded in checkpoints and manifests.
  std::uint64_t hash() const {
    std::uint64_t h = fnv1a(&latent_dim_, sizeof latent_dim_);
    h = fnv1a(&obs_dim_, sizeof obs_dim_, h);
    if (kind_ == EncoderKind::random_fourier) h = hash_tensor(b_, hash_tensor(W_, h));
    return h;
  }

 private:
  EncoderKind kind_ = EncoderKind::identity;
  std::size_t obs_dim_ = 0;
  std::size_t latent_dim_ = 0;
  double sigma_ = 0.0;
  std::uint64_t seed_ = 0;
  Tensor W_;
  Tensor b_;
};

/// Squared Euclidean distance.
inline double latent_distance(const Latent& a, const Latent& b) {
  require(a.size() == b.size(), "latent_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace wmplan
