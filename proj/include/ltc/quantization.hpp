#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>

#include "ltc/autodiff.hpp"
#include "ltc/model.hpp"
#include "ltc/tensor.hpp"

namespace ltc {

using Rng = std::mt19937_64;

// Smallest step the noise proxy uses.
inline constexpr double kMinNoiseStep = 1e-8;
// Largest symbol magnitude the bitstream can carry.
inline constexpr std::int32_t kMaxSymbol = (1 << 15) - 1;

// Per-map steps and centering means plus the global test-time multiplier.
struct QuantSpec {
  Eigen::VectorXd delta;
  Eigen::VectorXd mu_bar;
  double beta = 1.0;

  double step(Eigen::Index map) const { return beta * delta[map]; }
  Eigen::Index maps() const { return delta.size(); }
  void validate() const;

  static QuantSpec from_model(const ModelParams& params, double beta);
};

// Uniform[-0.5, 0.5) draw from the top 53 bits of the generator.
inline double uniform_centered(Rng& rng) {
  return double(rng() >> 11) * 0x1.0p-53 - 0.5;
}

Tensor draw_uniform_noise(const Shape& shape, Rng& rng);

// y + Delta (.) T with tau given. delta is (1, m, 1, 1), clamped below at
// kMinNoiseStep. d(out)/d(delta_i) is the sum of the draws of map i.
Var inject_noise(Var y, Var delta, Tensor tau);
Var inject_noise(Var y, Var delta, Rng& rng);

// k = round_half_away_from_zero((y - mu_bar_i) / (beta delta_i)).
SymbolTensor quantize(const Tensor& y, const QuantSpec& spec);

// y_hat = k beta delta_i + mu_bar_i.
Tensor dequantize(const SymbolTensor& k, const QuantSpec& spec);

// Per-map mean over every coefficient of every latent.
Eigen::VectorXd estimate_means(std::span<const Tensor> latents);
// Encodes each (1, 1, h, w) calibration image and averages its maps.
Eigen::VectorXd estimate_means(const Model& model, std::span<const Tensor> images);

}  // namespace ltc
