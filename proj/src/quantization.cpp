#include "ltc/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ltc {

void QuantSpec::validate() const {
  if (delta.size() != mu_bar.size()) {
    fail(ErrorKind::kDimension, "quantizer has " + std::to_string(delta.size()) + " steps but " +
                                    std::to_string(mu_bar.size()) + " means");
  }
  if (!(beta > 0.0)) fail(ErrorKind::kDomain, "beta must be positive");
  if ((delta.array() <= 0.0).any()) fail(ErrorKind::kDomain, "quantization steps must be positive");
}

QuantSpec QuantSpec::from_model(const ModelParams& params, double beta) {
  QuantSpec spec{params.log_delta.data().exp().matrix(), params.mu_bar.data().matrix(), beta};
  spec.validate();
  return spec;
}

Tensor draw_uniform_noise(const Shape& shape, Rng& rng) {
  Tensor tau(shape);
  for (Eigen::Index i = 0; i < tau.size(); ++i) tau[i] = uniform_centered(rng);
  return tau;
}

Var inject_noise(Var y, Var delta, Tensor tau) {
  return channel_noise(y, clamp_min(delta, kMinNoiseStep), std::move(tau));
}

Var inject_noise(Var y, Var delta, Rng& rng) {
  return inject_noise(y, delta, draw_uniform_noise(y.shape(), rng));
}

namespace {

constexpr double kSymbolFloor = -2147483647.0;
constexpr double kSymbolCeil = 2147483647.0;

void require_maps(const Shape& s, const QuantSpec& spec) {
  spec.validate();
  if (s.c != spec.maps()) {
    fail(ErrorKind::kDimension, "tensor " + s.str() + " does not have " +
                                    std::to_string(spec.maps()) + " maps");
  }
}

}  // namespace

SymbolTensor quantize(const Tensor& y, const QuantSpec& spec) {
  const Shape& s = y.shape();
  require_maps(s, spec);
  SymbolTensor k(s);
  for (Eigen::Index n = 0; n < s.n; ++n) {
    for (Eigen::Index c = 0; c < s.c; ++c) {
      const double step = spec.step(c);
      const double mean = spec.mu_bar[c];
      const auto in = y.plane(n, c);
      auto out = k.plane(n, c);
      for (Eigen::Index i = 0; i < in.size(); ++i) {
        // std::round rounds halfway cases away from zero.
        const double r = std::round((in.data()[i] - mean) / step);
        out.data()[i] = static_cast<std::int32_t>(std::clamp(r, kSymbolFloor, kSymbolCeil));
      }
    }
  }
  return k;
}

Tensor dequantize(const SymbolTensor& k, const QuantSpec& spec) {
  const Shape& s = k.shape();
  require_maps(s, spec);
  Tensor y(s);
  for (Eigen::Index n = 0; n < s.n; ++n) {
    for (Eigen::Index c = 0; c < s.c; ++c) {
      y.plane(n, c) = (k.plane(n, c).cast<double>().array() * spec.step(c) + spec.mu_bar[c]).matrix();
    }
  }
  return y;
}

Eigen::VectorXd estimate_means(std::span<const Tensor> latents) {
  if (latents.empty()) fail(ErrorKind::kUsage, "empty calibration set");
  const Eigen::Index maps = latents.front().shape().c;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(maps);
  double count = 0.0;
  for (const Tensor& y : latents) {
    if (y.shape().c != maps) fail(ErrorKind::kDimension, "calibration latents disagree on map count");
    for (Eigen::Index n = 0; n < y.shape().n; ++n) total += y.sample(n).rowwise().sum();
    count += double(y.shape().n * y.shape().plane());
  }
  return total / count;
}

Eigen::VectorXd estimate_means(const Model& model, std::span<const Tensor> images) {
  std::vector<Tensor> latents;
  latents.reserve(images.size());
  for (const Tensor& x : images) latents.push_back(encode_transform(x, model));
  return estimate_means(latents);
}

}  // namespace ltc
