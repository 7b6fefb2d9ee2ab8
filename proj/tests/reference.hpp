#pragma once

// Straight-line reimplementations used as oracles. Plain loops only; none
// of this shares code with the library kernels.

#include <cmath>

#include "ltc/model.hpp"
#include "ltc/tensor.hpp"

namespace ref {

using ltc::Shape;
using ltc::Tensor;

inline Tensor conv(const Tensor& x, const Tensor& w, const Tensor& b, int s, int p) {
  const auto N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const auto O = w.shape().n, k = w.shape().h;
  const auto Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  Tensor out(Shape{N, O, Ho, Wo});
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index o = 0; o < O; ++o)
      for (Eigen::Index oy = 0; oy < Ho; ++oy)
        for (Eigen::Index ox = 0; ox < Wo; ++ox) {
          double acc = b.size() ? b[o] : 0.0;
          for (Eigen::Index c = 0; c < C; ++c)
            for (Eigen::Index ky = 0; ky < k; ++ky)
              for (Eigen::Index kx = 0; kx < k; ++kx) {
                const auto iy = oy * s - p + ky, ix = ox * s - p + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += w(o, c, ky, kx) * x(n, c, iy, ix);
              }
          out(n, o, oy, ox) = acc;
        }
  return out;
}

// Scatter form: input (n, c, iy, ix) adds w(c, o, ky, kx) * x into output
// (n, o, iy*s - p + ky, ix*s - p + kx).
inline Tensor tconv(const Tensor& x, const Tensor& w, const Tensor& b, int s, int p, int op) {
  const auto N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const auto O = w.shape().c, k = w.shape().h;
  const auto Ho = (H - 1) * s - 2 * p + k + op, Wo = (W - 1) * s - 2 * p + k + op;
  Tensor out(Shape{N, O, Ho, Wo});
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index o = 0; o < O; ++o)
      for (Eigen::Index y = 0; y < Ho; ++y)
        for (Eigen::Index xx = 0; xx < Wo; ++xx) out(n, o, y, xx) = b.size() ? b[o] : 0.0;
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index c = 0; c < C; ++c)
      for (Eigen::Index iy = 0; iy < H; ++iy)
        for (Eigen::Index ix = 0; ix < W; ++ix)
          for (Eigen::Index o = 0; o < O; ++o)
            for (Eigen::Index ky = 0; ky < k; ++ky)
              for (Eigen::Index kx = 0; kx < k; ++kx) {
                const auto oy = iy * s - p + ky, ox = ix * s - p + kx;
                if (oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
                out(n, o, oy, ox) += w(c, o, ky, kx) * x(n, c, iy, ix);
              }
  return out;
}

inline Tensor gdn(const Tensor& y, const Tensor& beta, const Tensor& gamma, bool inverse) {
  Tensor out(y.shape());
  const auto C = y.shape().c;
  for (Eigen::Index n = 0; n < y.shape().n; ++n)
    for (Eigen::Index r = 0; r < y.shape().h; ++r)
      for (Eigen::Index q = 0; q < y.shape().w; ++q)
        for (Eigen::Index c = 0; c < C; ++c) {
          double norm = beta[c];
          for (Eigen::Index k = 0; k < C; ++k) norm += gamma(0, 0, c, k) * y(n, k, r, q) * y(n, k, r, q);
          out(n, c, r, q) = inverse ? y(n, c, r, q) * std::sqrt(norm) : y(n, c, r, q) / std::sqrt(norm);
        }
  return out;
}

inline double laplace_cdf(double x, double mu, double b) {
  return x < mu ? 0.5 * std::exp((x - mu) / b) : 1.0 - 0.5 * std::exp(-(x - mu) / b);
}

struct LossTerms {
  double loss = 0.0;
  double distortion = 0.0;
  std::vector<double> rate;
};

// mean_n ||x_n - x_hat_n||^2 + gamma sum_i h_i, with the pixel scaling, the
// same noisy latent feeding decoder and rate, and b = exp(psi_log_b).
inline LossTerms rd_loss(const Tensor& batch, const ltc::Model& model, double gamma, const Tensor& tau) {
  const auto& arch = model.arch;
  const auto& P = model.params;
  Tensor y(batch.shape());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = batch[i] / ltc::kPixelScale;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto& L = arch.layers[l];
    y = conv(y, P.encoder[l].weight, P.encoder[l].bias, L.stride, L.pad);
    if (arch.has_gdn(l)) y = gdn(y, P.encoder_gdn[l].beta, P.encoder_gdn[l].gamma, false);
  }
  const auto m = arch.m;
  std::vector<double> delta(std::size_t(m), 0.0);
  for (Eigen::Index i = 0; i < m; ++i) delta[std::size_t(i)] = std::exp(P.log_delta[i]);
  Tensor noisy(y.shape());
  for (Eigen::Index n = 0; n < y.shape().n; ++n)
    for (Eigen::Index c = 0; c < m; ++c)
      for (Eigen::Index r = 0; r < y.shape().h; ++r)
        for (Eigen::Index q = 0; q < y.shape().w; ++q)
          noisy(n, c, r, q) = y(n, c, r, q) + delta[std::size_t(c)] * tau(n, c, r, q);
  Tensor x = noisy;
  for (std::size_t l = arch.layers.size(); l-- > 0;) {
    const auto& L = arch.layers[l];
    if (arch.has_gdn(l)) x = gdn(x, P.decoder_igdn[l].beta, P.decoder_igdn[l].gamma, true);
    x = tconv(x, P.decoder[l].weight, P.decoder[l].bias, L.stride, L.pad, L.stride + 2 * L.pad - L.kernel);
  }
  LossTerms t;
  double se = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = batch[i] - x[i] * ltc::kPixelScale;
    se += d * d;
  }
  t.distortion = se / double(batch.shape().n);
  double rate_sum = 0.0;
  for (Eigen::Index c = 0; c < m; ++c) {
    const double d = delta[std::size_t(c)];
    const double mu = P.psi_mu[c];
    const double b = std::exp(P.psi_log_b[c]);
    double acc = 0.0;
    double count = 0.0;
    for (Eigen::Index n = 0; n < noisy.shape().n; ++n)
      for (Eigen::Index r = 0; r < noisy.shape().h; ++r)
        for (Eigen::Index q = 0; q < noisy.shape().w; ++q) {
          const double v = noisy(n, c, r, q);
          const double mass = laplace_cdf(v + d / 2, mu, b) - laplace_cdf(v - d / 2, mu, b);
          acc += std::log2(mass / d);
          count += 1.0;
        }
    const double h = -std::log2(d) - acc / count;
    t.rate.push_back(h);
    rate_sum += h;
  }
  t.loss = t.distortion + gamma * rate_sum;
  return t;
}

}  // namespace ref
