#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>

#include "ltc/autodiff.hpp"
#include "ltc/error.hpp"
#include "ltc/tensor.hpp"

namespace ltc {

// Lower bound applied to p_tilde before taking its logarithm.
inline constexpr double kDensityFloor = 1e-12;

// psi for one feature map: Laplace location and scale.
struct LaplaceParams {
  double mu = 0.0;
  double b = 1.0;
};

namespace detail {

template <typename Scalar>
void require_positive(Scalar v, const char* name) {
  if (!(v > Scalar(0))) {
    fail(ErrorKind::kDomain, std::string(name) + " must be positive, got " + std::to_string(double(v)));
  }
}

}  // namespace detail

template <typename Scalar>
Scalar laplace_pdf(Scalar x, Scalar mu, Scalar b) {
  using std::abs, std::exp;
  detail::require_positive(b, "laplace scale");
  return exp(-abs(x - mu) / b) / (Scalar(2) * b);
}

template <typename Scalar>
Scalar laplace_cdf(Scalar x, Scalar mu, Scalar b) {
  using std::exp;
  detail::require_positive(b, "laplace scale");
  if (x < mu) return Scalar(0.5) * exp((x - mu) / b);
  return Scalar(1) - Scalar(0.5) * exp(-(x - mu) / b);
}

// F(hi) - F(lo), evaluated without cancellation when both ends sit in the
// same tail.
template <typename Scalar>
Scalar laplace_mass(Scalar lo, Scalar hi, Scalar mu, Scalar b) {
  using std::exp;
  detail::require_positive(b, "laplace scale");
  const Scalar u_lo = (lo - mu) / b;
  const Scalar u_hi = (hi - mu) / b;
  if (u_lo >= Scalar(0)) return Scalar(0.5) * (exp(-u_lo) - exp(-u_hi));
  if (u_hi <= Scalar(0)) return Scalar(0.5) * (exp(u_hi) - exp(u_lo));
  return Scalar(1) - Scalar(0.5) * exp(u_lo) - Scalar(0.5) * exp(-u_hi);
}

// Density of Laplace(mu, b) convolved with Uniform[-delta/2, delta/2].
template <typename Scalar>
Scalar p_tilde(Scalar y, Scalar mu, Scalar b, Scalar delta) {
  detail::require_positive(delta, "quantization step");
  const Scalar half = Scalar(0.5) * delta;
  return laplace_mass(y - half, y + half, mu, b) / delta;
}

// Probability mass of the quantizer cell centred at q.
template <typename Scalar>
Scalar p_hat(Scalar q, Scalar mu, Scalar b, Scalar delta) {
  return delta * p_tilde(q, mu, b, delta);
}

// log2(max(p_tilde, floor)) and its partial derivatives. Derivatives are zero
// where the floor is active.
template <typename Scalar>
struct Log2PTilde {
  Scalar value;
  Scalar d_y;
  Scalar d_mu;
  Scalar d_b;
  Scalar d_delta;
};

template <typename Scalar>
Log2PTilde<Scalar> log2_p_tilde_grad(Scalar y, Scalar mu, Scalar b, Scalar delta) {
  using std::log;
  constexpr Scalar kInvLn2 = Scalar(1) / std::numbers::ln2_v<Scalar>;
  detail::require_positive(delta, "quantization step");
  const Scalar half = Scalar(0.5) * delta;
  const Scalar lo = y - half;
  const Scalar hi = y + half;
  const Scalar mass = laplace_mass(lo, hi, mu, b);
  const Scalar density = mass / delta;
  if (!(density > Scalar(kDensityFloor))) {
    return {log(Scalar(kDensityFloor)) * kInvLn2, 0, 0, 0, 0};
  }
  const Scalar f_lo = laplace_pdf(lo, mu, b);
  const Scalar f_hi = laplace_pdf(hi, mu, b);
  const Scalar inv = kInvLn2 / mass;
  Log2PTilde<Scalar> out;
  out.value = log(density) * kInvLn2;
  out.d_y = (f_hi - f_lo) * inv;
  out.d_mu = (f_lo - f_hi) * inv;
  // dF(x)/db = -f(x) (x - mu) / b on both sides of mu.
  out.d_b = -(f_hi * (hi - mu) - f_lo * (lo - mu)) / b * inv;
  out.d_delta = Scalar(0.5) * (f_hi + f_lo) * inv - kInvLn2 / delta;
  return out;
}

// Differentiable per-map rate in bits per coefficient:
//   h_i = -log2(delta_i) - mean_j log2 p_tilde_i(noisy_ij).
// noisy is (n, m, h, w); delta, mu, b are (1, m, 1, 1). Returns (1, m, 1, 1).
Var rate_terms(Var noisy, Var delta, Var mu, Var b);

// Plug-in entropy of a symbol sequence, bits per symbol.
double empirical_entropy(std::span<const std::int32_t> symbols);

// Per-map plug-in entropy over batch and space of an (n, m, h, w) tensor.
Eigen::VectorXd empirical_entropy(const SymbolTensor& symbols);

// Maximum-likelihood Laplace fit: median and mean absolute deviation about
// it. Throws kDomain for fewer than two distinct samples.
LaplaceParams fit_laplace(std::span<const double> samples);

}  // namespace ltc
