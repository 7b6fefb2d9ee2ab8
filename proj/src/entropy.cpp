#include "ltc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ltc {

Var rate_terms(Var noisy, Var delta, Var mu, Var b) {
  const Var log_density = log2_p_tilde(noisy, mu, b, delta);
  return sub(scale(log2(delta), -1.0), channel_mean(log_density));
}

double empirical_entropy(std::span<const std::int32_t> symbols) {
  if (symbols.empty()) fail(ErrorKind::kUsage, "empirical entropy of an empty symbol map");
  std::vector<std::int32_t> sorted(symbols.begin(), symbols.end());
  std::sort(sorted.begin(), sorted.end());
  const double total = double(sorted.size());
  double bits = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double p = double(j - i) / total;
    bits -= p * std::log2(p);
    i = j;
  }
  return bits;
}

Eigen::VectorXd empirical_entropy(const SymbolTensor& symbols) {
  const Shape& s = symbols.shape();
  if (s.size() == 0) fail(ErrorKind::kUsage, "empirical entropy of an empty symbol map");
  Eigen::VectorXd out(s.c);
  std::vector<std::int32_t> map(static_cast<std::size_t>(s.n * s.plane()));
  for (Eigen::Index c = 0; c < s.c; ++c) {
    std::size_t k = 0;
    for (Eigen::Index n = 0; n < s.n; ++n) {
      const auto plane = symbols.plane(n, c);
      for (Eigen::Index i = 0; i < plane.size(); ++i) map[k++] = plane.data()[i];
    }
    out[c] = empirical_entropy(map);
  }
  return out;
}

LaplaceParams fit_laplace(std::span<const double> samples) {
  if (samples.size() < 2) fail(ErrorKind::kDomain, "laplace fit needs at least two samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    fail(ErrorKind::kDomain, "degenerate laplace fit: all samples equal");
  }
  const std::size_t half = sorted.size() / 2;
  const double median =
      sorted.size() % 2 == 1 ? sorted[half] : 0.5 * (sorted[half - 1] + sorted[half]);
  double deviation = 0.0;
  for (double v : sorted) deviation += std::abs(v - median);
  return {median, deviation / double(sorted.size())};
}

}  // namespace ltc
