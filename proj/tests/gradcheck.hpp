#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ltc/autodiff.hpp"

namespace gradcheck {

using ltc::Graph;
using ltc::Tensor;
using ltc::Var;

using Builder = std::function<Var(const std::vector<Var>&)>;

struct Result {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Central differences on up to `per_input` random coordinates of every
// input. Error is |a - n| / max(|a|, |n|, 1e-3 * max|a| of that input,
// 1e-8).
inline Result check(const Builder& f, const std::vector<Tensor>& inputs, std::uint64_t seed,
                    std::size_t per_input = 64, double h = 1e-5) {
  Graph graph;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(graph.parameter(t));
  const Var loss = f(vars);
  graph.backward(loss);

  auto evaluate = [&](const std::vector<Tensor>& values) {
    Graph g;
    std::vector<Var> v;
    for (const Tensor& t : values) v.push_back(g.constant(t));
    return f(v).value()[0];
  };

  std::mt19937_64 rng(seed);
  Result r;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = graph.grad(vars[i]);
    const double scale = analytic.data().abs().maxCoeff();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(inputs[i].size()));
    for (std::size_t j = 0; j < coords.size(); ++j) coords[j] = Eigen::Index(j);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min(coords.size(), per_input));
    for (Eigen::Index j : coords) {
      const double saved = probe[i][j];
      probe[i][j] = saved + h;
      const double up = evaluate(probe);
      probe[i][j] = saved - h;
      const double down = evaluate(probe);
      probe[i][j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3 * scale, 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++r.checked;
      if (err > r.max_error) {
        r.max_error = err;
        r.worst = "input " + std::to_string(i) + "[" + std::to_string(j) + "]: analytic " +
                  std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace gradcheck
