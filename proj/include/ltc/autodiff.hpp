#pragma once

#include <cstddef>
#include <vector>

#include "ltc/tensor.hpp"

namespace ltc {

enum class OpKind {
  kConstant,
  kParameter,
  kConv2d,
  kTConv2d,
  kGdn,
  kIgdn,
  kAdd,
  kSub,
  kMul,
  kScale,
  kExp,
  kLog2,
  kClampMin,
  kSum,
  kSumSquares,
  kChannelMean,
  kChannelNoise,
  kLog2PTilde,
};

// Stride/padding of a (transposed) convolution. output_pad only applies to
// tconv2d and selects among the input extents a strided conv maps onto the
// same output extent.
struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int output_pad = 0;
};

using NodeId = std::size_t;

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Tape for reverse-mode differentiation. Nodes are appended in evaluation
// order, so the node vector is already a topological order.
class Graph {
 public:
  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Populates gradients of every node that depends on a parameter. The loss
  // must be a single element.
  void backward(Var loss);

  // Gradient of the loss with respect to v; zeros when v was not reached.
  const Tensor& grad(Var v);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  OpKind kind(NodeId id) const { return nodes_[id].kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_[id].inputs; }
  std::size_t size() const { return nodes_.size(); }

  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    std::vector<Tensor> saved;
    ConvGeometry geometry;
    double attribute = 0.0;
    bool requires_grad = false;
  };

  // Appends an op record. Used by the op functions below.
  Var record(OpKind kind, std::vector<NodeId> inputs, Tensor value,
             std::vector<Tensor> saved = {}, ConvGeometry geometry = {},
             double attribute = 0.0);

 private:
  void backward_node(const Node& node);
  Tensor& accumulator(NodeId id);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

// Cross-correlation (no kernel flip). weight is (c_out, c_in, k, k), bias is
// (1, c_out, 1, 1). Output extent floor((h + 2 pad - k) / stride) + 1.
Var conv2d(Var input, Var weight, Var bias, ConvGeometry geometry);

// Adjoint of conv2d's linear map. weight is (c_in, c_out, k, k) so that the
// same tensor serves both directions; output extent
// (h - 1) stride - 2 pad + k + output_pad.
Var tconv2d(Var input, Var weight, Var bias, ConvGeometry geometry);

// z_c = y_c / sqrt(beta_c + sum_k gamma_{c,k} y_k^2) at every location.
// beta is (1, c, 1, 1), gamma is (1, 1, c, c).
Var gdn(Var input, Var beta, Var gamma);
// z_c = y_c * sqrt(beta_c + sum_k gamma_{c,k} y_k^2).
Var igdn(Var input, Var beta, Var gamma);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var exp(Var a);
Var log2(Var a);
Var clamp_min(Var a, double floor);
Var sum(Var a);
Var sum_squares(Var a);
// (n, c, h, w) -> (1, c, 1, 1) mean over batch and space.
Var channel_mean(Var a);
// y + delta_c * tau, with tau a constant of y's shape and delta (1, c, 1, 1).
Var channel_noise(Var y, Var delta, Tensor tau);
// Elementwise log2 of the Laplace-convolved-uniform density of map c at y,
// floored at kDensityFloor. mu, b, delta are (1, c, 1, 1).
Var log2_p_tilde(Var y, Var mu, Var b, Var delta);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace ltc
