#include "ltc/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "conv.hpp"
#include "ltc/entropy.hpp"

namespace ltc {
namespace {

using kernels::RowMatrix;

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kTConv2d: return "tconv2d";
    case OpKind::kGdn: return "gdn";
    case OpKind::kIgdn: return "igdn";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kExp: return "exp";
    case OpKind::kLog2: return "log2";
    case OpKind::kClampMin: return "clamp_min";
    case OpKind::kSum: return "sum";
    case OpKind::kSumSquares: return "sum_squares";
    case OpKind::kChannelMean: return "channel_mean";
    case OpKind::kChannelNoise: return "channel_noise";
    case OpKind::kLog2PTilde: return "log2_p_tilde";
  }
  return "?";
}

Graph& same_graph(Var a, Var b) {
  if (a.graph != b.graph) fail(ErrorKind::kUsage, "vars belong to different graphs");
  return *a.graph;
}

void require_channel_vector(const Shape& s, Eigen::Index channels, const char* what) {
  require_shape(s, Shape{1, channels, 1, 1}, what);
}

struct ConvDims {
  Eigen::Index batch, c_in, c_out, kernel, in_h, in_w, out_h, out_w;
};

ConvDims check_conv(const Shape& input, const Shape& weight, const Shape& bias,
                    ConvGeometry g, bool transposed) {
  if (g.stride < 1) fail(ErrorKind::kDimension, "stride must be >= 1");
  if (g.pad < 0) fail(ErrorKind::kDimension, "pad must be >= 0");
  if (weight.h != weight.w) fail(ErrorKind::kDimension, "kernel must be square, got " + weight.str());
  ConvDims d{};
  d.batch = input.n;
  d.kernel = weight.h;
  d.in_h = input.h;
  d.in_w = input.w;
  if (!transposed) {
    if (g.output_pad != 0) fail(ErrorKind::kDimension, "output_pad applies to tconv2d only");
    d.c_out = weight.n;
    d.c_in = weight.c;
    d.out_h = kernels::conv_extent(input.h, d.kernel, g.stride, g.pad);
    d.out_w = kernels::conv_extent(input.w, d.kernel, g.stride, g.pad);
  } else {
    if (g.output_pad < 0 || g.output_pad >= g.stride) {
      fail(ErrorKind::kDimension, "output_pad must lie in [0, stride)");
    }
    d.c_in = weight.n;
    d.c_out = weight.c;
    d.out_h = kernels::tconv_extent(input.h, d.kernel, g.stride, g.pad, g.output_pad);
    d.out_w = kernels::tconv_extent(input.w, d.kernel, g.stride, g.pad, g.output_pad);
  }
  if (input.c != d.c_in) {
    fail(ErrorKind::kDimension, std::string(transposed ? "tconv2d" : "conv2d") +
                                    ": input has " + std::to_string(input.c) +
                                    " channels, weight expects " + std::to_string(d.c_in));
  }
  require_channel_vector(bias, d.c_out, "bias");
  if (d.out_h < 1 || d.out_w < 1) {
    fail(ErrorKind::kDimension, "convolution output would be empty for input " + input.str());
  }
  return d;
}

// Window of the strided conv that maps the image-side grid onto the
// latent-side grid. For tconv2d the image side is the output.
kernels::Window conv_window(const ConvDims& d, ConvGeometry g, bool transposed) {
  return transposed ? kernels::Window{d.kernel, g.stride, g.pad, d.in_h, d.in_w}
                    : kernels::Window{d.kernel, g.stride, g.pad, d.out_h, d.out_w};
}

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t, Eigen::Index rows) {
  return Eigen::Map<const RowMatrix>(t.data().data(), rows, t.size() / rows);
}

}  // namespace

Var Graph::constant(Tensor value) { return record(OpKind::kConstant, {}, std::move(value)); }

Var Graph::parameter(Tensor value) {
  return record(OpKind::kParameter, {}, std::move(value));
}

Var Graph::record(OpKind kind, std::vector<NodeId> inputs, Tensor value,
                  std::vector<Tensor> saved, ConvGeometry geometry, double attribute) {
  if (!value.all_finite()) {
    fail(ErrorKind::kNumeric, std::string("non-finite value produced by ") + op_name(kind));
  }
  Node node;
  node.kind = kind;
  node.requires_grad = kind == OpKind::kParameter;
  for (NodeId in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  node.saved = std::move(saved);
  node.geometry = geometry;
  node.attribute = attribute;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::accumulator(NodeId id) {
  Node& node = nodes_[id];
  if (node.grad.size() == 0) node.grad = Tensor(node.value.shape());
  return node.grad;
}

const Tensor& Graph::grad(Var v) { return accumulator(v.id); }

void Graph::backward(Var loss) {
  if (loss.graph != this) fail(ErrorKind::kUsage, "loss belongs to another graph");
  if (loss.value().size() != 1) {
    fail(ErrorKind::kUsage, "backward() needs a scalar loss, got shape " + loss.shape().str());
  }
  for (Node& node : nodes_) node.grad = Tensor();
  accumulator(loss.id)[0] = 1.0;
  for (NodeId id = loss.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.size() == 0 || node.inputs.empty()) continue;
    backward_node(node);
  }
}

void Graph::backward_node(const Node& node) {
  const Tensor& g = node.grad;
  auto wants = [&](std::size_t i) { return nodes_[node.inputs[i]].requires_grad; };
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  auto acc = [&](std::size_t i) -> Tensor& { return accumulator(node.inputs[i]); };

  switch (node.kind) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      break;

    case OpKind::kConv2d:
    case OpKind::kTConv2d: {
      const bool transposed = node.kind == OpKind::kTConv2d;
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const ConvDims d = check_conv(x.shape(), w.shape(), in(2).shape(), node.geometry, transposed);
      const kernels::Window win = conv_window(d, node.geometry, transposed);
      const auto wmat = as_matrix(w, w.shape().n);
      RowMatrix cols;
      RowMatrix dw = RowMatrix::Zero(wmat.rows(), wmat.cols());
      for (Eigen::Index n = 0; n < d.batch; ++n) {
        if (!transposed) {
          // out_n = W * cols(x_n)
          const auto gout = g.sample(n);
          if (wants(1)) {
            kernels::im2col(x.data().data() + n * x.shape().sample(), d.c_in, d.in_h, d.in_w,
                            win, cols);
            dw.noalias() += gout * cols.transpose();
          }
          if (wants(0)) {
            RowMatrix dcols = wmat.transpose() * gout;
            Tensor& dx = acc(0);
            Tensor tmp(Shape{1, d.c_in, d.in_h, d.in_w});
            kernels::col2im(dcols, d.c_in, d.in_h, d.in_w, win, tmp.data().data());
            dx.sample(n) += tmp.sample(0);
          }
        } else {
          // out_n = col2im(W^T * x_n)
          kernels::im2col(g.data().data() + n * g.shape().sample(), d.c_out, d.out_h, d.out_w,
                          win, cols);
          const auto xn = x.sample(n);
          if (wants(1)) dw.noalias() += xn * cols.transpose();
          if (wants(0)) acc(0).sample(n).noalias() += wmat * cols;
        }
      }
      if (wants(1)) {
        Tensor& dwt = acc(1);
        Eigen::Map<RowMatrix>(dwt.data().data(), dw.rows(), dw.cols()) += dw;
      }
      if (wants(2)) {
        Tensor& db = acc(2);
        for (Eigen::Index n = 0; n < d.batch; ++n) {
          db.data() += g.sample(n).rowwise().sum().array();
        }
      }
      break;
    }

    case OpKind::kGdn:
    case OpKind::kIgdn: {
      const bool inverse = node.kind == OpKind::kIgdn;
      const Tensor& y = in(0);
      const Eigen::Index channels = y.shape().c;
      const auto beta = in(1).data().matrix();
      const auto gamma = as_matrix(in(2), channels);
      RowMatrix dgamma = RowMatrix::Zero(channels, channels);
      Eigen::VectorXd dbeta = Eigen::VectorXd::Zero(channels);
      for (Eigen::Index n = 0; n < y.shape().n; ++n) {
        const auto yn = y.sample(n).array();
        const RowMatrix sq = yn.square().matrix();
        const RowMatrix norm = ((gamma * sq).colwise() + beta).eval();
        const auto gn = g.sample(n).array();
        // dL/dnorm
        RowMatrix dnorm;
        if (!inverse) {
          dnorm = (gn * yn * norm.array().pow(-1.5) * -0.5).matrix();
        } else {
          dnorm = (gn * yn * norm.array().rsqrt() * 0.5).matrix();
        }
        if (wants(0)) {
          auto dy = acc(0).sample(n);
          if (!inverse) {
            dy.array() += gn * norm.array().rsqrt();
          } else {
            dy.array() += gn * norm.array().sqrt();
          }
          dy.array() += (gamma.transpose() * dnorm).array() * yn * 2.0;
        }
        if (wants(1)) dbeta += dnorm.rowwise().sum();
        if (wants(2)) dgamma.noalias() += dnorm * sq.transpose();
      }
      if (wants(1)) acc(1).data() += dbeta.array();
      if (wants(2)) {
        Tensor& dg = acc(2);
        Eigen::Map<RowMatrix>(dg.data().data(), channels, channels) += dgamma;
      }
      break;
    }

    case OpKind::kAdd:
      if (wants(0)) acc(0).data() += g.data();
      if (wants(1)) acc(1).data() += g.data();
      break;
    case OpKind::kSub:
      if (wants(0)) acc(0).data() += g.data();
      if (wants(1)) acc(1).data() -= g.data();
      break;
    case OpKind::kMul:
      if (wants(0)) acc(0).data() += g.data() * in(1).data();
      if (wants(1)) acc(1).data() += g.data() * in(0).data();
      break;
    case OpKind::kScale:
      acc(0).data() += g.data() * node.attribute;
      break;
    case OpKind::kExp:
      acc(0).data() += g.data() * node.value.data();
      break;
    case OpKind::kLog2:
      acc(0).data() += g.data() / (in(0).data() * std::numbers::ln2);
      break;
    case OpKind::kClampMin:
      acc(0).data() += (in(0).data() >= node.attribute).select(g.data(), 0.0);
      break;
    case OpKind::kSum:
      acc(0).data() += g[0];
      break;
    case OpKind::kSumSquares:
      acc(0).data() += 2.0 * g[0] * in(0).data();
      break;

    case OpKind::kChannelMean: {
      const Shape& s = in(0).shape();
      const double inv = 1.0 / double(s.n * s.plane());
      Tensor& dx = acc(0);
      for (Eigen::Index n = 0; n < s.n; ++n) {
        dx.sample(n).colwise() += (g.data().matrix() * inv);
      }
      break;
    }

    case OpKind::kChannelNoise: {
      const Tensor& tau = node.saved[0];
      if (wants(0)) acc(0).data() += g.data();
      if (wants(1)) {
        Tensor& dd = acc(1);
        for (Eigen::Index n = 0; n < tau.shape().n; ++n) {
          dd.data() += (g.sample(n).array() * tau.sample(n).array()).rowwise().sum();
        }
      }
      break;
    }

    case OpKind::kLog2PTilde: {
      const Shape& s = g.shape();
      // saved: d_y, d_mu, d_b, d_delta, all of the output's shape.
      if (wants(0)) acc(0).data() += g.data() * node.saved[0].data();
      for (std::size_t k = 1; k < 4; ++k) {
        if (!wants(k)) continue;
        Tensor& dp = acc(k);
        for (Eigen::Index n = 0; n < s.n; ++n) {
          dp.data() += (g.sample(n).array() * node.saved[k].sample(n).array()).rowwise().sum();
        }
      }
      break;
    }
  }
}

Var conv2d(Var input, Var weight, Var bias, ConvGeometry geometry) {
  Graph& graph = same_graph(input, weight);
  same_graph(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const ConvDims d = check_conv(x.shape(), w.shape(), bias.shape(), geometry, false);
  const kernels::Window win = conv_window(d, geometry, false);
  const auto wmat = as_matrix(w, d.c_out);
  const auto b = bias.value().data().matrix();
  Tensor out(Shape{d.batch, d.c_out, d.out_h, d.out_w});
  RowMatrix cols;
  for (Eigen::Index n = 0; n < d.batch; ++n) {
    kernels::im2col(x.data().data() + n * x.shape().sample(), d.c_in, d.in_h, d.in_w, win, cols);
    auto on = out.sample(n);
    on.noalias() = wmat * cols;
    on.colwise() += b;
  }
  return graph.record(OpKind::kConv2d, {input.id, weight.id, bias.id}, std::move(out), {},
                      geometry);
}

Var tconv2d(Var input, Var weight, Var bias, ConvGeometry geometry) {
  Graph& graph = same_graph(input, weight);
  same_graph(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const ConvDims d = check_conv(x.shape(), w.shape(), bias.shape(), geometry, true);
  const kernels::Window win = conv_window(d, geometry, true);
  const auto wmat = as_matrix(w, d.c_in);
  const auto b = bias.value().data().matrix();
  Tensor out(Shape{d.batch, d.c_out, d.out_h, d.out_w});
  RowMatrix cols;
  for (Eigen::Index n = 0; n < d.batch; ++n) {
    cols.noalias() = wmat.transpose() * x.sample(n);
    kernels::col2im(cols, d.c_out, d.out_h, d.out_w, win,
                    out.data().data() + n * out.shape().sample());
    out.sample(n).colwise() += b;
  }
  return graph.record(OpKind::kTConv2d, {input.id, weight.id, bias.id}, std::move(out), {},
                      geometry);
}

namespace {

Var divisive_normalization(Var input, Var beta, Var gamma, bool inverse) {
  Graph& graph = same_graph(input, beta);
  same_graph(input, gamma);
  const Tensor& y = input.value();
  const Eigen::Index channels = y.shape().c;
  require_channel_vector(beta.shape(), channels, inverse ? "igdn beta" : "gdn beta");
  require_shape(gamma.shape(), Shape{1, 1, channels, channels}, inverse ? "igdn gamma" : "gdn gamma");
  const auto b = beta.value().data();
  if ((b <= 0.0).any()) {
    fail(ErrorKind::kConstraint, "GDN beta must be positive (min " + std::to_string(b.minCoeff()) + ")");
  }
  const auto gm = as_matrix(gamma.value(), channels);
  Tensor out(y.shape());
  for (Eigen::Index n = 0; n < y.shape().n; ++n) {
    const auto yn = y.sample(n).array();
    const RowMatrix norm = ((gm * yn.square().matrix()).colwise() + b.matrix()).eval();
    if ((norm.array() <= 0.0).any()) {
      fail(ErrorKind::kConstraint, "GDN normalizer must be positive; gamma has negative entries");
    }
    if (!inverse) {
      out.sample(n).array() = yn * norm.array().rsqrt();
    } else {
      out.sample(n).array() = yn * norm.array().sqrt();
    }
  }
  return graph.record(inverse ? OpKind::kIgdn : OpKind::kGdn, {input.id, beta.id, gamma.id},
                      std::move(out));
}

Var elementwise(OpKind kind, Var a, Var b) {
  Graph& graph = same_graph(a, b);
  require_shape(b.shape(), a.shape(), op_name(kind));
  Tensor out(a.shape());
  switch (kind) {
    case OpKind::kAdd: out.data() = a.value().data() + b.value().data(); break;
    case OpKind::kSub: out.data() = a.value().data() - b.value().data(); break;
    default: out.data() = a.value().data() * b.value().data(); break;
  }
  return graph.record(kind, {a.id, b.id}, std::move(out));
}

}  // namespace

Var gdn(Var input, Var beta, Var gamma) { return divisive_normalization(input, beta, gamma, false); }
Var igdn(Var input, Var beta, Var gamma) { return divisive_normalization(input, beta, gamma, true); }

Var add(Var a, Var b) { return elementwise(OpKind::kAdd, a, b); }
Var sub(Var a, Var b) { return elementwise(OpKind::kSub, a, b); }
Var mul(Var a, Var b) { return elementwise(OpKind::kMul, a, b); }

Var scale(Var a, double factor) {
  Tensor out(a.shape(), a.value().data() * factor);
  return a.graph->record(OpKind::kScale, {a.id}, std::move(out), {}, {}, factor);
}

Var exp(Var a) {
  Tensor out(a.shape(), a.value().data().exp());
  return a.graph->record(OpKind::kExp, {a.id}, std::move(out));
}

Var log2(Var a) {
  if ((a.value().data() <= 0.0).any()) fail(ErrorKind::kDomain, "log2 of non-positive value");
  Tensor out(a.shape(), a.value().data().log() / std::numbers::ln2);
  return a.graph->record(OpKind::kLog2, {a.id}, std::move(out));
}

Var clamp_min(Var a, double floor) {
  Tensor out(a.shape(), a.value().data().max(floor));
  return a.graph->record(OpKind::kClampMin, {a.id}, std::move(out), {}, {}, floor);
}

Var sum(Var a) {
  return a.graph->record(OpKind::kSum, {a.id}, Tensor::scalar(a.value().data().sum()));
}

Var sum_squares(Var a) {
  return a.graph->record(OpKind::kSumSquares, {a.id},
                         Tensor::scalar(a.value().data().square().sum()));
}

Var channel_mean(Var a) {
  const Shape& s = a.shape();
  Tensor out(Shape{1, s.c, 1, 1});
  for (Eigen::Index n = 0; n < s.n; ++n) {
    out.data() += a.value().sample(n).rowwise().sum().array();
  }
  out.data() /= double(s.n * s.plane());
  return a.graph->record(OpKind::kChannelMean, {a.id}, std::move(out));
}

Var channel_noise(Var y, Var delta, Tensor tau) {
  Graph& graph = same_graph(y, delta);
  const Shape& s = y.shape();
  require_shape(tau.shape(), s, "noise draws");
  require_channel_vector(delta.shape(), s.c, "noise step");
  Tensor out(s);
  const auto d = delta.value().data().matrix();
  for (Eigen::Index n = 0; n < s.n; ++n) {
    out.sample(n) = y.value().sample(n) +
                    (tau.sample(n).array().colwise() * d.array()).matrix();
  }
  std::vector<Tensor> saved;
  saved.push_back(std::move(tau));
  return graph.record(OpKind::kChannelNoise, {y.id, delta.id}, std::move(out), std::move(saved));
}

Var log2_p_tilde(Var y, Var mu, Var b, Var delta) {
  Graph& graph = same_graph(y, mu);
  same_graph(y, b);
  same_graph(y, delta);
  const Shape& s = y.shape();
  require_channel_vector(mu.shape(), s.c, "laplace mu");
  require_channel_vector(b.shape(), s.c, "laplace b");
  require_channel_vector(delta.shape(), s.c, "quantization step");
  Tensor out(s);
  std::vector<Tensor> saved(4, Tensor(s));
  const Tensor& yv = y.value();
  for (Eigen::Index n = 0; n < s.n; ++n) {
    for (Eigen::Index c = 0; c < s.c; ++c) {
      const double m = mu.value()[c];
      const double sc = b.value()[c];
      const double dl = delta.value()[c];
      for (Eigen::Index p = 0; p < s.plane(); ++p) {
        const Eigen::Index i = (n * s.c + c) * s.plane() + p;
        const auto r = log2_p_tilde_grad(yv[i], m, sc, dl);
        out[i] = r.value;
        saved[0][i] = r.d_y;
        saved[1][i] = r.d_mu;
        saved[2][i] = r.d_b;
        saved[3][i] = r.d_delta;
      }
    }
  }
  return graph.record(OpKind::kLog2PTilde, {y.id, mu.id, b.id, delta.id}, std::move(out),
                      std::move(saved));
}

}  // namespace ltc
