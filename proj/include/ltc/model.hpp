#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ltc/autodiff.hpp"
#include "ltc/tensor.hpp"

namespace ltc {

// Pixels enter the analysis transform divided by kPixelScale and leave the
// synthesis transform multiplied by it.
inline constexpr double kPixelScale = 255.0;

// One encoder convolution. The decoder uses the mirrored transposed
// convolution with the same kernel, stride and padding.
struct LayerSpec {
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchConfig {
  int m = 32;
  std::vector<LayerSpec> layers;
  // Adds a GDN after the last encoder conv and an IGDN before the first
  // decoder tconv.
  bool end_normalization = false;

  // conv(h, 9, s4, p4) -> GDN -> conv(h, 5, s2, p2) -> GDN -> conv(m, 5, s2, p2)
  static ArchConfig desk(int m = 32, bool end_normalization = false, int hidden = 32);

  int total_stride() const;
  int in_channels(std::size_t layer) const { return layer == 0 ? 1 : layers[layer - 1].out_channels; }
  // Output padding of the mirrored tconv so that decode(encode(x)) keeps the
  // input extent for stride-aligned inputs.
  int output_pad(std::size_t layer) const;
  bool has_gdn(std::size_t layer) const {
    return layer + 1 < layers.size() || end_normalization;
  }
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ConvParams {
  Tensor weight;
  Tensor bias;
};

struct GdnParams {
  Tensor beta;   // (1, c, 1, 1)
  Tensor gamma;  // (1, 1, c, c)
};

struct ModelParams {
  std::vector<ConvParams> encoder;     // conv l
  std::vector<GdnParams> encoder_gdn;  // applied after conv l
  std::vector<ConvParams> decoder;     // tconv l, mirror of conv l
  std::vector<GdnParams> decoder_igdn; // applied before tconv l
  Tensor log_delta;                    // (1, m, 1, 1)
  Tensor psi_mu;
  Tensor psi_log_b;
  Tensor mu_bar;
};

struct Model {
  ArchConfig arch;
  ModelParams params;
};

enum ParamGroup : unsigned {
  kNoGroup = 0,
  kTransformGroup = 1u << 0,
  kDeltaGroup = 1u << 1,
  kPsiGroup = 1u << 2,
};

// Gaussian(0, sqrt(2 / fan_in)) weights, zero biases, GDN beta = 1 and
// gamma = 0.1 I + 1e-3, delta = 1, psi = (0, 1), mu_bar = 0.
ModelParams init_params(const ArchConfig& arch, std::uint64_t seed);

// Canonical (name, tensor) order used by serialization and optimizers.
std::vector<std::pair<std::string, Tensor*>> named_parameters(ModelParams& params);
std::vector<std::pair<std::string, const Tensor*>> named_parameters(const ModelParams& params);
ParamGroup parameter_group(const std::string& name);
Eigen::Index parameter_count(const ModelParams& params);

// Model parameters bound into a graph. Groups not listed as trainable enter
// as constants.
struct ModelVars {
  std::vector<std::pair<Var, Var>> encoder;
  std::vector<std::pair<Var, Var>> encoder_gdn;
  std::vector<std::pair<Var, Var>> decoder;
  std::vector<std::pair<Var, Var>> decoder_igdn;
  Var log_delta;
  Var psi_mu;
  Var psi_log_b;
};

ModelVars bind(Graph& graph, const ArchConfig& arch, const ModelParams& params,
               unsigned trainable);

// Bound vars in named_parameters() order (mu_bar is never bound).
std::vector<std::pair<std::string, Var>> named_vars(const ArchConfig& arch, const ModelVars& vars);

Var encode_transform(Var x, const ArchConfig& arch, const ModelVars& vars);
Var decode_transform(Var y_hat, const ArchConfig& arch, const ModelVars& vars);

// Inference helpers on plain tensors; x is (n, 1, h, w) with h and w
// multiples of the total stride.
Tensor encode_transform(const Tensor& x, const Model& model);
Tensor decode_transform(const Tensor& y_hat, const Model& model);

// Model file: "LTAE", version, arch block, named float64 sections, CRC32.
std::vector<std::uint8_t> serialize_model(const Model& model);
Model parse_model(const std::vector<std::uint8_t>& bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
// CRC32 trailer of the serialized model; ties bitstreams to a model.
std::uint32_t model_checksum(const Model& model);

}  // namespace ltc
