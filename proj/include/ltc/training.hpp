#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ltc/autodiff.hpp"
#include "ltc/image.hpp"
#include "ltc/model.hpp"
#include "ltc/quantization.hpp"

namespace ltc {

struct TrainConfig {
  double gamma = 10000.0;
  // Case 2: learned steps, no end normalization. Cases 1 and 3: unit steps
  // with end normalization.
  bool learn_delta = true;
  bool end_normalization = false;
  int m = 32;
  int hidden_channels = 32;
  int batch_size = 8;
  int steps = 3000;
  double lr_transform = 1e-3;
  double lr_delta = 1e-3;
  double lr_psi = 1e-3;
  std::uint64_t seed = 1;
  int patch_size = 64;
  int patch_count = 4000;
  std::filesystem::path images;  // training image directory
  int log_every = 100;
  std::filesystem::path log_path;  // optional CSV training log
  // gamma weighs the rate of an image with this many pixels; the loss on a
  // patch uses gamma * patch_size^2 / reference_pixels.
  double reference_pixels = 65536.0;
  // Start the output bias of the synthesis transform at the mean training
  // pixel value instead of zero.
  bool init_output_bias = true;

  double effective_gamma() const { return gamma * double(patch_size) * patch_size / reference_pixels; }
  ArchConfig arch() const { return ArchConfig::desk(m, end_normalization, hidden_channels); }
  void validate() const;
};

// Parses "key = value" lines; '#' starts a comment. Relative paths resolve
// against base_dir.
TrainConfig parse_train_config(std::string_view text, const std::filesystem::path& base_dir = {});
TrainConfig load_train_config(const std::filesystem::path& path);

// Luminance patches with disjoint train / validation / calibration splits.
struct PatchSet {
  int patch_size = 0;
  std::vector<Image> patches;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> calibration;
  std::vector<std::string> warnings;

  // (indices.size(), 1, p, p) batch.
  Tensor batch(std::span<const std::size_t> indices) const;
};

// Random crops from every PGM/PNG in image_dir (sorted by file name).
// Images smaller than the patch are skipped with a warning. 10% of the
// patches go to validation and a further 5% to calibration.
PatchSet ingest_dataset(const std::filesystem::path& image_dir, int patch_size, int count,
                        std::uint64_t seed);
PatchSet make_patch_set(std::vector<Image> patches, int patch_size, std::uint64_t seed);

// Adam with bias correction over a fixed list of tensors.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Rate-distortion objective on one batch. Owns its graph.
struct LossEvaluation {
  std::unique_ptr<Graph> graph;
  ModelVars vars;
  Var loss;
  Var distortion;   // mean squared Frobenius error per image
  Var rate;         // (1, m, 1, 1) h_i in bits per coefficient
  Var latent;       // analysis transform output
  Var noisy;        // latent + Delta (.) T

  double loss_value() const { return loss.value()[0]; }
};

// mean_batch ||x - g_d(g_e(x) + Delta (.) T)||_F^2 + gamma sum_i h_i with
// the same noisy latents feeding decoder and rate terms. tau has the latent
// shape.
LossEvaluation rd_loss(const Tensor& batch, const Model& model, double gamma, const Tensor& tau,
                        unsigned trainable);
LossEvaluation rd_loss(const Tensor& batch, const Model& model, double gamma, Rng& rng,
                        unsigned trainable);

// One Adam step on the parameters of `group` (a single ParamGroup) against
// the objective on (batch, tau). Returns the objective terms before the
// step. Transform steps are followed by project_gdn.
struct PhaseStats {
  double loss = 0.0;
  double distortion = 0.0;  // per image, summed over pixels
  double mean_rate = 0.0;   // bits per coefficient, averaged over maps
};
PhaseStats phase_step(Model& model, const Tensor& batch, const Tensor& tau, double gamma, ParamGroup group,
                  Adam& optimizer);

// GDN/IGDN beta >= 1e-6 and gamma >= 0.
inline constexpr double kGdnBetaMin = 1e-6;
void project_gdn(ModelParams& params);

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double mse = 0.0;
  double rate_bits_per_coeff = 0.0;
  double val_loss = 0.0;
  double val_mse = 0.0;
  double val_rate = 0.0;
  Eigen::VectorXd delta;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogRow> log;
};

// Thrown when the objective stops being finite; carries the last finite
// parameters.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, Model last_good)
      : Error(ErrorKind::kNumeric, what), last_good_(std::move(last_good)) {}
  const Model& last_good() const { return last_good_; }

 private:
  Model last_good_;
};

using TrainObserver = std::function<void(const TrainLogRow&)>;

// Per batch: Adam step on the transform (then GDN projection), on log delta
// (when learned), then on psi. Ends with mu_bar estimated on the
// calibration split.
TrainResult train(const TrainConfig& config, const PatchSet& data, const TrainObserver& observer = {});
// Loads the dataset named by the config, trains, writes the log CSV if set.
TrainResult train(const TrainConfig& config, const TrainObserver& observer = {});

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path);

}  // namespace ltc
