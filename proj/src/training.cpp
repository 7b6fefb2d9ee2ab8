#include "ltc/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ltc/byte_io.hpp"
#include "ltc/entropy.hpp"

namespace ltc {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    fail(ErrorKind::kConfig, "bad value for " + std::string(key) + ": '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorKind::kConfig, "bad boolean for " + std::string(key) + ": '" + std::string(value) + "'");
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::kConfig, what);
  };
  require(gamma > 0.0 && std::isfinite(gamma), "gamma must be positive");
  require(!(learn_delta && end_normalization),
          "learn_delta requires end_normalization = false (learned steps are the case without end GDN)");
  require(m >= 1 && hidden_channels >= 1, "m and hidden_channels must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(steps >= 0, "steps must be non-negative");
  require(lr_transform > 0.0 && lr_delta > 0.0 && lr_psi > 0.0, "learning rates must be positive");
  require(patch_size > 0 && patch_size % arch().total_stride() == 0,
          "patch_size must be a positive multiple of " + std::to_string(arch().total_stride()));
  require(patch_count >= 3, "patch_count must be at least 3");
  require(log_every >= 1, "log_every must be positive");
  require(reference_pixels > 0.0 && std::isfinite(reference_pixels), "reference_pixels must be positive");
  arch().validate();
}

TrainConfig parse_train_config(std::string_view text, const std::filesystem::path& base_dir) {
  TrainConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    auto path = [&] {
      std::filesystem::path p{std::string(value)};
      return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    if (key == "gamma") c.gamma = parse_number<double>(key, value);
    else if (key == "learn_delta") c.learn_delta = parse_bool(key, value);
    else if (key == "end_normalization") c.end_normalization = parse_bool(key, value);
    else if (key == "m") c.m = parse_number<int>(key, value);
    else if (key == "hidden_channels") c.hidden_channels = parse_number<int>(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<int>(key, value);
    else if (key == "steps") c.steps = parse_number<int>(key, value);
    else if (key == "lr_transform") c.lr_transform = parse_number<double>(key, value);
    else if (key == "lr_delta") c.lr_delta = parse_number<double>(key, value);
    else if (key == "lr_psi") c.lr_psi = parse_number<double>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "patch_size") c.patch_size = parse_number<int>(key, value);
    else if (key == "patch_count") c.patch_count = parse_number<int>(key, value);
    else if (key == "images") c.images = path();
    else if (key == "log_every") c.log_every = parse_number<int>(key, value);
    else if (key == "log") c.log_path = path();
    else if (key == "reference_pixels") c.reference_pixels = parse_number<double>(key, value);
    else if (key == "init_output_bias") c.init_output_bias = parse_bool(key, value);
    else fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  return parse_train_config(text, path.parent_path());
}

Tensor PatchSet::batch(std::span<const std::size_t> indices) const {
  const Eigen::Index p = patch_size;
  Tensor out(Shape{Eigen::Index(indices.size()), 1, p, p});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.plane(Eigen::Index(i), 0) = patches.at(indices[i]).cast<double>();
  }
  return out;
}

PatchSet make_patch_set(std::vector<Image> patches, int patch_size, std::uint64_t seed) {
  if (patches.size() < 3) fail(ErrorKind::kConfig, "need at least 3 patches to split");
  PatchSet set;
  set.patch_size = patch_size;
  set.patches = std::move(patches);
  std::vector<std::size_t> order(set.patches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed ^ 0x5851f42d4c957f2dull);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = order.size();
  const std::size_t n_cal = std::max<std::size_t>(1, n * 5 / 100);
  const std::size_t n_val = std::max<std::size_t>(1, n / 10);
  set.calibration.assign(order.begin(), order.begin() + n_cal);
  set.validation.assign(order.begin() + n_cal, order.begin() + n_cal + n_val);
  set.train.assign(order.begin() + n_cal + n_val, order.end());
  return set;
}

PatchSet ingest_dataset(const std::filesystem::path& image_dir, int patch_size, int count,
                        std::uint64_t seed) {
  if (!std::filesystem::is_directory(image_dir)) {
    fail(ErrorKind::kIo, "dataset directory not found: " + image_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(image_dir)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  std::vector<std::string> warnings;
  for (const auto& f : files) {
    Image img = read_image(f);
    if (img.rows() < patch_size || img.cols() < patch_size) {
      warnings.push_back("skipping " + f.filename().string() + ": smaller than the " +
                         std::to_string(patch_size) + "-pixel patch");
      continue;
    }
    images.push_back(std::move(img));
  }
  if (images.empty()) fail(ErrorKind::kIo, "no usable images in " + image_dir.string());

  Rng rng(seed);
  std::vector<Image> patches;
  patches.reserve(std::size_t(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const Image& img = images[rng() % images.size()];
    const Eigen::Index r = Eigen::Index(rng() % std::uint64_t(img.rows() - patch_size + 1));
    const Eigen::Index c = Eigen::Index(rng() % std::uint64_t(img.cols() - patch_size + 1));
    patches.push_back(img.block(r, c, patch_size, patch_size));
  }
  PatchSet set = make_patch_set(std::move(patches), patch_size, seed);
  set.warnings = std::move(warnings);
  return set;
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) fail(ErrorKind::kUsage, "Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  if (m_.size() != params.size()) fail(ErrorKind::kUsage, "Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i].data();
    auto& v = v_[i].data();
    const auto& g = grads[i]->data();
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.square();
    params[i]->data() -= lr_ * (m / c1) / ((v / c2).sqrt() + eps_);
  }
}

LossEvaluation rd_loss(const Tensor& batch, const Model& model, double gamma, const Tensor& tau,
                        unsigned trainable) {
  LossEvaluation e;
  e.graph = std::make_unique<Graph>();
  Graph& g = *e.graph;
  e.vars = bind(g, model.arch, model.params, trainable);
  const Var x = g.constant(batch);
  e.latent = encode_transform(x, model.arch, e.vars);
  const Var delta = exp(e.vars.log_delta);
  e.noisy = inject_noise(e.latent, delta, tau);
  const Var recon = decode_transform(e.noisy, model.arch, e.vars);
  e.distortion = scale(sum_squares(sub(x, recon)), 1.0 / double(batch.shape().n));
  e.rate = rate_terms(e.noisy, delta, e.vars.psi_mu, exp(e.vars.psi_log_b));
  e.loss = add(e.distortion, scale(sum(e.rate), gamma));
  return e;
}

LossEvaluation rd_loss(const Tensor& batch, const Model& model, double gamma, Rng& rng,
                        unsigned trainable) {
  const int s = model.arch.total_stride();
  const Shape latent{batch.shape().n, model.arch.m, batch.shape().h / s, batch.shape().w / s};
  return rd_loss(batch, model, gamma, draw_uniform_noise(latent, rng), trainable);
}

void project_gdn(ModelParams& params) {
  auto project = [](GdnParams& g) {
    if (g.beta.size() == 0) return;
    g.beta.data() = g.beta.data().max(kGdnBetaMin);
    g.gamma.data() = g.gamma.data().max(0.0);
  };
  for (GdnParams& g : params.encoder_gdn) project(g);
  for (GdnParams& g : params.decoder_igdn) project(g);
}

PhaseStats phase_step(Model& model, const Tensor& batch, const Tensor& tau, double gamma, ParamGroup group,
                  Adam& optimizer) {
  LossEvaluation e = rd_loss(batch, model, gamma, tau, group);
  e.graph->backward(e.loss);
  const auto vars = named_vars(model.arch, e.vars);
  auto named = named_parameters(model.params);
  std::vector<Tensor*> params;
  std::vector<std::string> names;
  std::vector<Tensor> storage;
  storage.reserve(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (parameter_group(vars[i].first) != group) continue;
    params.push_back(named[i].second);
    names.push_back(vars[i].first);
    storage.push_back(e.graph->grad(vars[i].second));
  }
  std::vector<const Tensor*> grads;
  for (const Tensor& t : storage) grads.push_back(&t);
  optimizer.step(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->all_finite()) fail(ErrorKind::kNumeric, "update of " + names[i] + " is not finite");
  }
  if (group == kTransformGroup) project_gdn(model.params);
  return {e.loss_value(), e.distortion.value()[0], e.rate.value().data().mean()};
}

namespace {

Eigen::VectorXd delta_snapshot(const Model& model) {
  return model.params.log_delta.data().exp().matrix();
}

}  // namespace

TrainResult train(const TrainConfig& config, const PatchSet& data, const TrainObserver& observer) {
  config.validate();
  if (data.patch_size != config.patch_size) fail(ErrorKind::kConfig, "patch set size differs from config");
  if (data.train.empty() || data.calibration.empty()) fail(ErrorKind::kConfig, "empty training split");

  TrainResult result;
  Model& model = result.model;
  model.arch = config.arch();
  model.params = init_params(model.arch, config.seed);
  if (config.init_output_bias) {
    double total = 0.0;
    for (std::size_t i : data.train) total += data.patches[i].cast<double>().sum();
    const double pixels_per_patch = double(config.patch_size) * config.patch_size;
    const double mean = total / (pixels_per_patch * double(data.train.size()));
    model.params.decoder[0].bias.data().setConstant(mean / kPixelScale);
  }
  const double gamma = config.effective_gamma();

  const int stride = model.arch.total_stride();
  const Eigen::Index side = config.patch_size / stride;
  Rng rng(config.seed + 0x9e3779b97f4a7c15ull);

  std::vector<std::size_t> val_idx(data.validation.begin(),
                                   data.validation.begin() + std::min<std::size_t>(64, data.validation.size()));
  Tensor val_batch;
  Tensor val_tau;
  if (!val_idx.empty()) {
    val_batch = data.batch(val_idx);
    Rng val_rng(config.seed + 2);
    val_tau = draw_uniform_noise(Shape{Eigen::Index(val_idx.size()), model.arch.m, side, side}, val_rng);
  }

  Adam transform_opt(config.lr_transform);
  Adam delta_opt(config.lr_delta);
  Adam psi_opt(config.lr_psi);

  double acc_loss = 0.0, acc_mse = 0.0, acc_rate = 0.0;
  int acc_n = 0;
  const double pixels = double(config.patch_size) * config.patch_size;
  std::vector<std::size_t> indices(std::size_t(config.batch_size));

  for (int step = 1; step <= config.steps; ++step) {
    const Model last_good = model;
    for (std::size_t& i : indices) i = data.train[rng() % data.train.size()];
    const Tensor batch = data.batch(indices);
    const Tensor tau =
        draw_uniform_noise(Shape{config.batch_size, model.arch.m, side, side}, rng);
    try {
      const PhaseStats stats = phase_step(model, batch, tau, gamma, kTransformGroup, transform_opt);
      acc_loss += stats.loss;
      acc_mse += stats.distortion / pixels;
      acc_rate += stats.mean_rate;
      ++acc_n;
      if (config.learn_delta) phase_step(model, batch, tau, gamma, kDeltaGroup, delta_opt);
      phase_step(model, batch, tau, gamma, kPsiGroup, psi_opt);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::kNumeric) throw;
      throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": " + err.what(),
                             last_good);
    }

    if (step % config.log_every == 0 || step == config.steps) {
      TrainLogRow row;
      row.step = step;
      row.loss = acc_loss / acc_n;
      row.mse = acc_mse / acc_n;
      row.rate_bits_per_coeff = acc_rate / acc_n;
      if (!val_idx.empty()) {
        const LossEvaluation v = rd_loss(val_batch, model, gamma, val_tau, kNoGroup);
        row.val_loss = v.loss_value();
        row.val_mse = v.distortion.value()[0] / pixels;
        row.val_rate = v.rate.value().data().mean();
      }
      row.delta = delta_snapshot(model);
      result.log.push_back(row);
      if (observer) observer(row);
      acc_loss = acc_mse = acc_rate = 0.0;
      acc_n = 0;
    }
  }

  std::vector<Tensor> calibration;
  calibration.reserve(data.calibration.size());
  for (std::size_t i : data.calibration) {
    const std::size_t one[] = {i};
    calibration.push_back(data.batch(one));
  }
  model.params.mu_bar.data() = estimate_means(model, calibration).array();
  return result;
}

TrainResult train(const TrainConfig& config, const TrainObserver& observer) {
  config.validate();
  if (config.images.empty()) fail(ErrorKind::kConfig, "config does not name an images directory");
  const PatchSet data = ingest_dataset(config.images, config.patch_size, config.patch_count, config.seed);
  TrainResult result = train(config, data, observer);
  if (!config.log_path.empty()) write_train_log(result.log, config.log_path);
  return result;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "step,loss,mse,rate_bits_per_coeff,val_loss,val_mse,val_rate";
  const Eigen::Index maps = log.empty() ? 0 : log.front().delta.size();
  for (Eigen::Index i = 0; i < maps; ++i) out << ",delta_" << i;
  out << '\n' << std::setprecision(10);
  for (const TrainLogRow& r : log) {
    out << r.step << ',' << r.loss << ',' << r.mse << ',' << r.rate_bits_per_coeff << ',' << r.val_loss
        << ',' << r.val_mse << ',' << r.val_rate;
    for (Eigen::Index i = 0; i < r.delta.size(); ++i) out << ',' << r.delta[i];
    out << '\n';
  }
}

}  // namespace ltc
