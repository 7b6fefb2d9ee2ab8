#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "ltc/byte_io.hpp"
#include "ltc/entropy.hpp"
#include "ltc/training.hpp"
#include "op_suite.hpp"
#include "reference.hpp"

using namespace ltc;
namespace fs = std::filesystem;

namespace {

void expect_kind(ErrorKind kind, const std::function<void()>& f) {
  try {
    f();
    ADD_FAILURE() << "no error raised";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small patch set cut from the bundled training images.
const PatchSet& toy_patches() {
  static const PatchSet set = ingest_dataset(fs::path(LTC_DATA_DIR) / "train", 32, 256, 9);
  return set;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.m = 8;
  c.hidden_channels = 8;
  c.patch_size = 32;
  c.patch_count = 256;
  c.batch_size = 4;
  c.steps = 20;
  c.log_every = 1;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Config, ParsesKeysCommentsAndPaths) {
  const TrainConfig c = parse_train_config(
      "# case 3\n"
      "gamma = 24000   # rate weight\n"
      "learn_delta = false\n"
      "end_normalization = true\n"
      "m = 16\nhidden_channels = 24\nbatch_size = 4\nsteps = 10\n"
      "lr_transform = 2e-4\nlr_delta = 1e-2\nlr_psi = 5e-3\nseed = 42\n"
      "patch_size = 32\npatch_count = 100\nimages = \"imgs\"\nlog = /tmp/log.csv\nlog_every = 5\n"
      "reference_pixels = 1024\ninit_output_bias = no\n",
      "/base");
  EXPECT_EQ(c.gamma, 24000.0);
  EXPECT_FALSE(c.learn_delta);
  EXPECT_TRUE(c.end_normalization);
  EXPECT_EQ(c.m, 16);
  EXPECT_EQ(c.hidden_channels, 24);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.steps, 10);
  EXPECT_EQ(c.lr_transform, 2e-4);
  EXPECT_EQ(c.lr_delta, 1e-2);
  EXPECT_EQ(c.lr_psi, 5e-3);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.patch_size, 32);
  EXPECT_EQ(c.patch_count, 100);
  EXPECT_EQ(c.images, fs::path("/base/imgs"));
  EXPECT_EQ(c.log_path, fs::path("/tmp/log.csv"));
  EXPECT_EQ(c.log_every, 5);
  EXPECT_EQ(c.reference_pixels, 1024.0);
  EXPECT_FALSE(c.init_output_bias);
  EXPECT_EQ(c.effective_gamma(), 24000.0);
}

TEST(Config, Defaults) {
  const TrainConfig c = parse_train_config("");
  EXPECT_EQ(c.gamma, 10000.0);
  EXPECT_TRUE(c.learn_delta);
  EXPECT_FALSE(c.end_normalization);
  EXPECT_EQ(c.m, 32);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.steps, 3000);
  EXPECT_EQ(c.patch_size, 64);
  EXPECT_EQ(c.patch_count, 4000);
  EXPECT_DOUBLE_EQ(c.effective_gamma(), 10000.0 / 16.0);
}

TEST(Config, Errors) {
  expect_kind(ErrorKind::kConfig, [] { parse_train_config("colour = red\n"); });
  expect_kind(ErrorKind::kConfig, [] { parse_train_config("gamma = fast\n"); });
  expect_kind(ErrorKind::kConfig, [] { parse_train_config("gamma = 0\n"); });
  expect_kind(ErrorKind::kConfig, [] { parse_train_config("gamma 10\n"); });
  expect_kind(ErrorKind::kConfig, [] { parse_train_config("learn_delta = maybe\n"); });
  expect_kind(ErrorKind::kConfig, [] { parse_train_config("learn_delta = true\nend_normalization = true\n"); });
  expect_kind(ErrorKind::kConfig, [] { parse_train_config("patch_size = 40\n"); });
  expect_kind(ErrorKind::kIo, [] { load_train_config("/nonexistent.cfg"); });
}

TEST(Dataset, ConstantImageGivesConstantPatches) {
  const fs::path dir = scratch("ltc_gray");
  write_pgm(Image::Constant(40, 50, 128), dir / "gray.pgm");
  const PatchSet set = ingest_dataset(dir, 16, 30, 1);
  ASSERT_EQ(set.patches.size(), 30u);
  for (const Image& p : set.patches) {
    EXPECT_EQ(p.rows(), 16);
    EXPECT_TRUE((p.array() == 128).all());
  }
}

TEST(Dataset, DeterministicDisjointSplits) {
  const PatchSet a = ingest_dataset(fs::path(LTC_DATA_DIR) / "train", 64, 200, 5);
  const PatchSet b = ingest_dataset(fs::path(LTC_DATA_DIR) / "train", 64, 200, 5);
  ASSERT_EQ(a.patches.size(), 200u);
  for (std::size_t i = 0; i < a.patches.size(); ++i) ASSERT_EQ(a.patches[i], b.patches[i]);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.calibration.size(), 10u);
  EXPECT_EQ(a.validation.size(), 20u);
  EXPECT_EQ(a.train.size(), 170u);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.validation.begin(), a.validation.end());
  all.insert(all.end(), a.calibration.begin(), a.calibration.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
  const PatchSet c = ingest_dataset(fs::path(LTC_DATA_DIR) / "train", 64, 200, 6);
  EXPECT_NE(a.patches[0], c.patches[0]);
}

TEST(Dataset, SmallImagesSkippedWithWarning) {
  const fs::path dir = scratch("ltc_small");
  write_pgm(Image::Constant(8, 8, 1), dir / "a_small.pgm");
  write_pgm(Image::Constant(32, 32, 2), dir / "b_big.pgm");
  write_file(dir / "notes.txt", std::vector<std::uint8_t>{'x'});
  const PatchSet set = ingest_dataset(dir, 16, 10, 1);
  ASSERT_EQ(set.warnings.size(), 1u);
  EXPECT_NE(set.warnings[0].find("a_small.pgm"), std::string::npos);
  for (const Image& p : set.patches) EXPECT_EQ(p(0, 0), 2);
}

TEST(Dataset, Errors) {
  const fs::path dir = scratch("ltc_empty");
  expect_kind(ErrorKind::kIo, [&] { ingest_dataset(dir, 16, 10, 1); });
  expect_kind(ErrorKind::kIo, [&] { ingest_dataset(dir / "missing", 16, 10, 1); });
  write_file(dir / "bad.pgm", std::vector<std::uint8_t>{'P', '6'});
  expect_kind(ErrorKind::kFormat, [&] { ingest_dataset(dir, 16, 10, 1); });
}

TEST(Loss, MatchesStraightLineEvaluation) {
  for (bool end_norm : {false, true}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::mt19937_64 rng(seed);
      const Model model = opsuite::tiny_model(rng(), end_norm);
      const Tensor batch = opsuite::uniform({2, 1, 32, 16}, 0.0, 255.0, rng);
      const Tensor tau = opsuite::uniform({2, 2, 2, 1}, -0.5, 0.5, rng);
      const LossEvaluation e = rd_loss(batch, model, 37.0, tau, kNoGroup);
      const ref::LossTerms expect = ref::rd_loss(batch, model, 37.0, tau);
      EXPECT_NEAR(e.loss_value(), expect.loss, 1e-10 * std::abs(expect.loss));
      EXPECT_NEAR(e.distortion.value()[0], expect.distortion, 1e-10 * expect.distortion);
      for (int i = 0; i < 2; ++i) EXPECT_NEAR(e.rate.value()[i], expect.rate[std::size_t(i)], 1e-10);
    }
  }
}

TEST(Loss, VanishingGammaIsDistortion) {
  std::mt19937_64 rng(1);
  const Model model = opsuite::tiny_model(2, false);
  const Tensor batch = opsuite::uniform({2, 1, 16, 16}, 0.0, 255.0, rng);
  const LossEvaluation e = rd_loss(batch, model, 1e-12, rng, kNoGroup);
  EXPECT_NEAR(e.loss_value(), e.distortion.value()[0], 1e-9 * e.loss_value());
}

TEST(Loss, ZeroModelOnZeroImageIsPureRate) {
  Model model = opsuite::tiny_model(3, false);
  for (auto& [name, t] : named_parameters(model.params)) {
    if (name.starts_with("enc.conv") || name.starts_with("dec.tconv")) t->data().setZero();
  }
  Rng rng(4);
  const Tensor batch(Shape{2, 1, 16, 16});
  const Tensor tau = draw_uniform_noise(Shape{2, 2, 1, 1}, rng);
  const LossEvaluation e = rd_loss(batch, model, 5.0, tau, kNoGroup);
  EXPECT_EQ(e.distortion.value()[0], 0.0);
  double expect = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double d = std::exp(model.params.log_delta[c]);
    const double b = std::exp(model.params.psi_log_b[c]);
    double acc = 0.0;
    for (int n = 0; n < 2; ++n) acc += std::log2(p_tilde(d * tau(n, c, 0, 0), model.params.psi_mu[c], b, d));
    expect += -std::log2(d) - acc / 2.0;
  }
  EXPECT_NEAR(e.loss_value(), 5.0 * expect, 1e-12);
}

TEST(Training, PhasesTouchOnlyTheirGroup) {
  Model model = opsuite::tiny_model(5, false);
  std::mt19937_64 rng(6);
  const Tensor batch = opsuite::uniform({2, 1, 32, 32}, 0.0, 255.0, rng);
  const Tensor tau = opsuite::uniform({2, 2, 2, 2}, -0.5, 0.5, rng);
  for (ParamGroup group : {kTransformGroup, kDeltaGroup, kPsiGroup}) {
    const Model before = model;
    Adam adam(1e-2);
    phase_step(model, batch, tau, 10.0, group, adam);
    const auto a = named_parameters(before.params);
    const auto b = named_parameters(model.params);
    bool changed = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool same = (a[i].second->data() == b[i].second->data()).all();
      if (parameter_group(a[i].first) == group) {
        changed |= !same;
      } else {
        EXPECT_TRUE(same) << a[i].first << " moved during group " << group;
      }
    }
    EXPECT_TRUE(changed) << "group " << group;
  }
}

TEST(Training, ProjectionRestoresConstraints) {
  Model model = opsuite::tiny_model(7, true);
  model.params.encoder_gdn[0].beta[0] = -3.0;
  model.params.decoder_igdn[2].gamma[1] = -0.5;
  project_gdn(model.params);
  for (const auto* set : {&model.params.encoder_gdn, &model.params.decoder_igdn}) {
    for (const GdnParams& g : *set) {
      if (g.beta.size() == 0) continue;
      EXPECT_GE(g.beta.data().minCoeff(), kGdnBetaMin);
      EXPECT_GE(g.gamma.data().minCoeff(), 0.0);
    }
  }
  EXPECT_EQ(model.params.encoder_gdn[0].beta[0], kGdnBetaMin);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p(Shape{1, 1, 1, 3});
  const Tensor g(Shape{1, 1, 1, 3}, Eigen::ArrayXd::LinSpaced(3, -2.0, 3.0));
  Adam adam(0.1);
  adam.step({&p}, {&g});
  EXPECT_NEAR(p[0], 0.1, 1e-7);
  EXPECT_NEAR(p[2], -0.1, 1e-7);
}

TEST(Training, ZeroStepsKeepsInitialization) {
  TrainConfig c = toy_config();
  c.steps = 0;
  c.init_output_bias = false;
  const TrainResult r = train(c, toy_patches());
  Model init{c.arch(), init_params(c.arch(), c.seed)};
  init.params.mu_bar = r.model.params.mu_bar;
  EXPECT_EQ(serialize_model(r.model), serialize_model(init));
  EXPECT_GT(r.model.params.mu_bar.data().abs().maxCoeff(), 0.0);
  EXPECT_TRUE(r.log.empty());
}

TEST(Training, FixedStepCaseKeepsUnitSteps) {
  TrainConfig c = toy_config();
  c.learn_delta = false;
  c.end_normalization = true;
  c.steps = 5;
  const TrainResult r = train(c, toy_patches());
  EXPECT_EQ(r.model.params.log_delta.data().abs().maxCoeff(), 0.0);
  EXPECT_EQ(r.log.size(), 5u);
  EXPECT_EQ(r.log.back().delta, Eigen::VectorXd::Ones(8));
}

TEST(Training, BitReproducible) {
  TrainConfig c = toy_config();
  c.steps = 8;
  const auto a = serialize_model(train(c, toy_patches()).model);
  const auto b = serialize_model(train(c, toy_patches()).model);
  EXPECT_EQ(a, b);
  c.seed = 4;
  EXPECT_NE(serialize_model(train(c, toy_patches()).model), a);
}

TEST(Training, SmokeLossDecreases) {
  TrainConfig c = toy_config();
  c.steps = 200;
  c.lr_transform = 1e-3;
  const TrainResult r = train(c, toy_patches());
  ASSERT_EQ(r.log.size(), 200u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += r.log[std::size_t(i)].loss;
    last += r.log[r.log.size() - 1 - std::size_t(i)].loss;
  }
  EXPECT_LT(last, first);
}

TEST(Training, DivergenceCarriesLastFiniteModel) {
  TrainConfig c = toy_config();
  c.lr_delta = 1e4;
  c.steps = 10;
  try {
    train(c, toy_patches());
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& d) {
    EXPECT_EQ(d.kind(), ErrorKind::kNumeric);
    for (const auto& [name, t] : named_parameters(d.last_good().params)) EXPECT_TRUE(t->all_finite()) << name;
  }
}

TEST(Training, LogCsv) {
  TrainConfig c = toy_config();
  c.steps = 4;
  c.log_every = 2;
  const TrainResult r = train(c, toy_patches());
  ASSERT_EQ(r.log.size(), 2u);
  const fs::path path = scratch("ltc_log") / "log.csv";
  write_train_log(r.log, path);
  const auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  EXPECT_EQ(text.rfind("step,loss,mse,rate_bits_per_coeff,val_loss,val_mse,val_rate,delta_0,", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}
