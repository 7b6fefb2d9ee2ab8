// ltc: train, code and analyse the learned-transform image codec.

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ltc/analysis.hpp"
#include "ltc/bitstream.hpp"
#include "ltc/byte_io.hpp"
#include "ltc/training.hpp"

namespace fs = std::filesystem;
using namespace ltc;

namespace {

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) fail(ErrorKind::kUsage, std::string("bad ") + what + ": '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorKind::kUsage, std::string("empty ") + what);
  return out;
}

std::pair<int, int> parse_pair(const std::string& text, const char* what) {
  const auto v = parse_list(text, what);
  if (v.size() != 2 || v[0] != double(int(v[0])) || v[1] != double(int(v[1]))) {
    fail(ErrorKind::kUsage, std::string(what) + " must be two integers R,C");
  }
  return {int(v[0]), int(v[1])};
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

void print_row(const TrainLogRow& r) {
  std::printf("step %6d  loss %.6g  mse %.4f  rate %.4f bits/coeff  val_mse %.4f  val_rate %.4f  mean_delta %.4f\n",
              r.step, r.loss, r.mse, r.rate_bits_per_coeff, r.val_mse, r.val_rate, r.delta.mean());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned-transform image codec"};
  app.require_subcommand(1);

  fs::path config_path, model_path, out_path, in_path, images_dir;
  double beta = 1.0;
  bool quiet = false;
  std::string betas_text, pos_text, size_text = "256,256";
  int map_index = 0;
  double alpha = 0.0;
  std::vector<fs::path> tables;

  auto* train_cmd = app.add_subcommand("train", "Train a model from a key = value config");
  train_cmd->add_option("--config", config_path, "Training config")->required();
  train_cmd->add_option("--out", out_path, "Model file to write")->required();
  train_cmd->add_flag("--quiet", quiet, "No progress lines");

  auto* encode_cmd = app.add_subcommand("encode", "Compress a PGM/PNG image");
  encode_cmd->add_option("--model", model_path)->required();
  encode_cmd->add_option("--beta", beta, "Step multiplier")->default_val(1.0);
  encode_cmd->add_option("input", in_path)->required();
  encode_cmd->add_option("output", out_path)->required();

  auto* decode_cmd = app.add_subcommand("decode", "Decompress to PGM");
  decode_cmd->add_option("--model", model_path)->required();
  decode_cmd->add_option("input", in_path)->required();
  decode_cmd->add_option("output", out_path)->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "Rate-distortion sweep over beta");
  sweep_cmd->add_option("--model", model_path)->required();
  sweep_cmd->add_option("--images", images_dir)->required();
  sweep_cmd->add_option("--betas", betas_text, "Comma-separated multipliers");
  sweep_cmd->add_option("--out", out_path)->required();

  auto* report_cmd = app.add_subcommand("report", "Per-map Laplace fits of the latents");
  report_cmd->add_option("--model", model_path)->required();
  report_cmd->add_option("--images", images_dir)->required();
  report_cmd->add_option("--out", out_path)->required();

  auto* probe_cmd = app.add_subcommand("probe", "Decode a single latent coefficient");
  probe_cmd->add_option("--model", model_path)->required();
  probe_cmd->add_option("--map", map_index)->required();
  probe_cmd->add_option("--pos", pos_text, "Latent position R,C")->required();
  probe_cmd->add_option("--alpha", alpha)->required()->allow_extra_args(false);
  probe_cmd->add_option("--size", size_text, "Decoded image size H,W")->default_val("256,256");
  probe_cmd->add_option("--out", out_path)->required();

  auto* compare_cmd = app.add_subcommand("compare", "PSNR gaps between RD curves");
  compare_cmd->add_option("--out", out_path)->required();
  compare_cmd->add_option("tables", tables, "case-2 sweep, case-3 sweep, then fixed-step runs")
      ->required()
      ->expected(2, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train_cmd) {
      const TrainConfig config = load_train_config(config_path);
      TrainResult result;
      try {
        result = train(config, quiet ? TrainObserver{} : TrainObserver{print_row});
      } catch (const TrainingDiverged& d) {
        const fs::path dump = with_suffix(out_path, ".diverged.ltm");
        save_model(d.last_good(), dump);
        throw Error(d.kind(), std::string(d.what()) + " (last finite model in " + dump.string() + ")");
      }
      save_model(result.model, out_path);
      if (!quiet) std::printf("wrote %s (%ld parameters)\n", out_path.c_str(), long(parameter_count(result.model.params)));
    } else if (*encode_cmd) {
      const Model model = load_model(model_path);
      const Image image = read_image(in_path);
      const std::vector<std::uint8_t> bytes = encode_image(image, model, beta);
      write_file(out_path, bytes);
      std::printf("%zu bytes, %.4f bpp\n", bytes.size(), 8.0 * double(bytes.size()) / double(image.size()));
    } else if (*decode_cmd) {
      const Model model = load_model(model_path);
      write_pgm(decode_image(read_file(in_path), model), out_path);
    } else if (*sweep_cmd) {
      const Model model = load_model(model_path);
      const auto images = load_images(images_dir);
      const std::vector<double> betas = betas_text.empty() ? kDefaultBetas : parse_list(betas_text, "beta list");
      for (double b : betas) {
        if (!(b > 0.0)) fail(ErrorKind::kUsage, "betas must be positive");
      }
      const auto rows = rd_sweep(model, images, betas);
      write_rd_csv(rows, out_path);
      for (const auto& m : check_monotonicity(rows)) {
        if (m.inversions > 0) {
          std::printf("%s: %d monotonicity inversion(s)%s\n", m.image.c_str(), m.inversions,
                      m.ok() ? "" : " (more than one)");
        }
      }
    } else if (*report_cmd) {
      const Model model = load_model(model_path);
      const auto images = load_images(images_dir);
      const LatentReport report = latent_report(model, images);
      write_latent_report(report, out_path);
      int degenerate = 0, outliers = 0;
      for (const MapFit& f : report.maps) {
        degenerate += f.degenerate;
        outliers += f.outlier;
      }
      std::printf("%zu maps, %d degenerate, %d outlier fit(s)\n", report.maps.size(), degenerate, outliers);
    } else if (*probe_cmd) {
      const Model model = load_model(model_path);
      const auto [r, c] = parse_pair(pos_text, "--pos");
      const auto [h, w] = parse_pair(size_text, "--size");
      const int stride = model.arch.total_stride();
      if (h <= 0 || w <= 0 || h % stride || w % stride) {
        fail(ErrorKind::kUsage, "--size must be positive multiples of " + std::to_string(stride));
      }
      const ProbeResult p = probe(model, {map_index, r, c, alpha}, h / stride, w / stride);
      write_pgm(p.probe_image, out_path);
      write_pgm(p.baseline_image, with_suffix(out_path, "_baseline.pgm"));
      std::printf("locality %.4f (window %d,%d size %d)\n", p.locality, p.crop_row, p.crop_col, p.crop_size);
    } else if (*compare_cmd) {
      std::vector<RDCurve> curves;
      curves.push_back(sweep_curve("case2", read_rd_csv(tables[0])));
      curves.push_back(sweep_curve("case3", read_rd_csv(tables[1])));
      if (tables.size() > 2) {
        std::vector<std::vector<RDPoint>> runs;
        for (std::size_t i = 2; i < tables.size(); ++i) runs.push_back(read_rd_csv(tables[i]));
        curves.push_back(fixed_step_curve("case1", runs));
      }
      std::vector<CurveGap> gaps;
      for (std::size_t i = 0; i < curves.size(); ++i) {
        for (std::size_t j = i + 1; j < curves.size(); ++j) {
          try {
            gaps.push_back(compare_curves(curves[i], curves[j]));
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::kDomain || curves.size() == 2) throw;
            std::printf("%s vs %s: %s\n", curves[i].name.c_str(), curves[j].name.c_str(), e.what());
          }
        }
      }
      if (gaps.empty()) fail(ErrorKind::kDomain, "no pair of curves overlaps in rate");
      write_gaps(gaps, out_path);
      for (const CurveGap& g : gaps) {
        std::printf("%s vs %s: rate [%.4f, %.4f] bpp, mean gap %.3f dB, max gap %.3f dB\n", g.a.c_str(),
                    g.b.c_str(), g.rate_lo, g.rate_hi, g.mean_gap_db, g.max_gap_db);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << kind_name(e.kind()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
