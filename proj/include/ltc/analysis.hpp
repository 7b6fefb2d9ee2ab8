#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ltc/image.hpp"
#include "ltc/model.hpp"

namespace ltc {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

double mse(const Image& a, const Image& b);
// 10 log10(255^2 / mse); identical images give kPsnrInfinity.
double psnr_from_mse(double mse);
double psnr(const Image& a, const Image& b);

struct NamedImage {
  std::string id;
  Image image;
};

// Every PGM/PNG in dir, sorted by file name; id is the file stem.
std::vector<NamedImage> load_images(const std::filesystem::path& dir);

inline const std::vector<double> kDefaultBetas = {1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0};
inline const std::string kMeanRowId = "mean";

struct RDPoint {
  std::string image;
  double beta = 1.0;
  double rate_bpp_estimated = 0.0;  // per-map plug-in entropy
  double rate_bpp_actual = 0.0;     // coded file size, header included
  double mse = 0.0;
  double psnr_db = 0.0;
};

// Rows per (image, beta), then one kMeanRowId row per beta averaging the
// image rows (PSNR is the mean of per-image PSNR).
std::vector<RDPoint> rd_sweep(const Model& model, std::span<const NamedImage> images,
                              std::span<const double> betas);
void write_rd_csv(const std::vector<RDPoint>& rows, const std::filesystem::path& path);
std::vector<RDPoint> read_rd_csv(const std::filesystem::path& path);

// Adjacent beta pairs where estimated rate rises or MSE falls.
struct MonotonicityReport {
  std::string image;
  int points = 0;
  int inversions = 0;
  bool ok() const { return inversions <= 1; }
};
std::vector<MonotonicityReport> check_monotonicity(const std::vector<RDPoint>& rows);

struct MapFit {
  int map = 0;
  double mu_bar = 0.0;
  double delta = 1.0;
  double mu = 0.0;
  double b = 0.0;
  double fit_error = 0.0;  // L1 between normed histogram and fitted bin masses
  std::size_t samples = 0;
  bool degenerate = false;
  bool outlier = false;  // fit_error above twice the median
};

struct MapHistogram {
  int map = 0;
  double start = 0.0;  // left edge of bin 0
  double bin_width = 0.0;
  std::vector<double> density;  // normed: integrates to 1
  std::vector<double> fitted;   // fitted Laplace mass / bin_width
};

struct LatentReport {
  std::vector<MapFit> maps;
  std::vector<MapHistogram> histograms;  // non-degenerate maps only

  std::vector<double> scales() const;  // b of every non-degenerate map
};

inline constexpr std::size_t kMaxHistogramBins = 4096;

// Fits one map; bin width delta / 4, widened if more than kMaxHistogramBins
// would be needed.
MapFit fit_map(std::span<const double> samples, double delta, MapHistogram* histogram = nullptr);
LatentReport latent_report(std::span<const std::vector<double>> per_map_samples,
                           const Eigen::VectorXd& delta, const Eigen::VectorXd& mu_bar);
LatentReport latent_report(const Model& model, std::span<const NamedImage> images);

// Writes path (fit table), <stem>_hist.csv and <stem>_scales.csv.
void write_latent_report(const LatentReport& report, const std::filesystem::path& path);

struct ProbeSpec {
  int map = 0;
  int row = 0;
  int col = 0;
  double alpha = 0.0;
};

struct ProbeResult {
  Tensor probe;     // decoded float planes
  Tensor baseline;
  Image probe_image;
  Image baseline_image;
  int crop_row = 0;  // top-left of the locality window
  int crop_col = 0;
  int crop_size = 0;
  double locality = 0.0;  // difference energy inside the window / total; 0 when no difference
};

// Latent of latent_rows x latent_cols with every map at mu_bar, one
// coefficient at alpha, quantized at beta = 1 and decoded.
ProbeResult probe(const Model& model, const ProbeSpec& spec, int latent_rows, int latent_cols);

// Center of the decoder footprint of latent position i along one axis.
int footprint_center(const ArchConfig& arch, int latent_index);

// Pearson correlation of two probe differences over the locality window.
double probe_correlation(const ProbeResult& plus, const ProbeResult& minus);

struct RDCurve {
  std::string name;
  std::vector<double> rate;  // increasing
  std::vector<double> psnr;
};

// Mean rows of one sweep, (rate_bpp_actual, psnr_db) sorted by rate.
RDCurve sweep_curve(const std::string& name, const std::vector<RDPoint>& rows);
// Mean rows at beta = 1 of several fixed-step runs merged into one curve.
RDCurve fixed_step_curve(const std::string& name, std::span<const std::vector<RDPoint>> runs);

double interpolate(const RDCurve& curve, double rate);

struct CurveGap {
  std::string a;
  std::string b;
  double rate_lo = 0.0;
  double rate_hi = 0.0;
  double mean_gap_db = 0.0;
  double max_gap_db = 0.0;
  std::vector<double> grid;
  std::vector<double> psnr_a;
  std::vector<double> psnr_b;
};

inline constexpr int kGapGridPoints = 101;

// |PSNR_a - PSNR_b| on an even grid over the shared rate range; kDomain
// error when the ranges do not overlap.
CurveGap compare_curves(const RDCurve& a, const RDCurve& b);

// Pairwise gaps between all curves; writes path (summary) and
// <stem>_grid.csv (per grid point).
std::vector<CurveGap> compare_cases(const std::vector<RDCurve>& curves);
void write_gaps(const std::vector<CurveGap>& gaps, const std::filesystem::path& path);

}  // namespace ltc
