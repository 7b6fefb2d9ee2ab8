#include "ltc/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ltc/bitstream.hpp"
#include "ltc/entropy.hpp"
#include "ltc/quantization.hpp"

namespace ltc {

double mse(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::kDimension, "image extents differ: " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                    "x" + std::to_string(b.cols()));
  }
  if (a.size() == 0) fail(ErrorKind::kDimension, "empty image");
  return (a.cast<double>() - b.cast<double>()).array().square().mean();
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

std::vector<NamedImage> load_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> out;
  for (const auto& f : files) out.push_back({f.stem().string(), read_image(f)});
  if (out.empty()) fail(ErrorKind::kIo, "no PGM/PNG images in " + dir.string());
  return out;
}

std::vector<RDPoint> rd_sweep(const Model& model, std::span<const NamedImage> images,
                              std::span<const double> betas) {
  if (betas.empty()) fail(ErrorKind::kUsage, "empty beta set");
  std::vector<RDPoint> rows;
  for (const NamedImage& img : images) {
    const double pixels = double(img.image.size());
    for (double beta : betas) {
      const EncodedImage enc = encode_image_detailed(img.image, model, beta);
      const Eigen::VectorXd h = empirical_entropy(enc.symbols);
      const double coefficients = double(enc.symbols.shape().n * enc.symbols.shape().plane());
      const Image rec = decode_image(enc.bytes, model);
      RDPoint p;
      p.image = img.id;
      p.beta = beta;
      p.rate_bpp_estimated = h.sum() * coefficients / pixels;
      p.rate_bpp_actual = double(enc.bytes.size()) * 8.0 / pixels;
      p.mse = mse(img.image, rec);
      p.psnr_db = psnr_from_mse(p.mse);
      rows.push_back(p);
    }
  }
  const std::size_t per_beta = rows.size();
  for (std::size_t j = 0; j < betas.size(); ++j) {
    RDPoint mean;
    mean.image = kMeanRowId;
    mean.beta = betas[j];
    double count = 0.0;
    for (std::size_t r = j; r < per_beta; r += betas.size()) {
      mean.rate_bpp_estimated += rows[r].rate_bpp_estimated;
      mean.rate_bpp_actual += rows[r].rate_bpp_actual;
      mean.mse += rows[r].mse;
      mean.psnr_db += rows[r].psnr_db;
      count += 1.0;
    }
    if (count == 0.0) continue;
    mean.rate_bpp_estimated /= count;
    mean.rate_bpp_actual /= count;
    mean.mse /= count;
    mean.psnr_db /= count;
    rows.push_back(mean);
  }
  return rows;
}

void write_rd_csv(const std::vector<RDPoint>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "image,beta,rate_bpp_estimated,rate_bpp_actual,mse,psnr_db\n" << std::setprecision(17);
  for (const RDPoint& p : rows) {
    out << p.image << ',' << p.beta << ',' << p.rate_bpp_estimated << ',' << p.rate_bpp_actual << ','
        << p.mse << ',' << p.psnr_db << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

double csv_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<RDPoint> read_rd_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("image,beta,", 0) != 0) {
    fail(ErrorKind::kFormat, path.string() + ": not an RD table");
  }
  std::vector<RDPoint> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected 6 fields");
    RDPoint p;
    p.image = f[0];
    p.beta = csv_number(f[1], path, line_no);
    p.rate_bpp_estimated = csv_number(f[2], path, line_no);
    p.rate_bpp_actual = csv_number(f[3], path, line_no);
    p.mse = csv_number(f[4], path, line_no);
    p.psnr_db = csv_number(f[5], path, line_no);
    rows.push_back(p);
  }
  return rows;
}

std::vector<MonotonicityReport> check_monotonicity(const std::vector<RDPoint>& rows) {
  std::map<std::string, std::vector<const RDPoint*>> by_image;
  std::vector<std::string> order;
  for (const RDPoint& p : rows) {
    if (p.image == kMeanRowId) continue;
    auto [it, fresh] = by_image.try_emplace(p.image);
    if (fresh) order.push_back(p.image);
    it->second.push_back(&p);
  }
  std::vector<MonotonicityReport> out;
  for (const std::string& id : order) {
    auto& pts = by_image[id];
    std::stable_sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->beta < b->beta; });
    MonotonicityReport r{id, int(pts.size()), 0};
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i]->rate_bpp_estimated > pts[i - 1]->rate_bpp_estimated || pts[i]->mse < pts[i - 1]->mse) {
        ++r.inversions;
      }
    }
    out.push_back(r);
  }
  return out;
}

std::vector<double> LatentReport::scales() const {
  std::vector<double> out;
  for (const MapFit& f : maps) {
    if (!f.degenerate) out.push_back(f.b);
  }
  return out;
}

MapFit fit_map(std::span<const double> samples, double delta, MapHistogram* histogram) {
  MapFit fit;
  fit.delta = delta;
  fit.samples = samples.size();
  if (samples.size() < 2) {
    fit.degenerate = true;
    return fit;
  }
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi - lo > 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi))))) {
    fit.degenerate = true;
    return fit;
  }
  const LaplaceParams lp = fit_laplace(samples);
  fit.mu = lp.mu;
  fit.b = lp.b;
  if (!(fit.b > 1e-12)) {
    fit.degenerate = true;
    return fit;
  }

  double width = delta / 4.0;
  const double span = hi - lo;
  if (span / width + 1.0 > double(kMaxHistogramBins)) width = span / double(kMaxHistogramBins - 1);
  const double start = std::floor(lo / width) * width;
  const std::size_t bins = std::size_t(std::floor((hi - start) / width)) + 1;
  std::vector<double> counts(bins, 0.0);
  for (double v : samples) {
    const std::size_t k = std::min(bins - 1, std::size_t(std::floor((v - start) / width)));
    counts[k] += 1.0;
  }
  const double n = double(samples.size());
  double l1 = 0.0;
  double covered = 0.0;
  std::vector<double> density(bins), fitted(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double a = start + double(k) * width;
    const double mass = laplace_mass(a, a + width, fit.mu, fit.b);
    covered += mass;
    l1 += std::abs(counts[k] / n - mass);
    density[k] = counts[k] / n / width;
    fitted[k] = mass / width;
  }
  fit.fit_error = l1 + std::max(0.0, 1.0 - covered);
  if (histogram) {
    histogram->start = start;
    histogram->bin_width = width;
    histogram->density = std::move(density);
    histogram->fitted = std::move(fitted);
  }
  return fit;
}

LatentReport latent_report(std::span<const std::vector<double>> per_map_samples,
                           const Eigen::VectorXd& delta, const Eigen::VectorXd& mu_bar) {
  const Eigen::Index m = Eigen::Index(per_map_samples.size());
  if (delta.size() != m || mu_bar.size() != m) fail(ErrorKind::kDimension, "map count mismatch");
  LatentReport report;
  for (Eigen::Index i = 0; i < m; ++i) {
    MapHistogram hist;
    MapFit fit = fit_map(per_map_samples[std::size_t(i)], delta[i], &hist);
    fit.map = int(i);
    fit.mu_bar = mu_bar[i];
    if (!fit.degenerate) {
      hist.map = int(i);
      report.histograms.push_back(std::move(hist));
    }
    report.maps.push_back(fit);
  }
  std::vector<double> errors;
  for (const MapFit& f : report.maps) {
    if (!f.degenerate) errors.push_back(f.fit_error);
  }
  if (!errors.empty()) {
    std::sort(errors.begin(), errors.end());
    const std::size_t n = errors.size();
    const double median = n % 2 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
    for (MapFit& f : report.maps) f.outlier = !f.degenerate && f.fit_error > 2.0 * median;
  }
  return report;
}

LatentReport latent_report(const Model& model, std::span<const NamedImage> images) {
  const int stride = model.arch.total_stride();
  std::vector<std::vector<double>> samples(std::size_t(model.arch.m));
  for (const NamedImage& img : images) {
    const int pr = (stride - int(img.image.cols()) % stride) % stride;
    const int pb = (stride - int(img.image.rows()) % stride) % stride;
    const Tensor y = encode_transform(to_tensor(reflect_pad(img.image, pr, pb)), model);
    for (Eigen::Index c = 0; c < y.shape().c; ++c) {
      const auto plane = y.plane(0, c);
      auto& dst = samples[std::size_t(c)];
      dst.insert(dst.end(), plane.data(), plane.data() + plane.size());
    }
  }
  return latent_report(samples, model.params.log_delta.data().exp().matrix(),
                       model.params.mu_bar.data().matrix());
}

namespace {

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

}  // namespace

void write_latent_report(const LatentReport& report, const std::filesystem::path& path) {
  std::ofstream table(path);
  if (!table) fail(ErrorKind::kIo, "cannot write " + path.string());
  table << "map,mu_bar,delta,mu,b,fit_error,samples,degenerate,outlier\n" << std::setprecision(17);
  for (const MapFit& f : report.maps) {
    table << f.map << ',' << f.mu_bar << ',' << f.delta << ',' << f.mu << ',' << f.b << ',' << f.fit_error
          << ',' << f.samples << ',' << int(f.degenerate) << ',' << int(f.outlier) << '\n';
  }

  const auto hist_path = sibling(path, "_hist.csv");
  std::ofstream hist(hist_path);
  if (!hist) fail(ErrorKind::kIo, "cannot write " + hist_path.string());
  hist << "map,bin_left,bin_width,density,fitted\n" << std::setprecision(17);
  for (const MapHistogram& h : report.histograms) {
    for (std::size_t k = 0; k < h.density.size(); ++k) {
      hist << h.map << ',' << h.start + double(k) * h.bin_width << ',' << h.bin_width << ','
           << h.density[k] << ',' << h.fitted[k] << '\n';
    }
  }

  const auto scales_path = sibling(path, "_scales.csv");
  std::ofstream scales(scales_path);
  if (!scales) fail(ErrorKind::kIo, "cannot write " + scales_path.string());
  scales << "map,b\n" << std::setprecision(17);
  for (const MapFit& f : report.maps) {
    if (!f.degenerate) scales << f.map << ',' << f.b << '\n';
  }
}

int footprint_center(const ArchConfig& arch, int latent_index) {
  // tconv input i covers outputs i s - p + [0, k).
  double center = latent_index;
  for (std::size_t l = arch.layers.size(); l-- > 0;) {
    const LayerSpec& s = arch.layers[l];
    center = center * s.stride - s.pad + 0.5 * (s.kernel - 1);
  }
  return int(std::lround(center));
}

ProbeResult probe(const Model& model, const ProbeSpec& spec, int latent_rows, int latent_cols) {
  const int m = model.arch.m;
  if (latent_rows < 1 || latent_cols < 1) fail(ErrorKind::kUsage, "probe latent extent must be positive");
  if (spec.map < 0 || spec.map >= m) {
    fail(ErrorKind::kUsage, "probe map " + std::to_string(spec.map) + " outside [0, " + std::to_string(m) + ")");
  }
  if (spec.row < 0 || spec.row >= latent_rows || spec.col < 0 || spec.col >= latent_cols) {
    fail(ErrorKind::kUsage, "probe position outside the " + std::to_string(latent_rows) + "x" +
                                std::to_string(latent_cols) + " latent");
  }
  if (!std::isfinite(spec.alpha)) fail(ErrorKind::kUsage, "probe amplitude must be finite");

  const QuantSpec q = QuantSpec::from_model(model.params, 1.0);
  Tensor base(Shape{1, m, latent_rows, latent_cols});
  for (int c = 0; c < m; ++c) base.plane(0, c).setConstant(q.mu_bar[c]);
  Tensor probed = base;
  probed(0, spec.map, spec.row, spec.col) = spec.alpha;

  ProbeResult r;
  r.baseline = decode_transform(dequantize(quantize(base, q), q), model);
  r.probe = decode_transform(dequantize(quantize(probed, q), q), model);
  r.baseline_image = to_image(r.baseline);
  r.probe_image = to_image(r.probe);

  const int rows = int(r.probe.shape().h);
  const int cols = int(r.probe.shape().w);
  const int k = 4 * model.arch.total_stride();
  r.crop_size = k;
  auto place = [k](int center, int extent) {
    if (extent <= k) return 0;
    return std::clamp(center - k / 2, 0, extent - k);
  };
  r.crop_row = place(footprint_center(model.arch, spec.row), rows);
  r.crop_col = place(footprint_center(model.arch, spec.col), cols);

  const Eigen::ArrayXXd diff = (r.probe.plane(0, 0) - r.baseline.plane(0, 0)).array();
  const double total = diff.square().sum();
  const int h = std::min(k, rows);
  const int w = std::min(k, cols);
  const double inside = diff.block(r.crop_row, r.crop_col, h, w).square().sum();
  r.locality = total > 0.0 ? inside / total : 0.0;
  return r;
}

double probe_correlation(const ProbeResult& plus, const ProbeResult& minus) {
  if (plus.crop_row != minus.crop_row || plus.crop_col != minus.crop_col ||
      plus.probe.shape() != minus.probe.shape()) {
    fail(ErrorKind::kUsage, "probes differ in geometry");
  }
  const int h = std::min<int>(plus.crop_size, int(plus.probe.shape().h));
  const int w = std::min<int>(plus.crop_size, int(plus.probe.shape().w));
  auto window = [&](const ProbeResult& p) {
    return Eigen::ArrayXXd((p.probe.plane(0, 0) - p.baseline.plane(0, 0))
                               .block(plus.crop_row, plus.crop_col, h, w)
                               .array());
  };
  const Eigen::ArrayXXd a = window(plus);
  const Eigen::ArrayXXd b = window(minus);
  const Eigen::ArrayXXd ac = a - a.mean();
  const Eigen::ArrayXXd bc = b - b.mean();
  const double denom = std::sqrt(ac.square().sum() * bc.square().sum());
  return denom > 0.0 ? (ac * bc).sum() / denom : 0.0;
}

namespace {

RDCurve make_curve(const std::string& name, std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  RDCurve c;
  c.name = name;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    double psnr_sum = 0.0;
    while (j < pts.size() && pts[j].first == pts[i].first) psnr_sum += pts[j++].second;
    c.rate.push_back(pts[i].first);
    c.psnr.push_back(psnr_sum / double(j - i));
    i = j;
  }
  if (c.rate.empty()) fail(ErrorKind::kUsage, "RD curve '" + name + "' has no mean rows");
  return c;
}

}  // namespace

RDCurve sweep_curve(const std::string& name, const std::vector<RDPoint>& rows) {
  std::vector<std::pair<double, double>> pts;
  for (const RDPoint& p : rows) {
    if (p.image == kMeanRowId) pts.emplace_back(p.rate_bpp_actual, p.psnr_db);
  }
  return make_curve(name, std::move(pts));
}

RDCurve fixed_step_curve(const std::string& name, std::span<const std::vector<RDPoint>> runs) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& rows : runs) {
    for (const RDPoint& p : rows) {
      if (p.image == kMeanRowId && p.beta == 1.0) pts.emplace_back(p.rate_bpp_actual, p.psnr_db);
    }
  }
  return make_curve(name, std::move(pts));
}

double interpolate(const RDCurve& curve, double rate) {
  const auto& r = curve.rate;
  if (rate < r.front() || rate > r.back()) {
    fail(ErrorKind::kDomain, "rate " + std::to_string(rate) + " outside curve '" + curve.name + "'");
  }
  const auto it = std::upper_bound(r.begin(), r.end(), rate);
  if (it == r.end()) return curve.psnr.back();
  const std::size_t j = std::size_t(it - r.begin());
  const double t = (rate - r[j - 1]) / (r[j] - r[j - 1]);
  return curve.psnr[j - 1] + t * (curve.psnr[j] - curve.psnr[j - 1]);
}

CurveGap compare_curves(const RDCurve& a, const RDCurve& b) {
  CurveGap g;
  g.a = a.name;
  g.b = b.name;
  g.rate_lo = std::max(a.rate.front(), b.rate.front());
  g.rate_hi = std::min(a.rate.back(), b.rate.back());
  if (!(g.rate_lo < g.rate_hi)) {
    fail(ErrorKind::kDomain, "rate ranges of '" + a.name + "' and '" + b.name + "' do not overlap");
  }
  double total = 0.0;
  for (int i = 0; i < kGapGridPoints; ++i) {
    const double rate = i == kGapGridPoints - 1
                            ? g.rate_hi
                            : g.rate_lo + (g.rate_hi - g.rate_lo) * double(i) / double(kGapGridPoints - 1);
    const double pa = interpolate(a, rate);
    const double pb = interpolate(b, rate);
    const double gap = std::abs(pa - pb);
    g.grid.push_back(rate);
    g.psnr_a.push_back(pa);
    g.psnr_b.push_back(pb);
    total += gap;
    g.max_gap_db = std::max(g.max_gap_db, gap);
  }
  g.mean_gap_db = total / kGapGridPoints;
  return g;
}

std::vector<CurveGap> compare_cases(const std::vector<RDCurve>& curves) {
  if (curves.size() < 2) fail(ErrorKind::kUsage, "compare needs at least two curves");
  std::vector<CurveGap> out;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    for (std::size_t j = i + 1; j < curves.size(); ++j) out.push_back(compare_curves(curves[i], curves[j]));
  }
  return out;
}

void write_gaps(const std::vector<CurveGap>& gaps, const std::filesystem::path& path) {
  std::ofstream summary(path);
  if (!summary) fail(ErrorKind::kIo, "cannot write " + path.string());
  summary << "curve_a,curve_b,rate_lo,rate_hi,mean_gap_db,max_gap_db\n" << std::setprecision(17);
  for (const CurveGap& g : gaps) {
    summary << g.a << ',' << g.b << ',' << g.rate_lo << ',' << g.rate_hi << ',' << g.mean_gap_db << ','
            << g.max_gap_db << '\n';
  }
  const auto grid_path = sibling(path, "_grid.csv");
  std::ofstream grid(grid_path);
  if (!grid) fail(ErrorKind::kIo, "cannot write " + grid_path.string());
  grid << "curve_a,curve_b,rate_bpp,psnr_a,psnr_b,gap_db\n" << std::setprecision(17);
  for (const CurveGap& g : gaps) {
    for (std::size_t i = 0; i < g.grid.size(); ++i) {
      grid << g.a << ',' << g.b << ',' << g.grid[i] << ',' << g.psnr_a[i] << ',' << g.psnr_b[i] << ','
           << std::abs(g.psnr_a[i] - g.psnr_b[i]) << '\n';
    }
  }
}

}  // namespace ltc
