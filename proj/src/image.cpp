#include "ltc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <string>

#include "ltc/byte_io.hpp"

namespace ltc {
namespace {

// Reads one header token of a netpbm file, skipping whitespace and comments.
std::size_t pgm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  for (;;) {
    if (pos >= bytes.size()) fail(ErrorKind::kFormat, "malformed PGM header: truncated");
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0;
  std::size_t digits = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (++digits > 9) fail(ErrorKind::kFormat, "malformed PGM header: number too large");
    ++pos;
  }
  if (digits == 0) fail(ErrorKind::kFormat, "malformed PGM header: expected a number");
  return value;
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Image parse_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    fail(ErrorKind::kFormat, "malformed PGM header: missing P5 magic");
  }
  std::size_t pos = 2;
  const std::size_t width = pgm_token(bytes, pos);
  const std::size_t height = pgm_token(bytes, pos);
  const std::size_t maxval = pgm_token(bytes, pos);
  if (width == 0 || height == 0) fail(ErrorKind::kFormat, "PGM has zero extent");
  if (maxval != 255) {
    fail(ErrorKind::kFormat, "unsupported PGM bit depth: maxval " + std::to_string(maxval));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    fail(ErrorKind::kFormat, "malformed PGM header: no separator before raster");
  }
  ++pos;
  if (bytes.size() - pos < width * height) fail(ErrorKind::kFormat, "truncated PGM raster");
  Image image(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width));
  std::memcpy(image.data(), bytes.data() + pos, width * height);
  return image;
}

std::vector<std::uint8_t> serialize_pgm(const Image& image) {
  ByteWriter w;
  w.raw("P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n");
  w.raw(std::span<const std::uint8_t>(image.data(), static_cast<std::size_t>(image.size())));
  return std::move(w.bytes());
}

Image read_pgm(const std::filesystem::path& path) { return parse_pgm(read_file(path)); }

void write_pgm(const Image& image, const std::filesystem::path& path) {
  write_file(path, serialize_pgm(image));
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    fail(ErrorKind::kFormat, "cannot read PNG " + path.string() + ": " + png.message);
  }
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    fail(ErrorKind::kFormat, "unsupported PNG bit depth (16-bit): " + path.string());
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    fail(ErrorKind::kFormat, "cannot decode PNG " + path.string() + ": " + message);
  }
  Image image(static_cast<Eigen::Index>(png.height), static_cast<Eigen::Index>(png.width));
  if (!color) {
    std::memcpy(image.data(), buffer.data(), buffer.size());
  } else {
    for (Eigen::Index i = 0; i < image.size(); ++i) {
      const std::uint8_t* px = buffer.data() + 3 * i;
      image.data()[i] = luminance(px[0], px[1], px[2]);
    }
  }
  return image;
}

Image read_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  static constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return parse_pgm(bytes);
  fail(ErrorKind::kFormat, "unsupported image format: " + path.string());
}

bool is_supported_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".png";
}

Image reflect_pad(const Image& image, int pad_right, int pad_bottom) {
  const Eigen::Index rows = image.rows();
  const Eigen::Index cols = image.cols();
  Image out(rows + pad_bottom, cols + pad_right);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Eigen::Index sr = reflect_index(r, rows);
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = image(sr, reflect_index(c, cols));
  }
  return out;
}

Tensor to_tensor(const Image& image) {
  Tensor t(Shape{1, 1, image.rows(), image.cols()});
  t.plane(0, 0) = image.cast<double>();
  return t;
}

Image to_image(const Tensor& plane) {
  const Shape& s = plane.shape();
  if (s.n != 1 || s.c != 1) fail(ErrorKind::kDimension, "expected a single plane, got " + s.str());
  Image image(s.h, s.w);
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const double v = std::clamp(plane[i], 0.0, 255.0);
    image.data()[i] = static_cast<std::uint8_t>(std::floor(v + 0.5));
  }
  return image;
}

}  // namespace ltc
