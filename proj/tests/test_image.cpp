#include <gtest/gtest.h>

#include <png.h>

#include <cstring>
#include <filesystem>

#include "ltc/byte_io.hpp"
#include "ltc/image.hpp"

using namespace ltc;
namespace fs = std::filesystem;

namespace {

fs::path temp(const std::string& name) { return fs::temp_directory_path() / name; }

// Writes a PNG through libpng's simplified API.
void write_png(const fs::path& path, int w, int h, std::uint32_t format, const void* pixels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = std::uint32_t(w);
  img.height = std::uint32_t(h);
  img.format = format;
  ASSERT_TRUE(png_image_write_to_file(&img, path.c_str(), 0, pixels, 0, nullptr)) << img.message;
}

void expect_format_error(const std::function<void()>& f, const std::string& fragment) {
  try {
    f();
    ADD_FAILURE() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Pgm, ParsesHandHeader) {
  std::string text = "P5\n4 4\n255\n";
  for (int i = 0; i < 16; ++i) text.push_back(char(i * 10));
  const Image img = parse_pgm(std::vector<std::uint8_t>(text.begin(), text.end()));
  EXPECT_EQ(img.rows(), 4);
  EXPECT_EQ(img.cols(), 4);
  EXPECT_EQ(img(1, 2), 60);
}

TEST(Pgm, CommentsAndRectangles) {
  std::string text = "P5 # comment\n3 # width\n2\n255\n";
  for (int i = 0; i < 6; ++i) text.push_back(char(i));
  const Image img = parse_pgm(std::vector<std::uint8_t>(text.begin(), text.end()));
  EXPECT_EQ(img.rows(), 2);
  EXPECT_EQ(img.cols(), 3);
  EXPECT_EQ(img(1, 0), 3);
}

TEST(Pgm, WriteReadRoundTrip) {
  Image img(5, 7);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = std::uint8_t(i * 37);
  const auto path = temp("ltc_roundtrip.pgm");
  write_pgm(img, path);
  EXPECT_EQ(read_pgm(path), img);
  EXPECT_EQ(read_image(path), img);
  fs::remove(path);
}

TEST(Pgm, Errors) {
  auto bytes = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  expect_format_error([&] { parse_pgm(bytes("P2\n1 1\n255\n0")); }, "P5");
  expect_format_error([&] { parse_pgm(bytes("P5\n2 2\n65535\n")); }, "bit depth");
  expect_format_error([&] { parse_pgm(bytes("P5\n2 2\n255\n\x01")); }, "truncated");
  expect_format_error([&] { parse_pgm(bytes("P5\n2")); }, "header");
}

TEST(Png, GrayAndRgbToLuminance) {
  const std::uint8_t rgb[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 128, 128};
  const auto path = temp("ltc_rgb.png");
  write_png(path, 2, 2, PNG_FORMAT_RGB, rgb);
  const Image img = read_image(path);
  EXPECT_EQ(img(0, 0), 76);
  EXPECT_EQ(img(0, 1), 150);
  EXPECT_EQ(img(1, 0), 29);
  EXPECT_EQ(img(1, 1), 128);
  const std::uint8_t gray[] = {1, 2, 3, 4, 5, 6};
  write_png(path, 3, 2, PNG_FORMAT_GRAY, gray);
  const Image g = read_png(path);
  EXPECT_EQ(g(1, 2), 6);
  fs::remove(path);
}

TEST(Png, SixteenBitIsRejected) {
  const std::uint16_t pixels[] = {1000, 2000, 3000, 4000};
  const auto path = temp("ltc_16.png");
  write_png(path, 2, 2, PNG_FORMAT_LINEAR_Y, pixels);
  expect_format_error([&] { read_image(path); }, "bit depth");
  fs::remove(path);
}

TEST(Luminance, Bt601) {
  EXPECT_EQ(luminance(255, 0, 0), 76);
  EXPECT_EQ(luminance(255, 255, 255), 255);
  EXPECT_EQ(luminance(0, 0, 0), 0);
}

TEST(ReadImage, UnknownFormat) {
  const auto path = temp("ltc_unknown.bin");
  const std::vector<std::uint8_t> junk = {'J', 'U', 'N', 'K'};
  write_file(path, junk);
  expect_format_error([&] { read_image(path); }, "unsupported");
  fs::remove(path);
}

TEST(ReflectPad, MirrorsWithoutRepeatingEdge) {
  Image img(2, 3);
  img << 1, 2, 3, 4, 5, 6;
  const Image p = reflect_pad(img, 2, 1);
  ASSERT_EQ(p.rows(), 3);
  ASSERT_EQ(p.cols(), 5);
  EXPECT_EQ(p(0, 3), 2);
  EXPECT_EQ(p(0, 4), 1);
  EXPECT_EQ(p(2, 0), 1);
  EXPECT_EQ(p(2, 4), 1);
  const Image one = Image::Constant(1, 1, 9);
  EXPECT_EQ(reflect_pad(one, 3, 3), Image::Constant(4, 4, 9));
}

TEST(Conversion, ClampAndRound) {
  Tensor t(Shape{1, 1, 1, 5});
  t[0] = -3.0;
  t[1] = 12.5;
  t[2] = 12.49;
  t[3] = 300.0;
  t[4] = 254.6;
  const Image img = to_image(t);
  EXPECT_EQ(img(0, 0), 0);
  EXPECT_EQ(img(0, 1), 13);
  EXPECT_EQ(img(0, 2), 12);
  EXPECT_EQ(img(0, 3), 255);
  EXPECT_EQ(img(0, 4), 255);
  EXPECT_EQ(to_tensor(img)(0, 0, 0, 1), 13.0);
}
