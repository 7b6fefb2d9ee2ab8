#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ltc/tensor.hpp"

namespace ltc {

// 8-bit luminance image, rows x cols.
using Image = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// BT.601 luma rounded to nearest: 0.299 R + 0.587 G + 0.114 B.
constexpr std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
}

Image parse_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_pgm(const Image& image);
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const Image& image, const std::filesystem::path& path);

// 8-bit gray, gray+alpha, RGB, RGBA or palette PNG, converted to luminance.
// 16-bit files are rejected.
Image read_png(const std::filesystem::path& path);

// Dispatches on file signature (P5 or PNG).
Image read_image(const std::filesystem::path& path);
bool is_supported_image(const std::filesystem::path& path);

// Mirror padding on the right and bottom edges (edge sample not repeated).
Image reflect_pad(const Image& image, int pad_right, int pad_bottom);

// (1, 1, rows, cols) tensor of pixel values in [0, 255].
Tensor to_tensor(const Image& image);
// Clamps to [0, 255] and rounds to nearest.
Image to_image(const Tensor& plane);

}  // namespace ltc
