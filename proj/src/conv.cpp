#include "conv.hpp"

#include <algorithm>

namespace ltc::kernels {

void im2col(const double* image, Eigen::Index channels, Eigen::Index height, Eigen::Index width,
            const Window& window, RowMatrix& cols) {
  const Eigen::Index k = window.kernel;
  const Eigen::Index positions = window.grid_h * window.grid_w;
  cols.resize(channels * k * k, positions);
  for (Eigen::Index c = 0; c < channels; ++c) {
    const double* plane = image + c * height * width;
    for (Eigen::Index ky = 0; ky < k; ++ky) {
      for (Eigen::Index kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((c * k + ky) * k + kx) * positions;
        for (Eigen::Index oy = 0; oy < window.grid_h; ++oy) {
          const Eigen::Index iy = oy * window.stride - window.pad + ky;
          double* out = row + oy * window.grid_w;
          if (iy < 0 || iy >= height) {
            std::fill(out, out + window.grid_w, 0.0);
            continue;
          }
          const double* src = plane + iy * width;
          for (Eigen::Index ox = 0; ox < window.grid_w; ++ox) {
            const Eigen::Index ix = ox * window.stride - window.pad + kx;
            out[ox] = (ix >= 0 && ix < width) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const RowMatrix& cols, Eigen::Index channels, Eigen::Index height, Eigen::Index width,
            const Window& window, double* image) {
  const Eigen::Index k = window.kernel;
  const Eigen::Index positions = window.grid_h * window.grid_w;
  std::fill(image, image + channels * height * width, 0.0);
  for (Eigen::Index c = 0; c < channels; ++c) {
    double* plane = image + c * height * width;
    for (Eigen::Index ky = 0; ky < k; ++ky) {
      for (Eigen::Index kx = 0; kx < k; ++kx) {
        const double* row = cols.data() + ((c * k + ky) * k + kx) * positions;
        for (Eigen::Index oy = 0; oy < window.grid_h; ++oy) {
          const Eigen::Index iy = oy * window.stride - window.pad + ky;
          if (iy < 0 || iy >= height) continue;
          const double* in = row + oy * window.grid_w;
          double* dst = plane + iy * width;
          for (Eigen::Index ox = 0; ox < window.grid_w; ++ox) {
            const Eigen::Index ix = ox * window.stride - window.pad + kx;
            if (ix >= 0 && ix < width) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

Eigen::Index conv_extent(Eigen::Index in, Eigen::Index kernel, int stride, int pad) {
  const Eigen::Index span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

Eigen::Index tconv_extent(Eigen::Index in, Eigen::Index kernel, int stride, int pad,
                          int output_pad) {
  return (in - 1) * stride - 2 * pad + kernel + output_pad;
}

}  // namespace ltc::kernels
