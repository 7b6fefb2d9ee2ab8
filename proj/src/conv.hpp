#pragma once

#include <Eigen/Core>

#include "ltc/tensor.hpp"

namespace ltc::kernels {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Window {
  Eigen::Index kernel;
  int stride;
  int pad;
  Eigen::Index grid_h;  // number of window positions per column
  Eigen::Index grid_w;
};

// Unfolds one (c, h, w) sample into a (c*k*k, grid_h*grid_w) matrix of
// receptive fields. Out-of-image taps read as zero.
void im2col(const double* image, Eigen::Index channels, Eigen::Index height, Eigen::Index width,
            const Window& window, RowMatrix& cols);

// Adjoint of im2col: scatter-adds columns back onto a zeroed image.
void col2im(const RowMatrix& cols, Eigen::Index channels, Eigen::Index height, Eigen::Index width,
            const Window& window, double* image);

Eigen::Index conv_extent(Eigen::Index in, Eigen::Index kernel, int stride, int pad);
Eigen::Index tconv_extent(Eigen::Index in, Eigen::Index kernel, int stride, int pad,
                          int output_pad);

}  // namespace ltc::kernels
