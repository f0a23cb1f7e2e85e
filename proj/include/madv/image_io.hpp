#pragma once

#include <string>
#include <vector>

#include "madv/tensor.hpp"

namespace madv::io {

/// Writes a {C,H,W} image in [0,1] as an 8-bit PNG; 1-channel images are
/// written as grayscale. `scale` upsamples with nearest-neighbor for previews.
void write_png(const std::string& path, const Tensor& image, int scale = 1);

/// Horizontal strip of equally sized images with a thin separator, for the
/// side-by-side comparison figures.
Tensor hstack_images(const std::vector<Tensor>& images, int gap = 2, double gap_value = 1.0);

/// Vertical stack of equally sized images (rows of a grid).
Tensor vstack_images(const std::vector<Tensor>& images, int gap = 2, double gap_value = 1.0);

}  // namespace madv::io
