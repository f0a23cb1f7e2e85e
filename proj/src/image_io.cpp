#include "madv/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "madv/nn.hpp"

namespace madv::io {

void write_png(const std::string& path, const Tensor& image, int scale) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_png: need {1|3,H,W}, got " + image.shape_str());
  }
  Tensor img = scale > 1 ? nn::resize_nearest(image, image.dim(1) * static_cast<std::size_t>(scale),
                                              image.dim(2) * static_cast<std::size_t>(scale))
                         : image;
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());

  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng error writing " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(w * c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double v = std::clamp(img.at(ch, y, x), 0.0, 1.0);
        row[x * c + ch] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

Tensor stack_images(const std::vector<Tensor>& images, int gap, double gap_value, bool horizontal) {
  if (images.empty()) throw DataError("stack_images: no images");
  const std::size_t c = images[0].dim(0), h = images[0].dim(1), w = images[0].dim(2);
  for (const Tensor& t : images) require_same_shape(images[0], t, "stack_images");
  const std::size_t g = static_cast<std::size_t>(gap);
  const std::size_t n = images.size();
  std::size_t out_h = horizontal ? h : n * h + (n - 1) * g;
  std::size_t out_w = horizontal ? n * w + (n - 1) * g : w;
  Tensor out = Tensor::full({c, out_h, out_w}, gap_value);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t oy = horizontal ? 0 : i * (h + g);
    std::size_t ox = horizontal ? i * (w + g) : 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          out.at(ch, oy + y, ox + x) = images[i].at(ch, y, x);
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor hstack_images(const std::vector<Tensor>& images, int gap, double gap_value) {
  return stack_images(images, gap, gap_value, true);
}

Tensor vstack_images(const std::vector<Tensor>& images, int gap, double gap_value) {
  return stack_images(images, gap, gap_value, false);
}

}  // namespace madv::io
