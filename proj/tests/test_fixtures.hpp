#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "enfnet/config.hpp"
#include "enfnet/image_png.hpp"
#include "enfnet/tensor.hpp"

namespace enfnet::testfix {

/// Tiny geometry for fast structural tests: 32x32 input, narrow channels.
inline Config tiny_config(int side_channels = 4) {
  Config c;
  c.net.input_size = 32;
  c.net.block_channels = {4, 4, 6, 6, 8};
  c.net.side_channels = side_channels;
  c.net.fuse_channels = side_channels;
  c.net.global_kernels = {1, 1, 1};
  c.train.epochs = 1;
  c.train.augment = false;
  return c;
}

/// Fresh scratch directory under the system temp root.
inline std::string scratch_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / ("enfnet_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

/// Bright centered square on a dark background, with a little deterministic
/// texture so the encoder has something to latch onto.
inline Tensor square_image(int size, double background = 0.08, double foreground = 0.95,
                           uint64_t seed = 7) {
  Tensor img(1, 3, size, size);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.04, 0.04);
  const int lo = size / 4, hi = 3 * size / 4;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const bool inside = y >= lo && y < hi && x >= lo && x < hi;
        double v = (inside ? foreground : background) + jitter(rng);
        img.at(0, c, y, x) = std::clamp(v, 0.0, 1.0);
      }
  return img;
}

inline Tensor square_mask(int size) {
  Tensor m(1, 1, size, size);
  const int lo = size / 4, hi = 3 * size / 4;
  for (int y = lo; y < hi; ++y)
    for (int x = lo; x < hi; ++x) m.at(0, 0, y, x) = 1.0;
  return m;
}

/// Writes a dataset of centered-square images/masks under root (images/ and
/// masks/), returning the root. Squares shift by one pixel per index so the
/// samples differ.
inline std::string write_square_dataset(const std::string& tag, int count, int size) {
  namespace fs = std::filesystem;
  std::string root = scratch_dir(tag);
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  for (int i = 0; i < count; ++i) {
    Tensor img = square_image(size, 0.08 + 0.01 * i, 0.95, 7 + static_cast<uint64_t>(i));
    Tensor gray(1, 1, size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) gray.at(0, 0, y, x) = img.at(0, 0, y, x);
    const std::string stem = "sample" + std::to_string(i);
    write_png_gray(gray, (fs::path(root) / "images" / (stem + ".png")).string());
    write_png_gray(square_mask(size), (fs::path(root) / "masks" / (stem + ".png")).string());
  }
  return root;
}

}  // namespace enfnet::testfix
