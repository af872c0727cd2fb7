#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "enfnet/tensor.hpp"

namespace enfnet {

/// Reads an 8-bit PNG into [1,C,H,W] with values scaled to [0,1]. Gray and
/// palette/colour files come back as C=1 or C=3; alpha is dropped.
inline Tensor read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw ValidationError("read_png: cannot decode '" + path + "': " + image.message);

  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  const int h = static_cast<int>(image.height);
  const int w = static_cast<int>(image.width);
  std::vector<uint8_t> buffer(static_cast<size_t>(h) * w * channels);
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ValidationError("read_png: cannot decode '" + path + "': " + image.message);
  }

  Tensor out(1, channels, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        out.at(0, c, y, x) = buffer[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0;
  return out;
}

/// Writes a [1,1,H,W] map in [0,1] as 8-bit grayscale, pixel = round(255 p).
inline void write_png_gray(const Tensor& map, const std::string& path) {
  require(map.n() == 1 && map.c() == 1,
          "write_png_gray: expected [1,1,H,W], got [" + map.shape_str() + "]");
  require(map.min() >= 0.0 && map.max() <= 1.0, "write_png_gray: values must lie in [0,1]");
  const int h = map.h(), w = map.w();
  std::vector<uint8_t> buffer(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      buffer[static_cast<size_t>(y) * w + x] =
          static_cast<uint8_t>(std::lround(255.0 * map.at(0, 0, y, x)));

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw ValidationError("write_png_gray: cannot write '" + path + "': " + image.message);
}

}  // namespace enfnet
