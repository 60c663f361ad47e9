// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "lvg/error.hpp"

namespace lvg {

Image read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error(Errc::kIo, "cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error(Errc::kIo, "cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.empty()) throw Error(Errc::kInvalidArgument, "cannot write empty image to " + path.string());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw Error(Errc::kIo, "cannot write PNG " + path.string() + ": " + img.message);
  }
}

Image center_crop_resize(const Image& image, int size) {
  if (size <= 0) throw Error(Errc::kInvalidArgument, "target size must be positive");
  if (image.empty()) throw Error(Errc::kInvalidArgument, "cannot resize an empty image");
  if (image.width == size && image.height == size) return image;

  const int side = std::min(image.width, image.height);
  const int x0 = (image.width - side) / 2;
  const int y0 = (image.height - side) / 2;
  const double scale = static_cast<double>(side) / size;

  Image out(size, size);
  for (int y = 0; y < size; ++y) {
    // Pixel-center mapping.
    const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, side - 1.0);
    const int iy = static_cast<int>(std::floor(sy));
    const int iy1 = std::min(iy + 1, side - 1);
    const double fy = sy - iy;
    for (int x = 0; x < size; ++x) {
      const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, side - 1.0);
      const int ix = static_cast<int>(std::floor(sx));
      const int ix1 = std::min(ix + 1, side - 1);
      const double fx = sx - ix;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = (1 - fx) * image.at(x0 + ix, y0 + iy, c) + fx * image.at(x0 + ix1, y0 + iy, c);
        const double bot = (1 - fx) * image.at(x0 + ix, y0 + iy1, c) + fx * image.at(x0 + ix1, y0 + iy1, c);
        const double v = (1 - fy) * top + fy * bot;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(Errc::kNotFound, "frame directory does not exist: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", index);
  return buf;
}

}  // namespace lvg
