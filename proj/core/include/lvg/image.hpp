// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lvg {

/// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  static constexpr int kChannels = 3;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }

  bool empty() const { return pixels.empty(); }
  bool operator==(const Image&) const = default;
};

/// Reads any PNG the system libpng understands and converts it to RGB8.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

/// Center-crops to a square and resamples bilinearly to size x size.
/// An input already at the target size is returned unchanged.
Image center_crop_resize(const Image& image, int size);

/// PNG files in `dir`, sorted by filename.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

/// Zero-padded six-digit frame name, e.g. 000042.png.
std::string frame_filename(std::size_t index);

}  // namespace lvg
