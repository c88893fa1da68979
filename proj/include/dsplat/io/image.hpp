// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace dsplat::io {

class ImageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Interleaved RGB image (H x W x 3) with values nominally in [0, 1].
struct Image {
    int width  = 0;
    int height = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, float fill = 0.f);

    float &at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::size_t pixelCount() const { return static_cast<std::size_t>(width) * height; }

    bool operator==(const Image &other) const = default;
};

/// Nearest 8-bit level, clamped to [0, 255].
std::uint8_t toByte(float v);

/// Rounds every value to the 8-bit grid (what a PNG round trip would store).
Image quantize(const Image &img);

/// Reads an 8-bit (or 16-bit, downconverted) PNG as RGB; gray/alpha are expanded/dropped.
Image readPng(const std::filesystem::path &path);

/// Writes an 8-bit RGB PNG; values are clamped to [0, 1] first.
void writePng(const std::filesystem::path &path, const Image &img);

} // namespace dsplat::io
