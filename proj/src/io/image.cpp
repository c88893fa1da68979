// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/io/image.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace dsplat::io {

Image::Image(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

std::uint8_t
toByte(float v) {
    const float c = std::clamp(v, 0.f, 1.f);
    return static_cast<std::uint8_t>(std::lround(c * 255.f));
}

Image
quantize(const Image &img) {
    Image out = img;
    for (float &v : out.data) {
        v = static_cast<float>(toByte(v)) / 255.f;
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

Image
readPng(const std::filesystem::path &path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw ImageError(fmt::format("{}: cannot open", path.string()));
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&image, fp.get())) {
        throw ImageError(fmt::format("{}: {}", path.string(), image.message));
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageError(fmt::format("{}: {}", path.string(), msg));
    }
    Image out(static_cast<int>(image.width), static_cast<int>(image.height));
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<float>(buffer[i]) / 255.f;
    }
    return out;
}

void
writePng(const std::filesystem::path &path, const Image &img) {
    if (img.width <= 0 || img.height <= 0 || img.data.size() != img.pixelCount() * 3) {
        throw ImageError(fmt::format("{}: refusing to write malformed image", path.string()));
    }
    std::vector<std::uint8_t> buffer(img.data.size());
    std::transform(img.data.begin(), img.data.end(), buffer.begin(), toByte);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width   = static_cast<png_uint_32>(img.width);
    image.height  = static_cast<png_uint_32>(img.height);
    image.format  = PNG_FORMAT_RGB;
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw ImageError(fmt::format("{}: cannot open for writing", path.string()));
    }
    if (!png_image_write_to_stdio(&image, fp.get(), 0, buffer.data(), 0, nullptr)) {
        throw ImageError(fmt::format("{}: {}", path.string(), image.message));
    }
}

} // namespace dsplat::io
