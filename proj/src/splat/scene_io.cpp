// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/splat/scene_io.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace dsplat::inline DSPLAT_ABI::splat {

static_assert(std::endian::native == std::endian::little, "scene IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'S', 'P', 'L', 'A', 'T', 'G', 'S'};

template <class T>
void
put(std::ostream &os, T v) {
    os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T>
T
get(std::istream &is) {
    T v{};
    if (!is.read(reinterpret_cast<char *>(&v), sizeof(T))) {
        throw std::runtime_error("scene file: truncated");
    }
    return v;
}

} // namespace

void
saveScene(const std::filesystem::path &path, const GaussianScene &scene) {
    scene.validate(false);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    }
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kSceneFileVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(scene.shDegree));
    put<std::uint64_t>(os, scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const GaussianPrimitive p = scene.primitive(i);
        auto f = [&os](Real v) { put<float>(os, static_cast<float>(v)); };
        for (int k = 0; k < 3; ++k) f(p.center[k]);
        for (int k = 0; k < 4; ++k) f(p.quat[k]);
        for (int k = 0; k < 3; ++k) f(p.scale[k]);
        f(p.opacity);
        for (int k = 0; k < 3; ++k) f(p.base[k]);
        for (const Vec3 &c : p.sh) {
            for (int k = 0; k < 3; ++k) f(c[k]);
        }
    }
}

GaussianScene
loadScene(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    char magic[8];
    if (!is || !is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error(fmt::format("{}: not a dsplat scene file", path.string()));
    }
    if (const auto v = get<std::uint32_t>(is); v != kSceneFileVersion) {
        throw std::runtime_error(fmt::format("{}: unsupported scene version {}", path.string(), v));
    }
    const int degree = static_cast<int>(get<std::uint32_t>(is));
    const auto n     = get<std::uint64_t>(is);
    GaussianScene scene(n, degree);
    for (std::size_t i = 0; i < n; ++i) {
        GaussianPrimitive p;
        auto f = [&is]() { return static_cast<Real>(get<float>(is)); };
        for (int k = 0; k < 3; ++k) p.center[k] = f();
        for (int k = 0; k < 4; ++k) p.quat[k] = f();
        for (int k = 0; k < 3; ++k) p.scale[k] = f();
        p.opacity = f();
        for (int k = 0; k < 3; ++k) p.base[k] = f();
        p.sh.resize(static_cast<std::size_t>(shCount(degree)));
        for (Vec3 &c : p.sh) {
            for (int k = 0; k < 3; ++k) c[k] = f();
        }
        scene.set(i, p);
    }
    return scene;
}

} // namespace dsplat::inline DSPLAT_ABI::splat
