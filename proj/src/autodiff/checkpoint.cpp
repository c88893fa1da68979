// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace dsplat::inline DSPLAT_ABI::ad {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'S', 'P', 'L', 'A', 'T', 'C', 'K'};

template <class T>
void
put(std::ostream &os, T v) {
    os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T>
T
get(std::istream &is, const std::filesystem::path &path) {
    T v{};
    if (!is.read(reinterpret_cast<char *>(&v), sizeof(T))) {
        throw CheckpointError(fmt::format("{}: truncated checkpoint", path.string()));
    }
    return v;
}

std::string
getString(std::istream &is, std::uint32_t n, const std::filesystem::path &path) {
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), n)) {
        throw CheckpointError(fmt::format("{}: truncated checkpoint", path.string()));
    }
    return s;
}

} // namespace

const Tensor *
Checkpoint::find(const std::string &name) const {
    for (const auto &[n, t] : entries) {
        if (n == name) {
            return &t;
        }
    }
    return nullptr;
}

void
saveCheckpoint(const std::filesystem::path &path,
               const std::vector<std::pair<std::string, Tensor>> &entries,
               const std::string &metadata) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw CheckpointError(fmt::format("{}: cannot open for writing", path.string()));
    }
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(Real)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(metadata.size()));
    os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto &[name, t] : entries) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
        for (const Index d : t.shape()) {
            put<std::int64_t>(os, d);
        }
        const auto v = t.values();
        os.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    }
    if (!os) {
        throw CheckpointError(fmt::format("{}: write failed", path.string()));
    }
}

Checkpoint
loadCheckpoint(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw CheckpointError(fmt::format("{}: cannot open checkpoint", path.string()));
    }
    char magic[8];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError(fmt::format("{}: not a dsplat checkpoint", path.string()));
    }
    const auto version = get<std::uint32_t>(is, path);
    if (version != kCheckpointVersion) {
        throw CheckpointError(fmt::format("{}: unsupported checkpoint version {}", path.string(), version));
    }
    Checkpoint ck;
    ck.scalarBytes = get<std::uint8_t>(is, path);
    if (ck.scalarBytes != 4 && ck.scalarBytes != 8) {
        throw CheckpointError(fmt::format("{}: bad precision flag {}", path.string(), ck.scalarBytes));
    }
    ck.metadata       = getString(is, get<std::uint32_t>(is, path), path);
    const auto nEntry = get<std::uint32_t>(is, path);
    for (std::uint32_t e = 0; e < nEntry; ++e) {
        std::string name = getString(is, get<std::uint32_t>(is, path), path);
        const auto ndim  = get<std::uint32_t>(is, path);
        Shape shape;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(get<std::int64_t>(is, path));
        }
        const auto n = static_cast<std::size_t>(numel(shape));
        std::vector<Real> values(n);
        if (ck.scalarBytes == static_cast<int>(sizeof(Real))) {
            if (n > 0 && !is.read(reinterpret_cast<char *>(values.data()),
                                  static_cast<std::streamsize>(n * sizeof(Real)))) {
                throw CheckpointError(fmt::format("{}: truncated payload for '{}'", path.string(), name));
            }
        } else if (ck.scalarBytes == 4) {
            for (auto &v : values) {
                v = static_cast<Real>(get<float>(is, path));
            }
        } else {
            for (auto &v : values) {
                v = static_cast<Real>(get<double>(is, path));
            }
        }
        ck.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return ck;
}

} // namespace dsplat::inline DSPLAT_ABI::ad
