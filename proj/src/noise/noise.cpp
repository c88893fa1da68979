// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/noise/noise.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>

namespace dsplat::noise {

std::string_view
toString(NoiseKind kind) {
    switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Poisson: return "poisson";
    case NoiseKind::Speckle: return "speckle";
    case NoiseKind::SaltPepper: return "saltpepper";
    }
    return "unknown";
}

NoiseKind
parseKind(std::string_view name) {
    std::string s;
    for (const char c : name) {
        if (c != '_' && c != '-') {
            s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (s == "gaussian") return NoiseKind::Gaussian;
    if (s == "poisson") return NoiseKind::Poisson;
    if (s == "speckle") return NoiseKind::Speckle;
    if (s == "saltpepper" || s == "sp") return NoiseKind::SaltPepper;
    throw NoiseError(fmt::format("unknown noise kind '{}'", name));
}

void
NoiseConfig::validate() const {
    if (!(param >= 0) || !std::isfinite(param)) {
        throw NoiseError(fmt::format("{} noise: parameter must be finite and >= 0, got {}", toString(kind), param));
    }
    if (kind == NoiseKind::SaltPepper && param > 0.5) {
        throw NoiseError(fmt::format("saltpepper noise: alpha must be <= 0.5, got {}", param));
    }
}

const NoiseRange &
NoiseRanges::of(NoiseKind kind) const {
    switch (kind) {
    case NoiseKind::Gaussian: return gaussian;
    case NoiseKind::Poisson: return poisson;
    case NoiseKind::Speckle: return speckle;
    case NoiseKind::SaltPepper: return saltPepper;
    }
    throw NoiseError("bad noise kind");
}

NoiseRange &
NoiseRanges::of(NoiseKind kind) {
    return const_cast<NoiseRange &>(std::as_const(*this).of(kind));
}

void
NoiseRanges::validate() const {
    for (const NoiseKind k : kAllKinds) {
        const NoiseRange &r = of(k);
        if (!(r.low <= r.high)) {
            throw NoiseError(fmt::format("{} range: low {} > high {}", toString(k), r.low, r.high));
        }
        NoiseConfig{k, r.low}.validate();
        NoiseConfig{k, r.high}.validate();
    }
}

NoiseRanges
NoiseRanges::zero() {
    NoiseRanges r;
    for (const NoiseKind k : kAllKinds) {
        r.of(k) = {0, 0};
    }
    return r;
}

const SceneNoiseRecord *
DatasetManifest::find(std::string_view sceneId) const {
    for (const auto &rec : scenes) {
        if (rec.sceneId == sceneId) {
            return &rec;
        }
    }
    return nullptr;
}

std::uint64_t
splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t
hashString(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

std::uint64_t
sceneHash(std::uint64_t globalSeed, std::string_view sceneId) {
    return splitmix64(splitmix64(globalSeed) ^ hashString(sceneId));
}

std::uint64_t
viewSeed(std::uint64_t sceneSeed, int viewIndex) {
    return splitmix64(sceneSeed ^ splitmix64(0xD1B54A32D192ED03ull + static_cast<std::uint64_t>(viewIndex)));
}

std::int64_t
samplePoisson(double mean, Rng &rng) {
    if (!(mean > 0)) {
        return 0;
    }
    if (mean > 50) {
        std::normal_distribution<double> normal(mean, std::sqrt(mean));
        return std::max<std::int64_t>(0, std::llround(normal(rng)));
    }
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double p       = std::exp(-mean);
    double cdf     = p;
    std::int64_t k = 0;
    while (u > cdf && k < 1000) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

io::Image
applyNoise(const io::Image &img, const NoiseConfig &cfg, Rng &rng) {
    cfg.validate();
    io::Image out = img;
    if (cfg.param == 0) {
        return out;
    }
    auto clip01 = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
    switch (cfg.kind) {
    case NoiseKind::Gaussian: {
        std::normal_distribution<double> n(0.0, cfg.param);
        for (float &v : out.data) {
            v = clip01(v + n(rng));
        }
        break;
    }
    case NoiseKind::Speckle: {
        std::normal_distribution<double> n(0.0, cfg.param);
        for (float &v : out.data) {
            v = clip01(v + v * n(rng));
        }
        break;
    }
    case NoiseKind::Poisson: {
        const double s = cfg.param;
        for (float &v : out.data) {
            v = clip01(s * static_cast<double>(samplePoisson(std::max(0.0, static_cast<double>(v)) / s, rng)));
        }
        break;
    }
    case NoiseKind::SaltPepper: {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double half = cfg.param / 2;
        for (std::size_t p = 0; p < out.pixelCount(); ++p) {
            const double r = u(rng);
            if (r < cfg.param) {
                const float value = r < half ? 0.f : 1.f;
                std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(3 * p), 3, value);
            }
        }
        break;
    }
    }
    return out;
}

SceneNoiseRecord
sampleSceneNoise(std::string_view sceneId, std::uint64_t globalSeed, const NoiseRanges &ranges) {
    ranges.validate();
    Rng rng(sceneHash(globalSeed, sceneId));
    SceneNoiseRecord rec;
    rec.sceneId = std::string(sceneId);
    rec.kind    = kAllKinds[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 3)(rng))];
    const NoiseRange &r = ranges.of(rec.kind);
    const double u      = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    rec.param           = r.low + u * (r.high - r.low);
    rec.sceneSeed       = rng();
    return rec;
}

nlohmann::ordered_json
toJson(const NoiseRanges &ranges) {
    nlohmann::ordered_json j;
    for (const NoiseKind k : kAllKinds) {
        j[std::string(toString(k))] = {ranges.of(k).low, ranges.of(k).high};
    }
    return j;
}

NoiseRanges
rangesFromJson(const nlohmann::json &j) {
    NoiseRanges r;
    for (const NoiseKind k : kAllKinds) {
        const std::string key(toString(k));
        if (j.contains(key)) {
            const auto &pair = j.at(key);
            if (!pair.is_array() || pair.size() != 2) {
                throw NoiseError(fmt::format("ranges.{}: expected [low, high]", key));
            }
            r.of(k) = {pair[0].get<double>(), pair[1].get<double>()};
        }
    }
    r.validate();
    return r;
}

nlohmann::ordered_json
toJson(const SceneNoiseRecord &rec) {
    nlohmann::ordered_json j;
    j["scene_id"]   = rec.sceneId;
    j["kind"]       = toString(rec.kind);
    j["param"]      = rec.param;
    j["scene_seed"] = rec.sceneSeed;
    return j;
}

SceneNoiseRecord
recordFromJson(const nlohmann::json &j) {
    SceneNoiseRecord rec;
    rec.sceneId   = j.at("scene_id").get<std::string>();
    rec.kind      = parseKind(j.at("kind").get<std::string>());
    rec.param     = j.at("param").get<double>();
    rec.sceneSeed = j.at("scene_seed").get<std::uint64_t>();
    return rec;
}

nlohmann::ordered_json
toJson(const DatasetManifest &manifest) {
    nlohmann::ordered_json j;
    j["version"]     = manifest.version;
    j["global_seed"] = manifest.globalSeed;
    j["ranges"]      = toJson(manifest.ranges);
    j["scenes"]      = nlohmann::ordered_json::array();
    for (const auto &rec : manifest.scenes) {
        j["scenes"].push_back(toJson(rec));
    }
    return j;
}

DatasetManifest
manifestFromJson(const nlohmann::json &j) {
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
        throw NoiseError(fmt::format("manifest: unsupported version {}", m.version));
    }
    m.globalSeed = j.at("global_seed").get<std::uint64_t>();
    m.ranges     = rangesFromJson(j.at("ranges"));
    for (const auto &s : j.at("scenes")) {
        m.scenes.push_back(recordFromJson(s));
    }
    return m;
}

} // namespace dsplat::noise
