// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// RGB-domain degradation operators and scene-level noise configuration.
//
#pragma once

#include "dsplat/io/image.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dsplat::noise {

using Rng = std::mt19937_64;

enum class NoiseKind { Gaussian = 0, Poisson = 1, Speckle = 2, SaltPepper = 3 };

inline constexpr std::array<NoiseKind, 4> kAllKinds = {
    NoiseKind::Gaussian, NoiseKind::Poisson, NoiseKind::Speckle, NoiseKind::SaltPepper};

std::string_view toString(NoiseKind kind);
/// Accepts the names produced by toString (case-insensitive) plus "salt_pepper"/"sp".
NoiseKind parseKind(std::string_view name);

class NoiseError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// param is sigma (Gaussian, Speckle), scale s (Poisson) or alpha (SaltPepper).
struct NoiseConfig {
    NoiseKind kind = NoiseKind::Gaussian;
    double param   = 0;

    void validate() const;
};

struct NoiseRange {
    double low  = 0;
    double high = 0;
};

struct NoiseRanges {
    NoiseRange gaussian{0.08, 0.12};
    NoiseRange poisson{0.03, 0.04};
    NoiseRange speckle{0.02, 0.05};
    NoiseRange saltPepper{0.015, 0.03};

    const NoiseRange &of(NoiseKind kind) const;
    NoiseRange &of(NoiseKind kind);
    void validate() const;

    /// All ranges collapsed to zero intensity (clean-input training).
    static NoiseRanges zero();
};

struct SceneNoiseRecord {
    std::string sceneId;
    NoiseKind kind = NoiseKind::Gaussian;
    double param   = 0;
    std::uint64_t sceneSeed = 0;

    NoiseConfig config() const { return {kind, param}; }
    bool operator==(const SceneNoiseRecord &) const = default;
};

inline constexpr int kManifestVersion = 1;

struct DatasetManifest {
    int version = kManifestVersion;
    std::uint64_t globalSeed = 0;
    NoiseRanges ranges;
    std::vector<SceneNoiseRecord> scenes; ///< ordered by sceneId

    const SceneNoiseRecord *find(std::string_view sceneId) const;
};

std::uint64_t splitmix64(std::uint64_t x);
/// FNV-1a 64-bit hash.
std::uint64_t hashString(std::string_view s);
/// Seed for everything derived from (globalSeed, sceneId).
std::uint64_t sceneHash(std::uint64_t globalSeed, std::string_view sceneId);
/// Independent substream per view, so view order never affects other views.
std::uint64_t viewSeed(std::uint64_t sceneSeed, int viewIndex);

/// Applies one noise draw to img (values in [0, 1]); output clipped to [0, 1].
io::Image applyNoise(const io::Image &img, const NoiseConfig &cfg, Rng &rng);

/// Poisson variate: inversion for mean <= 50, rounded normal approximation above.
std::int64_t samplePoisson(double mean, Rng &rng);

SceneNoiseRecord sampleSceneNoise(std::string_view sceneId, std::uint64_t globalSeed, const NoiseRanges &ranges);

nlohmann::ordered_json toJson(const NoiseRanges &ranges);
NoiseRanges rangesFromJson(const nlohmann::json &j);
nlohmann::ordered_json toJson(const SceneNoiseRecord &rec);
SceneNoiseRecord recordFromJson(const nlohmann::json &j);
nlohmann::ordered_json toJson(const DatasetManifest &manifest);
DatasetManifest manifestFromJson(const nlohmann::json &j);

} // namespace dsplat::noise
