// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale multi-view data: textured boxes and blobs in front of a textured
// backdrop, seen from an arc of cameras. Each scene has two context frames
// and one frame extrapolated further along the arc:
//
//   frame 0: context, also the "seen" supervision view
//   frame 1: context
//   frame 2: "novel" supervision view, half a baseline past frame 1
//
// On disk a split looks like
//   <split>/clean/<scene>/{images/000000.png, ..., cameras.txt, sample.json}
//   <split>/noisy/<scene>/...        (forged from clean/, same layout)
//   <split>/noisy/manifest.json
//
#pragma once

#include "dsplat/geometry/camera.hpp"
#include "dsplat/io/image.hpp"
#include "dsplat/noise/noise.hpp"
#include "dsplat/splat/gaussian.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::train {

struct SyntheticSceneSpec {
    int width    = 64;
    int height   = 64;
    double focal = 64.0; ///< pixels

    int minObjects    = 2;
    int maxObjects    = 4;
    int minPrimitives = 60; ///< per object
    int maxPrimitives = 120;
    double extent     = 0.7; ///< object centers lie in [-extent, extent]^3

    double wallDistance  = 1.3; ///< backdrop plane at z = -wallDistance
    double wallHalfSize  = 3.2;
    int wallResolution   = 30;  ///< backdrop primitives per side
    double textureFrequency = 3.0;
    double textureContrast  = 0.35; ///< 0 = flat colors

    double ringRadius   = 3.0;
    double ringHeight   = 0.4;
    double baselineDeg  = 9.0;  ///< angle between the two context cameras
    double novelOffset  = 0.5;  ///< novel camera, in baselines past the last context camera
    double maxAngleDeg  = 30.0; ///< arc half-width
    double jitter       = 0.05; ///< camera position / target jitter (world units)

    void validate() const;
};

nlohmann::ordered_json toJson(const SyntheticSceneSpec &spec);
SyntheticSceneSpec syntheticSpecFromJson(const nlohmann::json &j);

struct TargetView {
    int frame = 0;
    bool seen = true;
};

struct MultiViewSample {
    std::string sceneId;
    std::vector<geom::Camera> cameras; ///< every frame
    std::vector<io::Image> clean;      ///< every frame
    std::vector<io::Image> noisy;      ///< every frame, forged with `noise`
    std::vector<int> context;
    std::vector<TargetView> targets;
    double nearDepth = 0;
    double farDepth  = 0;
    noise::SceneNoiseRecord noise;

    geom::DepthPlanes planes(int count) const;
    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;
};

/// The random Gaussian scene behind a sample (degree-0 colors).
splat::GaussianScene generateSceneContent(const SyntheticSceneSpec &spec, std::uint64_t sceneSeed);

/// Deterministic per (spec, sceneId, seed). Clean renders are quantized to
/// 8 bits so that a dataset written to disk and read back is bit-identical.
MultiViewSample generateSample(const SyntheticSceneSpec &spec,
                               const std::string &sceneId,
                               const noise::NoiseRanges &ranges,
                               std::uint64_t seed);

/// Scenes "<prefix>00000", "<prefix>00001", ...
std::vector<MultiViewSample> generateSyntheticDataset(const SyntheticSceneSpec &spec,
                                                      int sceneCount,
                                                      const noise::NoiseRanges &ranges,
                                                      std::uint64_t seed,
                                                      const std::string &prefix = "scene");

/// Same sample with its context views re-forged under `cfg` (ablation grids).
/// Zero-strength noise reproduces the clean frames exactly.
MultiViewSample withNoise(const MultiViewSample &sample, const noise::NoiseConfig &cfg, std::uint64_t seed);

/// Writes clean/ and forges noisy/ (with manifest) under `splitDir`.
void writeSplit(const std::vector<MultiViewSample> &samples,
                const std::filesystem::path &splitDir,
                const noise::NoiseRanges &ranges,
                std::uint64_t seed);

/// Reads a split written by writeSplit (or any dataset with the same layout).
std::vector<MultiViewSample> loadSplit(const std::filesystem::path &splitDir);

} // namespace dsplat::inline DSPLAT_ABI::train
