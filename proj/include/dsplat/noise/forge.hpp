// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Dataset forging. A clean dataset root holds one directory per scene:
//
//   <scene_id>/cameras.txt         camera trajectory (RealEstate10K layout)
//   <scene_id>/images/000000.png   8-bit RGB frames, zero-padded indices
//   <scene_id>/...                 any other files are copied through
//
// The forged root mirrors it with degraded frames, plus manifest.json and
// forge_report.json at the top level.
//
#pragma once

#include "dsplat/noise/noise.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dsplat::noise {

struct SceneForgeError {
    std::string sceneId;
    std::string message;
};

struct ForgeReport {
    DatasetManifest manifest;
    std::vector<SceneForgeError> errors;
};

/// Degrades every view of one scene with its record; view i draws from the
/// substream viewSeed(record.sceneSeed, i).
std::vector<io::Image> degradeViews(const std::vector<io::Image> &views, const SceneNoiseRecord &record);

/// Sorted PNG paths under <sceneDir>/images.
std::vector<std::filesystem::path> listFrames(const std::filesystem::path &sceneDir);

std::vector<io::Image> loadFrames(const std::filesystem::path &sceneDir);

/// Scene directories directly under root, sorted by name.
std::vector<std::string> listScenes(const std::filesystem::path &root);

/// Per-scene failures are collected in the report; the remaining scenes are
/// still forged. Throws only for unusable roots (missing input, out == in).
ForgeReport forgeDataset(const std::filesystem::path &cleanRoot,
                         const std::filesystem::path &outRoot,
                         const NoiseRanges &ranges,
                         std::uint64_t globalSeed);

void writeJsonFile(const std::filesystem::path &path, const nlohmann::ordered_json &j);
nlohmann::json readJsonFile(const std::filesystem::path &path);

} // namespace dsplat::noise
