// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Versioned little-endian scene file:
//   "DSPLATGS" | u32 version | u32 sh degree | u64 count
//   | per primitive: center[3] quat[4] scale[3] opacity base[3] sh[(L+1)^2][3]
// Scalars are stored as f32.
//
#pragma once

#include "dsplat/splat/gaussian.hpp"

#include <filesystem>

namespace dsplat::inline DSPLAT_ABI::splat {

inline constexpr std::uint32_t kSceneFileVersion = 1;

void saveScene(const std::filesystem::path &path, const GaussianScene &scene);
GaussianScene loadScene(const std::filesystem::path &path);

} // namespace dsplat::inline DSPLAT_ABI::splat
