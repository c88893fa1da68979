// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "dsplat/config.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::net {

/// Architecture sizes. Stored next to every checkpoint so weights can only be
/// loaded into a matching network.
struct NetConfig {
    std::vector<int> encoderChannels{16, 32}; ///< per scale; scale s runs at 1/2^s resolution
    int matchChannels   = 32;                 ///< features fed to the plane sweep
    int planes          = 32;                 ///< D
    int shDegree        = 1;
    int refineWidth     = 32;
    int geometryWidth   = 32;
    int appearanceWidth = 32;
    int cbcWidth        = 16;
    /// Per-axis Gaussian scale, in units of the pixel footprint (depth / fx).
    double scaleMin = 0.25;
    double scaleMax = 3.0;

    int appearanceChannels() const { return 3 + 3 * (shDegree + 1) * (shDegree + 1); }
    int volumeChannels() const;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    bool operator==(const NetConfig &) const = default;
};

nlohmann::ordered_json toJson(const NetConfig &cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
NetConfig netConfigFromJson(const nlohmann::json &j);

/// Human-readable list of differing fields (empty when equal).
std::string describeDifference(const NetConfig &expected, const NetConfig &actual);

} // namespace dsplat::inline DSPLAT_ABI::net
