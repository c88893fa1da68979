// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Residual-statistics check of noisy views against their clean counterparts.
//
// Expected moments are exact for the clipped operators: they are computed per
// distinct clean value (clipped normal / summed Poisson pmf). When both image
// sets lie on the 8-bit grid the 8-bit rounding of the noisy output is folded
// into the expected distribution as well.
//
// Tolerances: mean |m - E| <= max(meanAbs, k*SE); variance
// |v - E| <= max(rel*E, k*SE) with rel = 2% (Gaussian) or 5% (Poisson,
// Speckle); salt-and-pepper extreme-pixel fraction within max(10% rel, k*SE).
// SE is the sampling standard error estimated from the data, k = 5.
//
#pragma once

#include "dsplat/noise/noise.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dsplat::noise {

struct VerifyOptions {
    double meanAbsTolerance   = 1e-3;
    double gaussianVarRel     = 0.02;
    double otherVarRel        = 0.05;
    double fractionRel        = 0.10;
    double standardErrors     = 5.0;
};

struct NoiseStatsReport {
    std::string sceneId;
    NoiseKind kind = NoiseKind::Gaussian;
    double param   = 0;
    bool pass      = false;
    bool quantized = false;
    std::size_t samples = 0;

    double measuredMean = 0, expectedMean = 0, meanTolerance = 0;
    double measuredVar = 0, expectedVar = 0, varTolerance = 0;
    double measuredFraction = 0, expectedFraction = 0, fractionTolerance = 0;

    std::string message;
};

NoiseStatsReport verifyNoiseStats(const std::vector<io::Image> &clean,
                                  const std::vector<io::Image> &noisy,
                                  const SceneNoiseRecord &record,
                                  const VerifyOptions &options = {});

nlohmann::ordered_json toJson(const NoiseStatsReport &report);

/// Checks every scene listed in <noisyRoot>/manifest.json against <cleanRoot>.
std::vector<NoiseStatsReport> verifyDataset(const std::filesystem::path &cleanRoot,
                                            const std::filesystem::path &noisyRoot,
                                            const VerifyOptions &options = {});

} // namespace dsplat::noise
