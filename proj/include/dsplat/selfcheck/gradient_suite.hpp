// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of every differentiable path, run in
// 64-bit regardless of the precision of the calling binary.
//
#pragma once

#include <functional>
#include <string>
#include <vector>

namespace dsplat::selfcheck {

struct CheckResult {
    std::string group; ///< "op", "renderer", "geometry", "net", "loss", "pipeline"
    std::string name;
    double maxRelError = 0;
    double tolerance   = 0;
    bool pass          = false;
};

/// Norm-wise relative error bounds: scalar ops and modules 1e-6, the
/// composed 16x16 pipeline 1e-3.
inline constexpr double kOpTolerance       = 1e-6;
inline constexpr double kPipelineTolerance = 1e-3;

using ProgressFn = std::function<void(const CheckResult &)>;

std::vector<CheckResult> runGradientSuite(const ProgressFn &onResult = {});

} // namespace dsplat::selfcheck
