// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking.
//
// The function under test may return any shape; it is reduced to a scalar by
// contraction with a fixed pseudo-random probe r, so every output element
// participates. Error is reported per input as
//     |g_analytic - g_numeric|_2 / max(|g_analytic|_2, |g_numeric|_2)
// with a pair of (near-)zero gradients counting as exact agreement.
//
#pragma once

#include "dsplat/autodiff/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::ad {

using GradcheckFn = std::function<Tensor(const std::vector<Tensor> &inputs)>;

struct GradcheckOptions {
    double step          = 1e-4;
    double tolerance     = 1e-6;
    double zeroThreshold = 1e-12;
    std::uint64_t seed   = 7;
};

struct GradcheckResult {
    std::string name;
    std::vector<double> relErrors; ///< one per input
    double maxRelError = 0;
    bool pass          = false;
};

/// Inputs are deep-copied; all of them are differentiated.
GradcheckResult gradcheck(const std::string &name,
                          const GradcheckFn &fn,
                          const std::vector<Tensor> &inputs,
                          const GradcheckOptions &options = {});

/// Deterministic tensor with entries uniform in [lo, hi).
Tensor randomTensor(Shape shape, std::uint64_t seed, Real lo = -1, Real hi = 1, bool requiresGrad = false);

} // namespace dsplat::inline DSPLAT_ABI::ad
