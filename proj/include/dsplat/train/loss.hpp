// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Image losses and metrics, unit dynamic range.
//
#pragma once

#include "dsplat/autodiff/ops.hpp"

#include "json.hpp"

#include <limits>
#include <span>

namespace dsplat::inline DSPLAT_ABI::train {

using ad::Tensor;

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow    = 11;
inline constexpr double kSsimSigma  = 1.5;
/// PSNR of identical images; tables clamp to kPsnrCap.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();
inline constexpr double kPsnrCap       = 100.0;

struct LossWeights {
    double l1   = 1.0;
    double ssim = 0.1;

    void validate() const;
};

nlohmann::ordered_json toJson(const LossWeights &w);
LossWeights lossWeightsFromJson(const nlohmann::json &j);

/// Mean SSIM over channels and 11x11 Gaussian windows (sigma 1.5). Inputs
/// are [C, H, W] or [H, W]; maps smaller than the window are reflect-padded.
/// Differentiable in both arguments.
Tensor ssim(const Tensor &a, const Tensor &b);

/// Same quantity on plain buffers ([C, H, W]), accumulated in double.
double ssimValue(std::span<const Real> a, std::span<const Real> b, int channels, int height, int width);

/// 10 log10(1 / MSE); kPsnrIdentical when MSE is zero.
double psnr(std::span<const Real> a, std::span<const Real> b);
inline double cappedPsnr(double db) { return db > kPsnrCap ? kPsnrCap : db; }

struct LossTerms {
    Tensor total; ///< scalar
    double l1   = 0;
    double ssim = 0; ///< SSIM itself (not 1 - SSIM)
};

/// l1 weight * mean|pred - gt| + ssim weight * (1 - SSIM(pred, gt)).
LossTerms reconstructionLoss(const Tensor &pred, const Tensor &gt, const LossWeights &weights);

} // namespace dsplat::inline DSPLAT_ABI::train
