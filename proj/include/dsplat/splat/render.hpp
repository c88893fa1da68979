// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Tile-parallel front-to-back alpha compositing of projected Gaussians.
//
// Per pixel p (integer pixel centers), primitives are visited in ascending
// camera depth (ties: lower index first):
//     w_i = min(maxWeight, alpha_i exp(-1/2 d^T cov2_i^-1 d)),   d = p - mean2_i
//     C   = sum_i color_i w_i T_i + background T_N,  T_{i+1} = T_i (1 - w_i)
// Contributions with w_i < minWeight or outside the cutoff ellipse are skipped.
// There is no early termination, so sum_i w_i T_i + T_N = 1 holds exactly up
// to rounding. Colors are not clipped here.
//
#pragma once

#include "dsplat/autodiff/tensor.hpp"
#include "dsplat/io/image.hpp"
#include "dsplat/splat/gaussian.hpp"

#include <span>

namespace dsplat::inline DSPLAT_ABI::splat {

struct RenderResult {
    int width  = 0;
    int height = 0;
    std::vector<Real> image;         ///< [3, H, W]
    std::vector<Real> transmittance; ///< [H, W], T_N after the last primitive
    std::size_t visible = 0;         ///< primitives that survived culling
};

RenderResult render(const GaussianScene &scene, const geom::Camera &cam, const RenderSettings &settings);

/// Gradients of a loss w.r.t. every primitive field, given dL/d image
/// ([3, H, W]). Returned in the scene's own layout; culled primitives get zeros.
GaussianScene renderBackward(const GaussianScene &scene,
                             const geom::Camera &cam,
                             const RenderSettings &settings,
                             std::span<const Real> gradImage);

/// Interleaved image, clipped to [0, 1].
io::Image toImage(std::span<const Real> chw, int width, int height);
/// Channel-major copy of an interleaved image.
std::vector<Real> fromImage(const io::Image &img);

/// Scene parameters as differentiable tensors, channel-major ([3,N], [4,N],
/// [3,N], [1,N], [3,N], [3*(L+1)^2, N]).
struct SceneTensors {
    int shDegree = 1;
    ad::Tensor means, quats, scales, opacities, base, sh;

    GaussianScene values() const;
    static SceneTensors fromScene(const GaussianScene &scene, bool requiresGrad);
};

/// Differentiable render as a tape op; output [3, H, W].
ad::Tensor renderOp(const SceneTensors &scene, const geom::Camera &cam, const RenderSettings &settings);

} // namespace dsplat::inline DSPLAT_ABI::splat
