// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable plane-sweep matching over feature maps.
//
#pragma once

#include "dsplat/autodiff/ops.hpp"
#include "dsplat/geometry/camera.hpp"

#include <vector>

namespace dsplat::inline DSPLAT_ABI::mvs {

using ad::Tensor;

/// logits: [D, H', W'] for one reference view.
struct CostVolume {
    Tensor logits;
};

/// Source-view sampling positions of every reference pixel on every plane.
struct SweepGrid {
    int planes = 0, height = 0, width = 0;
    std::vector<double> coords; ///< [D][2][H'][W'] (x then y)
    std::vector<unsigned char> valid; ///< [D][H'][W']
};

/// Cameras are rescaled to the feature resolution when they differ.
SweepGrid sweepGrid(const geom::Camera &src, const geom::Camera &ref, const geom::DepthPlanes &planes, int height, int width);

/// logits[d,u] = sum_s m_s(d,u) <ref[:,u], warp_s(d)[:,u]> / (max(1, sum_s m_s(d,u)) sqrt(C)),
/// where m_s is 1 when the source sample position lies inside the source map.
/// A source contributes nothing where it cannot see the plane point, and the
/// mean runs over the sources that can. Gradients flow to all feature maps.
CostVolume buildCostVolume(const Tensor &refFeats,
                           const std::vector<Tensor> &srcFeats,
                           const geom::Camera &refCam,
                           const std::vector<geom::Camera> &srcCams,
                           const geom::DepthPlanes &planes);

/// Same quantity assembled from primitive ops (bilinearSample, mul, sum, ...).
/// Slower; kept as an independent route for testing.
CostVolume buildCostVolumeComposite(const Tensor &refFeats,
                                    const std::vector<Tensor> &srcFeats,
                                    const geom::Camera &refCam,
                                    const std::vector<geom::Camera> &srcCams,
                                    const geom::DepthPlanes &planes);

struct DisparityEstimate {
    Tensor pdf;       ///< [D, H', W'], softmax over planes
    Tensor disparity; ///< [H', W'], expected 1/depth
};

DisparityEstimate disparityFromVolume(const Tensor &logits, const geom::DepthPlanes &planes);

} // namespace dsplat::inline DSPLAT_ABI::mvs
