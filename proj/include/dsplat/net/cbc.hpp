// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Confidence-and-boundary correction of the appearance features.
//
// From the disparity field and the plane distribution we derive, per pixel,
//     E = |grad disparity|  (central differences, replicated border)
//     C = max_d pdf(d)
//     B = minmax(E) (1 - C)          minmax(E) = (E - min E) / (max E - min E + 1e-8)
// and correct A' = A + B * g(concat[A, B, C]), g a small conv stack whose last
// layer starts at zero. B and C are computed from values only: no gradient
// reaches the geometry branch through the gate.
//
#pragma once

#include "dsplat/net/layers.hpp"

namespace dsplat::inline DSPLAT_ABI::net {

struct BoundaryGate {
    Tensor edges;      ///< [H, W] raw |grad disparity|
    Tensor boundary;   ///< [H, W] B in [0, 1]
    Tensor confidence; ///< [H, W] C in [1/D, 1]
};

BoundaryGate boundaryGate(const Tensor &disparity, const Tensor &pdf);

/// Gate of the same shape with B = 0 (turns the correction off).
BoundaryGate disabledGate(const BoundaryGate &gate);

struct CbcModule {
    Conv2d layers[3];

    static CbcModule make(ParameterSet &params, int appearanceChannels, int width, std::mt19937_64 &rng);

    /// A: [K, H, W]. Returns A'.
    Tensor operator()(const Tensor &appearance, const BoundaryGate &gate) const;
};

} // namespace dsplat::inline DSPLAT_ABI::net
