// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/net/cbc.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace dsplat::inline DSPLAT_ABI::net {

using ad::Index;

BoundaryGate
boundaryGate(const Tensor &disparity, const Tensor &pdf) {
    if (disparity.ndim() != 2 || pdf.ndim() != 3 || pdf.dim(1) != disparity.dim(0) || pdf.dim(2) != disparity.dim(1)) {
        throw ad::ShapeError("boundary_gate", disparity.shape(), pdf.shape());
    }
    const Index H = disparity.dim(0), W = disparity.dim(1), D = pdf.dim(0);
    const auto d = disparity.values();
    const auto p = pdf.values();
    auto at      = [&](Index y, Index x) {
        y = std::clamp<Index>(y, 0, H - 1);
        x = std::clamp<Index>(x, 0, W - 1);
        return static_cast<double>(d[static_cast<std::size_t>(y * W + x)]);
    };

    std::vector<Real> e(static_cast<std::size_t>(H * W));
    double lo = INFINITY, hi = -INFINITY;
    for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) {
            const double gx = 0.5 * (at(y, x + 1) - at(y, x - 1));
            const double gy = 0.5 * (at(y + 1, x) - at(y - 1, x));
            const double m  = std::sqrt(gx * gx + gy * gy);
            e[static_cast<std::size_t>(y * W + x)] = static_cast<Real>(m);
            lo = std::min(lo, m);
            hi = std::max(hi, m);
        }
    }

    std::vector<Real> b(e.size()), c(e.size());
    for (Index i = 0; i < H * W; ++i) {
        double conf = 0.0;
        for (Index k = 0; k < D; ++k) {
            conf = std::max(conf, static_cast<double>(p[static_cast<std::size_t>(k * H * W + i)]));
        }
        const double norm = (e[static_cast<std::size_t>(i)] - lo) / (hi - lo + 1e-8);
        c[static_cast<std::size_t>(i)] = static_cast<Real>(conf);
        b[static_cast<std::size_t>(i)] = static_cast<Real>(norm * (1.0 - conf));
    }
    BoundaryGate g;
    g.edges      = Tensor({H, W}, std::move(e));
    g.boundary   = Tensor({H, W}, std::move(b));
    g.confidence = Tensor({H, W}, std::move(c));
    return g;
}

BoundaryGate
disabledGate(const BoundaryGate &gate) {
    BoundaryGate g = gate;
    g.boundary     = Tensor::zeros(gate.boundary.shape());
    return g;
}

CbcModule
CbcModule::make(ParameterSet &params, int appearanceChannels, int width, std::mt19937_64 &rng) {
    CbcModule m;
    m.layers[0] = makeConv(params, "cbc.0", appearanceChannels + 2, width, 3, 1, Init::He, rng);
    m.layers[1] = makeConv(params, "cbc.1", width, width, 3, 1, Init::He, rng);
    m.layers[2] = makeConv(params, "cbc.2", width, appearanceChannels, 3, 1, Init::Zero, rng);
    return m;
}

Tensor
CbcModule::operator()(const Tensor &appearance, const BoundaryGate &gate) const {
    const Index H = gate.boundary.dim(0), W = gate.boundary.dim(1);
    if (appearance.ndim() != 3 || appearance.dim(1) != H || appearance.dim(2) != W) {
        throw ad::ShapeError("cbc", appearance.shape(), gate.boundary.shape());
    }
    // The gate must never carry a tape edge, whatever the caller passed in.
    const Tensor b = ad::detach(gate.boundary);
    const Tensor c = ad::detach(gate.confidence);
    const Tensor in = ad::concat({appearance, ad::reshape(b, {1, H, W}), ad::reshape(c, {1, H, W})}, 0);
    Tensor h        = ad::relu(layers[0](in));
    h               = ad::relu(layers[1](h));
    const Tensor delta = layers[2](h);
    return ad::add(appearance, ad::mul(delta, b));
}

} // namespace dsplat::inline DSPLAT_ABI::net
