// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable op catalog. Every op records a tape node when a tape is
// active and at least one operand requires a gradient.
//
// Broadcasting (add/sub/mul/div): operands must either have equal shapes, or
// one of them must be a single element, or the shape of one must equal the
// trailing dimensions of the other (e.g. [H,W] against [C,H,W]).
//
#pragma once

#include "dsplat/autodiff/tape.hpp"
#include "dsplat/autodiff/tensor.hpp"

#include <vector>

namespace dsplat::inline DSPLAT_ABI::ad {

// Elementwise binary ops with broadcasting.
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor div(const Tensor &a, const Tensor &b);

Tensor addScalar(const Tensor &x, Real c);
Tensor mulScalar(const Tensor &x, Real c);

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }
inline Tensor operator/(const Tensor &a, const Tensor &b) { return div(a, b); }

// Elementwise unary ops.
Tensor neg(const Tensor &x);
Tensor exp(const Tensor &x);
Tensor log(const Tensor &x);
Tensor sqrt(const Tensor &x);
Tensor abs(const Tensor &x);
Tensor relu(const Tensor &x);
Tensor sigmoid(const Tensor &x);
Tensor softplus(const Tensor &x);
/// Gradient passes only where lo < x < hi.
Tensor clip(const Tensor &x, Real lo, Real hi);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor &a, const Tensor &b);

struct Conv2dOptions {
    int stride  = 1;
    int padding = 0;
};

/// x: [C,H,W], weight: [O,C,kh,kw], bias: [O] or undefined. Zero padding, no
/// dilation. Each output element is reduced in a fixed order, so results do not
/// depend on the number of workers.
Tensor conv2d(const Tensor &x, const Tensor &weight, const Tensor &bias, Conv2dOptions options = {});

/// Samples x: [C,H,W] at fractional pixel coordinates coords: [2,H',W']
/// (row 0 = column coordinate, row 1 = row coordinate; pixel centers at
/// integers). Taps outside the map read zero. Output: [C,H',W'].
Tensor bilinearSample(const Tensor &x, const Tensor &coords);

/// Nearest-neighbour upsampling of x: [C,H,W] by an integer factor.
Tensor upsampleNearest(const Tensor &x, int factor);

Tensor softmax(const Tensor &x, int axis);
Tensor concat(const std::vector<Tensor> &parts, int axis);
Tensor slice(const Tensor &x, int axis, Index start, Index length);
Tensor reshape(const Tensor &x, Shape shape);

Tensor sum(const Tensor &x);
Tensor mean(const Tensor &x);
Tensor sum(const Tensor &x, int axis);
Tensor mean(const Tensor &x, int axis);
/// Gradient flows to the first maximal element along the axis.
Tensor max(const Tensor &x, int axis);

} // namespace dsplat::inline DSPLAT_ABI::ad
