// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/tensor.hpp"

#include "dsplat/autodiff/tape.hpp"

#include <fmt/format.h>

namespace dsplat::inline DSPLAT_ABI::ad {

Index
numel(const Shape &shape) {
    Index n = 1;
    for (const Index d : shape) {
        n *= d;
    }
    return n;
}

std::string
toString(const Shape &shape) {
    return fmt::format("[{}]", fmt::join(shape, ","));
}

ShapeError::ShapeError(std::string_view op, const Shape &a, const Shape &b)
    : std::invalid_argument(
          fmt::format("op '{}': shapes {} and {} do not conform", op, toString(a), toString(b))) {}

ShapeError::ShapeError(std::string_view op, const std::string &detail)
    : std::invalid_argument(fmt::format("op '{}': {}", op, detail)) {}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requiresGrad)
    : mStorage(std::make_shared<std::vector<Real>>(std::move(values))), mShape(std::move(shape)),
      mRequiresGrad(requiresGrad) {
    for (const Index d : mShape) {
        if (d < 0) {
            throw ShapeError("tensor", "negative dimension in " + toString(mShape));
        }
    }
    if (ad::numel(mShape) != static_cast<Index>(mStorage->size())) {
        throw ShapeError("tensor",
                         fmt::format("shape {} holds {} elements but {} values were given",
                                     toString(mShape),
                                     ad::numel(mShape),
                                     mStorage->size()));
    }
}

Tensor
Tensor::zeros(Shape shape, bool requiresGrad) {
    const auto n = static_cast<std::size_t>(ad::numel(shape));
    return Tensor(std::move(shape), std::vector<Real>(n, Real(0)), requiresGrad);
}

Tensor
Tensor::full(Shape shape, Real value, bool requiresGrad) {
    const auto n = static_cast<std::size_t>(ad::numel(shape));
    return Tensor(std::move(shape), std::vector<Real>(n, value), requiresGrad);
}

Tensor
Tensor::scalar(Real value) {
    return Tensor({}, {value});
}

Index
Tensor::dim(int axis) const {
    const int n = ndim();
    const int a = axis < 0 ? axis + n : axis;
    if (a < 0 || a >= n) {
        throw ShapeError("dim", fmt::format("axis {} out of range for {}", axis, toString(mShape)));
    }
    return mShape[static_cast<std::size_t>(a)];
}

Index
Tensor::numel() const {
    return mStorage ? static_cast<Index>(mStorage->size()) : 0;
}

std::span<const Real>
Tensor::values() const {
    if (!mStorage) {
        return {};
    }
    return {mStorage->data(), mStorage->size()};
}

std::span<Real>
Tensor::mutableValues() {
    if (!mStorage) {
        return {};
    }
    return {mStorage->data(), mStorage->size()};
}

Real
Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item", "expected a single element, got shape " + toString(mShape));
    }
    return (*mStorage)[0];
}

Tensor &
Tensor::setRequiresGrad(bool requiresGrad) {
    mRequiresGrad = requiresGrad;
    return *this;
}

std::optional<NodeId>
Tensor::nodeOn(const Tape &tape) const {
    return nodeForSerial(tape.serial());
}

std::optional<NodeId>
Tensor::nodeForSerial(std::uint64_t tapeSerial) const {
    if (mNode != kNoNode && mTapeSerial == tapeSerial) {
        return mNode;
    }
    return std::nullopt;
}

Tensor
Tensor::clone() const {
    if (!mStorage) {
        return {};
    }
    return Tensor(mShape, *mStorage, mRequiresGrad);
}

Tensor
detach(const Tensor &x) {
    Tensor out;
    out.mStorage      = x.mStorage;
    out.mShape        = x.mShape;
    out.mRequiresGrad = false;
    return out;
}

Tensor
shareStorage(const Tensor &x, Shape shape) {
    if (ad::numel(shape) != x.numel()) {
        throw ShapeError("reshape", x.shape(), shape);
    }
    Tensor out;
    out.mStorage = x.mStorage;
    out.mShape   = std::move(shape);
    return out;
}

} // namespace dsplat::inline DSPLAT_ABI::ad
