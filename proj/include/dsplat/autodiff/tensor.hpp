// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "dsplat/config.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::ad {

using Index  = std::int64_t;
using Shape  = std::vector<Index>;
using NodeId = std::uint32_t;

inline constexpr NodeId kNoNode = ~NodeId{0};

Index numel(const Shape &shape);
std::string toString(const Shape &shape);

/// Raised by any op whose operands do not conform. The message names the op
/// and both offending shapes.
class ShapeError : public std::invalid_argument {
  public:
    ShapeError(std::string_view op, const Shape &a, const Shape &b);
    ShapeError(std::string_view op, const std::string &detail);
};

class Tape;

/// Dense row-major array of Real with an optional handle into the active tape.
///
/// Tensors are cheap handles: copies share the underlying storage. Values are
/// treated as immutable once a tensor has been consumed by a recorded op; the
/// only sanctioned in-place writes are parameter updates between steps.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<Real> values, bool requiresGrad = false);

    static Tensor zeros(Shape shape, bool requiresGrad = false);
    static Tensor full(Shape shape, Real value, bool requiresGrad = false);
    static Tensor scalar(Real value);

    bool defined() const { return static_cast<bool>(mStorage); }

    const Shape &shape() const { return mShape; }
    int ndim() const { return static_cast<int>(mShape.size()); }
    Index dim(int axis) const;
    Index numel() const;

    std::span<const Real> values() const;
    std::span<Real> mutableValues();
    Real item() const;
    Real at(Index flatIndex) const { return values()[static_cast<std::size_t>(flatIndex)]; }

    bool requiresGrad() const { return mRequiresGrad; }
    Tensor &setRequiresGrad(bool requiresGrad);

    /// Node id of this tensor on `tape`, if it was produced by (or registered
    /// as a leaf of) that tape.
    std::optional<NodeId> nodeOn(const Tape &tape) const;
    std::optional<NodeId> nodeForSerial(std::uint64_t tapeSerial) const;

    /// Identity of the shared storage; used to key leaf registration.
    const void *storageKey() const { return mStorage.get(); }

    /// Deep copy with fresh storage and no tape attachment.
    Tensor clone() const;

  private:
    friend class Tape;
    friend Tensor detach(const Tensor &x);
    friend Tensor shareStorage(const Tensor &x, Shape shape);

    std::shared_ptr<std::vector<Real>> mStorage;
    Shape mShape;
    bool mRequiresGrad          = false;
    std::uint64_t mTapeSerial   = 0;
    NodeId mNode                = kNoNode;
};

/// Same values, requiresGrad=false, and no tape edge back to `x`.
Tensor detach(const Tensor &x);

/// View over the storage of `x` with a new shape. Never recorded.
Tensor shareStorage(const Tensor &x, Shape shape);

} // namespace dsplat::inline DSPLAT_ABI::ad
