// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "dsplat/autodiff/tensor.hpp"

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::ad {

/// Gradient buffers handed to a backward rule, one per op input. An empty span
/// means the corresponding input does not need a gradient.
class GradSinks {
  public:
    explicit GradSinks(std::vector<std::span<Real>> slots) : mSlots(std::move(slots)) {}

    bool wants(std::size_t input) const { return !mSlots[input].empty(); }
    std::span<Real> operator[](std::size_t input) const { return mSlots[input]; }
    std::size_t size() const { return mSlots.size(); }

  private:
    std::vector<std::span<Real>> mSlots;
};

/// Backward rules accumulate (+=) into the sinks; they never overwrite.
using BackwardFn = std::function<void(std::span<const Real> gradOut, const GradSinks &gradIn)>;

class GradientMap;

/// Append-only record of the ops executed while it is active. Node inputs
/// always reference strictly earlier nodes, so reverse insertion order is a
/// valid reverse topological order.
class Tape {
  public:
    struct Node {
        std::string op;
        std::vector<NodeId> inputs;
        Shape shape;
        BackwardFn backward;
        const void *leafKey = nullptr;

        bool isLeaf() const { return leafKey != nullptr; }
    };

    Tape();
    Tape(const Tape &)            = delete;
    Tape &operator=(const Tape &) = delete;
    ~Tape();

    /// Tape installed by the innermost TapeScope on this thread, or nullptr.
    static Tape *active();

    std::size_t size() const { return mNodes.size(); }
    const Node &node(NodeId id) const { return mNodes.at(id); }
    std::uint64_t serial() const { return mSerial; }

    /// Node of `t` on this tape. Parameters that require grad are registered
    /// as leaves on first use; constants yield kNoNode.
    NodeId resolve(const Tensor &t);

    /// Records an op and returns the output tensor attached to the new node.
    /// Inputs that resolve to kNoNode are treated as constants.
    Tensor record(std::string_view op,
                  const std::vector<NodeId> &inputs,
                  Shape shape,
                  std::vector<Real> values,
                  BackwardFn backward);

    GradientMap backward(const Tensor &root) const;

  private:
    std::vector<Node> mNodes;
    std::unordered_map<const void *, NodeId> mLeaves;
    std::uint64_t mSerial;
};

/// Installs a tape (or nullptr, which suspends recording) for the lifetime of
/// the scope.
class TapeScope {
  public:
    explicit TapeScope(Tape *tape);
    explicit TapeScope(Tape &tape) : TapeScope(&tape) {}
    TapeScope(const TapeScope &)            = delete;
    TapeScope &operator=(const TapeScope &) = delete;
    ~TapeScope();

  private:
    Tape *mPrevious;
};

class GradientMap {
  public:
    GradientMap() = default;

    bool contains(NodeId id) const { return mGrads.count(id) != 0; }
    const Tensor &at(NodeId id) const { return mGrads.at(id); }

    /// Gradient with respect to `t`. Tensors with no node on the originating
    /// tape (constants, detached values) receive zeros of their own shape.
    Tensor of(const Tensor &t) const;

    const std::unordered_map<NodeId, Tensor> &all() const { return mGrads; }

  private:
    friend class Tape;
    std::unordered_map<NodeId, Tensor> mGrads;
    std::unordered_map<const void *, NodeId> mLeaves;
    std::uint64_t mSerial = 0;
};

/// Reverse-mode sweep from a scalar root recorded on `tape`.
GradientMap backward(const Tape &tape, const Tensor &root);

/// Helper for op implementations: records on the active tape when any input
/// needs a gradient, otherwise returns a plain constant tensor.
Tensor makeResult(std::string_view op,
                  std::initializer_list<const Tensor *> inputs,
                  Shape shape,
                  std::vector<Real> values,
                  BackwardFn backward);

Tensor makeResult(std::string_view op,
                  const std::vector<const Tensor *> &inputs,
                  Shape shape,
                  std::vector<Real> values,
                  BackwardFn backward);

} // namespace dsplat::inline DSPLAT_ABI::ad
