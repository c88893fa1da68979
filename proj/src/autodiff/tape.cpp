// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/tape.hpp"

#include <fmt/format.h>

#include <atomic>

namespace dsplat::inline DSPLAT_ABI::ad {

namespace {

thread_local Tape *tActiveTape = nullptr;
std::atomic<std::uint64_t> gNextSerial{1};

} // namespace

Tape::Tape() : mSerial(gNextSerial.fetch_add(1)) {}

Tape::~Tape() = default;

Tape *
Tape::active() {
    return tActiveTape;
}

NodeId
Tape::resolve(const Tensor &t) {
    if (const auto id = t.nodeOn(*this)) {
        return *id;
    }
    if (!t.requiresGrad() || !t.defined()) {
        return kNoNode;
    }
    const void *key = t.storageKey();
    if (const auto it = mLeaves.find(key); it != mLeaves.end()) {
        if (mNodes[it->second].shape != t.shape()) {
            throw ShapeError("leaf", mNodes[it->second].shape, t.shape());
        }
        return it->second;
    }
    const auto id = static_cast<NodeId>(mNodes.size());
    mNodes.push_back(Node{"leaf", {}, t.shape(), {}, key});
    mLeaves.emplace(key, id);
    return id;
}

Tensor
Tape::record(std::string_view op,
             const std::vector<NodeId> &inputs,
             Shape shape,
             std::vector<Real> values,
             BackwardFn backward) {
    const auto id = static_cast<NodeId>(mNodes.size());
    for (const NodeId in : inputs) {
        if (in != kNoNode && in >= id) {
            throw std::logic_error("tape: node input does not precede the node");
        }
    }
    mNodes.push_back(Node{std::string(op), inputs, shape, std::move(backward), nullptr});
    Tensor out(std::move(shape), std::move(values), true);
    out.mTapeSerial = mSerial;
    out.mNode       = id;
    return out;
}

GradientMap
Tape::backward(const Tensor &root) const {
    if (root.numel() != 1) {
        throw ShapeError("backward", "root must be a scalar, got shape " + toString(root.shape()));
    }
    const auto rootId = root.nodeOn(*this);
    if (!rootId && root.requiresGrad()) {
        throw std::invalid_argument("backward: root was not produced on this tape");
    }

    // A constant root (nothing on its path required a gradient) yields zeros.
    std::vector<std::vector<Real>> grads(mNodes.size());
    const std::size_t sweepFrom = rootId ? *rootId + 1 : 0;
    if (rootId) {
        grads[*rootId].assign(1, Real(1));
    }

    for (std::size_t i = sweepFrom; i-- > 0;) {
        const Node &node = mNodes[i];
        if (grads[i].empty() || node.isLeaf() || !node.backward) {
            continue;
        }
        std::vector<std::span<Real>> slots;
        slots.reserve(node.inputs.size());
        for (const NodeId in : node.inputs) {
            if (in == kNoNode) {
                slots.emplace_back();
                continue;
            }
            auto &g = grads[in];
            if (g.empty()) {
                g.assign(static_cast<std::size_t>(numel(mNodes[in].shape)), Real(0));
            }
            slots.emplace_back(g.data(), g.size());
        }
        node.backward(std::span<const Real>(grads[i]), GradSinks(std::move(slots)));
    }

    GradientMap out;
    out.mSerial = mSerial;
    out.mLeaves = mLeaves;
    for (std::size_t i = 0; i < mNodes.size(); ++i) {
        if (grads[i].empty()) {
            if (!mNodes[i].isLeaf()) {
                continue;
            }
            grads[i].assign(static_cast<std::size_t>(numel(mNodes[i].shape)), Real(0));
        }
        out.mGrads.emplace(static_cast<NodeId>(i), Tensor(mNodes[i].shape, std::move(grads[i])));
    }
    return out;
}

GradientMap
backward(const Tape &tape, const Tensor &root) {
    return tape.backward(root);
}

Tensor
GradientMap::of(const Tensor &t) const {
    if (t.defined()) {
        std::optional<NodeId> id = t.nodeForSerial(mSerial);
        if (!id && t.requiresGrad()) {
            if (const auto leaf = mLeaves.find(t.storageKey()); leaf != mLeaves.end()) {
                id = leaf->second;
            }
        }
        if (id) {
            if (const auto it = mGrads.find(*id); it != mGrads.end()) {
                return it->second;
            }
        }
    }
    return Tensor::zeros(t.shape());
}

TapeScope::TapeScope(Tape *tape) : mPrevious(tActiveTape) {
    tActiveTape = tape;
}

TapeScope::~TapeScope() {
    tActiveTape = mPrevious;
}

Tensor
makeResult(std::string_view op,
           const std::vector<const Tensor *> &inputs,
           Shape shape,
           std::vector<Real> values,
           BackwardFn backward) {
    Tape *tape = Tape::active();
    if (tape == nullptr) {
        return Tensor(std::move(shape), std::move(values));
    }
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    bool any = false;
    for (const Tensor *t : inputs) {
        const NodeId id = tape->resolve(*t);
        any             = any || id != kNoNode;
        ids.push_back(id);
    }
    if (!any) {
        return Tensor(std::move(shape), std::move(values));
    }
    return tape->record(op, ids, std::move(shape), std::move(values), std::move(backward));
}

Tensor
makeResult(std::string_view op,
           std::initializer_list<const Tensor *> inputs,
           Shape shape,
           std::vector<Real> values,
           BackwardFn backward) {
    return makeResult(op,
                      std::vector<const Tensor *>(inputs),
                      std::move(shape),
                      std::move(values),
                      std::move(backward));
}

} // namespace dsplat::inline DSPLAT_ABI::ad
