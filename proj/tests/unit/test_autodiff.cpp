// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/checkpoint.hpp"
#include "dsplat/autodiff/gradcheck.hpp"
#include "dsplat/autodiff/ops.hpp"
#include "dsplat/autodiff/tape.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dsplat::ad;
using dsplat::Real;

namespace {

void
expectGradcheck(const std::string &name, const GradcheckFn &fn, const std::vector<Tensor> &inputs, double tol = 1e-6) {
    GradcheckOptions opts;
    opts.tolerance  = tol;
    const auto res  = gradcheck(name, fn, inputs, opts);
    EXPECT_TRUE(res.pass) << name << " max rel error " << res.maxRelError;
}

// Values bounded away from zero, for ops with a kink or pole at 0.
Tensor
awayFromZero(Shape shape, std::uint64_t seed) {
    Tensor t = randomTensor(std::move(shape), seed, 0.2, 1.5);
    auto v   = t.mutableValues();
    for (std::size_t i = 0; i < v.size(); i += 2) {
        v[i] = -v[i];
    }
    return t;
}

} // namespace

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
    const Tensor y = softmax(Tensor::full({4}, 2.5), 0);
    for (const Real v : y.values()) {
        EXPECT_DOUBLE_EQ(v, 0.25);
    }
}

TEST(Ops, MatmulWithIdentity) {
    const Tensor I({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor A = randomTensor({3, 5}, 3);
    const Tensor B = matmul(I, A);
    for (Index i = 0; i < A.numel(); ++i) {
        EXPECT_EQ(B.at(i), A.at(i));
    }
}

TEST(Ops, BilinearSampleAtCellCenter) {
    const Tensor map({1, 2, 2}, {0, 1, 2, 3});
    const Tensor at({2, 1, 1}, {0.5, 0.5});
    EXPECT_DOUBLE_EQ(bilinearSample(map, at).item(), 1.5);
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
    try {
        add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError &e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("add"), std::string::npos);
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[4]"), std::string::npos);
    }
}

TEST(Ops, TrailingBroadcast) {
    const Tensor a = randomTensor({2, 3, 4}, 1);
    const Tensor b = randomTensor({3, 4}, 2);
    const Tensor c = add(a, b);
    EXPECT_EQ(c.at(13), a.at(13) + b.at(1));
}

TEST(Backward, SumOfSquares) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x({2}, {3, -1}, true);
    const Tensor loss = sum(mul(x, x));
    const auto g      = tape.backward(loss).of(x);
    EXPECT_DOUBLE_EQ(g.at(0), 6);
    EXPECT_DOUBLE_EQ(g.at(1), -2);
}

TEST(Backward, SoftmaxCrossEntropyAtUniformLogits) {
    Tape tape;
    TapeScope scope(tape);
    Tensor logits = Tensor::zeros({4}, true);
    const Tensor p    = softmax(logits, 0);
    const Tensor loss = neg(log(slice(p, 0, 0, 1)));
    const auto g      = tape.backward(sum(loss)).of(logits);
    const double expected[4] = {-0.75, 0.25, 0.25, 0.25};
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(g.at(i), expected[i], 1e-15);
    }
}

TEST(Backward, NonScalarRootIsRejected) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x          = randomTensor({3}, 1, -1, 1, true);
    const Tensor y    = mul(x, x);
    EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Backward, UnreachableLeafGetsZeros) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x = randomTensor({3}, 1, -1, 1, true);
    Tensor y = randomTensor({2}, 2, -1, 1, true);
    const Tensor lx = sum(x);
    const Tensor ly = sum(y); // recorded but not on the path to lx
    (void)ly;
    const auto grads = tape.backward(lx);
    const Tensor gy  = grads.of(y);
    ASSERT_EQ(gy.shape(), y.shape());
    for (const Real v : gy.values()) {
        EXPECT_EQ(v, 0);
    }
}

TEST(Backward, ConstantsNeverReceiveGradients) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x        = randomTensor({3}, 1, -1, 1, true);
    const Tensor c  = randomTensor({3}, 2);
    const auto grads = tape.backward(sum(mul(x, c)));
    EXPECT_EQ(grads.all().size(), 3u); // leaf, mul, sum
    const Tensor gc = grads.of(c);
    for (const Real v : gc.values()) {
        EXPECT_EQ(v, 0);
    }
}

TEST(Detach, KeepsValues) {
    const Tensor x = randomTensor({5}, 4, -1, 1, true);
    const Tensor d = detach(x);
    EXPECT_FALSE(d.requiresGrad());
    for (Index i = 0; i < x.numel(); ++i) {
        EXPECT_EQ(d.at(i), x.at(i));
    }
}

TEST(Detach, SeversGradientExactly) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x       = randomTensor({4}, 5, -1, 1, true);
    const Tensor y = randomTensor({4}, 6);
    const Tensor h = exp(x); // an ancestor path through a recorded op
    const auto g   = tape.backward(sum(mul(detach(h), y))).of(x);
    for (const Real v : g.values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Detach, OnlyLiveBranchContributes) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x     = randomTensor({4}, 7, -1, 1, true);
    const auto g = tape.backward(sum(mul(detach(x), x))).of(x);
    for (Index i = 0; i < x.numel(); ++i) {
        EXPECT_EQ(g.at(i), x.at(i));
    }
}

TEST(Tape, ReplayIsBitIdentical) {
    auto run = []() {
        Tape tape;
        TapeScope scope(tape);
        Tensor x        = randomTensor({2, 6, 6}, 11, -1, 1, true);
        Tensor w        = randomTensor({3, 2, 3, 3}, 12, -1, 1, true);
        const Tensor y  = relu(conv2d(x, w, Tensor(), {1, 1}));
        const auto g    = tape.backward(mean(y));
        std::vector<Real> out(y.values().begin(), y.values().end());
        const Tensor gw = g.of(w);
        out.insert(out.end(), gw.values().begin(), gw.values().end());
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(Gradcheck, Elementwise) {
    const Tensor a = randomTensor({2, 3}, 21);
    const Tensor b = awayFromZero({2, 3}, 22);
    expectGradcheck("add", [](const auto &in) { return add(in[0], in[1]); }, {a, b});
    expectGradcheck("sub", [](const auto &in) { return sub(in[0], in[1]); }, {a, b});
    expectGradcheck("mul", [](const auto &in) { return mul(in[0], in[1]); }, {a, b});
    expectGradcheck("div", [](const auto &in) { return div(in[0], in[1]); }, {a, b});
    expectGradcheck("add_bcast", [](const auto &in) { return add(in[0], in[1]); }, {randomTensor({4, 2, 3}, 23), b});
    expectGradcheck("mul_scalar_bcast", [](const auto &in) { return mul(in[0], in[1]); }, {a, randomTensor({1}, 24)});
    expectGradcheck("exp", [](const auto &in) { return exp(in[0]); }, {a});
    expectGradcheck("log", [](const auto &in) { return log(in[0]); }, {randomTensor({6}, 25, 0.3, 2)});
    expectGradcheck("sqrt", [](const auto &in) { return sqrt(in[0]); }, {randomTensor({6}, 26, 0.3, 2)});
    expectGradcheck("relu", [](const auto &in) { return relu(in[0]); }, {awayFromZero({6}, 27)});
    expectGradcheck("abs", [](const auto &in) { return abs(in[0]); }, {awayFromZero({6}, 28)});
    expectGradcheck("sigmoid", [](const auto &in) { return sigmoid(in[0]); }, {randomTensor({6}, 29, -4, 4)});
    expectGradcheck("softplus", [](const auto &in) { return softplus(in[0]); }, {randomTensor({6}, 30, -4, 4)});
    expectGradcheck("clip", [](const auto &in) { return clip(in[0], -0.5, 0.5); },
                    {Tensor({4}, {-0.9, -0.2, 0.3, 0.8})});
}

TEST(Gradcheck, LinearAndSpatial) {
    expectGradcheck("matmul", [](const auto &in) { return matmul(in[0], in[1]); },
                    {randomTensor({3, 4}, 31), randomTensor({4, 2}, 32)});
    const GradcheckFn conv = [](const auto &in) { return conv2d(in[0], in[1], in[2], {1, 1}); };
    expectGradcheck("conv2d", conv, {randomTensor({2, 5, 4}, 33), randomTensor({3, 2, 3, 3}, 34), randomTensor({3}, 35)});
    const GradcheckFn conv2 = [](const auto &in) { return conv2d(in[0], in[1], Tensor(), {2, 1}); };
    expectGradcheck("conv2d_stride2", conv2, {randomTensor({2, 6, 5}, 36), randomTensor({2, 2, 3, 3}, 37)});
    // Sample positions kept away from integer grid lines (kinks of the interpolant).
    std::vector<Real> coords = {0.3, 1.7, 2.6, -0.4, 1.2, 0.45, 2.35, 0.8};
    expectGradcheck("bilinear_sample", [](const auto &in) { return bilinearSample(in[0], in[1]); },
                    {randomTensor({2, 3, 3}, 38), Tensor({2, 2, 2}, coords)});
    expectGradcheck("upsample", [](const auto &in) { return upsampleNearest(in[0], 2); }, {randomTensor({2, 2, 3}, 39)});
}

TEST(Gradcheck, ShapeAndReductions) {
    const Tensor x = randomTensor({2, 3, 4}, 41);
    for (int axis = 0; axis < 3; ++axis) {
        expectGradcheck("softmax", [axis](const auto &in) { return softmax(in[0], axis); }, {x});
        expectGradcheck("sum_axis", [axis](const auto &in) { return sum(in[0], axis); }, {x});
        expectGradcheck("mean_axis", [axis](const auto &in) { return mean(in[0], axis); }, {x});
        expectGradcheck("max_axis", [axis](const auto &in) { return max(in[0], axis); }, {x});
    }
    expectGradcheck("concat", [](const auto &in) { return concat({in[0], in[1]}, 1); },
                    {randomTensor({2, 1, 3}, 42), randomTensor({2, 2, 3}, 43)});
    expectGradcheck("slice", [](const auto &in) { return slice(in[0], 2, 1, 2); }, {x});
    expectGradcheck("reshape", [](const auto &in) { return reshape(in[0], {6, 4}); }, {x});
    expectGradcheck("sum", [](const auto &in) { return sum(in[0]); }, {x});
    expectGradcheck("mean", [](const auto &in) { return mean(in[0]); }, {x});
}

TEST(Checkpoint, RoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "dsplat_ck_roundtrip.bin";
    const Tensor a  = randomTensor({2, 3}, 51);
    const Tensor b  = randomTensor({4}, 52);
    saveCheckpoint(path, {{"a", a}, {"b", b}}, R"({"k":1})");
    const Checkpoint ck = loadCheckpoint(path);
    EXPECT_EQ(ck.metadata, R"({"k":1})");
    EXPECT_EQ(ck.scalarBytes, static_cast<int>(sizeof(Real)));
    ASSERT_NE(ck.find("a"), nullptr);
    EXPECT_EQ(ck.find("a")->shape(), a.shape());
    for (Index i = 0; i < a.numel(); ++i) {
        EXPECT_EQ(ck.find("a")->at(i), a.at(i));
    }
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignFile) {
    const auto path = std::filesystem::temp_directory_path() / "dsplat_ck_bad.bin";
    {
        std::ofstream os(path);
        os << "not a checkpoint";
    }
    EXPECT_THROW(loadCheckpoint(path), CheckpointError);
    std::filesystem::remove(path);
}
