// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/gradcheck.hpp"
#include "dsplat/train/loss.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace dsplat;
using ad::Tensor;

namespace {

/// Direct SSIM: Gaussian-weighted statistics evaluated window by window over
/// every fully contained 11x11 window, averaged over channels and windows.
double
naiveSsim(const Tensor &a, const Tensor &b) {
    const int C = static_cast<int>(a.dim(0)), H = static_cast<int>(a.dim(1)), W = static_cast<int>(a.dim(2));
    constexpr int R = 5;
    double g[2 * R + 1], gs = 0;
    for (int i = -R; i <= R; ++i) {
        g[i + R] = std::exp(-i * i / (2 * 1.5 * 1.5));
        gs += g[i + R];
    }
    double total = 0;
    int count    = 0;
    for (int c = 0; c < C; ++c) {
        for (int y = R; y < H - R; ++y) {
            for (int x = R; x < W - R; ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int dy = -R; dy <= R; ++dy) {
                    for (int dx = -R; dx <= R; ++dx) {
                        const double w  = g[dy + R] * g[dx + R] / (gs * gs);
                        const double va = a.at((c * H + y + dy) * W + x + dx), vb = b.at((c * H + y + dy) * W + x + dx);
                        mx += w * va;
                        my += w * vb;
                        xx += w * va * va;
                        yy += w * vb * vb;
                        xy += w * va * vb;
                    }
                }
                const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
                total += (2 * mx * my + train::kSsimC1) * (2 * cxy + train::kSsimC2) /
                         ((mx * mx + my * my + train::kSsimC1) * (vx + vy + train::kSsimC2));
                ++count;
            }
        }
    }
    return total / count;
}

} // namespace

TEST(Ssim, MatchesDirectWindowedComputation) {
    const Tensor a = ad::randomTensor({3, 17, 14}, 1, 0, 1), b = ad::randomTensor({3, 17, 14}, 2, 0, 1);
    EXPECT_NEAR(train::ssim(a, b).item(), naiveSsim(a, b), 1e-12);
    EXPECT_NEAR(train::ssimValue(a.values(), b.values(), 3, 17, 14), naiveSsim(a, b), 1e-12);
}

TEST(Ssim, IdentityAndSymmetry) {
    const Tensor a = ad::randomTensor({3, 16, 16}, 3, 0, 1), b = ad::randomTensor({3, 16, 16}, 4, 0, 1);
    EXPECT_NEAR(train::ssim(a, a).item(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(train::ssim(a, b).item(), train::ssim(b, a).item());
    EXPECT_LT(train::ssim(a, b).item(), 0.5);
}

TEST(Ssim, ConstantImagesClosedForm) {
    // Zero variance: only the luminance term remains.
    const double u = 0.3, v = 0.7;
    const double expected = (2 * u * v + train::kSsimC1) / (u * u + v * v + train::kSsimC1);
    EXPECT_NEAR(train::ssim(Tensor::full({3, 12, 12}, u), Tensor::full({3, 12, 12}, v)).item(), expected, 1e-12);
    // Black against white.
    EXPECT_NEAR(train::ssim(Tensor::full({1, 12, 12}, 0), Tensor::full({1, 12, 12}, 1)).item(),
                train::kSsimC1 / (1 + train::kSsimC1), 1e-15);
}

TEST(Ssim, SmallMapsArePadded) {
    const Tensor a = ad::randomTensor({3, 8, 8}, 5, 0, 1);
    EXPECT_NEAR(train::ssim(a, a).item(), 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(train::ssim(a, ad::randomTensor({3, 8, 8}, 6, 0, 1)).item()));
}

TEST(Ssim, GradcheckOn8x8) {
    const auto r = ad::gradcheck("ssim", [](const auto &in) { return train::ssim(in[0], in[1]); },
                                 {ad::randomTensor({3, 8, 8}, 7, 0, 1), ad::randomTensor({3, 8, 8}, 8, 0, 1)}, {1e-5, 1e-6});
    EXPECT_TRUE(r.pass) << r.maxRelError;
}

TEST(Psnr, Examples) {
    const std::vector<Real> a(300, 0.5), b(300, 0.6);
    EXPECT_NEAR(train::psnr(a, b), 20.0, 1e-9); // MSE 0.01
    EXPECT_EQ(train::psnr(a, a), train::kPsnrIdentical);
    EXPECT_EQ(train::cappedPsnr(train::psnr(a, a)), train::kPsnrCap);
    const std::vector<Real> c(300, 0.0), d(300, 1.0);
    EXPECT_NEAR(train::psnr(c, d), 0.0, 1e-12);
}

TEST(Loss, WeightedCombination) {
    const Tensor a = ad::randomTensor({3, 12, 12}, 9, 0, 1), b = ad::randomTensor({3, 12, 12}, 10, 0, 1);
    const train::LossWeights w{2.0, 0.5};
    const auto terms = train::reconstructionLoss(a, b, w);
    double l1 = 0;
    for (ad::Index i = 0; i < a.numel(); ++i) {
        l1 += std::abs(a.at(i) - b.at(i));
    }
    l1 /= static_cast<double>(a.numel());
    EXPECT_NEAR(terms.l1, l1, 1e-12);
    EXPECT_NEAR(terms.ssim, naiveSsim(a, b), 1e-12);
    EXPECT_NEAR(terms.total.item(), 2.0 * l1 + 0.5 * (1 - terms.ssim), 1e-12);
    EXPECT_NEAR(train::reconstructionLoss(a, a, w).total.item(), 0.0, 1e-12);
    EXPECT_ANY_THROW((train::LossWeights{-1, 0}.validate()));
}

TEST(Loss, ConstantOffsetWithoutSsim) {
    const Tensor a = ad::randomTensor({3, 12, 12}, 11, 0, 0.8);
    const auto terms = train::reconstructionLoss(ad::addScalar(a, 0.1), a, {2.0, 0.0});
    EXPECT_NEAR(terms.total.item(), 0.1 * 2.0, 1e-12);
}
