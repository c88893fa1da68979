// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/gradcheck.hpp"
#include "dsplat/splat/render.hpp"
#include "dsplat/splat/scene_io.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

using namespace dsplat::splat;
using dsplat::Real;
namespace ad   = dsplat::ad;
namespace geom = dsplat::geom;

namespace {

geom::Camera
pinhole(int w, int h, double f) {
    geom::Camera cam;
    cam.fx = cam.fy = f;
    cam.cx          = (w - 1) / 2.0;
    cam.cy          = (h - 1) / 2.0;
    cam.width       = w;
    cam.height      = h;
    return cam;
}

Vec4
randomQuat(std::mt19937_64 &rng) {
    std::normal_distribution<double> n;
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q / q.norm();
}

GaussianScene
randomScene(std::size_t n, std::uint64_t seed, int degree = 1, double spread = 0.6) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    GaussianScene scene(0, degree);
    for (std::size_t i = 0; i < n; ++i) {
        GaussianPrimitive p;
        p.center  = Vec3((u(rng) - 0.5) * spread, (u(rng) - 0.5) * spread, 3 + u(rng));
        p.quat    = randomQuat(rng);
        p.scale   = Vec3(0.1 + 0.2 * u(rng), 0.1 + 0.2 * u(rng), 0.1 + 0.2 * u(rng));
        p.opacity = static_cast<Real>(0.3 + 0.5 * u(rng));
        p.base    = Vec3(u(rng), u(rng), u(rng));
        p.sh.assign(static_cast<std::size_t>(shCount(degree)), Vec3::Zero());
        for (auto &c : p.sh) {
            c = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5) * Real(0.4);
        }
        scene.push(p);
    }
    return scene;
}

} // namespace

TEST(Covariance, IdentityAndAxisAligned) {
    const Mat3 I = covarianceWorld(Vec4(1, 0, 0, 0), Vec3(1, 1, 1));
    EXPECT_TRUE(I.isApprox(Mat3::Identity(), 1e-15));
    const Mat3 D = covarianceWorld(Vec4(1, 0, 0, 0), Vec3(2, 1, 1));
    EXPECT_TRUE(D.isApprox(Vec3(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Covariance, EigenvaluesAreSquaredScales) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 s(0.5 + trial * 0.1, 0.2, 1.3);
        const Mat3 S = covarianceWorld(randomQuat(rng), s);
        EXPECT_LT((S - S.transpose()).cwiseAbs().maxCoeff(), 1e-7);
        Eigen::SelfAdjointEigenSolver<Mat3> es(S);
        std::vector<double> ev = {es.eigenvalues()[0], es.eigenvalues()[1], es.eigenvalues()[2]};
        std::vector<double> sq = {s[0] * s[0], s[1] * s[1], s[2] * s[2]};
        std::sort(ev.begin(), ev.end());
        std::sort(sq.begin(), sq.end());
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(ev[k], sq[k], 1e-6);
        }
    }
}

TEST(Projection, OnAxisIsotropic) {
    const auto cam = pinhole(64, 64, 50);
    RenderSettings s;
    const double sigma = 0.2, d = 4;
    const auto pg      = projectGaussian(Vec3(0, 0, d), Mat3::Identity() * sigma * sigma, cam, s);
    ASSERT_TRUE(pg.visible);
    EXPECT_NEAR(pg.mean2.x(), cam.cx, 1e-12);
    EXPECT_NEAR(pg.mean2.y(), cam.cy, 1e-12);
    const double expected = std::pow(50 * sigma / d, 2) + 0.3;
    EXPECT_NEAR(pg.cov2(0, 0), expected, 1e-12);
    EXPECT_NEAR(pg.cov2(1, 1), expected, 1e-12);
    EXPECT_NEAR(pg.cov2(0, 1), 0, 1e-12);
    const auto far = projectGaussian(Vec3(0, 0, 2 * d), Mat3::Identity() * sigma * sigma, cam, s);
    EXPECT_NEAR(far.cov2(0, 0) - 0.3, (pg.cov2(0, 0) - 0.3) / 4, 1e-12);
}

TEST(Projection, BehindCameraIsCulled) {
    RenderSettings s;
    EXPECT_FALSE(projectGaussian(Vec3(0, 0, -1), Mat3::Identity(), pinhole(8, 8, 10), s).visible);
}

TEST(Sh, ConstantAndDegreeOne) {
    const Vec3 base(0.1, 0.2, 0.3);
    std::vector<Vec3> c0 = {Vec3(1, 2, 3)};
    const Vec3 out0 = shEval(base, c0, Vec3(0.6, 0, 0.8), 0);
    EXPECT_NEAR(out0[0], 0.1 + 0.2820948, 1e-7);
    std::vector<Vec3> c1 = {Vec3::Zero(), Vec3::Zero(), Vec3(0.5, 0.5, 0.5), Vec3::Zero()};
    const Vec3 plus  = shEval(base, c1, Vec3(0, 0, 1), 1);
    const Vec3 minus = shEval(base, c1, Vec3(0, 0, -1), 1);
    EXPECT_NEAR(plus[0] - minus[0], 2 * 0.5 * 0.4886025, 1e-7);
    std::vector<Vec3> zeros(4, Vec3::Zero());
    EXPECT_EQ(shEval(base, zeros, Vec3(0, 1, 0), 1), base);
}

TEST(Sh, BasisGradientMatchesFiniteDifferences) {
    const Vec3 dir = Vec3(0.3, -0.5, 0.7).normalized();
    Real Y[16], Yp[16], Ym[16];
    Vec3 dY[16];
    shBasis(dir, 3, Y, dY);
    for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a]   = 1e-6;
        shBasis(dir + e, 3, Yp);
        shBasis(dir - e, 3, Ym);
        for (int k = 0; k < 16; ++k) {
            EXPECT_NEAR(dY[k][a], (Yp[k] - Ym[k]) / 2e-6, 1e-8) << "basis " << k;
        }
    }
}

TEST(Render, EmptySceneIsBackground) {
    RenderSettings s;
    s.background = {0.2, 0.4, 0.6};
    const auto r = render(GaussianScene(0, 1), pinhole(8, 6, 10), s);
    for (int c = 0; c < 3; ++c) {
        for (int p = 0; p < 48; ++p) {
            EXPECT_EQ(r.image[static_cast<std::size_t>(c * 48 + p)], s.background[static_cast<std::size_t>(c)]);
        }
    }
}

TEST(Render, SingleOpaqueGaussianAtCenter) {
    // cov2 = I exactly: pick sigma so that (f sigma / d)^2 + eps = 1.
    auto cam = pinhole(9, 9, 10);
    RenderSettings s;
    const double d = 2, sigma = std::sqrt(1 - s.epsCov) * d / 10;
    GaussianScene scene(1, 0);
    GaussianPrimitive p;
    p.center  = Vec3(0, 0, d);
    p.scale   = Vec3(sigma, sigma, sigma);
    p.opacity = 1;
    p.base    = Vec3(1, 1, 1);
    p.sh      = {Vec3::Zero()};
    scene.set(0, p);
    const auto r = render(scene, cam, s);
    EXPECT_NEAR(r.image[4 * 9 + 4], 0.999, 1e-12);
}

TEST(Render, TwoLayerCompositing) {
    // Two wide, flat Gaussians: w ~= 0.5 each near the image center.
    auto cam = pinhole(5, 5, 5);
    RenderSettings s;
    GaussianScene scene(2, 0);
    for (int i = 0; i < 2; ++i) {
        GaussianPrimitive p;
        p.center  = Vec3(0, 0, 2 + i);
        p.scale   = Vec3(1e3, 1e3, 1e-3);
        p.opacity = 0.5;
        p.base    = i == 0 ? Vec3(1, 1, 1) : Vec3(0, 0, 0);
        p.sh      = {Vec3::Zero()};
        scene.set(static_cast<std::size_t>(i), p);
    }
    const auto r = render(scene, cam, s);
    EXPECT_NEAR(r.image[2 * 5 + 2], 0.5, 1e-6);
}

TEST(Render, TransmittancePartitionOfUnity) {
    GaussianScene scene = randomScene(40, 5);
    for (auto &b : scene.base) {
        b = 1;
    }
    std::fill(scene.sh.begin(), scene.sh.end(), Real(0));
    RenderSettings s; // black background
    const auto r = render(scene, pinhole(24, 20, 20), s);
    for (std::size_t p = 0; p < r.transmittance.size(); ++p) {
        EXPECT_NEAR(r.image[p] + r.transmittance[p], 1.0, 1e-12);
        EXPECT_GE(r.transmittance[p], 0.0);
        EXPECT_LE(r.transmittance[p], 1.0);
    }
}

TEST(Render, PermutationInvariant) {
    const GaussianScene scene = randomScene(30, 6);
    std::vector<std::size_t> order(scene.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(9));
    RenderSettings s;
    const auto cam = pinhole(32, 32, 30);
    EXPECT_EQ(render(scene, cam, s).image, render(scene.permuted(order), cam, s).image);
}

TEST(Render, IndependentOfTileSize) {
    const GaussianScene scene = randomScene(30, 7);
    RenderSettings a, b;
    b.tileSize     = 5;
    const auto cam = pinhole(32, 32, 30);
    EXPECT_EQ(render(scene, cam, a).image, render(scene, cam, b).image);
}

TEST(RenderBackward, OpacityGradientOfSoleCoveringGaussian) {
    auto cam = pinhole(9, 9, 10);
    RenderSettings s;
    GaussianScene scene(1, 0);
    GaussianPrimitive p;
    p.center  = Vec3(0.05, -0.03, 2);
    p.scale   = Vec3(0.15, 0.15, 0.15);
    p.opacity = 0.6;
    p.base    = Vec3(0.9, 0.5, 0.2);
    p.sh      = {Vec3::Zero()};
    scene.set(0, p);
    const auto r = render(scene, cam, s);
    // Loss = <g, image> restricted to one pixel: dL/dalpha = G * <g, color - bg>.
    std::vector<Real> g(r.image.size(), 0);
    const std::size_t pix = 4 * 9 + 4;
    g[pix] = 1, g[81 + pix] = -2, g[162 + pix] = 0.5;
    const auto grad = renderBackward(scene, cam, s, g);
    const auto pg   = projectGaussian(p.center, covarianceWorld(p.quat, p.scale), cam, s);
    const double dx = 4 - pg.mean2.x(), dy = 4 - pg.mean2.y();
    const double G  = std::exp(-0.5 * (pg.conic[0] * dx * dx + 2 * pg.conic[1] * dx * dy + pg.conic[2] * dy * dy));
    const Vec3 color = p.base + Real(0.2820948) * Vec3::Zero();
    EXPECT_NEAR(grad.opacities[0], G * (1 * color[0] - 2 * color[1] + 0.5 * color[2]), 1e-12);
}

TEST(RenderBackward, OccludedPrimitiveGetsNegligibleGradient) {
    auto cam = pinhole(9, 9, 10);
    RenderSettings s;
    GaussianScene scene(0, 0);
    // Three opaque wide layers in front of a small Gaussian.
    for (int i = 0; i < 3; ++i) {
        GaussianPrimitive p;
        p.center  = Vec3(0, 0, 1 + 0.1 * i);
        p.scale   = Vec3(10, 10, 0.01);
        p.opacity = 1;
        p.base    = Vec3(0.5, 0.5, 0.5);
        p.sh      = {Vec3::Zero()};
        scene.push(p);
    }
    GaussianPrimitive back;
    back.center  = Vec3(0, 0, 3);
    back.scale   = Vec3(0.2, 0.2, 0.2);
    back.opacity = 0.8;
    back.base    = Vec3(1, 0, 0);
    back.sh      = {Vec3::Zero()};
    scene.push(back);
    std::vector<Real> g(3 * 81, 1);
    const auto grad = renderBackward(scene, cam, s, g);
    const double front = std::abs(grad.base[0]);
    EXPECT_LE(std::abs(grad.base[3]), 1e-3 * front);
    EXPECT_LE(std::abs(grad.opacities[3]), 1e-3 * front);
}

TEST(RenderBackward, FiniteDifferences) {
    const GaussianScene scene = randomScene(3, 11, 1, 0.3);
    const auto cam            = pinhole(16, 16, 14);
    RenderSettings s;
    s.background = {0.1, 0.2, 0.3};
    const auto t = SceneTensors::fromScene(scene, false);
    const ad::GradcheckFn fn = [&](const std::vector<ad::Tensor> &in) {
        SceneTensors st{1, in[0], in[1], in[2], in[3], in[4], in[5]};
        return renderOp(st, cam, s);
    };
    ad::GradcheckOptions opts;
    opts.tolerance = 1e-3;
    const auto res = ad::gradcheck("render", fn, {t.means, t.quats, t.scales, t.opacities, t.base, t.sh}, opts);
    EXPECT_TRUE(res.pass) << "max rel error " << res.maxRelError;
    RecordProperty("max_rel_error", std::to_string(res.maxRelError));
    std::printf("render FD max rel error %.3g\n", res.maxRelError);
    for (std::size_t k = 0; k < res.relErrors.size(); ++k) {
        EXPECT_LT(res.relErrors[k], 1e-3) << "field " << k;
    }
}

TEST(SceneIo, RoundTrip) {
    const GaussianScene scene = randomScene(5, 12, 2);
    const auto path           = std::filesystem::temp_directory_path() / "dsplat_scene.bin";
    saveScene(path, scene);
    const GaussianScene back = loadScene(path);
    ASSERT_EQ(back.size(), scene.size());
    EXPECT_EQ(back.shDegree, 2);
    for (std::size_t i = 0; i < scene.means.size(); ++i) {
        EXPECT_NEAR(back.means[i], scene.means[i], 1e-6);
    }
    std::filesystem::remove(path);
}
