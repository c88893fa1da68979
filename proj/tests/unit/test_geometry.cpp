// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/gradcheck.hpp"
#include "dsplat/geometry/plane_sweep.hpp"
#include "dsplat/splat/render.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace dsplat;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

geom::Camera
pinhole(int w, int h, double f, double cx, double cy) {
    geom::Camera cam;
    cam.fx = cam.fy = f;
    cam.cx          = cx;
    cam.cy          = cy;
    cam.width       = w;
    cam.height      = h;
    return cam;
}

geom::Camera
randomCamera(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    geom::Camera cam = pinhole(64, 48, 70, 31.2, 24.9);
    cam.R            = Eigen::AngleAxisd(0.3 * u(rng), Vector3d(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
    cam.t            = Vector3d(u(rng), u(rng), u(rng)) * 0.5;
    return cam;
}

} // namespace

// --- camera ------------------------------------------------------------------

TEST(Camera, ProjectOpticalAxis) {
    const auto cam = pinhole(101, 101, 100, 50, 50);
    const auto p   = geom::project({0, 0, 2}, cam);
    EXPECT_DOUBLE_EQ(p.pixel.x(), 50);
    EXPECT_DOUBLE_EQ(p.pixel.y(), 50);
    EXPECT_DOUBLE_EQ(p.depth, 2);
    EXPECT_DOUBLE_EQ(geom::project({1, 0, 2}, cam).pixel.x(), 100); // 100 * 1/2 + 50
}

TEST(Camera, BehindCameraThrows) {
    const auto cam = pinhole(10, 10, 10, 5, 5);
    EXPECT_THROW(geom::project({0, 0, -1}, cam), geom::GeometryError);
    EXPECT_THROW(geom::project({0, 0, 0}, cam), geom::GeometryError);
    EXPECT_THROW(geom::unproject({1, 1}, 0.0, cam), geom::GeometryError);
}

TEST(Camera, UnprojectExamples) {
    const auto cam = pinhole(101, 101, 100, 50, 50);
    EXPECT_TRUE(geom::unproject({50, 50}, 3.0, cam).isApprox(Vector3d(0, 0, 3)));
    EXPECT_TRUE(geom::unproject({150, 50}, 1.0, cam).isApprox(Vector3d(1, 0, 1)));
}

TEST(Camera, RoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 200; ++i) {
        const auto cam = randomCamera(rng);
        const Vector2d px(u(rng) * 63, u(rng) * 47);
        const double depth = 0.5 + 5 * u(rng);
        const auto p       = geom::project(geom::unproject(px, depth, cam), cam);
        EXPECT_LT((p.pixel - px).norm(), 1e-6);
        EXPECT_NEAR(p.depth, depth, 1e-6);
    }
}

TEST(Camera, UnprojectRayMatchesFiniteDifference) {
    std::mt19937_64 rng(4);
    const auto cam = randomCamera(rng);
    const Vector2d px(12.3, 40.1);
    const double h = 1e-6, d = 2.2;
    const Vector3d fd = (geom::unproject(px, d + h, cam) - geom::unproject(px, d - h, cam)) / (2 * h);
    EXPECT_LT((fd - geom::unprojectRay(px, cam)).norm(), 1e-8);
}

TEST(Camera, InvariantsValidated) {
    auto cam = pinhole(10, 10, 10, 5, 5);
    EXPECT_NO_THROW(cam.validate());
    cam.fx = -1;
    EXPECT_THROW(cam.validate(), geom::GeometryError);
    cam    = pinhole(10, 10, 10, 12, 5);
    EXPECT_THROW(cam.validate(), geom::GeometryError);
    cam      = pinhole(10, 10, 10, 5, 5);
    cam.R(0, 0) = -1; // det = -1
    EXPECT_THROW(cam.validate(), geom::GeometryError);
}

TEST(Camera, LookAtIsProperRotation) {
    const auto cam = geom::lookAt({1, 2, 3}, {0, 0, 0}, {0, 1, 0}, 50, 50, 20, 20, 40, 40);
    EXPECT_LT((cam.R.transpose() * cam.R - Eigen::Matrix3d::Identity()).norm(), 1e-12);
    EXPECT_NEAR(cam.R.determinant(), 1, 1e-12);
    const auto p = geom::project({0, 0, 0}, cam);
    EXPECT_NEAR(p.pixel.x(), 20, 1e-9);
    EXPECT_NEAR(p.pixel.y(), 20, 1e-9);
    EXPECT_NEAR(p.depth, std::sqrt(14.0), 1e-9);
    // The up vector maps to the upper half of the image.
    EXPECT_LT(geom::project({0, 0.1, 0}, cam).pixel.y(), 20);
}

TEST(Camera, CameraFileRoundTrip) {
    std::mt19937_64 rng(5);
    std::vector<geom::CameraRecord> frames;
    for (int i = 0; i < 3; ++i) {
        frames.push_back({1000 + i, randomCamera(rng)});
    }
    const auto path = std::filesystem::temp_directory_path() / "dsplat_cameras_test.txt";
    geom::writeCameraFile(path, frames);
    const auto back = geom::readCameraFile(path, 64, 48);
    ASSERT_EQ(back.size(), frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        EXPECT_EQ(back[i].timestamp, frames[i].timestamp);
        EXPECT_NEAR(back[i].camera.fx, frames[i].camera.fx, 1e-6);
        EXPECT_NEAR(back[i].camera.cx, frames[i].camera.cx, 1e-6);
        EXPECT_LT((back[i].camera.R - frames[i].camera.R).norm(), 1e-6);
        EXPECT_LT((back[i].camera.t - frames[i].camera.t).norm(), 1e-6);
    }
    std::filesystem::remove(path);
}

// --- homography --------------------------------------------------------------

TEST(Homography, IdentityForSameCamera) {
    std::mt19937_64 rng(6);
    const auto cam = randomCamera(rng);
    for (const double d : {0.5, 2.0, 40.0}) {
        Eigen::Matrix3d H = geom::planeHomography(cam, cam, d);
        H /= H(2, 2);
        EXPECT_LT((H - Eigen::Matrix3d::Identity()).norm(), 1e-9);
    }
}

TEST(Homography, PureTranslationShift) {
    const double f = 80, b = 0.3, depth = 2.5;
    const auto ref = pinhole(64, 64, f, 32, 32);
    auto src       = ref;
    src.t          = Vector3d(-b, 0, 0); // source center at x = +b
    const Eigen::Vector3d u(20, 17, 1);
    const Eigen::Vector3d v = geom::planeHomography(src, ref, depth) * u;
    EXPECT_NEAR(v.x() / v.z() - u.x(), -f * b / depth, 1e-9);
    EXPECT_NEAR(v.y() / v.z(), u.y(), 1e-9);
}

TEST(Homography, WarpConsistency) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 50; ++i) {
        const auto ref = randomCamera(rng), src = randomCamera(rng);
        const Vector2d px(u(rng) * 63, u(rng) * 47);
        const double depth = 2 + 3 * u(rng);
        const Vector3d world = geom::unproject(px, depth, ref);
        const Vector3d viaH  = geom::planeHomography(src, ref, depth) * Vector3d(px.x(), px.y(), 1);
        const auto direct    = geom::project(world, src);
        EXPECT_LT((viaH.hnormalized() - direct.pixel).norm(), 1e-5);
    }
}

// --- plane sweep -------------------------------------------------------------

TEST(PlaneSweep, PlanesUniformInInverseDepth) {
    const auto p = geom::DepthPlanes::make(1, 4, 4, geom::PlaneSpacing::InverseDepth);
    const auto disp = p.disparities();
    ASSERT_EQ(disp.size(), 4u);
    EXPECT_NEAR(disp.front(), 1.0, 1e-12);
    EXPECT_NEAR(disp.back(), 0.25, 1e-12);
    EXPECT_NEAR(disp[0] - disp[1], disp[2] - disp[3], 1e-12);
}

TEST(PlaneSweep, IdentityWarpIsConstantAcrossPlanes) {
    const auto cam    = pinhole(8, 6, 8, 3.5, 2.5);
    const auto planes = geom::DepthPlanes::make(1, 5, 5, geom::PlaneSpacing::InverseDepth);
    const ad::Tensor f = ad::randomTensor({4, 6, 8}, 11);
    const auto vol     = mvs::buildCostVolume(f, {f}, cam, {cam}, planes);
    ASSERT_EQ(vol.logits.shape(), (ad::Shape{5, 6, 8}));
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 8; ++x) {
            double norm2 = 0;
            for (int c = 0; c < 4; ++c) {
                norm2 += std::pow(f.at((c * 6 + y) * 8 + x), 2);
            }
            for (int d = 0; d < 5; ++d) {
                EXPECT_NEAR(vol.logits.at((d * 6 + y) * 8 + x), norm2 / 2.0, 1e-9); // sqrt(C) = 2
            }
        }
    }
}

TEST(PlaneSweep, Bilinearity) {
    const auto ref = pinhole(8, 8, 8, 3.5, 3.5);
    auto src       = ref;
    src.t          = Vector3d(-0.2, 0.05, 0);
    const auto planes  = geom::DepthPlanes::make(1, 4, 4, geom::PlaneSpacing::InverseDepth);
    const ad::Tensor a = ad::randomTensor({3, 8, 8}, 12), b = ad::randomTensor({3, 8, 8}, 13);
    const auto v1 = mvs::buildCostVolume(a, {b}, ref, {src}, planes);
    const auto v2 = mvs::buildCostVolume(ad::mulScalar(a, 2), {ad::mulScalar(b, 2)}, ref, {src}, planes);
    for (ad::Index i = 0; i < v1.logits.numel(); ++i) {
        EXPECT_NEAR(v2.logits.at(i), 4 * v1.logits.at(i), 1e-9);
    }
}

TEST(PlaneSweep, EmptySourcesThrow) {
    const auto cam    = pinhole(4, 4, 4, 1.5, 1.5);
    const auto planes = geom::DepthPlanes::make(1, 4, 4, geom::PlaneSpacing::InverseDepth);
    EXPECT_ANY_THROW(mvs::buildCostVolume(ad::randomTensor({2, 4, 4}, 1), {}, cam, {}, planes));
}

TEST(PlaneSweep, FusedMatchesComposite) {
    const auto ref = pinhole(8, 8, 8, 3.5, 3.5);
    auto s1 = ref, s2 = ref;
    s1.t = Vector3d(-0.3, 0, 0);
    s2.t = Vector3d(0.25, 0.1, 0.05);
    const auto planes = geom::DepthPlanes::make(1.2, 5, 4, geom::PlaneSpacing::InverseDepth);
    const std::vector<ad::Tensor> in{ad::randomTensor({3, 8, 8}, 21, -1, 1, true), ad::randomTensor({3, 8, 8}, 22, -1, 1, true),
                                     ad::randomTensor({3, 8, 8}, 23, -1, 1, true)};
    const ad::Tensor weights = ad::randomTensor({4, 8, 8}, 24);
    std::vector<ad::Tensor> grads[2];
    std::vector<double> values[2];
    for (int route = 0; route < 2; ++route) {
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const auto build = route == 0 ? mvs::buildCostVolume : mvs::buildCostVolumeComposite;
        const auto vol   = build(in[0], {in[1], in[2]}, ref, {s1, s2}, planes);
        values[route].assign(vol.logits.values().begin(), vol.logits.values().end());
        const auto map = ad::backward(tape, ad::sum(ad::mul(vol.logits, weights)));
        for (const auto &t : in) {
            grads[route].push_back(map.of(t));
        }
    }
    for (std::size_t i = 0; i < values[0].size(); ++i) {
        EXPECT_NEAR(values[0][i], values[1][i], 1e-10);
    }
    for (std::size_t k = 0; k < in.size(); ++k) {
        for (ad::Index i = 0; i < grads[0][k].numel(); ++i) {
            EXPECT_NEAR(grads[0][k].at(i), grads[1][k].at(i), 1e-10);
        }
    }
}

TEST(PlaneSweep, GradcheckOn8x8WithFourPlanes) {
    const auto ref = pinhole(8, 8, 8, 3.5, 3.5);
    auto src       = ref;
    src.t          = Vector3d(-0.23, 0.04, 0.0);
    const auto planes = geom::DepthPlanes::make(1.3, 6.1, 4, geom::PlaneSpacing::InverseDepth);
    const auto r = ad::gradcheck(
        "cost_volume",
        [&](const auto &in) {
            const auto vol = mvs::buildCostVolume(in[0], {in[1]}, ref, {src}, planes);
            return mvs::disparityFromVolume(vol.logits, planes).disparity;
        },
        {ad::randomTensor({3, 8, 8}, 31), ad::randomTensor({3, 8, 8}, 32)}, {1e-5, 1e-6});
    EXPECT_TRUE(r.pass) << r.maxRelError;
}

TEST(PlaneSweep, TexturedPlanePeaksAtItsDepth) {
    // A textured wall of small Gaussians exactly on plane k of the reference
    // view, seen from a laterally shifted source.
    constexpr int kSize = 32;
    constexpr double f  = 32;
    const auto planes   = geom::DepthPlanes::make(2, 8, 8, geom::PlaneSpacing::InverseDepth);
    const auto ref      = pinhole(kSize, kSize, f, 15.5, 15.5);
    auto src            = ref;
    constexpr double b  = 0.5;
    src.t               = Vector3d(-b, 0, 0);
    // Pixels the source sees on every plane (largest shift f * b / near).
    const int xFirst = 4 + static_cast<int>(std::ceil(f * b / 2));

    for (const int k : {2, 5}) {
        const double depth   = planes.values[static_cast<std::size_t>(k)];
        const double spacing = depth / f;
        std::mt19937_64 rng(40 + k);
        std::uniform_real_distribution<double> u(0, 1);
        splat::GaussianScene wall(0, 0);
        for (int gy = -20; gy <= 20; ++gy) {
            for (int gx = -20; gx <= 60; ++gx) {
                splat::GaussianPrimitive p;
                p.center  = splat::Vec3(gx * spacing, gy * spacing, depth);
                p.scale   = splat::Vec3(0.6 * spacing, 0.6 * spacing, 0.01 * spacing);
                p.opacity = 0.99;
                p.base    = splat::Vec3(u(rng), u(rng), u(rng));
                wall.push(p);
            }
        }
        // Features: zero-mean 5x5 RGB patches, so the correlation rewards
        // alignment rather than brightness.
        const auto features = [&](const geom::Camera &cam) {
            const auto r = splat::render(wall, cam, {});
            std::vector<Real> f(75 * kSize * kSize, 0);
            for (int c = 0; c < 3; ++c) {
                for (int dy = -2; dy <= 2; ++dy) {
                    for (int dx = -2; dx <= 2; ++dx) {
                        const int ch = (c * 5 + dy + 2) * 5 + dx + 2;
                        for (int y = 0; y < kSize; ++y) {
                            for (int x = 0; x < kSize; ++x) {
                                const int sy = y + dy, sx = x + dx;
                                if (sy >= 0 && sy < kSize && sx >= 0 && sx < kSize) {
                                    f[static_cast<std::size_t>((ch * kSize + y) * kSize + x)] =
                                        r.image[static_cast<std::size_t>((c * kSize + sy) * kSize + sx)] - 0.5;
                                }
                            }
                        }
                    }
                }
            }
            return ad::Tensor({75, kSize, kSize}, std::move(f));
        };
        const auto vol = mvs::buildCostVolume(features(ref), {features(src)}, ref, {src}, planes);
        int hits = 0, total = 0;
        for (int y = 4; y < kSize - 4; ++y) {
            for (int x = xFirst; x < kSize - 4; ++x) {
                int best = 0;
                for (int d = 1; d < planes.count(); ++d) {
                    if (vol.logits.at((d * kSize + y) * kSize + x) > vol.logits.at((best * kSize + y) * kSize + x)) {
                        best = d;
                    }
                }
                hits += best == k;
                ++total;
            }
        }
        EXPECT_EQ(hits, total) << "plane " << k;
    }
}

TEST(Disparity, OneHotAndUniform) {
    const auto planes = geom::DepthPlanes::make(1, 4, 4, geom::PlaneSpacing::InverseDepth);
    std::vector<Real> logits(4 * 2 * 2, 0);
    logits[2 * 4 + 1] = 200; // plane 2, pixel 1
    const auto est    = mvs::disparityFromVolume(ad::Tensor({4, 2, 2}, logits), planes);
    EXPECT_NEAR(est.disparity.at(1), 1.0 / planes.values[2], 1e-12);
    EXPECT_NEAR(est.pdf.at(0), 0.25, 1e-12); // uniform logits elsewhere
    for (int px = 0; px < 4; ++px) {
        double s = 0;
        for (int d = 0; d < 4; ++d) {
            s += est.pdf.at(d * 4 + px);
        }
        EXPECT_NEAR(s, 1, 1e-12);
    }
}

TEST(Disparity, TwoPlaneMixture) {
    const auto planes = geom::DepthPlanes::make(1, 2, 2, geom::PlaneSpacing::InverseDepth); // disparities 1, 0.5
    const auto est    = mvs::disparityFromVolume(ad::Tensor({2, 1, 1}, {std::log(3.0), 0.0}), planes);
    EXPECT_NEAR(est.disparity.item(), 0.875, 1e-12);
}
