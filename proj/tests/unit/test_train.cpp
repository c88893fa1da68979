// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/train/evaluate.hpp"
#include "dsplat/train/run_config.hpp"
#include "dsplat/train/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <fmt/format.h>

using namespace dsplat;
namespace fs = std::filesystem;

namespace {

train::SyntheticSceneSpec
tinySpec() {
    train::SyntheticSceneSpec spec;
    spec.width = spec.height = 16;
    spec.focal               = 16;
    spec.minObjects          = 1;
    spec.maxObjects          = 2;
    spec.minPrimitives       = 10;
    spec.maxPrimitives       = 20;
    spec.wallResolution      = 8;
    return spec;
}

net::NetConfig
tinyNet() {
    net::NetConfig cfg;
    cfg.encoderChannels = {4, 6};
    cfg.matchChannels   = 4;
    cfg.planes          = 6;
    cfg.refineWidth     = 4;
    cfg.geometryWidth   = 4;
    cfg.appearanceWidth = 4;
    cfg.cbcWidth        = 4;
    return cfg;
}

std::vector<Real>
flatParameters(const net::Model &m) {
    std::vector<Real> out;
    for (const auto &[name, t] : m.parameters().entries()) {
        out.insert(out.end(), t.values().begin(), t.values().end());
    }
    return out;
}

} // namespace

TEST(Synthetic, DeterministicSample) {
    const auto spec = tinySpec();
    const auto a = train::generateSample(spec, "s1", {}, 5), b = train::generateSample(spec, "s1", {}, 5);
    const auto c = train::generateSample(spec, "s2", {}, 5);
    EXPECT_EQ(a.clean, b.clean);
    EXPECT_EQ(a.noisy, b.noisy);
    EXPECT_EQ(a.noise, b.noise);
    EXPECT_NE(a.clean, c.clean);
    EXPECT_NO_THROW(a.validate());
}

TEST(Synthetic, ProtocolLayout) {
    const auto s = train::generateSample(tinySpec(), "s", {}, 1);
    ASSERT_EQ(s.cameras.size(), 3u);
    EXPECT_EQ(s.context, (std::vector<int>{0, 1}));
    ASSERT_EQ(s.targets.size(), 2u);
    EXPECT_EQ(s.targets[0].frame, 0);
    EXPECT_TRUE(s.targets[0].seen);
    EXPECT_EQ(s.targets[1].frame, 2);
    EXPECT_FALSE(s.targets[1].seen);
    EXPECT_GT(s.nearDepth, 0);
    EXPECT_LT(s.nearDepth, s.farDepth);
    // Clean frames are 8-bit exact.
    EXPECT_EQ(io::quantize(s.clean[0]), s.clean[0]);
    // The novel camera extends the context baseline.
    const double b01 = (s.cameras[0].center() - s.cameras[1].center()).norm();
    const double b12 = (s.cameras[1].center() - s.cameras[2].center()).norm();
    EXPECT_NEAR(b12 / b01, 0.5, 0.2);
}

TEST(Synthetic, SplitRoundTrip) {
    const auto spec = tinySpec();
    const auto data = train::generateSyntheticDataset(spec, 2, {}, 3, "t_");
    const fs::path dir = fs::temp_directory_path() / "dsplat_split_test";
    fs::remove_all(dir);
    train::writeSplit(data, dir, {}, 3);
    const auto back = train::loadSplit(dir);
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(back[i].sceneId, data[i].sceneId);
        EXPECT_EQ(back[i].clean, data[i].clean);
        EXPECT_EQ(back[i].noisy, data[i].noisy);
        EXPECT_EQ(back[i].noise, data[i].noise);
        EXPECT_NEAR(back[i].nearDepth, data[i].nearDepth, 1e-9);
        for (std::size_t f = 0; f < data[i].cameras.size(); ++f) {
            EXPECT_LT((back[i].cameras[f].center() - data[i].cameras[f].center()).norm(), 1e-5);
        }
    }
    fs::remove_all(dir);
}

TEST(Synthetic, WithNoiseZeroIsClean) {
    const auto s = train::generateSample(tinySpec(), "s", {}, 1);
    const auto z = train::withNoise(s, {noise::NoiseKind::Gaussian, 0.0}, 9);
    EXPECT_EQ(z.noisy, z.clean);
    EXPECT_EQ(z.noise.param, 0.0);
}

TEST(Optimizer, Schedule) {
    train::OptimizerConfig o;
    o.steps       = 1000;
    o.lr          = 1e-3;
    o.warmupSteps = 10;
    EXPECT_NEAR(o.learningRate(0), 1e-4, 1e-12);
    EXPECT_NEAR(o.learningRate(9), 1e-3, 1e-12);
    EXPECT_NEAR(o.learningRate(999), 1e-3 * o.minRatio, 1e-9);
    for (int s = 10; s < 999; ++s) {
        ASSERT_LE(o.learningRate(s + 1), o.learningRate(s) + 1e-15);
    }
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 2, {}, 1, "z_");
    net::Model model(tinyNet(), 1);
    const auto before = flatParameters(model);
    train::OptimizerConfig o;
    o.steps = 3;
    o.lr    = 0;
    train::TrainOptions t;
    t.logEvery = 0;
    const auto result = train::trainModel(model, data, o, t);
    EXPECT_EQ(result.curve.size(), 3u);
    EXPECT_EQ(flatParameters(model), before);
}

TEST(Trainer, ReproducibleAndDecreasing) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 1, {}, 1, "r_");
    train::OptimizerConfig o;
    o.steps       = 40;
    o.lr          = 3e-3;
    o.warmupSteps = 5;
    train::TrainOptions t;
    t.logEvery   = 0;
    t.cleanInputs = true;
    net::Model a(tinyNet(), 4), b(tinyNet(), 4);
    const auto ra = train::trainModel(a, data, o, t), rb = train::trainModel(b, data, o, t);
    ASSERT_EQ(ra.curve.size(), rb.curve.size());
    for (std::size_t i = 0; i < ra.curve.size(); ++i) {
        ASSERT_EQ(ra.curve[i].loss, rb.curve[i].loss) << i;
    }
    EXPECT_EQ(flatParameters(a), flatParameters(b));
    EXPECT_LT(ra.curve.back().loss, ra.curve.front().loss);
}

TEST(Trainer, WritesArtifacts) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 1, {}, 1, "w_");
    const fs::path dir = fs::temp_directory_path() / "dsplat_train_test";
    fs::remove_all(dir);
    train::OptimizerConfig o;
    o.steps = 4;
    train::TrainOptions t;
    t.checkpointEvery = 2;
    t.logEvery        = 0;
    net::Model model(tinyNet(), 1);
    const auto result = train::trainModel(model, data, o, t, dir, {{"seed", 1}});
    EXPECT_TRUE(fs::exists(dir / "model.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "checkpoints" / "step_000002.ckpt"));
    EXPECT_EQ(result.checkpoint, dir / "model.ckpt");
    std::ifstream csv(dir / "loss_curve.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "step,loss,l1,dssim,lr");
    EXPECT_EQ(net::Model::loadMetadata(dir / "model.ckpt")["extra"]["run_config"]["seed"], 1);
    fs::remove_all(dir);
}

TEST(Trainer, NonFiniteLossStopsWithCheckpoint) {
    auto data = train::generateSyntheticDataset(tinySpec(), 1, {}, 1, "n_");
    data[0].clean[0].data[7] = std::numeric_limits<float>::quiet_NaN();
    const fs::path dir = fs::temp_directory_path() / "dsplat_nan_test";
    fs::remove_all(dir);
    net::Model model(tinyNet(), 1);
    const auto before = flatParameters(model);
    train::OptimizerConfig o;
    o.steps = 3;
    train::TrainOptions t;
    t.logEvery = 0;
    EXPECT_THROW(train::trainModel(model, data, o, t, dir), train::NumericalError);
    EXPECT_TRUE(fs::exists(dir / "model.ckpt"));
    EXPECT_EQ(flatParameters(model), before);
    fs::remove_all(dir);
}

TEST(Evaluate, ZeroNoiseEqualsCleanInputs) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 2, {}, 2, "e_");
    std::vector<train::MultiViewSample> zero;
    for (const auto &s : data) {
        zero.push_back(train::withNoise(s, {noise::NoiseKind::Gaussian, 0}, 1));
    }
    const net::Model model(tinyNet(), 1);
    const auto a = train::evaluate(model, zero);
    const auto b = train::evaluate(model, data, {"m", true});
    ASSERT_EQ(a.views.size(), b.views.size());
    for (std::size_t i = 0; i < a.views.size(); ++i) {
        EXPECT_EQ(a.views[i].psnr, b.views[i].psnr);
        EXPECT_EQ(a.views[i].ssim, b.views[i].ssim);
    }
}

TEST(Evaluate, AggregatesAreMeansOfRows) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 3, {}, 2, "g_");
    const net::Model model(tinyNet(), 1);
    const auto report = train::evaluate(model, data);
    EXPECT_EQ(report.views.size(), 6u);
    for (const std::string split : {"seen", "novel", "all"}) {
        double psnr = 0, ssim = 0;
        int n       = 0;
        for (const auto &v : report.views) {
            if (split == "all" || v.seen == (split == "seen")) {
                psnr += v.psnr;
                ssim += v.ssim;
                ++n;
            }
        }
        EXPECT_NEAR(report.overall(split).psnr, psnr / n, 1e-9);
        EXPECT_NEAR(report.overall(split).ssim, ssim / n, 1e-12);
        EXPECT_EQ(report.overall(split).count, static_cast<std::size_t>(n));
    }
    EXPECT_EQ(train::toCsv(report).rfind(train::csvHeader(), 0), 0u);
}

TEST(Evaluate, ReportsAreByteIdentical) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 3, {}, 2, "d_");
    const net::Model model(tinyNet(), 1);
    const auto a = train::evaluate(model, data), b = train::evaluate(model, data);
    EXPECT_EQ(train::toJson(a).dump(), train::toJson(b).dump());
    EXPECT_EQ(train::toCsv(a), train::toCsv(b));
}

TEST(Evaluate, ZeroLevelGridRowEqualsCleanInputs) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 2, {}, 2, "a_");
    const net::Model model(tinyNet(), 1);
    const std::vector<train::GridPoint> grid{{noise::NoiseKind::Gaussian, 0.0}, {noise::NoiseKind::Gaussian, 0.1}};
    const auto table = train::ablate(model, data, grid, 3);
    EXPECT_EQ(table.rows.size(), grid.size() * 3);
    const auto clean = train::evaluate(model, data, {"m", true});
    for (const std::string split : {"seen", "novel", "all"}) {
        EXPECT_EQ(table.at(grid[0], split).psnr, clean.overall(split).psnr);
        EXPECT_EQ(table.at(grid[0], split).ssim, clean.overall(split).ssim);
    }
}

TEST(Evaluate, GridParsing) {
    const auto g = train::parseGrid("gaussian:0.05,0.1;saltpepper:0.01");
    ASSERT_EQ(g.size(), 3u);
    EXPECT_EQ(g[2].kind, noise::NoiseKind::SaltPepper);
    EXPECT_DOUBLE_EQ(g[1].param, 0.1);
    EXPECT_ANY_THROW(train::parseGrid("gaussian"));
    EXPECT_ANY_THROW(train::parseGrid("blur:0.1"));
    EXPECT_EQ(train::gaussianGrid().size(), 4u);
    EXPECT_EQ(train::familyGrid().size(), 6u);
}

TEST(Evaluate, IncompatibleResolutionRejected) {
    const auto data = train::generateSyntheticDataset(tinySpec(), 1, {}, 2, "i_");
    auto cfg        = tinyNet();
    EXPECT_NO_THROW(train::checkCompatible(cfg, data));
    cfg.encoderChannels = {4, 4, 4, 4, 4}; // 16 px halves four times
    EXPECT_NO_THROW(train::checkCompatible(cfg, data));
    cfg.encoderChannels.push_back(4); // ... but not five
    EXPECT_ANY_THROW(train::checkCompatible(cfg, data));
}

TEST(RunConfig, JsonRoundTripRejectsUnknownKeys) {
    train::RunConfig cfg;
    cfg.seed            = 42;
    cfg.optimizer.steps = 77;
    cfg.net.planes      = 12;
    const auto back = train::runConfigFromJson(nlohmann::json::parse(train::toJson(cfg).dump()));
    EXPECT_EQ(back.seed, 42u);
    EXPECT_EQ(back.optimizer.steps, 77);
    EXPECT_EQ(back.net.planes, 12);
    EXPECT_EQ(train::toJson(back).dump(), train::toJson(cfg).dump());
    EXPECT_ANY_THROW(train::runConfigFromJson(nlohmann::json{{"optimiser", nlohmann::json::object()}}));
    EXPECT_ANY_THROW(train::runConfigFromJson(nlohmann::json{{"optimizer", {{"stepz", 3}}}}));
}

namespace {

// A fronto-parallel textured wall at `depth` seen by three cameras translated
// along x: the two context views and a novel view further out.
train::MultiViewSample
planeSample(const std::string &id, double depth, std::uint64_t seed) {
    constexpr int kSize = 32;
    constexpr double f  = 32, b = 0.3;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    const double spacing = 2 * depth / f; // two pixels per primitive
    splat::GaussianScene wall(0, 0);
    for (int gy = -12; gy <= 12; ++gy) {
        for (int gx = -12; gx <= 16; ++gx) {
            splat::GaussianPrimitive p;
            p.center  = splat::Vec3(gx * spacing, gy * spacing, depth);
            p.scale   = splat::Vec3(0.6 * spacing, 0.6 * spacing, 0.01 * spacing);
            p.opacity = 0.99;
            p.base    = splat::Vec3(u(rng), u(rng), u(rng));
            wall.push(p);
        }
    }
    train::MultiViewSample s;
    s.sceneId = id;
    for (const double x : {0.0, b, 1.5 * b}) {
        geom::Camera cam;
        cam.fx = cam.fy = f;
        cam.cx = cam.cy = (kSize - 1) / 2.0;
        cam.width = cam.height = kSize;
        cam.t                  = Eigen::Vector3d(-x, 0, 0);
        s.cameras.push_back(cam);
        s.clean.push_back(io::quantize(splat::toImage(splat::render(wall, cam, {}).image, kSize, kSize)));
    }
    s.noisy     = s.clean;
    s.context   = {0, 1};
    s.targets   = {{0, true}, {2, false}};
    s.nearDepth = 1.5;
    s.farDepth  = 8;
    s.validate();
    return s;
}

// Median |predicted - true| disparity of the reference view, over pixels the
// source view also sees, in units of the plane spacing.
double
medianPlaneError(const net::Model &model, const train::MultiViewSample &s, double depth) {
    const auto planes = s.planes(model.config().planes);
    const auto pred   = model.predict(train::contextInputs(s, true), planes);
    const auto disp   = planes.disparities();
    const double step = (disp.front() - disp.back()) / (planes.count() - 1);
    const auto &d     = pred.views[0].depth;
    std::vector<double> errs;
    for (int y = 2; y < 30; ++y) {
        for (int x = 2; x < 22; ++x) {
            errs.push_back(std::abs(1 / d.at(y * 32 + x) - 1 / depth) / step);
        }
    }
    std::nth_element(errs.begin(), errs.begin() + static_cast<std::ptrdiff_t>(errs.size() / 2), errs.end());
    return errs[errs.size() / 2];
}

} // namespace

TEST(Trainer, ToyTrainingRecoversPlaneDepth) {
    const std::vector<double> depths = {1.8, 2.5, 4.0, 6.0};
    std::vector<train::MultiViewSample> data;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        data.push_back(planeSample(fmt::format("plane{}", i), depths[i], 10 + i));
    }
    auto cfg   = tinyNet();
    cfg.planes = 8;
    net::Model model(cfg, 3);
    // A constant prediction cannot be within one spacing of every plane.
    double worst = 0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        worst = std::max(worst, medianPlaneError(model, data[i], depths[i]));
    }
    EXPECT_GT(worst, 1.0) << "untrained model already fits every plane";

    train::OptimizerConfig optim;
    optim.steps = 600;
    optim.lr    = 3e-3;
    train::TrainOptions opts;
    opts.cleanInputs = true;
    opts.logEvery    = 0;
    train::trainModel(model, data, optim, opts);
    for (std::size_t i = 0; i < depths.size(); ++i) {
        const double e = medianPlaneError(model, data[i], depths[i]);
        EXPECT_LT(e, 1.0) << "plane at depth " << depths[i];
    }
}
