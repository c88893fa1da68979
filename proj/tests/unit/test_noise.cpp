// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/noise/forge.hpp"
#include "dsplat/noise/verify.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dsplat;
using noise::NoiseKind;
namespace fs = std::filesystem;

namespace {

io::Image
gray(int size, float v) {
    return io::Image(size, size, v);
}

io::Image
gradientImage(int w, int h) {
    io::Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(x, y, c) = 0.2f + 0.6f * static_cast<float>((x + 2 * y + 5 * c) % 17) / 16.f;
            }
        }
    }
    return io::quantize(img);
}

struct Moments {
    double mean = 0, var = 0, extremeFraction = 0;
};

Moments
residualMoments(const io::Image &clean, const io::Image &noisy) {
    Moments m;
    const auto n = static_cast<double>(clean.data.size());
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        m.mean += noisy.data[i] - clean.data[i];
    }
    m.mean /= n;
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        m.var += std::pow(noisy.data[i] - clean.data[i] - m.mean, 2);
    }
    m.var /= n - 1;
    std::size_t extreme = 0;
    for (std::size_t p = 0; p < clean.pixelCount(); ++p) {
        bool all0 = true, all1 = true;
        for (int c = 0; c < 3; ++c) {
            all0 = all0 && noisy.data[p * 3 + c] == 0.f;
            all1 = all1 && noisy.data[p * 3 + c] == 1.f;
        }
        extreme += (all0 || all1) ? 1 : 0;
    }
    m.extremeFraction = static_cast<double>(extreme) / static_cast<double>(clean.pixelCount());
    return m;
}

/// Writes a tiny clean dataset: <root>/<scene>/images/NNNNNN.png + cameras.txt.
void
writeCleanDataset(const fs::path &root, int scenes) {
    fs::remove_all(root);
    for (int s = 0; s < scenes; ++s) {
        const fs::path dir = root / ("scene_" + std::to_string(s));
        fs::create_directories(dir / "images");
        for (int v = 0; v < 3; ++v) {
            io::writePng(dir / "images" / (std::string(5, '0') + std::to_string(v) + ".png"), gradientImage(24 + s, 20));
        }
        std::ofstream(dir / "cameras.txt") << "";
    }
}

} // namespace

TEST(Noise, ZeroIntensityIsIdentity) {
    const io::Image img = gradientImage(16, 12);
    for (const NoiseKind k : noise::kAllKinds) {
        noise::Rng rng(1);
        EXPECT_EQ(noise::applyNoise(img, {k, 0.0}, rng), img) << noise::toString(k);
    }
}

TEST(Noise, InvalidParametersRejected) {
    EXPECT_THROW((noise::NoiseConfig{NoiseKind::Gaussian, -0.1}.validate()), noise::NoiseError);
    EXPECT_THROW((noise::NoiseConfig{NoiseKind::SaltPepper, 0.6}.validate()), noise::NoiseError);
    EXPECT_NO_THROW((noise::NoiseConfig{NoiseKind::SaltPepper, 0.5}.validate()));
    EXPECT_THROW(noise::parseKind("pink"), noise::NoiseError);
    EXPECT_EQ(noise::parseKind("saltpepper"), NoiseKind::SaltPepper);
}

TEST(Noise, OutputStaysInUnitRange) {
    const io::Image img = gradientImage(32, 32);
    for (const NoiseKind k : noise::kAllKinds) {
        noise::Rng rng(2);
        const auto out = noise::applyNoise(img, {k, k == NoiseKind::SaltPepper ? 0.3 : 0.5}, rng);
        for (const float v : out.data) {
            ASSERT_GE(v, 0.f);
            ASSERT_LE(v, 1.f);
        }
    }
}

// Residual moments on a 256x256 constant 0.5 image, against closed forms.
TEST(Noise, GaussianMoments) {
    noise::Rng rng(3);
    const auto clean = gray(256, 0.5f);
    const auto m     = residualMoments(clean, noise::applyNoise(clean, {NoiseKind::Gaussian, 0.1}, rng));
    EXPECT_NEAR(m.mean, 0, 1e-3);
    EXPECT_NEAR(m.var, 0.01, 0.01 * 0.02);
}

TEST(Noise, PoissonMoments) {
    noise::Rng rng(4);
    const auto clean = gray(256, 0.5f);
    const auto m     = residualMoments(clean, noise::applyNoise(clean, {NoiseKind::Poisson, 0.03}, rng));
    EXPECT_NEAR(m.mean, 0, 1e-3);
    EXPECT_NEAR(m.var, 0.015, 0.015 * 0.05); // var(s Pois(I/s)) = s I
}

TEST(Noise, SpeckleMoments) {
    noise::Rng rng(5);
    const auto clean = gray(256, 0.5f);
    const auto m     = residualMoments(clean, noise::applyNoise(clean, {NoiseKind::Speckle, 0.05}, rng));
    EXPECT_NEAR(m.mean, 0, 1e-3);
    EXPECT_NEAR(m.var, 6.25e-4, 6.25e-4 * 0.05); // I^2 sigma^2
}

TEST(Noise, SaltPepperFraction) {
    noise::Rng rng(6);
    const auto clean = gray(256, 0.5f);
    const auto m     = residualMoments(clean, noise::applyNoise(clean, {NoiseKind::SaltPepper, 0.03}, rng));
    EXPECT_NEAR(m.extremeFraction, 0.03, 0.003);
}

TEST(Noise, PoissonSamplerMoments) {
    for (const double mean : {0.5, 7.0, 120.0}) {
        noise::Rng rng(7);
        double s = 0, s2 = 0;
        constexpr int n = 200000;
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<double>(noise::samplePoisson(mean, rng));
            s += k;
            s2 += k * k;
        }
        const double m = s / n, v = s2 / n - m * m;
        EXPECT_NEAR(m, mean, 5 * std::sqrt(mean / n)) << mean;
        EXPECT_NEAR(v / mean, 1, 0.02) << mean;
    }
}

TEST(SceneNoise, DeterministicAndInRange) {
    const noise::NoiseRanges ranges;
    EXPECT_EQ(noise::sampleSceneNoise("abc", 9, ranges), noise::sampleSceneNoise("abc", 9, ranges));
    EXPECT_NE(noise::sampleSceneNoise("abc", 9, ranges).sceneSeed, noise::sampleSceneNoise("abd", 9, ranges).sceneSeed);
    for (int i = 0; i < 2000; ++i) {
        const auto r = noise::sampleSceneNoise("s" + std::to_string(i), 1, ranges);
        const auto &range = ranges.of(r.kind);
        EXPECT_GE(r.param, range.low);
        EXPECT_LE(r.param, range.high);
    }
}

TEST(SceneNoise, KindFrequenciesOverTenThousandScenes) {
    std::array<int, 4> counts{};
    constexpr int n = 10000;
    for (int i = 0; i < n; ++i) {
        ++counts[static_cast<std::size_t>(noise::sampleSceneNoise("scene_" + std::to_string(i), 2024, {}).kind)];
    }
    for (const int c : counts) {
        EXPECT_NEAR(c / double(n), 0.25, 0.02);
    }
}

TEST(SceneNoise, ViewsShareConfigButNotStreams) {
    const auto rec = noise::sampleSceneNoise("x", 3, {});
    const std::vector<io::Image> views(3, gray(16, 0.5f));
    const auto a = noise::degradeViews(views, rec), b = noise::degradeViews(views, rec);
    EXPECT_EQ(a, b);
    EXPECT_NE(a[0], a[1]);
}

TEST(SceneNoise, ManifestJsonRoundTrip) {
    noise::DatasetManifest m;
    m.globalSeed = 77;
    m.scenes     = {noise::sampleSceneNoise("a", 77, {}), noise::sampleSceneNoise("b", 77, {})};
    const auto back = noise::manifestFromJson(nlohmann::json::parse(noise::toJson(m).dump()));
    EXPECT_EQ(back.globalSeed, 77u);
    ASSERT_EQ(back.scenes.size(), 2u);
    EXPECT_EQ(back.scenes[0], m.scenes[0]);
    EXPECT_EQ(back.scenes[1], m.scenes[1]);
}

TEST(Forge, DeterministicAndVerifiable) {
    const fs::path tmp   = fs::temp_directory_path() / "dsplat_forge_test";
    const fs::path clean = tmp / "clean";
    writeCleanDataset(clean, 4);
    const auto r1 = noise::forgeDataset(clean, tmp / "n1", {}, 5);
    const auto r2 = noise::forgeDataset(clean, tmp / "n2", {}, 5);
    EXPECT_TRUE(r1.errors.empty());
    ASSERT_EQ(r1.manifest.scenes.size(), 4u);
    EXPECT_EQ(noise::toJson(r1.manifest).dump(), noise::toJson(r2.manifest).dump());
    for (const auto &s : noise::listScenes(clean)) {
        EXPECT_EQ(noise::loadFrames(tmp / "n1" / s), noise::loadFrames(tmp / "n2" / s)) << s;
    }
    for (const auto &rep : noise::verifyDataset(clean, tmp / "n1")) {
        EXPECT_TRUE(rep.pass) << rep.sceneId << ": " << rep.message;
    }
    EXPECT_ANY_THROW(noise::forgeDataset(clean, clean, {}, 5));
    fs::remove_all(tmp);
}

TEST(Forge, PerSceneErrorsAreCollected) {
    const fs::path tmp   = fs::temp_directory_path() / "dsplat_forge_err_test";
    const fs::path clean = tmp / "clean";
    writeCleanDataset(clean, 3);
    fs::remove(clean / "scene_1" / "cameras.txt");
    std::ofstream(clean / "scene_2" / "images" / "000009.png") << "not a png";
    const auto r = noise::forgeDataset(clean, tmp / "noisy", {}, 5);
    EXPECT_EQ(r.errors.size(), 2u);
    EXPECT_EQ(r.manifest.scenes.size(), 1u);
    fs::remove_all(tmp);
}

TEST(Verify, Examples) {
    const std::vector<io::Image> clean(2, gray(128, 0.5f));
    noise::SceneNoiseRecord zero{"z", NoiseKind::Gaussian, 0.0, 1};
    EXPECT_TRUE(noise::verifyNoiseStats(clean, clean, zero).pass);

    noise::SceneNoiseRecord rec{"g", NoiseKind::Gaussian, 0.1, 11};
    const auto noisy = noise::degradeViews(clean, rec);
    EXPECT_TRUE(noise::verifyNoiseStats(clean, noisy, rec).pass);

    noise::SceneNoiseRecord wrong = rec;
    wrong.param                   = 0.05;
    const auto rep                = noise::verifyNoiseStats(clean, noisy, wrong);
    EXPECT_FALSE(rep.pass);
    EXPECT_NEAR(rep.measuredVar / rep.expectedVar, 4, 0.3);
}
