// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/train/synthetic.hpp"

#include "dsplat/noise/forge.hpp"
#include "dsplat/splat/render.hpp"

#include <fmt/format.h>

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

namespace dsplat::inline DSPLAT_ABI::train {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kSampleVersion = 1;

double
uniform(noise::Rng &rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int
uniformInt(noise::Rng &rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Smooth periodic pattern in [-1, 1] used to texture surfaces.
struct Texture {
    Eigen::Vector3d axisA, axisB;
    double frequency = 1, phase = 0;
    int kind = 0; // 0 stripes, 1 checker, 2 rings

    double operator()(const Eigen::Vector3d &p) const {
        const double a = std::sin(2 * std::numbers::pi * frequency * axisA.dot(p) + phase);
        const double b = std::sin(2 * std::numbers::pi * frequency * axisB.dot(p) + phase);
        switch (kind) {
        case 0: return a;
        case 1: return (a > 0) == (b > 0) ? 1.0 : -1.0;
        default: return std::sin(2 * std::numbers::pi * frequency * p.norm() + phase);
        }
    }
};

Texture
randomTexture(noise::Rng &rng, double frequency) {
    Texture t;
    std::normal_distribution<double> n(0, 1);
    t.axisA = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    t.axisB = t.axisA.cross(Eigen::Vector3d(n(rng), n(rng), n(rng))).normalized();
    t.frequency = frequency * uniform(rng, 0.6, 1.4);
    t.phase     = uniform(rng, 0, 2 * std::numbers::pi);
    t.kind      = uniformInt(rng, 0, 2);
    return t;
}

Eigen::Vector3d
randomColor(noise::Rng &rng) {
    return Eigen::Vector3d(uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9));
}

Eigen::Vector3d
shade(const Eigen::Vector3d &base, const Eigen::Vector3d &accent, double pattern, double contrast) {
    return (base + contrast * pattern * (accent - base)).cwiseMax(0.02).cwiseMin(0.98);
}

splat::Vec4
toQuat(const Eigen::Quaterniond &q) {
    return splat::Vec4(static_cast<Real>(q.w()), static_cast<Real>(q.x()), static_cast<Real>(q.y()), static_cast<Real>(q.z()));
}

splat::GaussianPrimitive
primitive(const Eigen::Vector3d &center, const Eigen::Quaterniond &rot, const Eigen::Vector3d &scale, double opacity,
          const Eigen::Vector3d &color, int shDegree) {
    splat::GaussianPrimitive p;
    p.center  = center.cast<Real>();
    p.quat    = toQuat(rot);
    p.scale   = scale.cast<Real>();
    p.opacity = static_cast<Real>(opacity);
    p.base    = color.cast<Real>();
    p.sh.assign(static_cast<std::size_t>(splat::shCount(shDegree)), splat::Vec3::Zero());
    return p;
}

geom::Camera
arcCamera(const SyntheticSceneSpec &spec, double angleDeg, noise::Rng &rng) {
    const double a = angleDeg * kDeg;
    const Eigen::Vector3d eye(spec.ringRadius * std::sin(a) + uniform(rng, -spec.jitter, spec.jitter),
                              -spec.ringHeight + uniform(rng, -spec.jitter, spec.jitter),
                              spec.ringRadius * std::cos(a) + uniform(rng, -spec.jitter, spec.jitter));
    const Eigen::Vector3d target(uniform(rng, -spec.jitter, spec.jitter), uniform(rng, -spec.jitter, spec.jitter), 0.0);
    return geom::lookAt(eye, target, Eigen::Vector3d(0, -1, 0), spec.focal, spec.focal, 0.5 * (spec.width - 1),
                        0.5 * (spec.height - 1), spec.width, spec.height);
}

std::uint64_t
sceneContentSeed(std::uint64_t seed, const std::string &sceneId) {
    return noise::splitmix64(noise::splitmix64(seed ^ 0x5eedc0de5eedc0deULL) ^ noise::hashString(sceneId));
}

io::Image
renderClean(const splat::GaussianScene &scene, const geom::Camera &cam) {
    const splat::RenderResult r = splat::render(scene, cam, splat::RenderSettings{});
    return io::quantize(splat::toImage(r.image, cam.width, cam.height));
}

nlohmann::ordered_json
sampleJson(const MultiViewSample &s) {
    nlohmann::ordered_json j;
    j["version"]    = kSampleVersion;
    j["scene_id"]   = s.sceneId;
    j["context"]    = s.context;
    j["targets"]    = nlohmann::ordered_json::array();
    for (const auto &t : s.targets) {
        j["targets"].push_back({{"frame", t.frame}, {"split", t.seen ? "seen" : "novel"}});
    }
    j["near_depth"] = s.nearDepth;
    j["far_depth"]  = s.farDepth;
    return j;
}

} // namespace

void
SyntheticSceneSpec::validate() const {
    auto fail = [](const std::string &msg) { throw std::invalid_argument("synthetic spec: " + msg); };
    if (width < 8 || height < 8) {
        fail(fmt::format("image size {}x{} is below 8x8", width, height));
    }
    if (!(focal > 0)) {
        fail("focal must be positive");
    }
    if (minObjects < 1 || maxObjects < minObjects) {
        fail(fmt::format("object count range [{}, {}] is invalid", minObjects, maxObjects));
    }
    if (minPrimitives < 1 || maxPrimitives < minPrimitives) {
        fail(fmt::format("primitive count range [{}, {}] is invalid", minPrimitives, maxPrimitives));
    }
    if (!(extent > 0) || !(wallDistance > 0) || !(wallHalfSize > 0) || wallResolution < 1) {
        fail("extent, wall distance, wall size and wall resolution must be positive");
    }
    if (!(ringRadius > extent * std::sqrt(3.0) + 0.5)) {
        fail(fmt::format("ring radius {} must clear the object region", ringRadius));
    }
    if (!(baselineDeg > 0) || !(novelOffset >= 0) || !(jitter >= 0) || !(textureContrast >= 0)) {
        fail("baseline must be positive; novel offset, jitter and contrast non-negative");
    }
    if (maxAngleDeg * 2 < baselineDeg * (1 + novelOffset)) {
        fail("camera arc is narrower than one baseline plus the novel offset");
    }
}

nlohmann::ordered_json
toJson(const SyntheticSceneSpec &s) {
    return {{"width", s.width},
            {"height", s.height},
            {"focal", s.focal},
            {"min_objects", s.minObjects},
            {"max_objects", s.maxObjects},
            {"min_primitives", s.minPrimitives},
            {"max_primitives", s.maxPrimitives},
            {"extent", s.extent},
            {"wall_distance", s.wallDistance},
            {"wall_half_size", s.wallHalfSize},
            {"wall_resolution", s.wallResolution},
            {"texture_frequency", s.textureFrequency},
            {"texture_contrast", s.textureContrast},
            {"ring_radius", s.ringRadius},
            {"ring_height", s.ringHeight},
            {"baseline_deg", s.baselineDeg},
            {"novel_offset", s.novelOffset},
            {"max_angle_deg", s.maxAngleDeg},
            {"jitter", s.jitter}};
}

SyntheticSceneSpec
syntheticSpecFromJson(const nlohmann::json &j) {
    SyntheticSceneSpec s;
    const auto known = toJson(s);
    for (const auto &[key, value] : j.items()) {
        if (!known.contains(key)) {
            throw std::invalid_argument(fmt::format("synthetic spec: unknown key '{}'", key));
        }
    }
    s.width            = j.value("width", s.width);
    s.height           = j.value("height", s.height);
    s.focal            = j.value("focal", s.focal);
    s.minObjects       = j.value("min_objects", s.minObjects);
    s.maxObjects       = j.value("max_objects", s.maxObjects);
    s.minPrimitives    = j.value("min_primitives", s.minPrimitives);
    s.maxPrimitives    = j.value("max_primitives", s.maxPrimitives);
    s.extent           = j.value("extent", s.extent);
    s.wallDistance     = j.value("wall_distance", s.wallDistance);
    s.wallHalfSize     = j.value("wall_half_size", s.wallHalfSize);
    s.wallResolution   = j.value("wall_resolution", s.wallResolution);
    s.textureFrequency = j.value("texture_frequency", s.textureFrequency);
    s.textureContrast  = j.value("texture_contrast", s.textureContrast);
    s.ringRadius       = j.value("ring_radius", s.ringRadius);
    s.ringHeight       = j.value("ring_height", s.ringHeight);
    s.baselineDeg      = j.value("baseline_deg", s.baselineDeg);
    s.novelOffset      = j.value("novel_offset", s.novelOffset);
    s.maxAngleDeg      = j.value("max_angle_deg", s.maxAngleDeg);
    s.jitter           = j.value("jitter", s.jitter);
    s.validate();
    return s;
}

geom::DepthPlanes
MultiViewSample::planes(int count) const {
    return geom::DepthPlanes::make(nearDepth, farDepth, count, geom::PlaneSpacing::InverseDepth);
}

void
MultiViewSample::validate() const {
    auto fail = [this](const std::string &msg) {
        throw std::invalid_argument(fmt::format("sample '{}': {}", sceneId, msg));
    };
    if (cameras.size() != clean.size() || noisy.size() != clean.size()) {
        fail(fmt::format("{} cameras, {} clean and {} noisy frames", cameras.size(), clean.size(), noisy.size()));
    }
    if (context.size() < 2) {
        fail("needs at least two context views");
    }
    for (const int f : context) {
        if (f < 0 || f >= static_cast<int>(cameras.size())) {
            fail(fmt::format("context frame {} does not exist", f));
        }
    }
    for (const auto &t : targets) {
        if (t.frame < 0 || t.frame >= static_cast<int>(cameras.size())) {
            fail(fmt::format("target frame {} has no camera", t.frame));
        }
    }
    if (!(nearDepth > 0) || !(farDepth > nearDepth)) {
        fail(fmt::format("depth range [{}, {}] is invalid", nearDepth, farDepth));
    }
}

splat::GaussianScene
generateSceneContent(const SyntheticSceneSpec &spec, std::uint64_t sceneSeed) {
    spec.validate();
    noise::Rng rng(sceneSeed);
    constexpr int kDegree = 0;
    std::vector<splat::GaussianPrimitive> prims;

    // Backdrop: a textured wall facing the cameras.
    {
        const Eigen::Vector3d c0 = randomColor(rng), c1 = randomColor(rng);
        const Texture tex        = randomTexture(rng, spec.textureFrequency * 0.5);
        const double step        = 2 * spec.wallHalfSize / spec.wallResolution;
        for (int iy = 0; iy < spec.wallResolution; ++iy) {
            for (int ix = 0; ix < spec.wallResolution; ++ix) {
                const Eigen::Vector3d p(-spec.wallHalfSize + (ix + 0.5) * step, -spec.wallHalfSize + (iy + 0.5) * step,
                                        -spec.wallDistance);
                prims.push_back(primitive(p, Eigen::Quaterniond::Identity(), Eigen::Vector3d(0.6 * step, 0.6 * step, 0.02),
                                          0.98, shade(c0, c1, tex(p), spec.textureContrast), kDegree));
            }
        }
    }

    const int objects = uniformInt(rng, spec.minObjects, spec.maxObjects);
    std::normal_distribution<double> normal(0, 1);
    for (int o = 0; o < objects; ++o) {
        const Eigen::Vector3d center(uniform(rng, -spec.extent, spec.extent), uniform(rng, -spec.extent, spec.extent),
                                     uniform(rng, -spec.extent, spec.extent));
        const Eigen::Vector3d c0 = randomColor(rng), c1 = randomColor(rng);
        const Texture tex        = randomTexture(rng, spec.textureFrequency);
        const int count          = uniformInt(rng, spec.minPrimitives, spec.maxPrimitives);
        const bool box           = uniformInt(rng, 0, 1) == 1;
        const Eigen::Quaterniond orient(Eigen::AngleAxisd(uniform(rng, 0, std::numbers::pi), Eigen::Vector3d::UnitY()) *
                                        Eigen::AngleAxisd(uniform(rng, -0.4, 0.4), Eigen::Vector3d::UnitX()));
        const Eigen::Vector3d half(uniform(rng, 0.15, 0.4), uniform(rng, 0.15, 0.4), uniform(rng, 0.15, 0.4));
        // Surface samples get a footprint that roughly tiles the surface.
        const double area = box ? 8 * (half.x() * half.y() + half.y() * half.z() + half.x() * half.z())
                                : 4 * std::numbers::pi * std::pow(half.prod(), 2.0 / 3.0);
        const double footprint = 0.9 * std::sqrt(area / count);
        for (int k = 0; k < count; ++k) {
            Eigen::Vector3d local, normalDir;
            if (box) {
                const int face = uniformInt(rng, 0, 5);
                const int axis = face / 2;
                local          = Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)).cwiseProduct(half);
                local[axis]    = (face % 2 ? 1 : -1) * half[axis];
                normalDir      = Eigen::Vector3d::Zero();
                normalDir[axis] = face % 2 ? 1 : -1;
            } else {
                const Eigen::Vector3d d = Eigen::Vector3d(normal(rng), normal(rng), normal(rng)).normalized();
                local                   = d.cwiseProduct(half);
                normalDir               = d.cwiseQuotient(half).normalized();
            }
            const Eigen::Vector3d p = center + orient * local;
            const Eigen::Vector3d n = orient * normalDir;
            // Flatten each primitive along the surface normal.
            const Eigen::Quaterniond rot = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), n);
            const double facing          = box ? 0.85 + 0.15 * normalDir.dot(Eigen::Vector3d(0.3, -0.5, 0.8).normalized()) : 1.0;
            const Eigen::Vector3d color  = shade(c0, c1, tex(local), spec.textureContrast) * facing;
            prims.push_back(primitive(p, rot, Eigen::Vector3d(footprint, footprint, 0.25 * footprint), 0.95,
                                      color.cwiseMax(0.02).cwiseMin(0.98), kDegree));
        }
    }

    splat::GaussianScene scene(prims.size(), kDegree);
    for (std::size_t i = 0; i < prims.size(); ++i) {
        scene.set(i, prims[i]);
    }
    return scene;
}

MultiViewSample
generateSample(const SyntheticSceneSpec &spec, const std::string &sceneId, const noise::NoiseRanges &ranges, std::uint64_t seed) {
    spec.validate();
    ranges.validate();
    const std::uint64_t contentSeed = sceneContentSeed(seed, sceneId);
    const splat::GaussianScene scene = generateSceneContent(spec, contentSeed);

    noise::Rng rng(noise::splitmix64(contentSeed));
    MultiViewSample s;
    s.sceneId           = sceneId;
    const double span   = spec.baselineDeg * (1 + spec.novelOffset);
    const double theta0 = uniform(rng, -spec.maxAngleDeg, spec.maxAngleDeg - span);
    const double sign   = uniformInt(rng, 0, 1) ? 1.0 : -1.0; // sweep direction
    const double start  = sign > 0 ? theta0 : theta0 + span;
    for (const double offset : {0.0, 1.0, 1.0 + spec.novelOffset}) {
        s.cameras.push_back(arcCamera(spec, start + sign * offset * spec.baselineDeg, rng));
    }
    for (const auto &cam : s.cameras) {
        s.clean.push_back(renderClean(scene, cam));
    }
    s.context = {0, 1};
    s.targets = {{0, true}, {2, false}};

    const double objectReach = spec.extent * std::sqrt(3.0) + 0.4;
    const double nearEst     = std::max(0.1, spec.ringRadius - objectReach);
    const double farEst      = spec.ringRadius + spec.wallDistance;
    s.nearDepth              = 0.5 * nearEst;
    s.farDepth               = 2.0 * farEst;

    s.noise = noise::sampleSceneNoise(sceneId, seed, ranges);
    s.noisy = noise::degradeViews(s.clean, s.noise);
    for (auto &img : s.noisy) {
        img = io::quantize(img);
    }
    s.validate();
    return s;
}

std::vector<MultiViewSample>
generateSyntheticDataset(const SyntheticSceneSpec &spec,
                         int sceneCount,
                         const noise::NoiseRanges &ranges,
                         std::uint64_t seed,
                         const std::string &prefix) {
    if (sceneCount < 0) {
        throw std::invalid_argument("scene count must be non-negative");
    }
    std::vector<MultiViewSample> out(static_cast<std::size_t>(sceneCount));
    std::vector<std::string> errors(out.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < sceneCount; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = generateSample(spec, fmt::format("{}{:05d}", prefix, i), ranges, seed);
        } catch (const std::exception &e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (const auto &e : errors) {
        if (!e.empty()) {
            throw std::runtime_error(e);
        }
    }
    return out;
}

MultiViewSample
withNoise(const MultiViewSample &sample, const noise::NoiseConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    MultiViewSample s = sample;
    s.noise.kind      = cfg.kind;
    s.noise.param     = cfg.param;
    s.noise.sceneSeed = noise::sceneHash(seed, sample.sceneId);
    s.noisy           = noise::degradeViews(s.clean, s.noise);
    for (auto &img : s.noisy) {
        img = io::quantize(img);
    }
    return s;
}

void
writeSplit(const std::vector<MultiViewSample> &samples,
           const fs::path &splitDir,
           const noise::NoiseRanges &ranges,
           std::uint64_t seed) {
    const fs::path cleanRoot = splitDir / "clean";
    fs::create_directories(cleanRoot);
    for (const auto &s : samples) {
        const fs::path dir = cleanRoot / s.sceneId;
        fs::create_directories(dir / "images");
        std::vector<geom::CameraRecord> records;
        for (std::size_t f = 0; f < s.clean.size(); ++f) {
            io::writePng(dir / "images" / fmt::format("{:06d}.png", f), s.clean[f]);
            records.push_back({static_cast<std::int64_t>(f), s.cameras[f]});
        }
        geom::writeCameraFile(dir / "cameras.txt", records);
        noise::writeJsonFile(dir / "sample.json", sampleJson(s));
    }
    const noise::ForgeReport report = noise::forgeDataset(cleanRoot, splitDir / "noisy", ranges, seed);
    if (!report.errors.empty()) {
        throw std::runtime_error(fmt::format("forging '{}' failed: {}", report.errors.front().sceneId,
                                             report.errors.front().message));
    }
}

std::vector<MultiViewSample>
loadSplit(const fs::path &splitDir) {
    const fs::path cleanRoot = splitDir / "clean";
    const fs::path noisyRoot = splitDir / "noisy";
    if (!fs::is_directory(cleanRoot) || !fs::is_directory(noisyRoot)) {
        throw std::invalid_argument(fmt::format("{}: expected clean/ and noisy/ subdirectories", splitDir.string()));
    }
    const noise::DatasetManifest manifest = noise::manifestFromJson(noise::readJsonFile(noisyRoot / "manifest.json"));
    std::vector<MultiViewSample> out;
    for (const std::string &id : noise::listScenes(cleanRoot)) {
        MultiViewSample s;
        s.sceneId             = id;
        const fs::path dir    = cleanRoot / id;
        const nlohmann::json j = noise::readJsonFile(dir / "sample.json");
        s.clean               = noise::loadFrames(dir);
        s.noisy               = noise::loadFrames(noisyRoot / id);
        if (s.clean.empty()) {
            throw std::invalid_argument(fmt::format("{}: no frames", dir.string()));
        }
        for (const auto &rec : geom::readCameraFile(dir / "cameras.txt", s.clean[0].width, s.clean[0].height)) {
            s.cameras.push_back(rec.camera);
        }
        s.context = j.at("context").get<std::vector<int>>();
        for (const auto &t : j.at("targets")) {
            s.targets.push_back({t.at("frame").get<int>(), t.at("split").get<std::string>() == "seen"});
        }
        s.nearDepth = j.at("near_depth").get<double>();
        s.farDepth  = j.at("far_depth").get<double>();
        const noise::SceneNoiseRecord *rec = manifest.find(id);
        if (!rec) {
            throw std::invalid_argument(fmt::format("{}: scene '{}' missing from manifest", noisyRoot.string(), id));
        }
        s.noise = *rec;
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace dsplat::inline DSPLAT_ABI::train
