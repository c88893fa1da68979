// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/net/model.hpp"

#include "dsplat/autodiff/checkpoint.hpp"

#include <fmt/format.h>

#include <cmath>

namespace dsplat::inline DSPLAT_ABI::net {

using ad::Index;

namespace {

constexpr double kQuatEps    = 1e-12;
constexpr double kInitOpacity = 1.0; // logit

constexpr std::string_view kFormat = "dsplat-model";

void
setBias(Conv2d &conv, std::initializer_list<std::pair<int, Real>> values) {
    auto b = conv.bias.mutableValues();
    for (const auto &[i, v] : values) {
        b[static_cast<std::size_t>(i)] = v;
    }
}

/// World-space ray directions with unit z in camera space ([3, H*W]) and the
/// camera center repeated per pixel ([3, H*W]).
std::pair<Tensor, Tensor>
pixelRays(const geom::Camera &cam) {
    const Index H = cam.height, W = cam.width, P = H * W;
    std::vector<Real> dir(static_cast<std::size_t>(3 * P)), org(static_cast<std::size_t>(3 * P));
    const Eigen::Matrix3d M = cam.R.transpose() * cam.Kinv();
    const Eigen::Vector3d c = cam.center();
    for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) {
            const Eigen::Vector3d d = M * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
            const Index p           = y * W + x;
            for (int k = 0; k < 3; ++k) {
                dir[static_cast<std::size_t>(k * P + p)] = static_cast<Real>(d[k]);
                org[static_cast<std::size_t>(k * P + p)] = static_cast<Real>(c[k]);
            }
        }
    }
    return {Tensor({3, P}, std::move(dir)), Tensor({3, P}, std::move(org))};
}

} // namespace

Tensor
imageTensor(const io::Image &img) {
    return Tensor({3, img.height, img.width}, splat::fromImage(img));
}

Model::Model(const NetConfig &config, std::uint64_t seed) : mConfig(config) {
    mConfig.validate();
    std::mt19937_64 rng(seed);
    const auto &enc = mConfig.encoderChannels;
    int prev        = 3;
    for (std::size_t s = 0; s < enc.size(); ++s) {
        const std::string p = fmt::format("encoder.{}", s);
        Conv2d a            = makeConv(mParams, p + ".0", prev, enc[s], 3, s == 0 ? 1 : 2, Init::He, rng);
        Conv2d b            = makeConv(mParams, p + ".1", enc[s], enc[s], 3, 1, Init::He, rng);
        mEncoder.emplace_back(a, b);
        prev = enc[s];
    }
    int featC = 0;
    for (const int c : enc) {
        featC += c;
    }
    const int D = mConfig.planes;
    const int V = mConfig.volumeChannels();
    const int K = mConfig.appearanceChannels();

    mMatch     = makeConv(mParams, "match", featC, mConfig.matchChannels, 1, 1, Init::Linear, rng);
    mRefine[0] = makeConv(mParams, "refine.0", D + enc[0], mConfig.refineWidth, 3, 1, Init::He, rng);
    mRefine[1] = makeConv(mParams, "refine.1", mConfig.refineWidth, D, 3, 1, Init::Linear, rng, 0.1);

    mGeometry[0] = makeConv(mParams, "geometry.0", V, mConfig.geometryWidth, 3, 1, Init::He, rng);
    mGeometry[1] = makeConv(mParams, "geometry.1", mConfig.geometryWidth, 8, 3, 1, Init::Linear, rng, 0.1);
    setBias(mGeometry[1], {{0, Real(1)}, {7, Real(kInitOpacity)}});

    mAppearance[0] = makeConv(mParams, "appearance.0", V + 3, mConfig.appearanceWidth, 3, 1, Init::He, rng);
    mAppearance[1] = makeConv(mParams, "appearance.1", mConfig.appearanceWidth, mConfig.appearanceWidth, 3, 1, Init::He, rng);
    mAppearance[2] = makeConv(mParams, "appearance.2", mConfig.appearanceWidth, K, 3, 1, Init::Linear, rng, 0.1);

    mCbc = CbcModule::make(mParams, K, mConfig.cbcWidth, rng);
}

bool
Model::isGeometryParameter(const std::string &name) {
    return name.starts_with("match.") || name.starts_with("refine.") || name.starts_with("geometry.");
}

Tensor
Model::encode(const Tensor &image) const {
    std::vector<Tensor> scales;
    Tensor x = image;
    for (const auto &[a, b] : mEncoder) {
        x = ad::relu(b(ad::relu(a(x))));
        scales.push_back(x);
    }
    for (std::size_t s = 1; s < scales.size(); ++s) {
        scales[s] = ad::upsampleNearest(scales[s], 1 << s);
    }
    return scales.size() == 1 ? scales[0] : ad::concat(scales, 0);
}

Prediction
Model::predict(const std::vector<ViewInput> &views, const geom::DepthPlanes &planes, const PredictOptions &options) const {
    if (views.size() < 2) {
        throw std::invalid_argument(fmt::format("predict: need at least two context views, got {}", views.size()));
    }
    if (planes.count() != mConfig.planes) {
        throw std::invalid_argument(
            fmt::format("predict: network expects {} depth planes, got {}", mConfig.planes, planes.count()));
    }
    planes.validate();
    const Index H = views[0].image.dim(1), W = views[0].image.dim(2);
    const Index multiple = Index{1} << (mConfig.encoderChannels.size() - 1);
    if (H % multiple != 0 || W % multiple != 0) {
        throw std::invalid_argument(fmt::format("predict: image size {}x{} must be divisible by {}", W, H, multiple));
    }
    for (const auto &v : views) {
        if (v.image.shape() != ad::Shape{3, H, W}) {
            throw ad::ShapeError("predict", views[0].image.shape(), v.image.shape());
        }
        if (v.camera.width != W || v.camera.height != H) {
            throw std::invalid_argument(fmt::format("predict: camera is {}x{} but image is {}x{}",
                                                    v.camera.width, v.camera.height, W, H));
        }
        v.camera.validate();
    }

    std::vector<Tensor> feats, match;
    for (const auto &v : views) {
        feats.push_back(encode(v.image));
        match.push_back(mMatch(feats.back()));
    }

    Prediction pred;
    std::vector<splat::SceneTensors> parts(views.size());
    for (std::size_t r = 0; r < views.size(); ++r) {
        pred.views.push_back(predictView(r, views, feats, match, planes, options, parts[r]));
    }
    auto cat = [&](Tensor splat::SceneTensors::*field) {
        std::vector<Tensor> t;
        for (const auto &p : parts) {
            t.push_back(p.*field);
        }
        return ad::concat(t, 1);
    };
    pred.scene.shDegree  = mConfig.shDegree;
    pred.scene.means     = cat(&splat::SceneTensors::means);
    pred.scene.quats     = cat(&splat::SceneTensors::quats);
    pred.scene.scales    = cat(&splat::SceneTensors::scales);
    pred.scene.opacities = cat(&splat::SceneTensors::opacities);
    pred.scene.base      = cat(&splat::SceneTensors::base);
    pred.scene.sh        = cat(&splat::SceneTensors::sh);
    return pred;
}

ViewPrediction
Model::predictView(std::size_t ref,
                   const std::vector<ViewInput> &views,
                   const std::vector<Tensor> &feats,
                   const std::vector<Tensor> &match,
                   const geom::DepthPlanes &planes,
                   const PredictOptions &options,
                   splat::SceneTensors &out) const {
    const auto &cam = views[ref].camera;
    const Index H = cam.height, W = cam.width, P = H * W;
    const Index K = mConfig.appearanceChannels();

    std::vector<Tensor> srcFeats;
    std::vector<geom::Camera> srcCams;
    for (std::size_t s = 0; s < views.size(); ++s) {
        if (s != ref) {
            srcFeats.push_back(match[s]);
            srcCams.push_back(views[s].camera);
        }
    }
    ViewPrediction vp;
    const Tensor logits = mvs::buildCostVolume(match[ref], srcFeats, cam, srcCams, planes).logits;
    const Tensor fine   = ad::slice(feats[ref], 0, 0, mConfig.encoderChannels[0]);
    const Tensor delta  = mRefine[1](ad::relu(mRefine[0](ad::concat({logits, fine}, 0))));
    vp.refinedLogits    = ad::add(logits, delta);
    vp.disparity        = mvs::disparityFromVolume(vp.refinedLogits, planes);
    vp.depth            = ad::div(Tensor::scalar(1), vp.disparity.disparity);

    const Tensor volumeFeats = ad::concat({feats[ref], vp.refinedLogits}, 0);

    // Geometry.
    const Tensor g = ad::reshape(mGeometry[1](ad::relu(mGeometry[0](volumeFeats))), {8, P});
    const Tensor depthFlat = ad::reshape(vp.depth, {P});
    const auto [rays, origins] = pixelRays(cam);
    out.means = ad::add(origins, ad::mul(rays, depthFlat));

    const Tensor q     = ad::slice(g, 0, 0, 4);
    const Tensor qNorm = ad::sqrt(ad::addScalar(ad::sum(ad::mul(q, q), 0), static_cast<Real>(kQuatEps)));
    out.quats          = ad::div(q, qNorm);

    const auto sMin = static_cast<Real>(mConfig.scaleMin), sMax = static_cast<Real>(mConfig.scaleMax);
    // s_min + (s_max - s_min) (1 - exp(-softplus(x))) == s_min + (s_max - s_min) sigmoid(x)
    vp.scaleFactor = ad::addScalar(ad::mulScalar(ad::sigmoid(ad::slice(g, 0, 4, 3)), sMax - sMin), sMin);
    out.scales     = ad::mul(vp.scaleFactor, ad::mulScalar(depthFlat, static_cast<Real>(1.0 / cam.fx)));
    out.opacities  = ad::sigmoid(ad::slice(g, 0, 7, 1));

    // Appearance.
    const Tensor &image = views[ref].image;
    Tensor a      = ad::relu(mAppearance[0](ad::concat({volumeFeats, image}, 0)));
    a             = ad::relu(mAppearance[1](a));
    vp.appearance = mAppearance[2](a);

    vp.gate = boundaryGate(ad::detach(vp.disparity.disparity), ad::detach(vp.disparity.pdf));
    if (options.gate == GateMode::Disabled) {
        vp.gate = disabledGate(vp.gate);
    }
    vp.corrected = mCbc(vp.appearance, vp.gate);

    const Tensor flat = ad::reshape(vp.corrected, {K, P});
    out.shDegree      = mConfig.shDegree;
    out.base          = ad::add(ad::reshape(image, {3, P}), ad::slice(flat, 0, 0, 3));
    out.sh            = ad::slice(flat, 0, 3, K - 3);
    return vp;
}

void
Model::save(const std::filesystem::path &path, const nlohmann::json &extraMetadata) const {
    nlohmann::ordered_json meta;
    meta["format"] = kFormat;
    meta["net"]    = toJson(mConfig);
    if (!extraMetadata.is_null()) {
        meta["extra"] = extraMetadata;
    }
    ad::saveCheckpoint(path, mParams.entries(), meta.dump());
}

nlohmann::json
Model::loadMetadata(const std::filesystem::path &path) {
    const ad::Checkpoint ck = ad::loadCheckpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ck.metadata);
    } catch (const nlohmann::json::exception &e) {
        throw ad::CheckpointError(fmt::format("{}: metadata is not valid JSON ({})", path.string(), e.what()));
    }
    if (meta.value("format", "") != kFormat) {
        throw ad::CheckpointError(fmt::format("{}: not a model checkpoint", path.string()));
    }
    return meta;
}

Model
Model::load(const std::filesystem::path &path) {
    const ad::Checkpoint ck = ad::loadCheckpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ck.metadata);
    } catch (const nlohmann::json::exception &e) {
        throw ad::CheckpointError(fmt::format("{}: metadata is not valid JSON ({})", path.string(), e.what()));
    }
    if (meta.value("format", "") != kFormat || !meta.contains("net")) {
        throw ad::CheckpointError(fmt::format("{}: not a model checkpoint", path.string()));
    }
    Model m(netConfigFromJson(meta["net"]), 0);
    if (ck.entries.size() != m.mParams.size()) {
        throw ad::CheckpointError(fmt::format("{}: holds {} tensors, architecture has {}", path.string(),
                                              ck.entries.size(), m.mParams.size()));
    }
    for (std::size_t i = 0; i < m.mParams.size(); ++i) {
        const std::string &name = m.mParams.name(i);
        const Tensor *t         = ck.find(name);
        if (!t) {
            throw ad::CheckpointError(fmt::format("{}: missing tensor '{}'", path.string(), name));
        }
        if (t->shape() != m.mParams[i].shape()) {
            throw ad::CheckpointError(fmt::format("{}: tensor '{}' has shape {}, expected {}", path.string(), name,
                                                  ad::toString(t->shape()), ad::toString(m.mParams[i].shape())));
        }
        auto dst = m.mParams[i].mutableValues();
        auto src = t->values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return m;
}

} // namespace dsplat::inline DSPLAT_ABI::net
