// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Feed-forward reconstruction: context views in, pixel-aligned Gaussians out.
//
//   encoder (shared, multi-scale) -> plane-sweep cost volume -> refinement
//   -> disparity (softmax over planes) -> centers by unprojection
//   -> geometry head (rotation, scale, opacity)
//   -> appearance head (base color + SH) -> boundary correction
//
// Every context view acts as the reference once, with all other context views
// as sources; the per-view Gaussians are concatenated.
//
#pragma once

#include "dsplat/geometry/camera.hpp"
#include "dsplat/geometry/plane_sweep.hpp"
#include "dsplat/net/cbc.hpp"
#include "dsplat/net/net_config.hpp"
#include "dsplat/splat/render.hpp"

#include "json.hpp"

#include <filesystem>

namespace dsplat::inline DSPLAT_ABI::net {

struct ViewInput {
    Tensor image; ///< [3, H, W] in [0, 1]
    geom::Camera camera;
};

enum class GateMode {
    Computed, ///< B and C from the predicted disparity and plane distribution
    Disabled, ///< B = 0: the corrected appearance equals the raw appearance
};

struct PredictOptions {
    GateMode gate = GateMode::Computed;
};

struct ViewPrediction {
    mvs::DisparityEstimate disparity;
    Tensor refinedLogits; ///< [D, H, W]
    Tensor depth;         ///< [H, W]
    Tensor scaleFactor;   ///< [3, H*W], scale in pixel-footprint units
    BoundaryGate gate;
    Tensor appearance; ///< A,  [K, H, W]
    Tensor corrected;  ///< A', [K, H, W]
};

struct Prediction {
    splat::SceneTensors scene; ///< H*W Gaussians per context view
    std::vector<ViewPrediction> views;
};

class Model {
  public:
    Model(const NetConfig &config, std::uint64_t seed);
    // Layers hold handles into the parameter storage; copies would alias it.
    Model(const Model &)            = delete;
    Model &operator=(const Model &) = delete;
    Model(Model &&)                 = default;
    Model &operator=(Model &&)      = default;

    const NetConfig &config() const { return mConfig; }
    ParameterSet &parameters() { return mParams; }
    const ParameterSet &parameters() const { return mParams; }

    /// Needs at least two views of identical size, divisible by 2^(scales-1).
    Prediction predict(const std::vector<ViewInput> &views,
                       const geom::DepthPlanes &planes,
                       const PredictOptions &options = {}) const;

    /// Multi-scale features of one image, all at full resolution: [sum(c), H, W].
    Tensor encode(const Tensor &image) const;

    /// Parameters that shape disparity and geometry (matching, refinement,
    /// geometry head). The encoder is shared by both branches.
    static bool isGeometryParameter(const std::string &name);

    void save(const std::filesystem::path &path, const nlohmann::json &extraMetadata = {}) const;
    /// Rebuilds the architecture from the stored config and loads every tensor.
    static Model load(const std::filesystem::path &path);
    /// Metadata stored alongside the weights.
    static nlohmann::json loadMetadata(const std::filesystem::path &path);

  private:
    ViewPrediction predictView(std::size_t ref,
                               const std::vector<ViewInput> &views,
                               const std::vector<Tensor> &feats,
                               const std::vector<Tensor> &match,
                               const geom::DepthPlanes &planes,
                               const PredictOptions &options,
                               splat::SceneTensors &out) const;

    NetConfig mConfig;
    ParameterSet mParams;
    std::vector<std::pair<Conv2d, Conv2d>> mEncoder;
    Conv2d mMatch;
    Conv2d mRefine[2];
    Conv2d mGeometry[2];
    Conv2d mAppearance[3];
    CbcModule mCbc;
};

/// Channel-major tensor of an interleaved image.
Tensor imageTensor(const io::Image &img);

} // namespace dsplat::inline DSPLAT_ABI::net
