// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// The single structured run configuration. Schema (all keys optional, unknown
// keys rejected):
//
//   {
//     "seed": 1,
//     "net":       { NetConfig fields },
//     "noise":     { "gaussian": [lo, hi], "poisson": [...], "speckle": [...], "saltpepper": [...] },
//     "optimizer": { "steps", "lr", "min_ratio", "warmup_steps", "beta1", "beta2", "eps", "grad_clip" },
//     "train":     { "loss": {"l1", "ssim"}, "checkpoint_every", "log_every", "clean_inputs", "fresh_noise" },
//     "data":      { "train_scenes", "test_scenes", "scene": { SyntheticSceneSpec fields } }
//   }
//
#pragma once

#include "dsplat/net/net_config.hpp"
#include "dsplat/noise/noise.hpp"
#include "dsplat/train/synthetic.hpp"
#include "dsplat/train/trainer.hpp"

#include <filesystem>

namespace dsplat::inline DSPLAT_ABI::train {

struct DataConfig {
    SyntheticSceneSpec scene;
    int trainScenes = 200;
    int testScenes  = 40;
};

struct RunConfig {
    std::uint64_t seed = 1;
    net::NetConfig net;
    noise::NoiseRanges noise;
    OptimizerConfig optimizer;
    TrainOptions train;
    DataConfig data;

    void validate() const;
    /// Train options with the global seed applied.
    TrainOptions trainOptions() const;
};

nlohmann::ordered_json toJson(const RunConfig &cfg);
RunConfig runConfigFromJson(const nlohmann::json &j);
RunConfig loadRunConfig(const std::filesystem::path &path);

} // namespace dsplat::inline DSPLAT_ABI::train
