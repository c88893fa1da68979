// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/train/run_config.hpp"

#include "dsplat/noise/forge.hpp"

#include <fmt/format.h>

namespace dsplat::inline DSPLAT_ABI::train {

void
RunConfig::validate() const {
    net.validate();
    noise.validate();
    optimizer.validate();
    train.loss.validate();
    data.scene.validate();
    if (data.trainScenes < 1 || data.testScenes < 1) {
        throw std::invalid_argument("data: train_scenes and test_scenes must be >= 1");
    }
    const int multiple = 1 << (net.encoderChannels.size() - 1);
    if (data.scene.width % multiple || data.scene.height % multiple) {
        throw std::invalid_argument(fmt::format("data: image size {}x{} must be divisible by {} for {} encoder scales",
                                                data.scene.width, data.scene.height, multiple, net.encoderChannels.size()));
    }
}

TrainOptions
RunConfig::trainOptions() const {
    TrainOptions t = train;
    t.seed         = seed;
    return t;
}

nlohmann::ordered_json
toJson(const RunConfig &c) {
    nlohmann::ordered_json j;
    j["seed"]      = c.seed;
    j["net"]       = net::toJson(c.net);
    j["noise"]     = noise::toJson(c.noise);
    j["optimizer"] = toJson(c.optimizer);
    j["train"]     = toJson(c.train);
    j["data"]      = {{"train_scenes", c.data.trainScenes}, {"test_scenes", c.data.testScenes}, {"scene", toJson(c.data.scene)}};
    return j;
}

RunConfig
runConfigFromJson(const nlohmann::json &j) {
    RunConfig c;
    for (const auto &[key, value] : j.items()) {
        if (key != "seed" && key != "net" && key != "noise" && key != "optimizer" && key != "train" && key != "data") {
            throw std::invalid_argument(fmt::format("run config: unknown key '{}'", key));
        }
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("net")) {
        c.net = net::netConfigFromJson(j["net"]);
    }
    if (j.contains("noise")) {
        c.noise = noise::rangesFromJson(j["noise"]);
    }
    if (j.contains("optimizer")) {
        c.optimizer = optimizerFromJson(j["optimizer"]);
    }
    if (j.contains("train")) {
        c.train = trainOptionsFromJson(j["train"]);
    }
    if (j.contains("data")) {
        const auto &d = j["data"];
        for (const auto &[key, value] : d.items()) {
            if (key != "train_scenes" && key != "test_scenes" && key != "scene") {
                throw std::invalid_argument(fmt::format("data: unknown key '{}'", key));
            }
        }
        c.data.trainScenes = d.value("train_scenes", c.data.trainScenes);
        c.data.testScenes  = d.value("test_scenes", c.data.testScenes);
        if (d.contains("scene")) {
            c.data.scene = syntheticSpecFromJson(d["scene"]);
        }
    }
    c.validate();
    return c;
}

RunConfig
loadRunConfig(const std::filesystem::path &path) {
    const nlohmann::json j = noise::readJsonFile(path);
    try {
        return runConfigFromJson(j);
    } catch (const std::invalid_argument &e) {
        throw std::invalid_argument(fmt::format("{}: {}", path.string(), e.what()));
    }
}

} // namespace dsplat::inline DSPLAT_ABI::train
