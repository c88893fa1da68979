// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "dsplat/net/model.hpp"
#include "dsplat/train/loss.hpp"
#include "dsplat/train/synthetic.hpp"

#include <filesystem>
#include <functional>
#include <stdexcept>

namespace dsplat::inline DSPLAT_ABI::train {

/// Adam with linear warmup followed by cosine decay to lr * minRatio.
struct OptimizerConfig {
    int steps        = 3000;
    double lr        = 2e-4;
    double minRatio  = 0.05;
    int warmupSteps  = 50;
    double beta1     = 0.9;
    double beta2     = 0.999;
    double eps       = 1e-8;
    double gradClip  = 1.0; ///< global-norm clip; 0 disables

    double learningRate(int step) const;
    void validate() const;
};

struct TrainOptions {
    LossWeights loss;
    int checkpointEvery = 500; ///< 0 disables intermediate checkpoints
    int logEvery        = 50;
    /// Train on clean context views (the clean-trained baseline).
    bool cleanInputs = false;
    /// Draw a new noise realization of each scene's (kind, param) every epoch
    /// after the first; the first epoch uses the forged frames.
    bool freshNoise = true;
    std::uint64_t seed = 1; ///< set from the run's global seed; not serialized
};

nlohmann::ordered_json toJson(const OptimizerConfig &o);
OptimizerConfig optimizerFromJson(const nlohmann::json &j);
nlohmann::ordered_json toJson(const TrainOptions &o);
TrainOptions trainOptionsFromJson(const nlohmann::json &j);

/// Non-finite loss or gradient. The last good parameters have been restored
/// (and written, when training has an output directory).
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct StepRecord {
    int step = 0;
    double loss = 0;
    double l1   = 0;
    double dssim = 0; ///< 1 - SSIM
    double lr   = 0;
};

struct TrainResult {
    std::vector<StepRecord> curve;
    std::filesystem::path checkpoint; ///< final weights (empty without an output dir)
};

/// Context views the network sees for `sample`: noisy frames, or clean ones.
std::vector<net::ViewInput> contextInputs(const MultiViewSample &sample, bool clean);

/// Forward pass plus loss over every supervision view of one sample, recorded
/// on the active tape.
LossTerms sampleLoss(const net::Model &model,
                     const std::vector<net::ViewInput> &inputs,
                     const MultiViewSample &sample,
                     const LossWeights &weights,
                     const net::PredictOptions &options = {});

using StepCallback = std::function<void(const StepRecord &)>;

/// Sequential training. Sample order is a per-epoch shuffle drawn from
/// options.seed, so runs are reproducible. Writes loss_curve.csv, periodic
/// checkpoints and model.ckpt into outDir when it is non-empty.
TrainResult trainModel(net::Model &model,
                       const std::vector<MultiViewSample> &data,
                       const OptimizerConfig &optim,
                       const TrainOptions &options,
                       const std::filesystem::path &outDir = {},
                       const nlohmann::json &runConfig = {},
                       const StepCallback &onStep = {});

void writeLossCurve(const std::filesystem::path &path, const std::vector<StepRecord> &curve);

} // namespace dsplat::inline DSPLAT_ABI::train
