// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/train/trainer.hpp"

#include "dsplat/autodiff/tape.hpp"
#include "dsplat/noise/forge.hpp"

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dsplat::inline DSPLAT_ABI::train {

namespace fs = std::filesystem;

double
OptimizerConfig::learningRate(int step) const {
    if (warmupSteps > 0 && step < warmupSteps) {
        return lr * (step + 1) / warmupSteps;
    }
    // The last step (steps - 1) lands exactly on the floor.
    const int span = std::max(1, steps - warmupSteps - 1);
    const double t = std::clamp(static_cast<double>(step - warmupSteps) / span, 0.0, 1.0);
    return lr * (minRatio + (1 - minRatio) * 0.5 * (1 + std::cos(std::numbers::pi * t)));
}

void
OptimizerConfig::validate() const {
    if (steps < 0 || warmupSteps < 0) {
        throw std::invalid_argument("optimizer: steps and warmup_steps must be non-negative");
    }
    if (!(lr >= 0) || !(minRatio >= 0 && minRatio <= 1)) {
        throw std::invalid_argument(fmt::format("optimizer: need lr >= 0 and min_ratio in [0, 1] (got {}, {})", lr, minRatio));
    }
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0) || !(gradClip >= 0)) {
        throw std::invalid_argument("optimizer: betas must lie in [0, 1), eps > 0, grad_clip >= 0");
    }
}

nlohmann::ordered_json
toJson(const OptimizerConfig &o) {
    return {{"steps", o.steps},         {"lr", o.lr},       {"min_ratio", o.minRatio}, {"warmup_steps", o.warmupSteps},
            {"beta1", o.beta1},         {"beta2", o.beta2}, {"eps", o.eps},            {"grad_clip", o.gradClip}};
}

namespace {

void
rejectUnknown(const nlohmann::json &j, const nlohmann::ordered_json &known, const char *what) {
    for (const auto &[key, value] : j.items()) {
        if (!known.contains(key)) {
            throw std::invalid_argument(fmt::format("{}: unknown key '{}'", what, key));
        }
    }
}

} // namespace

OptimizerConfig
optimizerFromJson(const nlohmann::json &j) {
    OptimizerConfig o;
    rejectUnknown(j, toJson(o), "optimizer");
    o.steps       = j.value("steps", o.steps);
    o.lr          = j.value("lr", o.lr);
    o.minRatio    = j.value("min_ratio", o.minRatio);
    o.warmupSteps = j.value("warmup_steps", o.warmupSteps);
    o.beta1       = j.value("beta1", o.beta1);
    o.beta2       = j.value("beta2", o.beta2);
    o.eps         = j.value("eps", o.eps);
    o.gradClip    = j.value("grad_clip", o.gradClip);
    o.validate();
    return o;
}

nlohmann::ordered_json
toJson(const TrainOptions &o) {
    return {{"loss", toJson(o.loss)},           {"checkpoint_every", o.checkpointEvery}, {"log_every", o.logEvery},
            {"clean_inputs", o.cleanInputs},    {"fresh_noise", o.freshNoise}};
}

TrainOptions
trainOptionsFromJson(const nlohmann::json &j) {
    TrainOptions o;
    rejectUnknown(j, toJson(o), "train");
    if (j.contains("loss")) {
        o.loss = lossWeightsFromJson(j["loss"]);
    }
    o.checkpointEvery = j.value("checkpoint_every", o.checkpointEvery);
    o.logEvery        = j.value("log_every", o.logEvery);
    o.cleanInputs     = j.value("clean_inputs", o.cleanInputs);
    o.freshNoise      = j.value("fresh_noise", o.freshNoise);
    return o;
}

std::vector<net::ViewInput>
contextInputs(const MultiViewSample &sample, bool clean) {
    std::vector<net::ViewInput> views;
    for (const int f : sample.context) {
        const auto &img = clean ? sample.clean[static_cast<std::size_t>(f)] : sample.noisy[static_cast<std::size_t>(f)];
        views.push_back({net::imageTensor(img), sample.cameras[static_cast<std::size_t>(f)]});
    }
    return views;
}

LossTerms
sampleLoss(const net::Model &model,
           const std::vector<net::ViewInput> &inputs,
           const MultiViewSample &sample,
           const LossWeights &weights,
           const net::PredictOptions &options) {
    const net::Prediction pred = model.predict(inputs, sample.planes(model.config().planes), options);
    LossTerms out;
    const auto n = static_cast<Real>(sample.targets.size());
    for (const auto &t : sample.targets) {
        const auto &cam     = sample.cameras[static_cast<std::size_t>(t.frame)];
        const Tensor image  = splat::renderOp(pred.scene, cam, splat::RenderSettings{});
        const Tensor gt     = net::imageTensor(sample.clean[static_cast<std::size_t>(t.frame)]);
        const LossTerms lt  = reconstructionLoss(image, gt, weights);
        const Tensor scaled = ad::mulScalar(lt.total, 1 / n);
        out.total           = out.total.defined() ? ad::add(out.total, scaled) : scaled;
        out.l1 += lt.l1 / static_cast<double>(n);
        out.ssim += lt.ssim / static_cast<double>(n);
    }
    return out;
}

void
writeLossCurve(const fs::path &path, const std::vector<StepRecord> &curve) {
    auto out = fmt::output_file(path.string());
    out.print("step,loss,l1,dssim,lr\n");
    for (const auto &r : curve) {
        out.print("{},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.step, r.loss, r.l1, r.dssim, r.lr);
    }
}

namespace {

std::vector<std::vector<Real>>
snapshot(const net::ParameterSet &params) {
    std::vector<std::vector<Real>> s;
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.emplace_back(params[i].values().begin(), params[i].values().end());
    }
    return s;
}

void
restore(net::ParameterSet &params, const std::vector<std::vector<Real>> &s) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::copy(s[i].begin(), s[i].end(), params[i].mutableValues().begin());
    }
}

} // namespace

TrainResult
trainModel(net::Model &model,
           const std::vector<MultiViewSample> &data,
           const OptimizerConfig &optim,
           const TrainOptions &options,
           const fs::path &outDir,
           const nlohmann::json &runConfig,
           const StepCallback &onStep) {
    if (data.empty()) {
        throw std::invalid_argument("train: dataset is empty");
    }
    optim.validate();
    options.loss.validate();
    if (!outDir.empty()) {
        fs::create_directories(outDir / "checkpoints");
    }
    auto meta = [&](int step) {
        nlohmann::json m;
        m["step"]       = step;
        m["seed"]       = options.seed;
        m["run_config"] = runConfig;
        return m;
    };

    net::ParameterSet &params = model.parameters();
    net::Adam adam({optim.beta1, optim.beta2, optim.eps});
    noise::Rng orderRng(options.seed);
    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size();
    int epoch          = -1;
    auto lastGood      = snapshot(params);

    TrainResult result;
    for (int step = 0; step < optim.steps; ++step) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), orderRng);
            cursor = 0;
            ++epoch;
        }
        const MultiViewSample &base = data[order[cursor++]];
        std::vector<net::ViewInput> inputs;
        if (!options.cleanInputs && options.freshNoise && epoch > 0) {
            MultiViewSample redrawn = base;
            redrawn.noise.sceneSeed = noise::splitmix64(base.noise.sceneSeed ^ static_cast<std::uint64_t>(epoch));
            redrawn.noisy           = noise::degradeViews(base.clean, redrawn.noise);
            for (auto &img : redrawn.noisy) {
                img = io::quantize(img);
            }
            inputs = contextInputs(redrawn, false);
        } else {
            inputs = contextInputs(base, options.cleanInputs);
        }

        ad::Tape tape;
        StepRecord rec;
        std::vector<Tensor> grads;
        {
            ad::TapeScope scope(tape);
            const LossTerms lt = sampleLoss(model, inputs, base, options.loss);
            rec.step  = step;
            rec.loss  = lt.total.item();
            rec.l1    = lt.l1;
            rec.dssim = 1 - lt.ssim;
            rec.lr    = optim.learningRate(step);
            const ad::GradientMap gm = ad::backward(tape, lt.total);
            for (std::size_t i = 0; i < params.size(); ++i) {
                grads.push_back(gm.of(params[i]));
            }
        }
        double norm2 = 0;
        for (const auto &g : grads) {
            for (const Real v : g.values()) {
                norm2 += static_cast<double>(v) * v;
            }
        }
        if (!std::isfinite(rec.loss) || !std::isfinite(norm2)) {
            restore(params, lastGood);
            std::string where;
            if (!outDir.empty()) {
                model.save(outDir / "model.ckpt", meta(step));
                writeLossCurve(outDir / "loss_curve.csv", result.curve);
                where = fmt::format("; last good weights written to {}", (outDir / "model.ckpt").string());
            }
            throw NumericalError(fmt::format("training diverged at step {} (scene {}): non-finite {}{}", step,
                                             base.sceneId, std::isfinite(rec.loss) ? "gradient" : "loss", where));
        }
        if (optim.gradClip > 0) {
            const double norm = std::sqrt(norm2);
            if (norm > optim.gradClip) {
                const auto s = static_cast<Real>(optim.gradClip / norm);
                for (auto &g : grads) {
                    for (Real &v : g.mutableValues()) {
                        v *= s;
                    }
                }
            }
        }
        adam.step(params, grads, rec.lr);
        result.curve.push_back(rec);
        if (onStep) {
            onStep(rec);
        }
        if (options.logEvery > 0 && (step % options.logEvery == 0 || step + 1 == optim.steps)) {
            spdlog::info("step {:>6} loss {:.5f} l1 {:.5f} 1-ssim {:.5f} lr {:.2e}", step, rec.loss, rec.l1, rec.dssim, rec.lr);
        }
        if (options.checkpointEvery > 0 && (step + 1) % options.checkpointEvery == 0) {
            lastGood = snapshot(params);
            if (!outDir.empty()) {
                model.save(outDir / "checkpoints" / fmt::format("step_{:06d}.ckpt", step + 1), meta(step + 1));
            }
        }
    }
    if (!outDir.empty()) {
        result.checkpoint = outDir / "model.ckpt";
        model.save(result.checkpoint, meta(optim.steps));
        writeLossCurve(outDir / "loss_curve.csv", result.curve);
    }
    return result;
}

} // namespace dsplat::inline DSPLAT_ABI::train
