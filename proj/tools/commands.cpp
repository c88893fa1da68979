// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "commands.hpp"

#include "dsplat/autodiff/tape.hpp"
#include "dsplat/noise/forge.hpp"
#include "dsplat/noise/verify.hpp"
#include "dsplat/selfcheck/gradient_suite.hpp"
#include "dsplat/splat/render.hpp"
#include "dsplat/splat/scene_io.hpp"
#include "dsplat/train/evaluate.hpp"
#include "dsplat/train/run_config.hpp"

#include <fmt/format.h>
#include <omp.h>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace dsplat::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

train::RunConfig
resolveConfig(const GlobalOptions &g) {
    train::RunConfig cfg = g.config.empty() ? train::RunConfig{} : train::loadRunConfig(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
    }
    if (g.threads > 0) {
        omp_set_num_threads(g.threads);
    }
    cfg.validate();
    return cfg;
}

fs::path
requireOut(const GlobalOptions &g) {
    if (g.out.empty()) {
        throw UsageError("--out is required for this subcommand");
    }
    fs::create_directories(g.out);
    return fs::absolute(g.out);
}

/// The reproducibility closure written next to every artifact: the exact
/// configuration (loadable with --config) and the seeds that drove the run.
void
writeProvenance(const fs::path &dir, const train::RunConfig &cfg, const std::string &command, ordered_json extra = {}) {
    noise::writeJsonFile(dir / "run_config.json", train::toJson(cfg));
    ordered_json seeds{{"command", command}, {"seed", cfg.seed}};
    for (auto &[k, v] : extra.items()) {
        seeds[k] = v;
    }
    noise::writeJsonFile(dir / "seeds.json", seeds);
}

net::Model
loadCheckpoint(const GlobalOptions &g, const fs::path &path) {
    net::Model model = net::Model::load(path);
    if (!g.config.empty()) {
        const train::RunConfig cfg = train::loadRunConfig(g.config);
        const std::string diff     = net::describeDifference(cfg.net, model.config());
        if (!diff.empty()) {
            throw UsageError(fmt::format("checkpoint {} does not match the config: {}", path.string(), diff));
        }
    }
    return model;
}

void
logReport(const train::MetricsReport &report) {
    for (const auto &a : report.aggregates) {
        if (!a.kind) {
            spdlog::info("{:<6} views={:<4} PSNR {:.3f} dB  SSIM {:.4f}", a.split, a.count, a.psnr, a.ssim);
        }
    }
}

} // namespace

int
runForge(const GlobalOptions &g, const ForgeArgs &a) {
    const auto cfg = resolveConfig(g);
    const fs::path out = requireOut(g);
    const auto report  = noise::forgeDataset(a.input, out, cfg.noise, cfg.seed);
    writeProvenance(out, cfg, "forge", {{"input", fs::absolute(a.input).string()}});
    const std::string manifest = noise::toJson(report.manifest).dump();
    spdlog::info("forged {} scenes, manifest hash {:016x}", report.manifest.scenes.size(), noise::hashString(manifest));
    for (const auto &e : report.errors) {
        spdlog::error("scene {}: {}", e.sceneId, e.message);
    }
    return report.errors.empty() ? kExitOk : kExitValidation;
}

int
runSynth(const GlobalOptions &g, const SynthArgs &a) {
    auto cfg = resolveConfig(g);
    if (a.trainScenes) {
        cfg.data.trainScenes = *a.trainScenes;
    }
    if (a.testScenes) {
        cfg.data.testScenes = *a.testScenes;
    }
    cfg.validate();
    const fs::path out = requireOut(g);
    for (const auto &[split, count] : {std::pair{"train", cfg.data.trainScenes}, std::pair{"test", cfg.data.testScenes}}) {
        const std::string prefix = std::string(split) + "_";
        const auto samples = train::generateSyntheticDataset(cfg.data.scene, count, cfg.noise, cfg.seed, prefix);
        train::writeSplit(samples, out / split, cfg.noise, cfg.seed);
        spdlog::info("{}: {} scenes", split, samples.size());
    }
    writeProvenance(out, cfg, "synth");
    return kExitOk;
}

int
runTrain(const GlobalOptions &g, const TrainArgs &a) {
    auto cfg = resolveConfig(g);
    if (a.clean) {
        cfg.train.cleanInputs = true;
    }
    if (a.steps) {
        cfg.optimizer.steps = *a.steps;
    }
    cfg.validate();
    const fs::path out = requireOut(g);
    const auto data    = train::loadSplit(a.data);
    train::checkCompatible(cfg.net, data);
    writeProvenance(out, cfg, "train", {{"data", fs::absolute(a.data).string()}});

    net::Model model(cfg.net, cfg.seed);
    spdlog::info("training {} parameters on {} scenes for {} steps ({} inputs)",
                 model.parameters().scalarCount(), data.size(), cfg.optimizer.steps,
                 cfg.train.cleanInputs ? "clean" : "noisy");
    const auto result = train::trainModel(model, data, cfg.optimizer, cfg.trainOptions(), out, train::toJson(cfg));
    if (!result.curve.empty()) {
        const auto &last = result.curve.back();
        spdlog::info("done: step {} loss {:.5f}, checkpoint {}", last.step, last.loss, result.checkpoint.string());
    }
    return kExitOk;
}

int
runEval(const GlobalOptions &g, const EvalArgs &a) {
    const auto cfg = resolveConfig(g);
    const fs::path out = requireOut(g);
    const net::Model model = loadCheckpoint(g, a.checkpoint);
    auto data = train::loadSplit(a.data);
    if (a.sigma) {
        const noise::NoiseConfig noise{noise::parseKind(a.kind), *a.sigma};
        noise.validate();
        for (auto &s : data) {
            s = train::withNoise(s, noise, cfg.seed);
        }
    }
    train::checkCompatible(model.config(), data);

    train::EvalOptions opts;
    opts.method      = a.checkpoint.stem().string();
    opts.cleanInputs = a.clean;
    opts.gate        = a.noCbc ? net::GateMode::Disabled : net::GateMode::Computed;
    const auto report = train::evaluate(model, data, opts);
    noise::writeJsonFile(out / "metrics.json", train::toJson(report));
    train::writeText(out / "metrics.csv", train::toCsv(report));
    writeProvenance(out, cfg, "eval",
                    {{"checkpoint", fs::absolute(a.checkpoint).string()},
                     {"data", fs::absolute(a.data).string()},
                     {"kind", a.sigma ? ordered_json(a.kind) : ordered_json()},
                     {"sigma", a.sigma ? ordered_json(*a.sigma) : ordered_json()},
                     {"clean_inputs", a.clean},
                     {"cbc", !a.noCbc}});
    logReport(report);
    return kExitOk;
}

int
runAblate(const GlobalOptions &g, const AblateArgs &a) {
    const auto cfg = resolveConfig(g);
    const fs::path out = requireOut(g);
    const net::Model model = loadCheckpoint(g, a.checkpoint);
    const auto data        = train::loadSplit(a.data);
    train::checkCompatible(model.config(), data);

    std::vector<train::GridPoint> grid;
    if (a.grid.empty()) {
        grid = train::gaussianGrid();
        const auto families = train::familyGrid();
        grid.insert(grid.end(), families.begin(), families.end());
    } else {
        grid = train::parseGrid(a.grid);
    }
    train::EvalOptions opts;
    opts.method = a.checkpoint.stem().string();
    opts.gate   = a.noCbc ? net::GateMode::Disabled : net::GateMode::Computed;
    const auto table = train::ablate(model, data, grid, cfg.seed, opts);
    noise::writeJsonFile(out / "ablation.json", train::toJson(table));
    train::writeText(out / "ablation.csv", train::toCsv(table));
    writeProvenance(out, cfg, "ablate",
                    {{"checkpoint", fs::absolute(a.checkpoint).string()},
                     {"data", fs::absolute(a.data).string()},
                     {"cbc", !a.noCbc}});
    for (const auto &p : grid) {
        const auto &row = table.at(p, "all");
        spdlog::info("{:<10} {:<6} PSNR {:.3f} dB  SSIM {:.4f}", noise::toString(p.kind), p.param, row.psnr, row.ssim);
    }
    return kExitOk;
}

int
runRender(const GlobalOptions &g, const RenderArgs &a) {
    const auto cfg = resolveConfig(g);
    const fs::path out = requireOut(g);
    const net::Model model = loadCheckpoint(g, a.checkpoint);
    const auto data        = train::loadSplit(a.data);
    if (data.empty()) {
        throw UsageError("no scenes under " + a.data.string());
    }
    const auto it = a.scene.empty() ? data.begin()
                                    : std::find_if(data.begin(), data.end(),
                                                   [&](const auto &s) { return s.sceneId == a.scene; });
    if (it == data.end()) {
        throw UsageError("scene '" + a.scene + "' not found under " + a.data.string());
    }
    const train::MultiViewSample &sample = *it;
    train::checkCompatible(model.config(), {sample});

    ad::TapeScope noTape(nullptr);
    const auto prediction = model.predict(train::contextInputs(sample, a.clean), sample.planes(model.config().planes));
    const fs::path dir = out / sample.sceneId;
    fs::create_directories(dir);
    splat::saveScene(dir / "gaussians.bin", prediction.scene.values());
    for (std::size_t f = 0; f < sample.cameras.size(); ++f) {
        const auto &cam   = sample.cameras[f];
        const ad::Tensor img = splat::renderOp(prediction.scene, cam, splat::RenderSettings{});
        io::writePng(dir / fmt::format("render_{:02d}.png", f), splat::toImage(img.values(), cam.width, cam.height));
        io::writePng(dir / fmt::format("clean_{:02d}.png", f), sample.clean[f]);
        io::writePng(dir / fmt::format("noisy_{:02d}.png", f), sample.noisy[f]);
    }
    writeProvenance(out, cfg, "render",
                    {{"checkpoint", fs::absolute(a.checkpoint).string()},
                     {"scene", sample.sceneId},
                     {"clean_inputs", a.clean}});
    spdlog::info("wrote {} frames of {} to {}", sample.cameras.size(), sample.sceneId, dir.string());
    return kExitOk;
}

int
runGradcheck(const GlobalOptions &g) {
    if (g.threads > 0) {
        omp_set_num_threads(g.threads);
    }
    const auto results = selfcheck::runGradientSuite([](const selfcheck::CheckResult &r) {
        fmt::print("{:<4} {:<9} {:<30} rel.err {:.3e} (tol {:.0e})\n", r.pass ? "ok" : "FAIL", r.group, r.name,
                   r.maxRelError, r.tolerance);
    });
    const auto failed = std::count_if(results.begin(), results.end(), [](const auto &r) { return !r.pass; });
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        ordered_json j = ordered_json::array();
        for (const auto &r : results) {
            j.push_back({{"group", r.group}, {"name", r.name}, {"max_rel_error", r.maxRelError},
                         {"tolerance", r.tolerance}, {"pass", r.pass}});
        }
        noise::writeJsonFile(g.out / "gradcheck.json", j);
    }
    fmt::print("{} of {} checks passed\n", results.size() - static_cast<std::size_t>(failed), results.size());
    return failed == 0 ? kExitOk : kExitNumerical;
}

int
runVerify(const GlobalOptions &g, const VerifyArgs &a) {
    if (g.threads > 0) {
        omp_set_num_threads(g.threads);
    }
    const auto reports = noise::verifyDataset(a.clean, a.noisy);
    std::size_t failed = 0;
    ordered_json j     = ordered_json::array();
    for (const auto &r : reports) {
        failed += r.pass ? 0 : 1;
        j.push_back(noise::toJson(r));
        if (!r.pass) {
            spdlog::error("scene {} ({} {}): {}", r.sceneId, noise::toString(r.kind), r.param, r.message);
        }
    }
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        noise::writeJsonFile(g.out / "verify.json", j);
    }
    spdlog::info("{} of {} scenes consistent with their recorded noise", reports.size() - failed, reports.size());
    return failed == 0 ? kExitOk : kExitValidation;
}

} // namespace dsplat::cli
