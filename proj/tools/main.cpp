// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "commands.hpp"

#include "dsplat/io/logging.hpp"
#include "dsplat/train/trainer.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <functional>
#include <iostream>

using namespace dsplat::cli;

int
main(int argc, char **argv) {
    dsplat::io::initLogging();

    CLI::App app{"dsplat: noise-robust feed-forward Gaussian splatting"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Expand all help");

    GlobalOptions g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    auto *seedOpt = app.add_option("--seed", seed, "Global seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--threads", g.threads, "Maximum worker threads (0 = all)")->check(CLI::NonNegativeNumber);

    std::function<int()> command;

    ForgeArgs forge;
    auto *cForge = app.add_subcommand("forge", "Degrade a clean dataset into a noisy one plus manifest");
    cForge->add_option("--in", forge.input, "Clean dataset root")->required()->check(CLI::ExistingDirectory);
    cForge->callback([&] { command = [&] { return runForge(g, forge); }; });

    SynthArgs synth;
    auto *cSynth = app.add_subcommand("synth", "Generate synthetic train/test splits");
    cSynth->add_option("--train-scenes", synth.trainScenes, "Training scenes");
    cSynth->add_option("--test-scenes", synth.testScenes, "Test scenes");
    cSynth->callback([&] { command = [&] { return runSynth(g, synth); }; });

    TrainArgs train;
    auto *cTrain = app.add_subcommand("train", "Train a model on a split");
    cTrain->add_option("--data", train.data, "Split directory")->required()->check(CLI::ExistingDirectory);
    cTrain->add_flag("--clean", train.clean, "Train on clean context views (baseline)");
    cTrain->add_option("--steps", train.steps, "Optimizer steps (overrides the config)");
    cTrain->callback([&] { command = [&] { return runTrain(g, train); }; });

    EvalArgs eval;
    auto *cEval = app.add_subcommand("eval", "Metrics of a checkpoint on a split");
    cEval->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    cEval->add_option("--data", eval.data, "Split directory")->required()->check(CLI::ExistingDirectory);
    cEval->add_option("--sigma", eval.sigma, "Re-forge every scene with this noise parameter");
    cEval->add_option("--kind", eval.kind, "Noise kind used with --sigma")
        ->check(CLI::IsMember({"gaussian", "poisson", "speckle", "saltpepper"}));
    cEval->add_flag("--clean", eval.clean, "Feed clean context views");
    cEval->add_flag("--no-cbc", eval.noCbc, "Disable the boundary correction (B = 0)");
    cEval->callback([&] { command = [&] { return runEval(g, eval); }; });

    AblateArgs ablate;
    auto *cAblate = app.add_subcommand("ablate", "Noise-level and noise-family grids");
    cAblate->add_option("--checkpoint", ablate.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    cAblate->add_option("--data", ablate.data, "Split directory")->required()->check(CLI::ExistingDirectory);
    cAblate->add_option("--grid", ablate.grid, "Grid, e.g. \"gaussian:0.05,0.08;poisson:0.03\" (default: both tables)");
    cAblate->add_flag("--no-cbc", ablate.noCbc, "Disable the boundary correction (B = 0)");
    cAblate->callback([&] { command = [&] { return runAblate(g, ablate); }; });

    RenderArgs render;
    auto *cRender = app.add_subcommand("render", "Render every frame of a scene from a checkpoint");
    cRender->add_option("--checkpoint", render.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    cRender->add_option("--data", render.data, "Split directory")->required()->check(CLI::ExistingDirectory);
    cRender->add_option("--scene", render.scene, "Scene id (default: first scene)");
    cRender->add_flag("--clean", render.clean, "Feed clean context views");
    cRender->callback([&] { command = [&] { return runRender(g, render); }; });

    auto *cGrad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    cGrad->callback([&] { command = [&] { return runGradcheck(g); }; });

    VerifyArgs verify;
    auto *cVerify = app.add_subcommand("verify", "Check residual statistics of a forged dataset");
    cVerify->add_option("--clean", verify.clean, "Clean dataset root")->required()->check(CLI::ExistingDirectory);
    cVerify->add_option("--noisy", verify.noisy, "Forged dataset root")->required()->check(CLI::ExistingDirectory);
    cVerify->callback([&] { command = [&] { return runVerify(g, verify); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitValidation;
    }
    if (*seedOpt) {
        g.seed = seed;
    }

    try {
        return command();
    } catch (const dsplat::train::NumericalError &e) {
        spdlog::error("numerical failure: {}", e.what());
        return kExitNumerical;
    } catch (const std::exception &e) {
        spdlog::error("{}", e.what());
        return kExitValidation;
    }
}
