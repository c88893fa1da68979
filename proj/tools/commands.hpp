// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace dsplat::cli {

/// Exit statuses of the executable.
inline constexpr int kExitOk         = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical  = 2;

/// Options shared by every subcommand. Flags override the config file.
struct GlobalOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out;
    int threads = 0;
};

/// Input validation failures detected by the CLI itself.
class UsageError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct ForgeArgs {
    std::filesystem::path input;
};

struct SynthArgs {
    std::optional<int> trainScenes;
    std::optional<int> testScenes;
};

struct TrainArgs {
    std::filesystem::path data;
    bool clean = false;
    std::optional<int> steps;
};

struct EvalArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::optional<double> sigma;
    std::string kind = "gaussian";
    bool clean       = false;
    bool noCbc       = false;
};

struct AblateArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::string grid;
    bool noCbc = false;
};

struct RenderArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::string scene;
    bool clean = false;
};

struct VerifyArgs {
    std::filesystem::path clean;
    std::filesystem::path noisy;
};

int runForge(const GlobalOptions &g, const ForgeArgs &a);
int runSynth(const GlobalOptions &g, const SynthArgs &a);
int runTrain(const GlobalOptions &g, const TrainArgs &a);
int runEval(const GlobalOptions &g, const EvalArgs &a);
int runAblate(const GlobalOptions &g, const AblateArgs &a);
int runRender(const GlobalOptions &g, const RenderArgs &a);
int runGradcheck(const GlobalOptions &g);
int runVerify(const GlobalOptions &g, const VerifyArgs &a);

} // namespace dsplat::cli
