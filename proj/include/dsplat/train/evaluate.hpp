// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation protocol: predict from the context views, render every
// supervision view, clip to [0, 1] and score against the clean frame.
//
#pragma once

#include "dsplat/net/model.hpp"
#include "dsplat/train/loss.hpp"
#include "dsplat/train/synthetic.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::train {

struct ViewMetrics {
    std::string sceneId;
    int frame = 0;
    bool seen = true;
    noise::NoiseKind kind = noise::NoiseKind::Gaussian;
    double param = 0;
    double psnr  = 0; ///< capped at kPsnrCap
    double ssim  = 0;
};

/// Mean over a group of views. `param` is empty when the group mixes levels.
struct MetricsAggregate {
    std::string split; ///< "seen", "novel" or "all"
    std::optional<noise::NoiseKind> kind;
    std::optional<double> param;
    std::size_t count = 0;
    double psnr = 0;
    double ssim = 0;
};

struct MetricsReport {
    std::string method;
    std::vector<ViewMetrics> views; ///< ordered by (scene id, frame)
    std::vector<MetricsAggregate> aggregates;

    /// Recomputes aggregates from `views`: per split overall, then per split
    /// and noise kind (with the level when all views of that kind share it).
    void aggregate();
    const MetricsAggregate &overall(const std::string &split) const;
};

nlohmann::ordered_json toJson(const MetricsReport &report);
/// Rows: method,noise_kind,param,split,psnr,ssim (aggregates only).
std::string toCsv(const MetricsReport &report);
std::string csvHeader();

struct EvalOptions {
    std::string method = "model";
    bool cleanInputs   = false;
    net::GateMode gate = net::GateMode::Computed;
};

/// Scenes are evaluated in parallel; results do not depend on the number of
/// workers.
MetricsReport evaluate(const net::Model &model, const std::vector<MultiViewSample> &data, const EvalOptions &options = {});

/// Every scene needs two context views whose size the encoder can halve
/// once per extra scale; throws std::invalid_argument naming the scene.
void checkCompatible(const net::NetConfig &config, const std::vector<MultiViewSample> &data);

struct GridPoint {
    noise::NoiseKind kind = noise::NoiseKind::Gaussian;
    double param = 0;
};

/// Grids of the standard-deviation and per-family ablations.
std::vector<GridPoint> gaussianGrid();
std::vector<GridPoint> familyGrid();
std::vector<GridPoint> parseGrid(const std::string &spec); ///< "gaussian:0.05,0.08;poisson:0.03"

struct AblationRow {
    std::string method;
    GridPoint point;
    std::string split;
    double psnr = 0;
    double ssim = 0;
};

struct AblationTable {
    std::vector<AblationRow> rows; ///< grid order, then seen / novel / all
    const AblationRow &at(const GridPoint &p, const std::string &split) const;
};

/// Re-forges the context views of every scene at each grid point (noise
/// streams derived from `seed`) and evaluates.
AblationTable ablate(const net::Model &model,
                     const std::vector<MultiViewSample> &data,
                     const std::vector<GridPoint> &grid,
                     std::uint64_t seed,
                     const EvalOptions &options = {});

nlohmann::ordered_json toJson(const AblationTable &table);
std::string toCsv(const AblationTable &table);

void writeText(const std::filesystem::path &path, const std::string &text);

} // namespace dsplat::inline DSPLAT_ABI::train
