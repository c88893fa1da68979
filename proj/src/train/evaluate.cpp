// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/train/evaluate.hpp"

#include "dsplat/autodiff/tape.hpp"
#include "dsplat/train/trainer.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>
#include <sstream>

namespace dsplat::inline DSPLAT_ABI::train {

namespace {

const char *
splitName(bool seen) {
    return seen ? "seen" : "novel";
}

std::string
kindName(const std::optional<noise::NoiseKind> &k) {
    return k ? std::string(noise::toString(*k)) : std::string("all");
}

std::string
paramName(const std::optional<double> &p) {
    return p ? fmt::format("{:g}", *p) : "mixed";
}

MetricsAggregate
meanOf(const std::vector<const ViewMetrics *> &views, std::string split) {
    MetricsAggregate a;
    a.split = std::move(split);
    a.count = views.size();
    for (const auto *v : views) {
        a.psnr += v->psnr;
        a.ssim += v->ssim;
    }
    if (a.count) {
        a.psnr /= static_cast<double>(a.count);
        a.ssim /= static_cast<double>(a.count);
    }
    return a;
}

} // namespace

void
MetricsReport::aggregate() {
    aggregates.clear();
    for (const std::string split : {"seen", "novel", "all"}) {
        std::vector<const ViewMetrics *> chosen;
        std::map<noise::NoiseKind, std::vector<const ViewMetrics *>> byKind;
        for (const auto &v : views) {
            if (split == "all" || split == splitName(v.seen)) {
                chosen.push_back(&v);
                byKind[v.kind].push_back(&v);
            }
        }
        aggregates.push_back(meanOf(chosen, split));
        for (const auto &[kind, group] : byKind) {
            MetricsAggregate a = meanOf(group, split);
            a.kind             = kind;
            bool shared        = true;
            for (const auto *v : group) {
                shared = shared && v->param == group.front()->param;
            }
            if (shared) {
                a.param = group.front()->param;
            }
            aggregates.push_back(a);
        }
    }
}

const MetricsAggregate &
MetricsReport::overall(const std::string &split) const {
    for (const auto &a : aggregates) {
        if (a.split == split && !a.kind) {
            return a;
        }
    }
    throw std::out_of_range(fmt::format("report has no '{}' aggregate", split));
}

nlohmann::ordered_json
toJson(const MetricsReport &r) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["psnr_cap_db"] = kPsnrCap;
    j["aggregates"] = nlohmann::ordered_json::array();
    for (const auto &a : r.aggregates) {
        nlohmann::ordered_json e;
        e["split"] = a.split;
        e["noise_kind"] = kindName(a.kind);
        e["param"] = a.param ? nlohmann::ordered_json(*a.param) : nlohmann::ordered_json(nullptr);
        e["count"] = a.count;
        e["psnr"]  = a.psnr;
        e["ssim"]  = a.ssim;
        j["aggregates"].push_back(e);
    }
    j["views"] = nlohmann::ordered_json::array();
    for (const auto &v : r.views) {
        j["views"].push_back({{"scene_id", v.sceneId},
                              {"frame", v.frame},
                              {"split", splitName(v.seen)},
                              {"noise_kind", noise::toString(v.kind)},
                              {"param", v.param},
                              {"psnr", v.psnr},
                              {"ssim", v.ssim}});
    }
    return j;
}

std::string
csvHeader() {
    return "method,noise_kind,param,split,psnr,ssim\n";
}

std::string
toCsv(const MetricsReport &r) {
    std::string out = csvHeader();
    for (const auto &a : r.aggregates) {
        out += fmt::format("{},{},{},{},{:.4f},{:.6f}\n", r.method, kindName(a.kind), paramName(a.param), a.split, a.psnr, a.ssim);
    }
    return out;
}

void
checkCompatible(const net::NetConfig &config, const std::vector<MultiViewSample> &data) {
    for (const auto &s : data) {
        for (const int f : s.context) {
            const auto &img = s.noisy[static_cast<std::size_t>(f)];
            const int multiple = 1 << (config.encoderChannels.size() - 1);
            if (img.width % multiple || img.height % multiple) {
                throw std::invalid_argument(fmt::format("scene '{}': {}x{} frames are not divisible by {} as the network requires",
                                                        s.sceneId, img.width, img.height, multiple));
            }
        }
        if (s.context.size() < 2) {
            throw std::invalid_argument(fmt::format("scene '{}': needs two context views", s.sceneId));
        }
    }
}

MetricsReport
evaluate(const net::Model &model, const std::vector<MultiViewSample> &data, const EvalOptions &options) {
    checkCompatible(model.config(), data);
    std::vector<std::vector<ViewMetrics>> perScene(data.size());
    std::vector<std::string> errors(data.size());
    const auto n = static_cast<long>(data.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        const MultiViewSample &s = data[static_cast<std::size_t>(i)];
        try {
            ad::TapeScope noTape(nullptr);
            const net::Prediction pred =
                model.predict(contextInputs(s, options.cleanInputs), s.planes(model.config().planes), {options.gate});
            const splat::GaussianScene scene = pred.scene.values();
            for (const auto &t : s.targets) {
                const auto &cam   = s.cameras[static_cast<std::size_t>(t.frame)];
                const auto result = splat::render(scene, cam, splat::RenderSettings{});
                const std::vector<Real> image = splat::fromImage(splat::toImage(result.image, cam.width, cam.height));
                const std::vector<Real> gt    = splat::fromImage(s.clean[static_cast<std::size_t>(t.frame)]);
                ViewMetrics m;
                m.sceneId = s.sceneId;
                m.frame   = t.frame;
                m.seen    = t.seen;
                m.kind    = s.noise.kind;
                m.param   = options.cleanInputs ? 0.0 : s.noise.param;
                m.psnr    = cappedPsnr(psnr(image, gt));
                m.ssim    = ssimValue(image, gt, 3, cam.height, cam.width);
                perScene[static_cast<std::size_t>(i)].push_back(m);
            }
        } catch (const std::exception &e) {
            errors[static_cast<std::size_t>(i)] = fmt::format("scene '{}': {}", s.sceneId, e.what());
        }
    }
    for (const auto &e : errors) {
        if (!e.empty()) {
            throw std::runtime_error(e);
        }
    }
    MetricsReport report;
    report.method = options.method;
    for (auto &v : perScene) {
        report.views.insert(report.views.end(), v.begin(), v.end());
    }
    std::stable_sort(report.views.begin(), report.views.end(), [](const ViewMetrics &a, const ViewMetrics &b) {
        return std::tie(a.sceneId, a.frame) < std::tie(b.sceneId, b.frame);
    });
    report.aggregate();
    return report;
}

std::vector<GridPoint>
gaussianGrid() {
    return {{noise::NoiseKind::Gaussian, 0.05},
            {noise::NoiseKind::Gaussian, 0.08},
            {noise::NoiseKind::Gaussian, 0.12},
            {noise::NoiseKind::Gaussian, 0.15}};
}

std::vector<GridPoint>
familyGrid() {
    return {{noise::NoiseKind::Poisson, 0.03},    {noise::NoiseKind::Poisson, 0.04},
            {noise::NoiseKind::Speckle, 0.02},    {noise::NoiseKind::Speckle, 0.05},
            {noise::NoiseKind::SaltPepper, 0.01}, {noise::NoiseKind::SaltPepper, 0.03}};
}

std::vector<GridPoint>
parseGrid(const std::string &spec) {
    std::vector<GridPoint> grid;
    std::stringstream groups(spec);
    std::string group;
    while (std::getline(groups, group, ';')) {
        if (group.empty()) {
            continue;
        }
        const auto colon = group.find(':');
        if (colon == std::string::npos) {
            throw std::invalid_argument(fmt::format("grid entry '{}' must look like kind:p1,p2", group));
        }
        const noise::NoiseKind kind = noise::parseKind(group.substr(0, colon));
        std::stringstream params(group.substr(colon + 1));
        std::string p;
        while (std::getline(params, p, ',')) {
            std::size_t used = 0;
            double value     = 0;
            try {
                value = std::stod(p, &used);
            } catch (const std::exception &) {
                used = 0;
            }
            if (used == 0 || used != p.size()) {
                throw std::invalid_argument(fmt::format("grid entry '{}': '{}' is not a number", group, p));
            }
            noise::NoiseConfig{kind, value}.validate();
            grid.push_back({kind, value});
        }
    }
    if (grid.empty()) {
        throw std::invalid_argument("grid is empty");
    }
    return grid;
}

const AblationRow &
AblationTable::at(const GridPoint &p, const std::string &split) const {
    for (const auto &r : rows) {
        if (r.point.kind == p.kind && r.point.param == p.param && r.split == split) {
            return r;
        }
    }
    throw std::out_of_range(fmt::format("no ablation row for {}:{} ({})", noise::toString(p.kind), p.param, split));
}

AblationTable
ablate(const net::Model &model,
       const std::vector<MultiViewSample> &data,
       const std::vector<GridPoint> &grid,
       std::uint64_t seed,
       const EvalOptions &options) {
    if (grid.empty()) {
        throw std::invalid_argument("ablation grid is empty");
    }
    AblationTable table;
    for (const GridPoint &p : grid) {
        std::vector<MultiViewSample> forged;
        forged.reserve(data.size());
        for (const auto &s : data) {
            forged.push_back(withNoise(s, {p.kind, p.param}, seed));
        }
        EvalOptions opts = options;
        opts.cleanInputs = false;
        const MetricsReport r = evaluate(model, forged, opts);
        for (const std::string split : {"seen", "novel", "all"}) {
            const auto &a = r.overall(split);
            table.rows.push_back({options.method, p, split, a.psnr, a.ssim});
        }
    }
    return table;
}

nlohmann::ordered_json
toJson(const AblationTable &t) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto &r : t.rows) {
        j.push_back({{"method", r.method},
                     {"noise_kind", noise::toString(r.point.kind)},
                     {"param", r.point.param},
                     {"split", r.split},
                     {"psnr", r.psnr},
                     {"ssim", r.ssim},
                     {"one_minus_ssim", 1 - r.ssim}});
    }
    return j;
}

std::string
toCsv(const AblationTable &t) {
    std::string out = csvHeader();
    for (const auto &r : t.rows) {
        out += fmt::format("{},{},{:g},{},{:.4f},{:.6f}\n", r.method, noise::toString(r.point.kind), r.point.param, r.split, r.psnr, r.ssim);
    }
    return out;
}

void
writeText(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    }
    out << text;
}

} // namespace dsplat::inline DSPLAT_ABI::train
