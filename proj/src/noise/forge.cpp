// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/noise/forge.hpp"

#include "dsplat/geometry/camera.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

namespace dsplat::noise {

namespace fs = std::filesystem;

std::vector<io::Image>
degradeViews(const std::vector<io::Image> &views, const SceneNoiseRecord &record) {
    std::vector<io::Image> out;
    out.reserve(views.size());
    for (std::size_t v = 0; v < views.size(); ++v) {
        Rng rng(viewSeed(record.sceneSeed, static_cast<int>(v)));
        out.push_back(applyNoise(views[v], record.config(), rng));
    }
    return out;
}

std::vector<fs::path>
listFrames(const fs::path &sceneDir) {
    const fs::path dir = sceneDir / "images";
    if (!fs::is_directory(dir)) {
        throw io::ImageError(fmt::format("{}: missing images directory", dir.string()));
    }
    std::vector<fs::path> frames;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            frames.push_back(entry.path());
        }
    }
    std::sort(frames.begin(), frames.end());
    return frames;
}

std::vector<io::Image>
loadFrames(const fs::path &sceneDir) {
    std::vector<io::Image> images;
    for (const fs::path &p : listFrames(sceneDir)) {
        images.push_back(io::readPng(p));
    }
    return images;
}

std::vector<std::string>
listScenes(const fs::path &root) {
    std::vector<std::string> scenes;
    for (const auto &entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            scenes.push_back(entry.path().filename().string());
        }
    }
    std::sort(scenes.begin(), scenes.end());
    return scenes;
}

void
writeJsonFile(const fs::path &path, const nlohmann::ordered_json &j) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    }
    out << j.dump(2) << '\n';
}

nlohmann::json
readJsonFile(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(fmt::format("{}: cannot open", path.string()));
    }
    return nlohmann::json::parse(in);
}

namespace {

void
forgeScene(const fs::path &src, const fs::path &dst, const SceneNoiseRecord &record) {
    if (!fs::is_regular_file(src / "cameras.txt")) {
        throw std::runtime_error("missing cameras.txt");
    }
    const auto frames = listFrames(src);
    if (frames.empty()) {
        throw std::runtime_error("no frames");
    }
    std::vector<io::Image> clean;
    for (const fs::path &p : frames) {
        clean.push_back(io::readPng(p));
    }
    // Camera file must parse; it is copied byte-for-byte.
    geom::readCameraFile(src / "cameras.txt", clean.front().width, clean.front().height);

    const std::vector<io::Image> noisy = degradeViews(clean, record);
    fs::create_directories(dst / "images");
    for (std::size_t v = 0; v < frames.size(); ++v) {
        io::writePng(dst / "images" / frames[v].filename(), noisy[v]);
    }
    for (const auto &entry : fs::directory_iterator(src)) {
        if (entry.is_regular_file()) {
            fs::copy_file(entry.path(), dst / entry.path().filename(), fs::copy_options::overwrite_existing);
        }
    }
}

} // namespace

ForgeReport
forgeDataset(const fs::path &cleanRoot, const fs::path &outRoot, const NoiseRanges &ranges, std::uint64_t globalSeed) {
    ranges.validate();
    if (!fs::is_directory(cleanRoot)) {
        throw std::invalid_argument(fmt::format("{}: not a directory", cleanRoot.string()));
    }
    fs::create_directories(outRoot);
    if (fs::equivalent(cleanRoot, outRoot)) {
        throw std::invalid_argument("forge: output root must differ from the clean root");
    }

    const std::vector<std::string> scenes = listScenes(cleanRoot);
    std::vector<SceneNoiseRecord> records(scenes.size());
    std::vector<std::string> failures(scenes.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        records[i] = sampleSceneNoise(scenes[i], globalSeed, ranges);
        try {
            forgeScene(cleanRoot / scenes[i], outRoot / scenes[i], records[i]);
        } catch (const std::exception &e) {
            failures[i] = e.what();
            std::error_code ec;
            fs::remove_all(outRoot / scenes[i], ec);
        }
    }

    ForgeReport report;
    report.manifest.globalSeed = globalSeed;
    report.manifest.ranges     = ranges;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (failures[i].empty()) {
            report.manifest.scenes.push_back(records[i]);
        } else {
            spdlog::warn("forge: scene '{}' skipped: {}", scenes[i], failures[i]);
            report.errors.push_back({scenes[i], failures[i]});
        }
    }

    writeJsonFile(outRoot / "manifest.json", toJson(report.manifest));
    nlohmann::ordered_json rep;
    rep["global_seed"]   = globalSeed;
    rep["scenes_total"]  = scenes.size();
    rep["scenes_forged"] = report.manifest.scenes.size();
    rep["errors"]        = nlohmann::ordered_json::array();
    for (const auto &e : report.errors) {
        rep["errors"].push_back({{"scene_id", e.sceneId}, {"message", e.message}});
    }
    writeJsonFile(outRoot / "forge_report.json", rep);
    return report;
}

} // namespace dsplat::noise
