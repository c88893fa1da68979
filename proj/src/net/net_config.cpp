// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/net/net_config.hpp"

#include <fmt/format.h>

#include <set>
#include <stdexcept>

namespace dsplat::inline DSPLAT_ABI::net {

int
NetConfig::volumeChannels() const {
    int c = planes;
    for (const int e : encoderChannels) {
        c += e;
    }
    return c;
}

void
NetConfig::validate() const {
    auto positive = [](int v, const char *name) {
        if (v <= 0) {
            throw std::invalid_argument(fmt::format("net config: {} must be positive, got {}", name, v));
        }
    };
    if (encoderChannels.empty()) {
        throw std::invalid_argument("net config: encoder_channels must list at least one scale");
    }
    for (const int c : encoderChannels) {
        positive(c, "encoder_channels[]");
    }
    positive(matchChannels, "match_channels");
    positive(refineWidth, "refine_width");
    positive(geometryWidth, "geometry_width");
    positive(appearanceWidth, "appearance_width");
    positive(cbcWidth, "cbc_width");
    if (planes < 2) {
        throw std::invalid_argument(fmt::format("net config: planes must be >= 2, got {}", planes));
    }
    if (shDegree < 0 || shDegree > 3) {
        throw std::invalid_argument(fmt::format("net config: sh_degree must be in [0, 3], got {}", shDegree));
    }
    if (!(scaleMin > 0) || !(scaleMax > scaleMin)) {
        throw std::invalid_argument(fmt::format("net config: need 0 < scale_min < scale_max (got {}, {})", scaleMin, scaleMax));
    }
}

nlohmann::ordered_json
toJson(const NetConfig &c) {
    nlohmann::ordered_json j;
    j["encoder_channels"] = c.encoderChannels;
    j["match_channels"]   = c.matchChannels;
    j["planes"]           = c.planes;
    j["sh_degree"]        = c.shDegree;
    j["refine_width"]     = c.refineWidth;
    j["geometry_width"]   = c.geometryWidth;
    j["appearance_width"] = c.appearanceWidth;
    j["cbc_width"]        = c.cbcWidth;
    j["scale_min"]        = c.scaleMin;
    j["scale_max"]        = c.scaleMax;
    return j;
}

NetConfig
netConfigFromJson(const nlohmann::json &j) {
    static const std::set<std::string> known = {"encoder_channels", "match_channels", "planes",   "sh_degree",
                                                "refine_width",     "geometry_width", "appearance_width",
                                                "cbc_width",        "scale_min",      "scale_max"};
    for (const auto &[key, value] : j.items()) {
        if (!known.count(key)) {
            throw std::invalid_argument(fmt::format("net config: unknown key '{}'", key));
        }
    }
    NetConfig c;
    c.encoderChannels = j.value("encoder_channels", c.encoderChannels);
    c.matchChannels   = j.value("match_channels", c.matchChannels);
    c.planes          = j.value("planes", c.planes);
    c.shDegree        = j.value("sh_degree", c.shDegree);
    c.refineWidth     = j.value("refine_width", c.refineWidth);
    c.geometryWidth   = j.value("geometry_width", c.geometryWidth);
    c.appearanceWidth = j.value("appearance_width", c.appearanceWidth);
    c.cbcWidth        = j.value("cbc_width", c.cbcWidth);
    c.scaleMin        = j.value("scale_min", c.scaleMin);
    c.scaleMax        = j.value("scale_max", c.scaleMax);
    c.validate();
    return c;
}

std::string
describeDifference(const NetConfig &expected, const NetConfig &actual) {
    const auto a = toJson(expected);
    const auto b = toJson(actual);
    std::string out;
    for (const auto &[key, value] : a.items()) {
        if (b.at(key) != value) {
            out += fmt::format("{}{}: expected {} but found {}", out.empty() ? "" : "; ", key, value.dump(), b.at(key).dump());
        }
    }
    return out;
}

} // namespace dsplat::inline DSPLAT_ABI::net
