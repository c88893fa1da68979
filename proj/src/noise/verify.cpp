// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/noise/verify.hpp"

#include "dsplat/noise/forge.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace dsplat::noise {

namespace {

constexpr double kInvSqrt2   = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double
normalCdf(double x) {
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

double
normalPdf(double x) {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

struct Moments {
    double m1 = 0; ///< E[r]
    double m2 = 0; ///< E[r^2]
};

// r = clamp(N(0, s^2), -I, 1 - I)
Moments
clippedNormal(double I, double s) {
    if (s <= 0) {
        return {};
    }
    const double a = -I, b = 1 - I;
    const double al = a / s, be = b / s;
    const double Pa = normalCdf(al), Qb = 1 - normalCdf(be);
    const double pa = normalPdf(al), pb = normalPdf(be);
    Moments m;
    m.m1 = a * Pa + b * Qb + s * (pa - pb);
    m.m2 = a * a * Pa + b * b * Qb + s * s * ((normalCdf(be) - Pa) + al * pa - be * pb);
    return m;
}

// Distribution of the 8-bit level of clip(I + N(0, s^2)).
Moments
quantizedNormal(double I, double s) {
    Moments m;
    if (s <= 0) {
        const double r = std::round(std::clamp(I, 0.0, 1.0) * 255) / 255 - I;
        return {r, r * r};
    }
    double prev = 0; // P(I + N < lower edge of level k)
    for (int k = 0; k < 256; ++k) {
        const double upper = k == 255 ? 1.0 : normalCdf(((k + 0.5) / 255 - I) / s);
        const double p     = upper - prev;
        prev               = upper;
        const double r     = k / 255.0 - I;
        m.m1 += p * r;
        m.m2 += p * r * r;
    }
    return m;
}

// r = q(min(1, s*K)) - I with K ~ Poisson(I/s); q is identity or 8-bit rounding.
Moments
poissonMoments(double I, double s, bool quantized) {
    if (s <= 0 || I <= 0) {
        return {};
    }
    const double lambda = I / s;
    const double logLam = std::log(lambda);
    Moments m;
    double mass = 0;
    for (std::int64_t k = 0;; ++k) {
        const double v = s * static_cast<double>(k);
        if (v >= 1) {
            break;
        }
        const double p = std::exp(-lambda + static_cast<double>(k) * logLam - std::lgamma(static_cast<double>(k) + 1));
        const double y = quantized ? std::round(v * 255) / 255 : v;
        m.m1 += p * (y - I);
        m.m2 += p * (y - I) * (y - I);
        mass += p;
    }
    const double tail = std::max(0.0, 1 - mass);
    m.m1 += tail * (1 - I);
    m.m2 += tail * (1 - I) * (1 - I);
    return m;
}

Moments
expectedMoments(double I, const NoiseConfig &cfg, bool quantized) {
    switch (cfg.kind) {
    case NoiseKind::Gaussian: return quantized ? quantizedNormal(I, cfg.param) : clippedNormal(I, cfg.param);
    case NoiseKind::Speckle:
        return quantized ? quantizedNormal(I, I * cfg.param) : clippedNormal(I, I * cfg.param);
    case NoiseKind::Poisson: return poissonMoments(I, cfg.param, quantized);
    case NoiseKind::SaltPepper: break;
    }
    return {};
}

bool
onByteGrid(const std::vector<io::Image> &images) {
    for (const auto &img : images) {
        for (const float v : img.data) {
            const double x = static_cast<double>(v) * 255;
            if (std::abs(x - std::round(x)) > 1e-3) {
                return false;
            }
        }
    }
    return true;
}

bool
isExtreme(const io::Image &img, std::size_t p, float value) {
    return img.data[3 * p] == value && img.data[3 * p + 1] == value && img.data[3 * p + 2] == value;
}

} // namespace

NoiseStatsReport
verifyNoiseStats(const std::vector<io::Image> &clean,
                 const std::vector<io::Image> &noisy,
                 const SceneNoiseRecord &record,
                 const VerifyOptions &options) {
    if (clean.size() != noisy.size()) {
        throw std::invalid_argument(
            fmt::format("verify: {} clean views vs {} noisy views", clean.size(), noisy.size()));
    }
    for (std::size_t v = 0; v < clean.size(); ++v) {
        if (clean[v].width != noisy[v].width || clean[v].height != noisy[v].height) {
            throw std::invalid_argument(fmt::format("verify: view {} size mismatch", v));
        }
    }
    record.config().validate();

    NoiseStatsReport rep;
    rep.sceneId   = record.sceneId;
    rep.kind      = record.kind;
    rep.param     = record.param;
    rep.quantized = onByteGrid(clean) && onByteGrid(noisy);
    const double k = options.standardErrors;

    if (record.kind == NoiseKind::SaltPepper) {
        std::size_t eligible = 0, hit = 0;
        for (std::size_t v = 0; v < clean.size(); ++v) {
            for (std::size_t p = 0; p < clean[v].pixelCount(); ++p) {
                if (isExtreme(clean[v], p, 0.f) || isExtreme(clean[v], p, 1.f)) {
                    continue;
                }
                ++eligible;
                hit += (isExtreme(noisy[v], p, 0.f) || isExtreme(noisy[v], p, 1.f)) ? 1 : 0;
            }
        }
        rep.samples           = eligible;
        const double alpha    = record.param;
        rep.measuredFraction  = eligible ? static_cast<double>(hit) / static_cast<double>(eligible) : 0;
        rep.expectedFraction  = alpha;
        const double se       = eligible ? std::sqrt(alpha * (1 - alpha) / static_cast<double>(eligible)) : 0;
        rep.fractionTolerance = std::max(options.fractionRel * alpha, k * se);
        rep.pass = std::abs(rep.measuredFraction - rep.expectedFraction) <= rep.fractionTolerance;
        rep.message = fmt::format("extreme-pixel fraction {:.5f} vs expected {:.5f} (tol {:.5f})",
                                  rep.measuredFraction, rep.expectedFraction, rep.fractionTolerance);
        return rep;
    }

    // Expected moments, grouped by distinct clean value.
    std::map<float, std::size_t> histogram;
    double s1 = 0, s2 = 0;
    std::size_t n = 0;
    for (std::size_t v = 0; v < clean.size(); ++v) {
        for (std::size_t i = 0; i < clean[v].data.size(); ++i) {
            ++histogram[clean[v].data[i]];
            const double r = static_cast<double>(noisy[v].data[i]) - static_cast<double>(clean[v].data[i]);
            s1 += r;
            s2 += r * r;
            ++n;
        }
    }
    rep.samples = n;
    if (n == 0) {
        rep.pass    = true;
        rep.message = "no samples";
        return rep;
    }
    const double dn = static_cast<double>(n);
    rep.measuredMean = s1 / dn;
    rep.measuredVar  = s2 / dn - rep.measuredMean * rep.measuredMean;
    double m4        = 0;
    for (std::size_t v = 0; v < clean.size(); ++v) {
        for (std::size_t i = 0; i < clean[v].data.size(); ++i) {
            const double d = static_cast<double>(noisy[v].data[i]) - static_cast<double>(clean[v].data[i]) - rep.measuredMean;
            m4 += d * d * d * d;
        }
    }
    m4 /= dn;

    double e1 = 0, e2 = 0;
    for (const auto &[value, count] : histogram) {
        const Moments m = expectedMoments(value, record.config(), rep.quantized);
        e1 += m.m1 * static_cast<double>(count);
        e2 += m.m2 * static_cast<double>(count);
    }
    rep.expectedMean = e1 / dn;
    rep.expectedVar  = e2 / dn - rep.expectedMean * rep.expectedMean;

    const double rel      = record.kind == NoiseKind::Gaussian ? options.gaussianVarRel : options.otherVarRel;
    const double seMean   = std::sqrt(std::max(rep.measuredVar, 0.0) / dn);
    const double seVar    = std::sqrt(std::max(m4 - rep.measuredVar * rep.measuredVar, 0.0) / dn);
    rep.meanTolerance     = std::max(options.meanAbsTolerance, k * seMean);
    rep.varTolerance      = std::max(rel * rep.expectedVar, k * seVar);
    const bool meanOk     = std::abs(rep.measuredMean - rep.expectedMean) <= rep.meanTolerance;
    const bool varOk      = std::abs(rep.measuredVar - rep.expectedVar) <= rep.varTolerance;
    rep.pass              = meanOk && varOk;
    rep.message           = fmt::format("mean {:.6f} vs {:.6f} (tol {:.6f}); var {:.6g} vs {:.6g} (tol {:.3g})",
                                        rep.measuredMean, rep.expectedMean, rep.meanTolerance,
                                        rep.measuredVar, rep.expectedVar, rep.varTolerance);
    return rep;
}

nlohmann::ordered_json
toJson(const NoiseStatsReport &r) {
    nlohmann::ordered_json j;
    j["scene_id"]  = r.sceneId;
    j["kind"]      = toString(r.kind);
    j["param"]     = r.param;
    j["pass"]      = r.pass;
    j["quantized"] = r.quantized;
    j["samples"]   = r.samples;
    if (r.kind == NoiseKind::SaltPepper) {
        j["measured_fraction"]  = r.measuredFraction;
        j["expected_fraction"]  = r.expectedFraction;
        j["fraction_tolerance"] = r.fractionTolerance;
    } else {
        j["measured_mean"]  = r.measuredMean;
        j["expected_mean"]  = r.expectedMean;
        j["mean_tolerance"] = r.meanTolerance;
        j["measured_var"]   = r.measuredVar;
        j["expected_var"]   = r.expectedVar;
        j["var_tolerance"]  = r.varTolerance;
    }
    j["message"] = r.message;
    return j;
}

std::vector<NoiseStatsReport>
verifyDataset(const std::filesystem::path &cleanRoot, const std::filesystem::path &noisyRoot, const VerifyOptions &options) {
    const DatasetManifest manifest = manifestFromJson(readJsonFile(noisyRoot / "manifest.json"));
    std::vector<NoiseStatsReport> reports(manifest.scenes.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < manifest.scenes.size(); ++i) {
        const SceneNoiseRecord &rec = manifest.scenes[i];
        try {
            reports[i] = verifyNoiseStats(loadFrames(cleanRoot / rec.sceneId), loadFrames(noisyRoot / rec.sceneId), rec, options);
        } catch (const std::exception &e) {
            reports[i].sceneId = rec.sceneId;
            reports[i].kind    = rec.kind;
            reports[i].param   = rec.param;
            reports[i].pass    = false;
            reports[i].message = e.what();
        }
    }
    return reports;
}

} // namespace dsplat::noise
