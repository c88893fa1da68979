// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/train/loss.hpp"

#include "dsplat/autodiff/tape.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>
#include <memory>

namespace dsplat::inline DSPLAT_ABI::train {

using ad::Index;

void
LossWeights::validate() const {
    if (!(l1 >= 0) || !(ssim >= 0) || (l1 == 0 && ssim == 0)) {
        throw std::invalid_argument(fmt::format("loss weights must be >= 0 and not both zero (got l1={}, ssim={})", l1, ssim));
    }
}

nlohmann::ordered_json
toJson(const LossWeights &w) {
    return {{"l1", w.l1}, {"ssim", w.ssim}};
}

LossWeights
lossWeightsFromJson(const nlohmann::json &j) {
    LossWeights w;
    for (const auto &[key, value] : j.items()) {
        if (key != "l1" && key != "ssim") {
            throw std::invalid_argument(fmt::format("loss weights: unknown key '{}'", key));
        }
    }
    w.l1   = j.value("l1", w.l1);
    w.ssim = j.value("ssim", w.ssim);
    w.validate();
    return w;
}

namespace {

constexpr int kHalf = kSsimWindow / 2;

const std::array<double, kSsimWindow> &
window() {
    static const std::array<double, kSsimWindow> g = [] {
        std::array<double, kSsimWindow> k{};
        double s = 0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double x = i - kHalf;
            k[i]           = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
            s += k[i];
        }
        for (auto &v : k) {
            v /= s;
        }
        return k;
    }();
    return g;
}

int
reflectIndex(int i, int n) {
    if (n == 1) {
        return 0;
    }
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) {
        i += period;
    }
    return i < n ? i : period - i;
}

/// Geometry of the (possibly padded) plane and its valid windows.
struct Plan {
    int C = 0, H = 0, W = 0;
    int Hp = 0, Wp = 0, Ho = 0, Wo = 0;
    std::vector<int> rowSrc, colSrc;

    Plan(int c, int h, int w) : C(c), H(h), W(w) {
        Hp = std::max(h, kSsimWindow);
        Wp = std::max(w, kSsimWindow);
        Ho = Hp - kSsimWindow + 1;
        Wo = Wp - kSsimWindow + 1;
        for (int i = 0; i < Hp; ++i) {
            rowSrc.push_back(reflectIndex(i - (Hp - h) / 2, h));
        }
        for (int i = 0; i < Wp; ++i) {
            colSrc.push_back(reflectIndex(i - (Wp - w) / 2, w));
        }
    }

    std::size_t windows() const { return static_cast<std::size_t>(C) * Ho * Wo; }

    void gather(const Real *src, std::vector<double> &dst) const {
        dst.resize(static_cast<std::size_t>(Hp) * Wp);
        for (int y = 0; y < Hp; ++y) {
            for (int x = 0; x < Wp; ++x) {
                dst[static_cast<std::size_t>(y * Wp + x)] = src[rowSrc[static_cast<std::size_t>(y)] * W + colSrc[static_cast<std::size_t>(x)]];
            }
        }
    }

    void scatter(const std::vector<double> &src, Real *dst) const {
        for (int y = 0; y < Hp; ++y) {
            for (int x = 0; x < Wp; ++x) {
                dst[rowSrc[static_cast<std::size_t>(y)] * W + colSrc[static_cast<std::size_t>(x)]] +=
                    static_cast<Real>(src[static_cast<std::size_t>(y * Wp + x)]);
            }
        }
    }

    /// Valid separable Gaussian filter: [Hp, Wp] -> [Ho, Wo].
    void blur(const std::vector<double> &in, std::vector<double> &out) const {
        const auto &g = window();
        std::vector<double> tmp(static_cast<std::size_t>(Hp) * Wo);
        for (int y = 0; y < Hp; ++y) {
            for (int x = 0; x < Wo; ++x) {
                double s = 0;
                for (int k = 0; k < kSsimWindow; ++k) {
                    s += g[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(y * Wp + x + k)];
                }
                tmp[static_cast<std::size_t>(y * Wo + x)] = s;
            }
        }
        out.assign(static_cast<std::size_t>(Ho) * Wo, 0.0);
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x) {
                double s = 0;
                for (int k = 0; k < kSsimWindow; ++k) {
                    s += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>((y + k) * Wo + x)];
                }
                out[static_cast<std::size_t>(y * Wo + x)] = s;
            }
        }
    }

    /// Adjoint of blur: [Ho, Wo] -> [Hp, Wp].
    void blurAdjoint(const std::vector<double> &in, std::vector<double> &out) const {
        const auto &g = window();
        std::vector<double> tmp(static_cast<std::size_t>(Hp) * Wo, 0.0);
        for (int y = 0; y < Ho; ++y) {
            for (int k = 0; k < kSsimWindow; ++k) {
                for (int x = 0; x < Wo; ++x) {
                    tmp[static_cast<std::size_t>((y + k) * Wo + x)] += g[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(y * Wo + x)];
                }
            }
        }
        out.assign(static_cast<std::size_t>(Hp) * Wp, 0.0);
        for (int y = 0; y < Hp; ++y) {
            for (int x = 0; x < Wo; ++x) {
                const double v = tmp[static_cast<std::size_t>(y * Wo + x)];
                for (int k = 0; k < kSsimWindow; ++k) {
                    out[static_cast<std::size_t>(y * Wp + x + k)] += g[static_cast<std::size_t>(k)] * v;
                }
            }
        }
    }
};

struct Moments {
    std::vector<double> pa, pb, ma, mb, eaa, ebb, eab;
};

Moments
moments(const Plan &plan, const Real *a, const Real *b) {
    Moments m;
    plan.gather(a, m.pa);
    plan.gather(b, m.pb);
    std::vector<double> aa(m.pa.size()), bb(m.pa.size()), ab(m.pa.size());
    for (std::size_t i = 0; i < m.pa.size(); ++i) {
        aa[i] = m.pa[i] * m.pa[i];
        bb[i] = m.pb[i] * m.pb[i];
        ab[i] = m.pa[i] * m.pb[i];
    }
    plan.blur(m.pa, m.ma);
    plan.blur(m.pb, m.mb);
    plan.blur(aa, m.eaa);
    plan.blur(bb, m.ebb);
    plan.blur(ab, m.eab);
    return m;
}

struct Terms {
    double s, a1, a2, b1, b2;
};

Terms
terms(const Moments &m, std::size_t i) {
    const double ua = m.ma[i], ub = m.mb[i];
    const double va = m.eaa[i] - ua * ua, vb = m.ebb[i] - ub * ub, cab = m.eab[i] - ua * ub;
    Terms t;
    t.a1 = 2 * ua * ub + kSsimC1;
    t.a2 = 2 * cab + kSsimC2;
    t.b1 = ua * ua + ub * ub + kSsimC1;
    t.b2 = va + vb + kSsimC2;
    t.s  = (t.a1 * t.a2) / (t.b1 * t.b2);
    return t;
}

Plan
planFor(const ad::Shape &shape) {
    if (shape.size() == 2) {
        return Plan(1, static_cast<int>(shape[0]), static_cast<int>(shape[1]));
    }
    if (shape.size() == 3) {
        return Plan(static_cast<int>(shape[0]), static_cast<int>(shape[1]), static_cast<int>(shape[2]));
    }
    throw ad::ShapeError("ssim", "expected [C,H,W] or [H,W], got " + ad::toString(shape));
}

double
ssimSum(const Plan &plan, const Real *a, const Real *b) {
    double total      = 0;
    const auto stride = static_cast<std::size_t>(plan.H) * plan.W;
    for (int c = 0; c < plan.C; ++c) {
        const Moments m = moments(plan, a + c * stride, b + c * stride);
        for (std::size_t i = 0; i < m.ma.size(); ++i) {
            total += terms(m, i).s;
        }
    }
    return total;
}

} // namespace

double
ssimValue(std::span<const Real> a, std::span<const Real> b, int channels, int height, int width) {
    const Plan plan(channels, height, width);
    const auto n = static_cast<std::size_t>(channels) * height * width;
    if (a.size() != n || b.size() != n) {
        throw ad::ShapeError("ssim", fmt::format("buffers of {} and {} values for {}x{}x{}", a.size(), b.size(), channels, height, width));
    }
    return ssimSum(plan, a.data(), b.data()) / static_cast<double>(plan.windows());
}

Tensor
ssim(const Tensor &a, const Tensor &b) {
    if (a.shape() != b.shape()) {
        throw ad::ShapeError("ssim", a.shape(), b.shape());
    }
    const Plan plan    = planFor(a.shape());
    const double value = ssimSum(plan, a.values().data(), b.values().data()) / static_cast<double>(plan.windows());
    auto av            = std::make_shared<std::vector<Real>>(a.values().begin(), a.values().end());
    auto bv            = std::make_shared<std::vector<Real>>(b.values().begin(), b.values().end());
    return ad::makeResult(
        "ssim", {&a, &b}, {}, {static_cast<Real>(value)}, [plan, av, bv](std::span<const Real> g, const ad::GradSinks &sinks) {
            const double scale = static_cast<double>(g[0]) / static_cast<double>(plan.windows());
            const auto stride  = static_cast<std::size_t>(plan.H) * plan.W;
            const std::size_t nw = static_cast<std::size_t>(plan.Ho) * plan.Wo;
            std::vector<double> gua(nw), gub(nw), gaa(nw), gbb(nw), gab(nw);
            std::vector<double> tua, tub, taa, tbb, tab, outA, outB;
            for (int c = 0; c < plan.C; ++c) {
                const Moments m = moments(plan, av->data() + c * stride, bv->data() + c * stride);
                for (std::size_t i = 0; i < nw; ++i) {
                    const Terms t = terms(m, i);
                    const double ua = m.ma[i], ub = m.mb[i];
                    // S as a function of (mu_a, mu_b, E[aa], E[bb], E[ab]).
                    gua[i] = scale * t.s * (2 * ub / t.a1 - 2 * ub / t.a2 - 2 * ua / t.b1 + 2 * ua / t.b2);
                    gub[i] = scale * t.s * (2 * ua / t.a1 - 2 * ua / t.a2 - 2 * ub / t.b1 + 2 * ub / t.b2);
                    gaa[i] = -scale * t.s / t.b2;
                    gbb[i] = gaa[i];
                    gab[i] = scale * 2 * t.s / t.a2;
                }
                plan.blurAdjoint(gua, tua);
                plan.blurAdjoint(gub, tub);
                plan.blurAdjoint(gaa, taa);
                plan.blurAdjoint(gbb, tbb);
                plan.blurAdjoint(gab, tab);
                outA.assign(tua.size(), 0.0);
                outB.assign(tua.size(), 0.0);
                for (std::size_t p = 0; p < tua.size(); ++p) {
                    outA[p] = tua[p] + 2 * m.pa[p] * taa[p] + m.pb[p] * tab[p];
                    outB[p] = tub[p] + 2 * m.pb[p] * tbb[p] + m.pa[p] * tab[p];
                }
                if (sinks.wants(0)) {
                    plan.scatter(outA, sinks[0].data() + c * stride);
                }
                if (sinks.wants(1)) {
                    plan.scatter(outB, sinks[1].data() + c * stride);
                }
            }
        });
}

double
psnr(std::span<const Real> a, std::span<const Real> b) {
    if (a.size() != b.size() || a.empty()) {
        throw ad::ShapeError("psnr", fmt::format("buffers of {} and {} values", a.size(), b.size()));
    }
    double mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    return mse == 0 ? kPsnrIdentical : 10.0 * std::log10(1.0 / mse);
}

LossTerms
reconstructionLoss(const Tensor &pred, const Tensor &gt, const LossWeights &weights) {
    if (pred.shape() != gt.shape()) {
        throw ad::ShapeError("reconstruction_loss", pred.shape(), gt.shape());
    }
    weights.validate();
    const Tensor l1 = ad::mean(ad::abs(ad::sub(pred, gt)));
    const Tensor s  = ssim(pred, gt);
    LossTerms out;
    out.l1    = l1.item();
    out.ssim  = s.item();
    out.total = ad::add(ad::mulScalar(l1, static_cast<Real>(weights.l1)),
                        ad::mulScalar(ad::addScalar(ad::neg(s), Real(1)), static_cast<Real>(weights.ssim)));
    return out;
}

} // namespace dsplat::inline DSPLAT_ABI::train
