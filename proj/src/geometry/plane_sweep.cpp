// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/geometry/plane_sweep.hpp"

#include <fmt/format.h>

#include <cmath>
#include <memory>

namespace dsplat::inline DSPLAT_ABI::mvs {

using ad::Index;
using ad::ShapeError;

SweepGrid
sweepGrid(const geom::Camera &src, const geom::Camera &ref, const geom::DepthPlanes &planes, int height, int width) {
    planes.validate();
    const geom::Camera s = (src.width == width && src.height == height) ? src : geom::rescaled(src, width, height);
    const geom::Camera r = (ref.width == width && ref.height == height) ? ref : geom::rescaled(ref, width, height);
    SweepGrid g;
    g.planes = planes.count();
    g.height = height;
    g.width  = width;
    const std::size_t P = static_cast<std::size_t>(height) * width;
    g.coords.resize(static_cast<std::size_t>(g.planes) * 2 * P);
    g.valid.resize(static_cast<std::size_t>(g.planes) * P);
    for (int d = 0; d < g.planes; ++d) {
        const Eigen::Matrix3d H = geom::planeHomography(s, r, planes.values[static_cast<std::size_t>(d)]);
        double *cx              = g.coords.data() + static_cast<std::size_t>(d) * 2 * P;
        double *cy              = cx + P;
        unsigned char *ok       = g.valid.data() + static_cast<std::size_t>(d) * P;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const std::size_t i      = static_cast<std::size_t>(y) * width + x;
                const Eigen::Vector3d ph = H * Eigen::Vector3d(x, y, 1);
                if (ph.z() <= 1e-12) {
                    cx[i] = -2;
                    cy[i] = -2;
                    ok[i] = 0;
                    continue;
                }
                cx[i] = ph.x() / ph.z();
                cy[i] = ph.y() / ph.z();
                ok[i] = (cx[i] >= 0 && cx[i] <= width - 1 && cy[i] >= 0 && cy[i] <= height - 1) ? 1 : 0;
            }
        }
    }
    return g;
}

namespace {

void
checkInputs(std::string_view op, const Tensor &ref, const std::vector<Tensor> &srcs, const std::vector<geom::Camera> &cams) {
    if (srcs.empty()) {
        throw ShapeError(op, "at least one source view is required");
    }
    if (srcs.size() != cams.size()) {
        throw ShapeError(op, fmt::format("{} source maps but {} source cameras", srcs.size(), cams.size()));
    }
    if (ref.ndim() != 3) {
        throw ShapeError(op, "reference features must be [C,H,W], got " + ad::toString(ref.shape()));
    }
    for (const Tensor &s : srcs) {
        if (s.shape() != ref.shape()) {
            throw ShapeError(op, ref.shape(), s.shape());
        }
    }
}

// Bilinear taps of one sample position; invalid positions get no taps.
struct Tap4 {
    Index idx[4];
    Real w[4];
};

Tap4
tapsAt(double x, double y, bool valid, Index H, Index W) {
    Tap4 t{{-1, -1, -1, -1}, {0, 0, 0, 0}};
    if (!valid) {
        return t;
    }
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const Index x0 = static_cast<Index>(fx0), y0 = static_cast<Index>(fy0);
    const Real ax = static_cast<Real>(x - fx0), ay = static_cast<Real>(y - fy0);
    const Index xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const Index ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const Real ws[4]  = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    for (int k = 0; k < 4; ++k) {
        if (xs[k] >= 0 && xs[k] < W && ys[k] >= 0 && ys[k] < H) {
            t.idx[k] = ys[k] * W + xs[k];
            t.w[k]   = ws[k];
        }
    }
    return t;
}

} // namespace

CostVolume
buildCostVolume(const Tensor &refFeats,
                const std::vector<Tensor> &srcFeats,
                const geom::Camera &refCam,
                const std::vector<geom::Camera> &srcCams,
                const geom::DepthPlanes &planes) {
    checkInputs("cost_volume", refFeats, srcFeats, srcCams);
    const Index C = refFeats.dim(0), H = refFeats.dim(1), W = refFeats.dim(2);
    const Index P = H * W;
    const int D   = planes.count();
    const std::size_t S = srcFeats.size();

    // taps[s][d][p]; weight[d][p] = 1 / (max(1, valid count) sqrt(C)).
    auto taps   = std::make_shared<std::vector<Tap4>>(S * static_cast<std::size_t>(D * P));
    auto weight = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(D * P), Real(0));
    {
        std::vector<int> count(static_cast<std::size_t>(D * P), 0);
        for (std::size_t s = 0; s < S; ++s) {
            const SweepGrid g = sweepGrid(srcCams[s], refCam, planes, static_cast<int>(H), static_cast<int>(W));
            for (Index d = 0; d < D; ++d) {
                for (Index p = 0; p < P; ++p) {
                    const auto gi  = static_cast<std::size_t>(d * P + p);
                    const bool ok  = g.valid[gi] != 0;
                    const double x = g.coords[static_cast<std::size_t>(d * 2 * P + p)];
                    const double y = g.coords[static_cast<std::size_t>(d * 2 * P + P + p)];
                    (*taps)[s * static_cast<std::size_t>(D * P) + gi] = tapsAt(x, y, ok, H, W);
                    count[gi] += ok ? 1 : 0;
                }
            }
        }
        const Real invSqrtC = Real(1) / std::sqrt(static_cast<Real>(C));
        for (std::size_t i = 0; i < count.size(); ++i) {
            (*weight)[i] = invSqrtC / static_cast<Real>(std::max(1, count[i]));
        }
    }

    const auto rv = refFeats.values();
    std::vector<std::span<const Real>> sv;
    for (const Tensor &t : srcFeats) {
        sv.push_back(t.values());
    }
    std::vector<Real> out(static_cast<std::size_t>(D * P), Real(0));
#pragma omp parallel for schedule(static)
    for (Index d = 0; d < D; ++d) {
        for (std::size_t s = 0; s < S; ++s) {
            const Tap4 *tp = taps->data() + s * static_cast<std::size_t>(D * P) + d * P;
            for (Index p = 0; p < P; ++p) {
                const Tap4 &t = tp[p];
                if (t.idx[0] < 0 && t.idx[1] < 0 && t.idx[2] < 0 && t.idx[3] < 0) {
                    continue;
                }
                Real acc = 0;
                for (Index c = 0; c < C; ++c) {
                    const Real *src = sv[s].data() + c * P;
                    Real sample     = 0;
                    for (int k = 0; k < 4; ++k) {
                        if (t.idx[k] >= 0) {
                            sample += t.w[k] * src[t.idx[k]];
                        }
                    }
                    acc += rv[static_cast<std::size_t>(c * P + p)] * sample;
                }
                out[static_cast<std::size_t>(d * P + p)] += acc;
            }
        }
        for (Index p = 0; p < P; ++p) {
            out[static_cast<std::size_t>(d * P + p)] *= (*weight)[static_cast<std::size_t>(d * P + p)];
        }
    }

    std::vector<const Tensor *> inputs{&refFeats};
    for (const Tensor &t : srcFeats) {
        inputs.push_back(&t);
    }
    std::vector<Tensor> srcCopy = srcFeats;
    Tensor refCopy              = refFeats;
    CostVolume vol;
    vol.logits = ad::makeResult(
        "cost_volume", inputs, {D, H, W}, std::move(out),
        [taps, weight, refCopy, srcCopy, C, P, D, S](std::span<const Real> g, const ad::GradSinks &sinks) {
            const auto rv = refCopy.values();
            // Reference features.
            if (sinks.wants(0)) {
                auto gr = sinks[0];
#pragma omp parallel for schedule(static)
                for (Index c = 0; c < C; ++c) {
                    for (std::size_t s = 0; s < S; ++s) {
                        const Real *src = srcCopy[s].values().data() + c * P;
                        for (Index d = 0; d < D; ++d) {
                            const Tap4 *tp = taps->data() + s * static_cast<std::size_t>(D * P) + d * P;
                            for (Index p = 0; p < P; ++p) {
                                const Tap4 &t = tp[p];
                                Real sample   = 0;
                                for (int k = 0; k < 4; ++k) {
                                    if (t.idx[k] >= 0) {
                                        sample += t.w[k] * src[t.idx[k]];
                                    }
                                }
                                const auto gi = static_cast<std::size_t>(d * P + p);
                                gr[static_cast<std::size_t>(c * P + p)] += g[gi] * (*weight)[gi] * sample;
                            }
                        }
                    }
                }
            }
            // Source features: scatter through the bilinear taps.
            for (std::size_t s = 0; s < S; ++s) {
                if (!sinks.wants(s + 1)) {
                    continue;
                }
                auto gs = sinks[s + 1];
#pragma omp parallel for schedule(static)
                for (Index c = 0; c < C; ++c) {
                    Real *dst = gs.data() + c * P;
                    for (Index d = 0; d < D; ++d) {
                        const Tap4 *tp = taps->data() + s * static_cast<std::size_t>(D * P) + d * P;
                        for (Index p = 0; p < P; ++p) {
                            const Tap4 &t  = tp[p];
                            const auto gi  = static_cast<std::size_t>(d * P + p);
                            const Real coef = g[gi] * (*weight)[gi] * rv[static_cast<std::size_t>(c * P + p)];
                            for (int k = 0; k < 4; ++k) {
                                if (t.idx[k] >= 0) {
                                    dst[t.idx[k]] += t.w[k] * coef;
                                }
                            }
                        }
                    }
                }
            }
        });
    return vol;
}

CostVolume
buildCostVolumeComposite(const Tensor &refFeats,
                         const std::vector<Tensor> &srcFeats,
                         const geom::Camera &refCam,
                         const std::vector<geom::Camera> &srcCams,
                         const geom::DepthPlanes &planes) {
    checkInputs("cost_volume_composite", refFeats, srcFeats, srcCams);
    const Index C = refFeats.dim(0), H = refFeats.dim(1), W = refFeats.dim(2);
    const Index P = H * W;
    const int D   = planes.count();

    std::vector<SweepGrid> grids;
    for (std::size_t s = 0; s < srcFeats.size(); ++s) {
        grids.push_back(sweepGrid(srcCams[s], refCam, planes, static_cast<int>(H), static_cast<int>(W)));
    }
    std::vector<Tensor> slices;
    for (int d = 0; d < D; ++d) {
        std::vector<Real> count(static_cast<std::size_t>(P), Real(0));
        Tensor acc;
        for (std::size_t s = 0; s < srcFeats.size(); ++s) {
            const SweepGrid &g = grids[s];
            std::vector<Real> coords(static_cast<std::size_t>(2 * P));
            std::vector<Real> mask(static_cast<std::size_t>(P));
            for (Index i = 0; i < 2 * P; ++i) {
                coords[static_cast<std::size_t>(i)] = static_cast<Real>(g.coords[static_cast<std::size_t>(d * 2 * P + i)]);
            }
            for (Index p = 0; p < P; ++p) {
                mask[static_cast<std::size_t>(p)] = g.valid[static_cast<std::size_t>(d * P + p)] ? Real(1) : Real(0);
                count[static_cast<std::size_t>(p)] += mask[static_cast<std::size_t>(p)];
            }
            const Tensor warped = ad::bilinearSample(srcFeats[s], Tensor({2, H, W}, std::move(coords)));
            const Tensor dot    = ad::sum(ad::mul(refFeats, warped), 0);
            const Tensor term   = ad::mul(dot, Tensor({H, W}, std::move(mask)));
            acc                 = acc.defined() ? ad::add(acc, term) : term;
        }
        for (Real &c : count) {
            c = Real(1) / (std::max(c, Real(1)) * std::sqrt(static_cast<Real>(C)));
        }
        slices.push_back(ad::reshape(ad::mul(acc, Tensor({H, W}, std::move(count))), {1, H, W}));
    }
    return {ad::concat(slices, 0)};
}

DisparityEstimate
disparityFromVolume(const Tensor &logits, const geom::DepthPlanes &planes) {
    if (logits.ndim() != 3 || logits.dim(0) != planes.count()) {
        throw ShapeError("disparity_from_volume",
                         fmt::format("logits {} do not match {} planes", ad::toString(logits.shape()), planes.count()));
    }
    const Index D = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
    DisparityEstimate est;
    est.pdf = ad::softmax(logits, 0);
    std::vector<Real> disp;
    for (const double d : planes.disparities()) {
        disp.push_back(static_cast<Real>(d));
    }
    const Tensor row = Tensor({1, D}, std::move(disp));
    est.disparity    = ad::reshape(ad::matmul(row, ad::reshape(est.pdf, {D, H * W})), {H, W});
    return est;
}

} // namespace dsplat::inline DSPLAT_ABI::mvs
