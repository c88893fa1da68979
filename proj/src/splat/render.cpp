// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/splat/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dsplat::inline DSPLAT_ABI::splat {

namespace {

struct Prepared {
    std::vector<ProjectedGaussian> proj;
    std::vector<Vec3> color;
    std::vector<Vec3> dir;  ///< unit direction camera center -> primitive
    std::vector<Real> dist; ///< |primitive - camera center|
    int tilesX = 0, tilesY = 0;
    std::vector<std::vector<std::uint32_t>> tiles; ///< depth-sorted primitive ids per tile
    std::size_t visible = 0;
};

Prepared
prepare(const GaussianScene &scene, const geom::Camera &cam, const RenderSettings &settings) {
    settings.validate();
    const std::size_t n = scene.size();
    const int K         = shCount(scene.shDegree);
    Prepared P;
    P.proj.resize(n);
    P.color.resize(n);
    P.dir.resize(n);
    P.dist.resize(n);
    const Vec3 origin = cam.center().cast<Real>();

#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
        const GaussianPrimitive g = scene.primitive(i);
        P.proj[i]                 = projectGaussian(g.center, covarianceWorld(g.quat, g.scale), cam, settings);
        if (!P.proj[i].visible) {
            continue;
        }
        const Vec3 v = g.center - origin;
        P.dist[i]    = v.norm();
        P.dir[i]     = v / P.dist[i];
        Real Y[16];
        shBasis(P.dir[i], scene.shDegree, Y);
        Vec3 c = g.base;
        for (int k = 0; k < K; ++k) {
            c += Y[k] * g.sh[static_cast<std::size_t>(k)];
        }
        P.color[i] = c;
    }

    std::vector<std::uint32_t> order;
    for (std::size_t i = 0; i < n; ++i) {
        if (P.proj[i].visible) {
            order.push_back(static_cast<std::uint32_t>(i));
        }
    }
    P.visible = order.size();
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return P.proj[a].depth < P.proj[b].depth || (P.proj[a].depth == P.proj[b].depth && a < b);
    });

    const int ts = settings.tileSize;
    P.tilesX     = (cam.width + ts - 1) / ts;
    P.tilesY     = (cam.height + ts - 1) / ts;
    P.tiles.assign(static_cast<std::size_t>(P.tilesX * P.tilesY), {});
    for (const std::uint32_t i : order) {
        const ProjectedGaussian &g = P.proj[i];
        for (int ty = g.ymin / ts; ty <= g.ymax / ts; ++ty) {
            for (int tx = g.xmin / ts; tx <= g.xmax / ts; ++tx) {
                P.tiles[static_cast<std::size_t>(ty * P.tilesX + tx)].push_back(i);
            }
        }
    }
    return P;
}

// Evaluates the footprint of g at pixel (x, y). Returns false when skipped.
struct Sample {
    Real dx, dy, G, w;
    bool clipped;
};

inline bool
evalSample(const ProjectedGaussian &g, Real alpha, int x, int y, const RenderSettings &s, Sample &out) {
    if (x < g.xmin || x > g.xmax || y < g.ymin || y > g.ymax) {
        return false;
    }
    out.dx           = static_cast<Real>(x) - g.mean2.x();
    out.dy           = static_cast<Real>(y) - g.mean2.y();
    const Real maha2 = g.conic[0] * out.dx * out.dx + 2 * g.conic[1] * out.dx * out.dy + g.conic[2] * out.dy * out.dy;
    if (!(maha2 <= s.cutoff * s.cutoff)) {
        return false;
    }
    out.G       = std::exp(Real(-0.5) * maha2);
    const Real w = alpha * out.G;
    out.clipped = w > s.maxWeight;
    out.w       = out.clipped ? s.maxWeight : w;
    return out.w >= s.minWeight;
}

} // namespace

RenderResult
render(const GaussianScene &scene, const geom::Camera &cam, const RenderSettings &settings) {
    scene.validate(false);
    const Prepared P = prepare(scene, cam, settings);
    const int W = cam.width, H = cam.height, ts = settings.tileSize;
    RenderResult out;
    out.width   = W;
    out.height  = H;
    out.visible = P.visible;
    out.image.assign(static_cast<std::size_t>(3 * W * H), 0);
    out.transmittance.assign(static_cast<std::size_t>(W * H), 0);
    const std::size_t plane = static_cast<std::size_t>(W * H);

#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < P.tilesX * P.tilesY; ++t) {
        const auto &list = P.tiles[static_cast<std::size_t>(t)];
        const int x0 = (t % P.tilesX) * ts, y0 = (t / P.tilesX) * ts;
        for (int y = y0; y < std::min(y0 + ts, H); ++y) {
            for (int x = x0; x < std::min(x0 + ts, W); ++x) {
                Real T = 1;
                Vec3 C = Vec3::Zero();
                Sample s{};
                for (const std::uint32_t i : list) {
                    if (!evalSample(P.proj[i], scene.opacities[i], x, y, settings, s)) {
                        continue;
                    }
                    C += P.color[i] * (s.w * T);
                    T *= 1 - s.w;
                }
                const std::size_t p = static_cast<std::size_t>(y * W + x);
                for (int c = 0; c < 3; ++c) {
                    out.image[c * plane + p] = C[c] + settings.background[static_cast<std::size_t>(c)] * T;
                }
                out.transmittance[p] = T;
            }
        }
    }
    return out;
}

GaussianScene
renderBackward(const GaussianScene &scene, const geom::Camera &cam, const RenderSettings &settings,
               std::span<const Real> gradImage) {
    scene.validate(false);
    const Prepared P = prepare(scene, cam, settings);
    const int W = cam.width, H = cam.height, ts = settings.tileSize;
    const std::size_t plane = static_cast<std::size_t>(W * H);
    const std::size_t n     = scene.size();
    if (gradImage.size() != 3 * plane) {
        throw std::invalid_argument("render_backward: gradient image has the wrong size");
    }

    // Screen-space partials per tile entry: color(3), alpha, mean2(2), conic(3).
    constexpr int kStride = 9;
    std::vector<std::vector<Real>> partials(P.tiles.size());

#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < P.tilesX * P.tilesY; ++t) {
        const auto &list = P.tiles[static_cast<std::size_t>(t)];
        auto &part       = partials[static_cast<std::size_t>(t)];
        part.assign(list.size() * kStride, 0);
        const int x0 = (t % P.tilesX) * ts, y0 = (t / P.tilesX) * ts;
        struct Hit {
            std::uint32_t slot;
            Sample s;
            Real T;
        };
        std::vector<Hit> hits;
        for (int y = y0; y < std::min(y0 + ts, H); ++y) {
            for (int x = x0; x < std::min(x0 + ts, W); ++x) {
                hits.clear();
                Real T = 1;
                Sample s{};
                for (std::uint32_t k = 0; k < list.size(); ++k) {
                    const std::uint32_t i = list[k];
                    if (!evalSample(P.proj[i], scene.opacities[i], x, y, settings, s)) {
                        continue;
                    }
                    hits.push_back({k, s, T});
                    T *= 1 - s.w;
                }
                const std::size_t p = static_cast<std::size_t>(y * W + x);
                const Vec3 g(gradImage[p], gradImage[plane + p], gradImage[2 * plane + p]);
                Vec3 S(settings.background[0] * T, settings.background[1] * T, settings.background[2] * T);
                for (auto h = hits.rbegin(); h != hits.rend(); ++h) {
                    const std::uint32_t i = list[h->slot];
                    const Vec3 &col       = P.color[i];
                    Real *d               = part.data() + static_cast<std::size_t>(h->slot) * kStride;
                    const Real wT         = h->s.w * h->T;
                    d[0] += g[0] * wT;
                    d[1] += g[1] * wT;
                    d[2] += g[2] * wT;
                    const Real dLdw = g.dot(col * h->T - S / (1 - h->s.w));
                    S += col * wT;
                    if (h->s.clipped) {
                        continue;
                    }
                    const Real alpha  = scene.opacities[i];
                    d[3] += dLdw * h->s.G;
                    const Real dPower = dLdw * alpha * h->s.G;
                    const Vec3 &cn    = P.proj[i].conic;
                    const Real dx = h->s.dx, dy = h->s.dy;
                    d[4] += dPower * (cn[0] * dx + cn[1] * dy);
                    d[5] += dPower * (cn[1] * dx + cn[2] * dy);
                    d[6] += dPower * Real(-0.5) * dx * dx;
                    d[7] += dPower * -dx * dy;
                    d[8] += dPower * Real(-0.5) * dy * dy;
                }
            }
        }
    }

    // Deterministic reduction: tiles in index order.
    std::vector<Real> acc(n * kStride, 0);
    for (std::size_t t = 0; t < P.tiles.size(); ++t) {
        const auto &list = P.tiles[t];
        for (std::size_t k = 0; k < list.size(); ++k) {
            Real *dst       = acc.data() + static_cast<std::size_t>(list[k]) * kStride;
            const Real *src = partials[t].data() + k * kStride;
            for (int j = 0; j < kStride; ++j) {
                dst[j] += src[j];
            }
        }
    }

    GaussianScene grad(n, scene.shDegree);
    std::fill(grad.quats.begin(), grad.quats.end(), Real(0));
    std::fill(grad.scales.begin(), grad.scales.end(), Real(0));
    std::fill(grad.opacities.begin(), grad.opacities.end(), Real(0));
    const int K      = shCount(scene.shDegree);
    const Mat3 Wc    = cam.R.cast<Real>();
    const Vec3 tc    = cam.t.cast<Real>();
    const Real fx    = static_cast<Real>(cam.fx), fy = static_cast<Real>(cam.fy);

#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
        if (!P.proj[i].visible) {
            continue;
        }
        const Real *a             = acc.data() + i * kStride;
        const GaussianPrimitive g = scene.primitive(i);
        const Vec3 dColor(a[0], a[1], a[2]);

        // Appearance.
        Real Y[16];
        Vec3 dY[16];
        shBasis(P.dir[i], scene.shDegree, Y, dY);
        Vec3 dDir = Vec3::Zero();
        for (int k = 0; k < K; ++k) {
            for (int c = 0; c < 3; ++c) {
                grad.sh[static_cast<std::size_t>(k * 3 + c) * n + i] = dColor[c] * Y[k];
            }
            dDir += dColor.dot(g.sh[static_cast<std::size_t>(k)]) * dY[k];
        }
        for (int c = 0; c < 3; ++c) {
            grad.base[c * n + i] = dColor[c];
        }
        grad.opacities[i] = a[3];

        // conic -> cov2 -> (T, Sigma).
        const Vec3 &cn = P.proj[i].conic;
        Mat2 M;
        M << cn[0], cn[1], cn[1], cn[2];
        Mat2 Gm;
        Gm << a[6], a[7] / 2, a[7] / 2, a[8];
        const Mat2 Gc = -M * Gm * M;

        const Vec3 xc = Wc * g.center + tc;
        const Real iz = 1 / xc.z(), iz2 = iz * iz, iz3 = iz2 * iz;
        Mat23 J;
        J << fx * iz, 0, -fx * xc.x() * iz2, 0, fy * iz, -fy * xc.y() * iz2;
        const Mat23 T      = J * Wc;
        const Vec4 qn      = g.quat / g.quat.norm();
        const Mat3 R       = rotationFromQuat(qn);
        const Mat3 Mrs     = R * g.scale.asDiagonal();
        const Mat3 Sigma   = Mrs * Mrs.transpose();
        const Mat3 dSigma  = T.transpose() * Gc * T;
        const Mat23 dT     = 2 * Gc * T * Sigma;
        const Mat23 dJ     = dT * Wc.transpose();

        Vec3 dXc;
        dXc.x() = dJ(0, 2) * (-fx * iz2) + a[4] * fx * iz;
        dXc.y() = dJ(1, 2) * (-fy * iz2) + a[5] * fy * iz;
        dXc.z() = dJ(0, 0) * (-fx * iz2) + dJ(0, 2) * (2 * fx * xc.x() * iz3) + dJ(1, 1) * (-fy * iz2) +
                  dJ(1, 2) * (2 * fy * xc.y() * iz3) - a[4] * fx * xc.x() * iz2 - a[5] * fy * xc.y() * iz2;
        const Vec3 dDirToX = (Mat3::Identity() - P.dir[i] * P.dir[i].transpose()) * dDir / P.dist[i];
        const Vec3 dMean   = Wc.transpose() * dXc + dDirToX;
        for (int c = 0; c < 3; ++c) {
            grad.means[c * n + i] = dMean[c];
        }

        // Sigma = (R S)(R S)^T.
        const Mat3 dM = 2 * dSigma * Mrs;
        Mat3 dR;
        for (int c = 0; c < 3; ++c) {
            grad.scales[c * n + i] = R.col(c).dot(dM.col(c));
            dR.col(c)              = dM.col(c) * g.scale[c];
        }
        const Real w = qn[0], x = qn[1], y = qn[2], z = qn[3];
        Vec4 dq;
        dq[0] = 2 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) - y * dR(2, 0) + x * dR(2, 1));
        dq[1] = 2 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2 * x * dR(1, 1) - w * dR(1, 2) + z * dR(2, 0) +
                     w * dR(2, 1) - 2 * x * dR(2, 2));
        dq[2] = 2 * (-2 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) + z * dR(1, 2) - w * dR(2, 0) +
                     z * dR(2, 1) - 2 * y * dR(2, 2));
        dq[3] = 2 * (-2 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) - 2 * z * dR(1, 1) + y * dR(1, 2) +
                     x * dR(2, 0) + y * dR(2, 1));
        const Vec4 dqRaw = (dq - qn * qn.dot(dq)) / g.quat.norm();
        for (int c = 0; c < 4; ++c) {
            grad.quats[c * n + i] = dqRaw[c];
        }
    }
    return grad;
}

io::Image
toImage(std::span<const Real> chw, int width, int height) {
    io::Image img(width, height);
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            img.data[3 * p + c] = static_cast<float>(std::clamp<Real>(chw[c * plane + p], 0, 1));
        }
    }
    return img;
}

std::vector<Real>
fromImage(const io::Image &img) {
    const std::size_t plane = img.pixelCount();
    std::vector<Real> out(3 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            out[c * plane + p] = static_cast<Real>(img.data[3 * p + c]);
        }
    }
    return out;
}

} // namespace dsplat::inline DSPLAT_ABI::splat
