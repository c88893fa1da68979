// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/splat/gaussian.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace dsplat::inline DSPLAT_ABI::splat {

namespace {

constexpr double kC0    = 0.28209479177387814;
constexpr double kC1    = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658, 0.3731763325901154,
                           -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

std::atomic<std::size_t> gShNormalizations{0};

} // namespace

GaussianScene::GaussianScene(std::size_t n, int degree)
    : shDegree(degree), means(3 * n, 0), quats(4 * n, 0), scales(3 * n, 1), opacities(n, 1), base(3 * n, 0),
      sh(static_cast<std::size_t>(3 * shCount(degree)) * n, 0) {
    for (std::size_t i = 0; i < n; ++i) {
        quats[i] = 1;
    }
}

GaussianPrimitive
GaussianScene::primitive(std::size_t i) const {
    const std::size_t n = size();
    GaussianPrimitive p;
    for (int k = 0; k < 3; ++k) {
        p.center[k] = means[k * n + i];
        p.scale[k]  = scales[k * n + i];
        p.base[k]   = base[k * n + i];
    }
    for (int k = 0; k < 4; ++k) {
        p.quat[k] = quats[k * n + i];
    }
    p.opacity = opacities[i];
    p.sh.resize(static_cast<std::size_t>(shCount(shDegree)));
    for (int k = 0; k < shCount(shDegree); ++k) {
        for (int c = 0; c < 3; ++c) {
            p.sh[static_cast<std::size_t>(k)][c] = sh[static_cast<std::size_t>(k * 3 + c) * n + i];
        }
    }
    return p;
}

void
GaussianScene::set(std::size_t i, const GaussianPrimitive &p) {
    const std::size_t n = size();
    for (int k = 0; k < 3; ++k) {
        means[k * n + i]  = p.center[k];
        scales[k * n + i] = p.scale[k];
        base[k * n + i]   = p.base[k];
    }
    for (int k = 0; k < 4; ++k) {
        quats[k * n + i] = p.quat[k];
    }
    opacities[i] = p.opacity;
    for (int k = 0; k < shCount(shDegree); ++k) {
        const Vec3 c = static_cast<std::size_t>(k) < p.sh.size() ? p.sh[static_cast<std::size_t>(k)] : Vec3::Zero();
        for (int ch = 0; ch < 3; ++ch) {
            sh[static_cast<std::size_t>(k * 3 + ch) * n + i] = c[ch];
        }
    }
}

void
GaussianScene::push(const GaussianPrimitive &p) {
    const std::size_t n = size();
    GaussianScene grown(n + 1, shDegree);
    for (std::size_t i = 0; i < n; ++i) {
        grown.set(i, primitive(i));
    }
    grown.set(n, p);
    *this = std::move(grown);
}

GaussianScene
GaussianScene::permuted(const std::vector<std::size_t> &order) const {
    GaussianScene out(order.size(), shDegree);
    for (std::size_t k = 0; k < order.size(); ++k) {
        out.set(k, primitive(order[k]));
    }
    return out;
}

void
GaussianScene::validate(bool strict) const {
    const std::size_t n = size();
    if (shDegree < 0 || shDegree > kMaxShDegree) {
        throw std::invalid_argument(fmt::format("scene: SH degree {} outside [0, {}]", shDegree, kMaxShDegree));
    }
    if (means.size() != 3 * n || quats.size() != 4 * n || scales.size() != 3 * n || base.size() != 3 * n ||
        sh.size() != static_cast<std::size_t>(shRows()) * n) {
        throw std::invalid_argument("scene: inconsistent field sizes");
    }
    const double qtol = strict ? 1e-6 : 1e-3;
    for (std::size_t i = 0; i < n; ++i) {
        double q2 = 0;
        for (int k = 0; k < 4; ++k) {
            q2 += static_cast<double>(quats[k * n + i]) * quats[k * n + i];
        }
        if (std::abs(std::sqrt(q2) - 1) > qtol) {
            throw std::invalid_argument(fmt::format("scene: primitive {} quaternion norm {}", i, std::sqrt(q2)));
        }
        for (int k = 0; k < 3; ++k) {
            if (!(scales[k * n + i] > 0)) {
                throw std::invalid_argument(fmt::format("scene: primitive {} non-positive scale", i));
            }
        }
        if (!(opacities[i] >= 0 && opacities[i] <= 1)) {
            throw std::invalid_argument(fmt::format("scene: primitive {} opacity {} outside [0,1]", i, opacities[i]));
        }
    }
}

Mat3
rotationFromQuat(const Vec4 &q) {
    const Real w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

Mat3
covarianceWorld(const Vec4 &quat, const Vec3 &scale) {
    const Mat3 R = rotationFromQuat(quat / quat.norm());
    const Mat3 M = R * scale.asDiagonal();
    return M * M.transpose();
}

void
shBasis(const Vec3 &dir, int degree, Real *Y, Vec3 *dY) {
    const Real x = dir[0], y = dir[1], z = dir[2];
    Y[0] = Real(kC0);
    if (dY) {
        dY[0].setZero();
    }
    if (degree < 1) {
        return;
    }
    const Real c1 = Real(kC1);
    Y[1] = -c1 * y;
    Y[2] = c1 * z;
    Y[3] = -c1 * x;
    if (dY) {
        dY[1] = Vec3(0, -c1, 0);
        dY[2] = Vec3(0, 0, c1);
        dY[3] = Vec3(-c1, 0, 0);
    }
    if (degree < 2) {
        return;
    }
    const Real xx = x * x, yy = y * y, zz = z * z;
    const Real a4 = Real(kC2[0]), a5 = Real(kC2[1]), a6 = Real(kC2[2]), a7 = Real(kC2[3]), a8 = Real(kC2[4]);
    Y[4] = a4 * x * y;
    Y[5] = a5 * y * z;
    Y[6] = a6 * (2 * zz - xx - yy);
    Y[7] = a7 * x * z;
    Y[8] = a8 * (xx - yy);
    if (dY) {
        dY[4] = Vec3(a4 * y, a4 * x, 0);
        dY[5] = Vec3(0, a5 * z, a5 * y);
        dY[6] = Vec3(-2 * a6 * x, -2 * a6 * y, 4 * a6 * z);
        dY[7] = Vec3(a7 * z, 0, a7 * x);
        dY[8] = Vec3(2 * a8 * x, -2 * a8 * y, 0);
    }
    if (degree < 3) {
        return;
    }
    const Real b0 = Real(kC3[0]), b1 = Real(kC3[1]), b2 = Real(kC3[2]), b3 = Real(kC3[3]), b4 = Real(kC3[4]),
               b5 = Real(kC3[5]), b6 = Real(kC3[6]);
    Y[9]  = b0 * y * (3 * xx - yy);
    Y[10] = b1 * x * y * z;
    Y[11] = b2 * y * (4 * zz - xx - yy);
    Y[12] = b3 * z * (2 * zz - 3 * xx - 3 * yy);
    Y[13] = b4 * x * (4 * zz - xx - yy);
    Y[14] = b5 * z * (xx - yy);
    Y[15] = b6 * x * (xx - 3 * yy);
    if (dY) {
        dY[9]  = Vec3(6 * b0 * x * y, b0 * (3 * xx - 3 * yy), 0);
        dY[10] = Vec3(b1 * y * z, b1 * x * z, b1 * x * y);
        dY[11] = Vec3(-2 * b2 * x * y, b2 * (4 * zz - xx - 3 * yy), 8 * b2 * y * z);
        dY[12] = Vec3(-6 * b3 * x * z, -6 * b3 * y * z, b3 * (6 * zz - 3 * xx - 3 * yy));
        dY[13] = Vec3(b4 * (4 * zz - 3 * xx - yy), -2 * b4 * x * y, 8 * b4 * x * z);
        dY[14] = Vec3(2 * b5 * x * z, -2 * b5 * y * z, b5 * (xx - yy));
        dY[15] = Vec3(b6 * (3 * xx - 3 * yy), -6 * b6 * x * y, 0);
    }
}

Vec3
shEval(const Vec3 &base, const std::vector<Vec3> &coeffs, const Vec3 &dir, int degree) {
    Vec3 d        = dir;
    const Real nd = d.norm();
    if (std::abs(nd - 1) > Real(1e-5)) {
        gShNormalizations.fetch_add(1, std::memory_order_relaxed);
        d /= nd;
    }
    Real Y[16];
    shBasis(d, degree, Y);
    Vec3 out = base;
    for (int k = 0; k < shCount(degree) && static_cast<std::size_t>(k) < coeffs.size(); ++k) {
        out += Y[k] * coeffs[static_cast<std::size_t>(k)];
    }
    return out;
}

std::size_t
shNormalizationCount() {
    return gShNormalizations.load();
}

void
RenderSettings::validate() const {
    if (tileSize < 1) {
        throw std::invalid_argument("render settings: tile size must be >= 1");
    }
    if (!(cutoff > 0)) {
        throw std::invalid_argument("render settings: cutoff must be > 0");
    }
    if (!(epsCov >= 0) || !(maxWeight > 0 && maxWeight < 1) || !(minWeight >= 0)) {
        throw std::invalid_argument("render settings: bad covariance/weight thresholds");
    }
}

ProjectedGaussian
projectGaussian(const Vec3 &center, const Mat3 &covWorld, const geom::Camera &cam, const RenderSettings &settings) {
    ProjectedGaussian out;
    const Mat3 W  = cam.R.cast<Real>();
    const Vec3 pc = W * center + cam.t.cast<Real>();
    if (!(pc.z() > settings.nearPlane)) {
        return out;
    }
    const Real fx = static_cast<Real>(cam.fx), fy = static_cast<Real>(cam.fy);
    const Real iz = 1 / pc.z();
    out.depth     = pc.z();
    out.mean2     = Vec2(fx * pc.x() * iz + static_cast<Real>(cam.cx), fy * pc.y() * iz + static_cast<Real>(cam.cy));
    Mat23 J;
    J << fx * iz, 0, -fx * pc.x() * iz * iz, 0, fy * iz, -fy * pc.y() * iz * iz;
    const Mat23 T = J * W;
    out.cov2      = T * covWorld * T.transpose();
    out.cov2(0, 0) += settings.epsCov;
    out.cov2(1, 1) += settings.epsCov;
    const Real det = out.cov2(0, 0) * out.cov2(1, 1) - out.cov2(0, 1) * out.cov2(1, 0);
    if (!(det > 0)) {
        return out;
    }
    out.conic = Vec3(out.cov2(1, 1) / det, -out.cov2(0, 1) / det, out.cov2(0, 0) / det);
    const Real mid    = (out.cov2(0, 0) + out.cov2(1, 1)) / 2;
    const Real lmax   = mid + std::sqrt(std::max(Real(0), mid * mid - det));
    const Real radius = std::ceil(settings.cutoff * std::sqrt(lmax));
    const Real fxmin  = std::ceil(out.mean2.x() - radius), fxmax = std::floor(out.mean2.x() + radius);
    const Real fymin  = std::ceil(out.mean2.y() - radius), fymax = std::floor(out.mean2.y() + radius);
    if (!std::isfinite(fxmin) || !std::isfinite(fymin) || fxmax < 0 || fymax < 0 || fxmin > cam.width - 1 ||
        fymin > cam.height - 1) {
        return out;
    }
    out.xmin    = static_cast<int>(std::max<Real>(fxmin, 0));
    out.xmax    = static_cast<int>(std::min<Real>(fxmax, static_cast<Real>(cam.width - 1)));
    out.ymin    = static_cast<int>(std::max<Real>(fymin, 0));
    out.ymax    = static_cast<int>(std::min<Real>(fymax, static_cast<Real>(cam.height - 1)));
    out.visible = out.xmin <= out.xmax && out.ymin <= out.ymax;
    return out;
}

} // namespace dsplat::inline DSPLAT_ABI::splat
