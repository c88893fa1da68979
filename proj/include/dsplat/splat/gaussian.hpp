// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian primitives, covariance construction, spherical harmonics and the
// first-order (EWA) screen-space projection.
//
#pragma once

#include "dsplat/config.hpp"
#include "dsplat/geometry/camera.hpp"

#include <Eigen/Core>

#include <array>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::splat {

using Vec2 = Eigen::Matrix<Real, 2, 1>;
using Vec3 = Eigen::Matrix<Real, 3, 1>;
using Vec4 = Eigen::Matrix<Real, 4, 1>;
using Mat2 = Eigen::Matrix<Real, 2, 2>;
using Mat3 = Eigen::Matrix<Real, 3, 3>;
using Mat23 = Eigen::Matrix<Real, 2, 3>;

inline constexpr int kMaxShDegree = 3;

constexpr int
shCount(int degree) {
    return (degree + 1) * (degree + 1);
}

/// One primitive in array-of-structs form. Quaternions are (w, x, y, z).
struct GaussianPrimitive {
    Vec3 center  = Vec3::Zero();
    Vec4 quat    = Vec4(1, 0, 0, 0);
    Vec3 scale   = Vec3::Ones();
    Real opacity = 1;
    Vec3 base    = Vec3::Zero();
    std::vector<Vec3> sh; ///< one RGB triple per basis function
};

/// Structure-of-arrays scene, channel-major: field f of primitive i lives at
/// f * N + i. SH rows are ordered (basis k, channel c) -> k * 3 + c.
struct GaussianScene {
    int shDegree = 1;
    std::vector<Real> means;     ///< [3, N]
    std::vector<Real> quats;     ///< [4, N]
    std::vector<Real> scales;    ///< [3, N]
    std::vector<Real> opacities; ///< [N]
    std::vector<Real> base;      ///< [3, N]
    std::vector<Real> sh;        ///< [3 * shCount, N]

    GaussianScene() = default;
    GaussianScene(std::size_t n, int degree);

    std::size_t size() const { return opacities.size(); }
    int shRows() const { return 3 * shCount(shDegree); }

    GaussianPrimitive primitive(std::size_t i) const;
    void set(std::size_t i, const GaussianPrimitive &p);
    void push(const GaussianPrimitive &p);
    /// Primitives reordered: out[k] = this[order[k]].
    GaussianScene permuted(const std::vector<std::size_t> &order) const;

    /// Unit quaternions (1e-6 when strict, 1e-3 otherwise), positive scales,
    /// opacity in [0, 1], consistent array sizes. Throws std::invalid_argument.
    void validate(bool strict = true) const;
};

/// Sigma = R(q) diag(scale^2) R(q)^T with q normalized first.
Mat3 covarianceWorld(const Vec4 &quat, const Vec3 &scale);
Mat3 rotationFromQuat(const Vec4 &unitQuat);

/// Real SH basis (graphics sign convention) up to `degree`, optional gradient
/// w.r.t. the direction components.
void shBasis(const Vec3 &dir, int degree, Real *Y, Vec3 *dY = nullptr);

/// base + sum_k coeff_k Y_k(dir). Non-unit directions are normalized and
/// counted (see shNormalizationCount).
Vec3 shEval(const Vec3 &base, const std::vector<Vec3> &coeffs, const Vec3 &dir, int degree);
std::size_t shNormalizationCount();

struct RenderSettings {
    std::array<Real, 3> background{0, 0, 0};
    int tileSize    = 16;
    Real cutoff     = 3;      ///< Mahalanobis radius of the footprint
    Real epsCov     = 0.3;    ///< px^2 added to the projected covariance
    Real maxWeight  = Real(0.999);
    Real minWeight  = Real(1.0 / 255.0);
    Real nearPlane  = Real(0.01);

    void validate() const;
};

struct ProjectedGaussian {
    bool visible = false;
    Vec2 mean2   = Vec2::Zero();
    Mat2 cov2    = Mat2::Identity();
    Vec3 conic   = Vec3::Zero(); ///< (a, b, c) of cov2^-1 = [[a, b], [b, c]]
    Real depth   = 0;
    int xmin = 0, xmax = -1, ymin = 0, ymax = -1; ///< inclusive pixel bounds
};

/// mean2 = pinhole projection; cov2 = J W Sigma W^T J^T + epsCov I.
ProjectedGaussian projectGaussian(const Vec3 &center,
                                  const Mat3 &covWorld,
                                  const geom::Camera &cam,
                                  const RenderSettings &settings);

} // namespace dsplat::inline DSPLAT_ABI::splat
