// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, stored world-to-camera. Pixel centers sit at integer
// coordinates. Geometry here is always evaluated in double precision.
//
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsplat::geom {

inline constexpr double kDepthEpsilon = 1e-4;

class GeometryError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct Camera {
    double fx = 1;
    double fy = 1;
    double cx = 0;
    double cy = 0;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity(); ///< world -> camera
    Eigen::Vector3d t = Eigen::Vector3d::Zero();     ///< world -> camera
    int width         = 1;
    int height        = 1;

    Eigen::Matrix3d K() const;
    Eigen::Matrix3d Kinv() const;
    /// Camera center in world coordinates.
    Eigen::Vector3d center() const { return -R.transpose() * t; }

    /// Throws GeometryError when an invariant is violated.
    void validate() const;
};

struct Projection {
    Eigen::Vector2d pixel;
    double depth = 0;
};

/// Throws GeometryError for points with camera-frame z <= kDepthEpsilon.
Projection project(const Eigen::Vector3d &point, const Camera &cam);

Eigen::Vector3d unproject(const Eigen::Vector2d &pixel, double depth, const Camera &cam);

/// d unproject / d depth; constant along the pixel ray.
Eigen::Vector3d unprojectRay(const Eigen::Vector2d &pixel, const Camera &cam);

/// Maps homogeneous reference-view pixels to source-view pixels for points on
/// the reference-frame plane z = depth:
///     H = K_src (R_rel + t_rel n^T / depth) K_ref^-1,   n = (0, 0, 1).
Eigen::Matrix3d planeHomography(const Camera &src, const Camera &ref, double depth);

/// Same camera at another raster resolution (pixel centers at integers).
Camera rescaled(const Camera &cam, int width, int height);

/// Camera at `eye` looking at `target`; +y of the image points along -up.
Camera lookAt(const Eigen::Vector3d &eye,
              const Eigen::Vector3d &target,
              const Eigen::Vector3d &up,
              double fx,
              double fy,
              double cx,
              double cy,
              int width,
              int height);

enum class PlaneSpacing { InverseDepth, Depth };

struct DepthPlanes {
    std::vector<double> values;
    PlaneSpacing spacing = PlaneSpacing::InverseDepth;

    static DepthPlanes make(double nearDepth, double farDepth, int count, PlaneSpacing spacing);

    int count() const { return static_cast<int>(values.size()); }
    /// 1 / depth per plane.
    std::vector<double> disparities() const;
    void validate() const;
};

/// One frame of a camera trajectory file.
struct CameraRecord {
    std::int64_t timestamp = 0;
    Camera camera;
};

/// Reads the RealEstate10K text layout: an optional leading URL line, then per
/// frame `timestamp fx fy cx cy 0 0 r00 r01 r02 t0 r10 ... t2` with
/// resolution-normalized intrinsics, scaled here by width/height.
std::vector<CameraRecord> readCameraFile(const std::filesystem::path &path, int width, int height);

void writeCameraFile(const std::filesystem::path &path, const std::vector<CameraRecord> &frames);

} // namespace dsplat::geom
