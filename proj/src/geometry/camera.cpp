// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/geometry/camera.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace dsplat::geom {

Eigen::Matrix3d
Camera::K() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
}

Eigen::Matrix3d
Camera::Kinv() const {
    if (!(std::abs(fx) > 0) || !(std::abs(fy) > 0)) {
        throw GeometryError("camera: singular intrinsics");
    }
    Eigen::Matrix3d k;
    k << 1 / fx, 0, -cx / fx, 0, 1 / fy, -cy / fy, 0, 0, 1;
    return k;
}

void
Camera::validate() const {
    if (!(fx > 0) || !(fy > 0)) {
        throw GeometryError(fmt::format("camera: focal lengths must be positive (fx={}, fy={})", fx, fy));
    }
    if (width < 1 || height < 1) {
        throw GeometryError(fmt::format("camera: bad image size {}x{}", width, height));
    }
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
        throw GeometryError(fmt::format("camera: principal point ({}, {}) outside {}x{}", cx, cy, width, height));
    }
    const double orth = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    const double det  = R.determinant();
    if (orth > 1e-6 || std::abs(det - 1) > 1e-6) {
        throw GeometryError(fmt::format("camera: R is not a rotation (|RtR-I|={:.3g}, det={:.9g})", orth, det));
    }
}

Projection
project(const Eigen::Vector3d &point, const Camera &cam) {
    const Eigen::Vector3d pc = cam.R * point + cam.t;
    if (!(pc.z() > kDepthEpsilon)) {
        throw GeometryError(fmt::format("project: point behind camera (z={})", pc.z()));
    }
    return {Eigen::Vector2d(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy), pc.z()};
}

Eigen::Vector3d
unprojectRay(const Eigen::Vector2d &pixel, const Camera &cam) {
    const Eigen::Vector3d dirCam((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0);
    return cam.R.transpose() * dirCam;
}

Eigen::Vector3d
unproject(const Eigen::Vector2d &pixel, double depth, const Camera &cam) {
    if (!(depth > 0)) {
        throw GeometryError(fmt::format("unproject: depth must be positive, got {}", depth));
    }
    return depth * unprojectRay(pixel, cam) + cam.center();
}

Eigen::Matrix3d
planeHomography(const Camera &src, const Camera &ref, double depth) {
    if (!(depth > 0)) {
        throw GeometryError(fmt::format("plane_homography: depth must be positive, got {}", depth));
    }
    const Eigen::Matrix3d Rrel = src.R * ref.R.transpose();
    const Eigen::Vector3d trel = src.t - Rrel * ref.t;
    const Eigen::RowVector3d n(0, 0, 1);
    return src.K() * (Rrel + trel * n / depth) * ref.Kinv();
}

Camera
rescaled(const Camera &cam, int width, int height) {
    const double sx = static_cast<double>(width) / cam.width;
    const double sy = static_cast<double>(height) / cam.height;
    Camera out      = cam;
    out.fx          = cam.fx * sx;
    out.fy          = cam.fy * sy;
    out.cx          = (cam.cx + 0.5) * sx - 0.5;
    out.cy          = (cam.cy + 0.5) * sy - 0.5;
    out.width       = width;
    out.height      = height;
    return out;
}

Camera
lookAt(const Eigen::Vector3d &eye,
       const Eigen::Vector3d &target,
       const Eigen::Vector3d &up,
       double fx,
       double fy,
       double cx,
       double cy,
       int width,
       int height) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x       = z.cross(up); // right = down x forward, down = -up
    if (x.norm() < 1e-12) {
        throw GeometryError("lookAt: view direction parallel to up");
    }
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    Camera cam;
    cam.R.row(0) = x.transpose();
    cam.R.row(1) = y.transpose();
    cam.R.row(2) = z.transpose();
    cam.t        = -cam.R * eye;
    cam.fx       = fx;
    cam.fy       = fy;
    cam.cx       = cx;
    cam.cy       = cy;
    cam.width    = width;
    cam.height   = height;
    return cam;
}

DepthPlanes
DepthPlanes::make(double nearDepth, double farDepth, int count, PlaneSpacing spacing) {
    if (count < 2 || !(nearDepth > 0) || !(farDepth > nearDepth)) {
        throw GeometryError(
            fmt::format("depth planes: need count >= 2 and 0 < near < far (got {}, {}, {})", count, nearDepth, farDepth));
    }
    DepthPlanes planes;
    planes.spacing = spacing;
    for (int i = 0; i < count; ++i) {
        const double s = static_cast<double>(i) / (count - 1);
        if (spacing == PlaneSpacing::InverseDepth) {
            const double disp = 1 / nearDepth + s * (1 / farDepth - 1 / nearDepth);
            planes.values.push_back(1 / disp);
        } else {
            planes.values.push_back(nearDepth + s * (farDepth - nearDepth));
        }
    }
    return planes;
}

std::vector<double>
DepthPlanes::disparities() const {
    std::vector<double> out;
    out.reserve(values.size());
    for (const double d : values) {
        out.push_back(1 / d);
    }
    return out;
}

void
DepthPlanes::validate() const {
    if (values.size() < 2) {
        throw GeometryError("depth planes: need at least 2 planes");
    }
    const bool up = values[1] > values[0];
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0)) {
            throw GeometryError("depth planes: depths must be positive");
        }
        if (i > 0 && ((values[i] > values[i - 1]) != up || values[i] == values[i - 1])) {
            throw GeometryError("depth planes: depths must be strictly monotone");
        }
    }
}

std::vector<CameraRecord>
readCameraFile(const std::filesystem::path &path, int width, int height) {
    std::ifstream in(path);
    if (!in) {
        throw GeometryError(fmt::format("{}: cannot open camera file", path.string()));
    }
    std::vector<CameraRecord> frames;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        if (lineNo == 1 && line.find("://") != std::string::npos) {
            continue; // source URL header
        }
        std::istringstream ss(line);
        CameraRecord rec;
        double v[18];
        if (!(ss >> rec.timestamp)) {
            throw GeometryError(fmt::format("{}:{}: malformed camera line", path.string(), lineNo));
        }
        for (double &x : v) {
            if (!(ss >> x)) {
                throw GeometryError(fmt::format("{}:{}: expected 19 fields", path.string(), lineNo));
            }
        }
        Camera &cam = rec.camera;
        cam.fx      = v[0] * width;
        cam.fy      = v[1] * height;
        cam.cx      = v[2] * width;
        cam.cy      = v[3] * height;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                cam.R(r, c) = v[6 + 4 * r + c];
            }
            cam.t(r) = v[6 + 4 * r + 3];
        }
        cam.width  = width;
        cam.height = height;
        cam.validate();
        frames.push_back(rec);
    }
    return frames;
}

void
writeCameraFile(const std::filesystem::path &path, const std::vector<CameraRecord> &frames) {
    std::ofstream out(path);
    if (!out) {
        throw GeometryError(fmt::format("{}: cannot open camera file for writing", path.string()));
    }
    for (const CameraRecord &rec : frames) {
        const Camera &c = rec.camera;
        out << fmt::format("{} {:.17g} {:.17g} {:.17g} {:.17g} 0 0",
                           rec.timestamp, c.fx / c.width, c.fy / c.height, c.cx / c.width, c.cy / c.height);
        for (int r = 0; r < 3; ++r) {
            out << fmt::format(" {:.17g} {:.17g} {:.17g} {:.17g}", c.R(r, 0), c.R(r, 1), c.R(r, 2), c.t(r));
        }
        out << '\n';
    }
}

} // namespace dsplat::geom
