#include "eventfield/camera.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "eventfield/error.hpp"

namespace evf {

Eigen::Vector2d CameraModel::project(const Eigen::Vector3d& world) const {
    const Eigen::Vector3d cam = rotation * world + translation;
    if (cam.z() <= 0.0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan};
    }
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
}

void CameraModel::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) {
        throw InvalidInput("camera: focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw InvalidInput("camera: resolution must be positive");
    }
    const double err = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-6)) {
        throw InvalidInput("camera: rotation is not orthonormal");
    }
}

CameraModel CameraModel::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                 const Eigen::Vector3d& up, int width, int height, double fov_y_deg) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);

    CameraModel cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.width = width;
    cam.height = height;
    const double focal = 0.5 * height / std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

}  // namespace evf
