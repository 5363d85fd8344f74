#pragma once

#include <Eigen/Core>

namespace evf {

/// Pinhole camera with an OpenCV-style frame: +z forward, +y down in the image.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // world -> camera
    int width = 0;
    int height = 0;

    /// Camera centre in world coordinates.
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

    /// Unit world-space direction through the continuous pixel position (u, v);
    /// pixel centres sit at integer + 0.5.
    Eigen::Vector3d direction(double u, double v) const {
        const Eigen::Vector3d cam((u - cx) / fx, (v - cy) / fy, 1.0);
        return (rotation.transpose() * cam).normalized();
    }

    /// Projects a world point to continuous pixel coordinates; z <= 0 gives NaN.
    Eigen::Vector2d project(const Eigen::Vector3d& world) const;

    /// Throws InvalidInput when intrinsics or the rotation are malformed.
    void validate() const;

    /// Camera at `eye` looking at `target`, with `up` mapped to image-up.
    static CameraModel look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                               const Eigen::Vector3d& up, int width, int height, double fov_y_deg);
};

}  // namespace evf
