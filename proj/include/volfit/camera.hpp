#pragma once

#include <optional>

#include "volfit/bvh.hpp"
#include "volfit/types.hpp"

namespace volfit {

// Pinhole camera in the OpenCV convention (x right, y down, z forward).
// `rotation` maps camera axes to world axes; `position` is the optical center.
struct Camera {
    double fx = 570.0;
    double fy = 570.0;
    double cx = 319.5;
    double cy = 239.5;
    int width = 640;
    int height = 480;
    Mat3d rotation = Mat3d::Identity();
    Vec3d position = Vec3d::Zero();

    // Camera at `eye` looking at `target` with world +z as the up hint.
    static Camera look_at(const Vec3d& eye, const Vec3d& target);

    // Throws ConfigError when the intrinsics violate fx, fy > 0, 0 <= cx < W, 0 <= cy < H.
    void validate() const;

    Vec3d to_camera(const Vec3d& world) const { return rotation.transpose() * (world - position); }
    Vec3d to_world(const Vec3d& cam) const { return rotation * cam + position; }
    Vec3d forward() const { return rotation.col(2); }

    // Pixel coordinates (u = column, v = row); empty when the point is not in front.
    std::optional<Vec2d> project(const Vec3d& world) const;

    // World-space ray through the center of pixel (u, v).
    Ray pixel_ray(double u, double v) const;

    // World point at camera-frame depth z along pixel (u, v).
    Vec3d back_project(double u, double v, double depth) const;
};

}  // namespace volfit
