#include "volfit/camera.hpp"

#include "volfit/errors.hpp"

namespace volfit {

namespace {
constexpr double kMinDepth = 1e-9;
}

Camera Camera::look_at(const Vec3d& eye, const Vec3d& target) {
    Camera c;
    const Vec3d z = (target - eye).normalized();
    Vec3d x = z.cross(Vec3d::UnitZ());
    if (x.norm() < 1e-9) x = Vec3d::UnitX();
    x.normalize();
    const Vec3d y = z.cross(x);
    c.rotation.col(0) = x;
    c.rotation.col(1) = y;
    c.rotation.col(2) = z;
    c.position = eye;
    return c;
}

void Camera::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw ConfigError("camera image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
        throw ConfigError("camera principal point must lie inside the image");
    if (!rotation.allFinite() || !position.allFinite()) throw ConfigError("camera pose is not finite");
}

std::optional<Vec2d> Camera::project(const Vec3d& world) const {
    const Vec3d p = to_camera(world);
    if (p.z() <= kMinDepth) return std::nullopt;
    return Vec2d(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

Ray Camera::pixel_ray(double u, double v) const {
    const Vec3d d((u - cx) / fx, (v - cy) / fy, 1.0);
    return Ray(position, rotation * d);
}

Vec3d Camera::back_project(double u, double v, double depth) const {
    return to_world(Vec3d((u - cx) / fx * depth, (v - cy) / fy * depth, depth));
}

}  // namespace volfit
