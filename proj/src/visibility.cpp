#include "volfit/visibility.hpp"

#include <cmath>
#include <limits>

#include "volfit/parallel.hpp"

namespace volfit {

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();
constexpr double kNearPlane = 0.01;

}  // namespace

DepthBuffer::DepthBuffer(int w, int h)
    : width(w), height(h), depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), kInf) {}

DepthBuffer render_depth(const TriangleBvh& mesh, const Camera& camera) {
    DepthBuffer out(camera.width, camera.height);
    if (mesh.empty()) return out;
    const Vec3d fwd = camera.forward();
    parallel_for(camera.height, 8, [&](int b, int e) {
        for (int v = b; v < e; ++v)
            for (int u = 0; u < camera.width; ++u) {
                const Ray ray = camera.pixel_ray(u, v);
                if (const auto hit = mesh.first_hit(ray))
                    out.at(u, v) = static_cast<float>(hit->distance * ray.direction.dot(fwd));
            }
    });
    return out;
}

void rasterize_depth(const Points& vertices, const Faces& faces, const Camera& camera, DepthBuffer& buffer) {
    const Eigen::Index n = vertices.rows();
    Points cam(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) cam.row(i) = camera.to_camera(vertices.row(i).transpose()).transpose();
    Points2 px(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z = std::max(cam(i, 2), kNearPlane);
        px(i, 0) = camera.fx * cam(i, 0) / z + camera.cx;
        px(i, 1) = camera.fy * cam(i, 1) / z + camera.cy;
    }
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
        if (cam(a, 2) < kNearPlane || cam(b, 2) < kNearPlane || cam(c, 2) < kNearPlane) continue;
        const Vec2d p0 = px.row(a).transpose(), p1 = px.row(b).transpose(), p2 = px.row(c).transpose();
        const double area = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
        if (std::abs(area) < 1e-12) continue;
        const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.x(), p1.x(), p2.x()}))));
        const int u1 = std::min(buffer.width - 1, static_cast<int>(std::floor(std::max({p0.x(), p1.x(), p2.x()}))));
        const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.y(), p1.y(), p2.y()}))));
        const int v1 = std::min(buffer.height - 1, static_cast<int>(std::floor(std::max({p0.y(), p1.y(), p2.y()}))));
        const double iz0 = 1.0 / cam(a, 2), iz1 = 1.0 / cam(b, 2), iz2 = 1.0 / cam(c, 2);
        for (int v = v0; v <= v1; ++v)
            for (int u = u0; u <= u1; ++u) {
                const Vec2d q(u, v);
                const double w0 = ((p1 - q).x() * (p2 - q).y() - (p1 - q).y() * (p2 - q).x()) / area;
                const double w1 = ((p2 - q).x() * (p0 - q).y() - (p2 - q).y() * (p0 - q).x()) / area;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                const auto z = static_cast<float>(1.0 / (w0 * iz0 + w1 * iz1 + w2 * iz2));
                float& d = buffer.at(u, v);
                if (z < d) d = z;
            }
    }
}

IndexList visible_vertices(const Points& vertices, const Faces& faces, const Camera& camera,
                           const DepthBuffer& scene_depth, double tolerance) {
    DepthBuffer body(camera.width, camera.height);
    rasterize_depth(vertices, faces, camera, body);
    IndexList out;
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        const Vec3d c = camera.to_camera(vertices.row(i).transpose());
        if (c.z() < kNearPlane) continue;
        const int u = static_cast<int>(std::lround(camera.fx * c.x() / c.z() + camera.cx));
        const int v = static_cast<int>(std::lround(camera.fy * c.y() / c.z() + camera.cy));
        if (u < 0 || v < 0 || u >= camera.width || v >= camera.height) continue;
        if (c.z() > static_cast<double>(scene_depth.at(u, v))) continue;
        if (c.z() > static_cast<double>(body.at(u, v)) + tolerance) continue;
        out.push_back(static_cast<int>(i));
    }
    return out;
}

}  // namespace volfit
