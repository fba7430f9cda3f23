#include "volfit/volume_points.hpp"

#include "volfit/bvh.hpp"
#include "volfit/errors.hpp"
#include "volfit/kdtree.hpp"
#include "volfit/sampling.hpp"

namespace volfit {

namespace {
constexpr double kVisibilityTolerance = 1e-6;
}

std::vector<bool> front_vertices(const TriMesh& mesh, const Vec3d& camera) {
    const TriangleBvh bvh(mesh);
    std::vector<bool> front(static_cast<std::size_t>(mesh.num_vertices()));
    for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
        const Vec3d v = mesh.vertex(i);
        const double dist = (v - camera).norm();
        const auto hit = bvh.first_hit(Ray(camera, v - camera), 0.0, dist - kVisibilityTolerance);
        front[static_cast<std::size_t>(i)] = !hit.has_value();
    }
    return front;
}

InterpolationPairSet compute_pairs(const TriMesh& mesh, const Vec3d& camera, int n_front) {
    if (n_front < 1) throw ConfigError("n_front must be positive");
    const std::vector<bool> front = front_vertices(mesh, camera);
    IndexList front_ids, back_ids;
    for (std::size_t i = 0; i < front.size(); ++i) (front[i] ? front_ids : back_ids).push_back(static_cast<int>(i));
    if (front_ids.empty() || back_ids.empty()) throw NoPairsFound("mesh has no front/back vertex split");

    const Points front_pts = select_rows(mesh.vertices(), front_ids);
    const IndexList picks =
        farthest_point_sampling(front_pts, std::min<int>(n_front, static_cast<int>(front_ids.size())), 0);
    const TriangleBvh bvh(mesh);
    const PointIndex back_index(select_rows(mesh.vertices(), back_ids));

    InterpolationPairSet out;
    out.points_per_pair = kPointsPerPair;
    for (int p : picks) {
        const int vf = front_ids[static_cast<std::size_t>(p)];
        const Vec3d v = mesh.vertex(vf);
        const auto hit = bvh.first_hit(Ray(v, v - camera), kVisibilityTolerance);
        if (!hit) continue;
        const Neighbor nb = back_index.nearest(v + hit->distance * (v - camera).normalized());
        out.pairs.push_back({vf, back_ids[static_cast<std::size_t>(nb.index)]});
    }
    if (out.pairs.empty()) throw NoPairsFound("no front ray exits the mesh");
    return out;
}

InterpolationPairSet compute_pairs(const BodyTemplate& body, int n_front) {
    const Vec3d pelvis = body.canonical_joints.row(0).transpose();
    return compute_pairs(body.mesh, pelvis - kPairCameraDistance * Vec3d::UnitY(), n_front);
}

Points internal_points(const Points& vertices, const InterpolationPairSet& pairs) {
    const int m = pairs.points_per_pair;
    Points out(static_cast<Eigen::Index>(pairs.pairs.size()) * m, 3);
    Eigen::Index r = 0;
    for (const auto& pr : pairs.pairs) {
        const Eigen::RowVector3d a = vertices.row(pr[0]);
        const Eigen::RowVector3d b = vertices.row(pr[1]);
        for (int k = 1; k <= m; ++k) {
            const double t = static_cast<double>(k) / (m + 1);
            out.row(r++) = (1.0 - t) * a + t * b;
        }
    }
    return out;
}

void internal_points_backward(const Points& grad_points, const InterpolationPairSet& pairs, Points& grad_vertices) {
    const int m = pairs.points_per_pair;
    Eigen::Index r = 0;
    for (const auto& pr : pairs.pairs) {
        for (int k = 1; k <= m; ++k) {
            const double t = static_cast<double>(k) / (m + 1);
            grad_vertices.row(pr[0]) += (1.0 - t) * grad_points.row(r);
            grad_vertices.row(pr[1]) += t * grad_points.row(r);
            ++r;
        }
    }
}

}  // namespace volfit
