#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "volfit/mesh.hpp"

namespace volfit {

struct Ray {
    Vec3d origin = Vec3d::Zero();
    Vec3d direction = Vec3d::UnitZ();  // unit length

    Ray() = default;
    // Normalizes `dir`; throws std::invalid_argument for a zero direction.
    Ray(const Vec3d& o, const Vec3d& dir);
    Vec3d at(double t) const { return origin + t * direction; }
};

struct RayHit {
    double distance = 0.0;
    int face = -1;
    // Barycentric weights of corners 1 and 2.
    double u = 0.0;
    double v = 0.0;
};

struct SurfacePoint {
    int face = -1;
    Vec3d point = Vec3d::Zero();
    double distance = 0.0;
};

// Moller-Trumbore; returns any intersection with parameter t (possibly negative).
std::optional<RayHit> intersect_triangle(const Ray& ray, const Vec3d& a, const Vec3d& b, const Vec3d& c);

Vec3d closest_point_on_triangle(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c);

// Bounding-volume hierarchy over a triangle set. Queries are exact: they return
// what an exhaustive per-triangle scan would return, ties resolved by lowest face index.
class TriangleBvh {
public:
    TriangleBvh() = default;
    TriangleBvh(Points vertices, Faces faces);
    explicit TriangleBvh(const TriMesh& mesh) : TriangleBvh(mesh.vertices(), mesh.faces()) {}

    bool empty() const { return faces_.rows() == 0; }
    Eigen::Index num_faces() const { return faces_.rows(); }
    const Points& vertices() const { return vertices_; }
    const Faces& faces() const { return faces_; }

    // Smallest intersection parameter in [t_min, t_max].
    std::optional<RayHit> first_hit(const Ray& ray, double t_min = 0.0,
                                    double t_max = std::numeric_limits<double>::infinity()) const;
    bool any_hit(const Ray& ray, double t_min, double t_max) const;
    // Visits every intersection with t in [t_min, t_max] (unordered).
    void for_each_hit(const Ray& ray, double t_min, double t_max,
                      const std::function<void(const RayHit&)>& visit) const;

    SurfacePoint closest_point(const Vec3d& q) const;

private:
    struct Node {
        Aabb box;
        int left = -1;  // child node, or -1 for leaves
        int right = -1;
        int begin = 0;  // leaf range into order_
        int end = 0;
    };

    int build(int begin, int end, std::vector<Vec3d>& centroids);
    template <typename Visitor>
    void traverse_ray(const Ray& ray, double t_min, double& t_max, Visitor&& visit) const;

    Vec3d corner(int face, int k) const { return vertices_.row(faces_(face, k)).transpose(); }

    Points vertices_;
    Faces faces_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

// Convenience entry point; builds a hierarchy for a single query.
std::optional<RayHit> ray_mesh_first_hit(const Ray& ray, const TriMesh& mesh, double t_min);

// Parity test against a closed mesh: odd crossings along a ray mean inside.
// Rays that graze an edge are re-cast in a different direction.
bool point_inside(const TriangleBvh& bvh, const Vec3d& p);

}  // namespace volfit
