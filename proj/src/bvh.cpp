#include "volfit/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace volfit {

Ray::Ray(const Vec3d& o, const Vec3d& dir) : origin(o) {
    const double n = dir.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("ray direction must be non-zero");
    direction = dir / n;
}

// Barycentric slack so a ray through a shared edge hits at least one of the two
// triangles; rounding would otherwise let it slip through a closed mesh.
constexpr double kEdgeSlack = 1e-10;

std::optional<RayHit> intersect_triangle(const Ray& ray, const Vec3d& a, const Vec3d& b, const Vec3d& c) {
    const Vec3d e1 = b - a, e2 = c - a;
    const Vec3d p = ray.direction.cross(e2);
    const double det = e1.dot(p);
    if (det == 0.0) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3d s = ray.origin - a;
    const double u = s.dot(p) * inv;
    if (u < -kEdgeSlack || u > 1.0 + kEdgeSlack) return std::nullopt;
    const Vec3d q = s.cross(e1);
    const double v = ray.direction.dot(q) * inv;
    if (v < -kEdgeSlack || u + v > 1.0 + kEdgeSlack) return std::nullopt;
    RayHit hit;
    hit.distance = e2.dot(q) * inv;
    hit.u = u;
    hit.v = v;
    return hit;
}

Vec3d closest_point_on_triangle(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c) {
    const Vec3d ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3d bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
    const Vec3d cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleBvh::TriangleBvh(Points vertices, Faces faces) : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    const int n = static_cast<int>(faces_.rows());
    if (n == 0) return;
    order_.resize(static_cast<std::size_t>(n));
    std::vector<Vec3d> centroids(static_cast<std::size_t>(n));
    for (int f = 0; f < n; ++f) {
        order_[f] = f;
        centroids[f] = (corner(f, 0) + corner(f, 1) + corner(f, 2)) / 3.0;
    }
    nodes_.reserve(static_cast<std::size_t>(2 * n));
    build(0, n, centroids);
}

int TriangleBvh::build(int begin, int end, std::vector<Vec3d>& centroids) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Aabb box, cbox;
    for (int i = begin; i < end; ++i) {
        const int f = order_[i];
        for (int k = 0; k < 3; ++k) box.extend(corner(f, k));
        cbox.extend(centroids[f]);
    }
    nodes_[id].box = box;
    constexpr int kLeafSize = 4;
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    int axis = 0;
    cbox.extent().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
        const double ca = centroids[a](axis), cb = centroids[b](axis);
        return ca < cb || (ca == cb && a < b);
    });
    const int left = build(begin, mid, centroids);
    const int right = build(mid, end, centroids);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

namespace {

// Slab test; returns entry parameter or +inf when the box is missed within [t0, t1].
double ray_box_entry(const Aabb& box, const Vec3d& origin, const Vec3d& inv_dir, double t0, double t1) {
    for (int a = 0; a < 3; ++a) {
        double lo = (box.min(a) - origin(a)) * inv_dir(a);
        double hi = (box.max(a) - origin(a)) * inv_dir(a);
        if (std::isnan(lo) || std::isnan(hi)) {
            // Origin on a slab plane with a zero direction component.
            if (origin(a) < box.min(a) || origin(a) > box.max(a)) return std::numeric_limits<double>::infinity();
            continue;
        }
        if (lo > hi) std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
        if (t0 > t1) return std::numeric_limits<double>::infinity();
    }
    return t0;
}

}  // namespace

template <typename Visitor>
void TriangleBvh::traverse_ray(const Ray& ray, double t_min, double& t_max, Visitor&& visit) const {
    if (nodes_.empty()) return;
    const Vec3d inv = ray.direction.cwiseInverse();
    // Boxes are padded by a relative epsilon so rounding never culls a true hit.
    auto entry = [&](const Node& n) {
        Aabb padded = n.box;
        const double pad = 1e-9 * (1.0 + n.box.extent().norm());
        padded.min.array() -= pad;
        padded.max.array() += pad;
        return ray_box_entry(padded, ray.origin, inv, t_min - 1e-9, t_max + 1e-9);
    };
    int stack[128];
    int top = 0;
    if (std::isinf(entry(nodes_[0]))) return;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) visit(order_[i]);
            continue;
        }
        const double tl = entry(nodes_[node.left]);
        const double tr = entry(nodes_[node.right]);
        // Push the farther child first so the nearer one is visited first.
        if (tl <= tr) {
            if (!std::isinf(tr)) stack[top++] = node.right;
            if (!std::isinf(tl)) stack[top++] = node.left;
        } else {
            if (!std::isinf(tl)) stack[top++] = node.left;
            if (!std::isinf(tr)) stack[top++] = node.right;
        }
    }
}

std::optional<RayHit> TriangleBvh::first_hit(const Ray& ray, double t_min, double t_max) const {
    std::optional<RayHit> best;
    double limit = t_max;
    traverse_ray(ray, t_min, limit, [&](int f) {
        auto hit = intersect_triangle(ray, corner(f, 0), corner(f, 1), corner(f, 2));
        if (!hit || hit->distance < t_min || hit->distance > t_max) return;
        if (!best || hit->distance < best->distance || (hit->distance == best->distance && f < best->face)) {
            hit->face = f;
            best = hit;
            limit = std::min(limit, hit->distance);
        }
    });
    return best;
}

bool TriangleBvh::any_hit(const Ray& ray, double t_min, double t_max) const {
    // The traversal has no early exit hook; collapse the window once a hit is found.
    bool found = false;
    double limit = t_max;
    traverse_ray(ray, t_min, limit, [&](int f) {
        if (found) return;
        auto hit = intersect_triangle(ray, corner(f, 0), corner(f, 1), corner(f, 2));
        if (hit && hit->distance >= t_min && hit->distance <= t_max) {
            found = true;
            limit = -std::numeric_limits<double>::infinity();
        }
    });
    return found;
}

void TriangleBvh::for_each_hit(const Ray& ray, double t_min, double t_max,
                               const std::function<void(const RayHit&)>& visit) const {
    double limit = t_max;
    traverse_ray(ray, t_min, limit, [&](int f) {
        auto hit = intersect_triangle(ray, corner(f, 0), corner(f, 1), corner(f, 2));
        if (hit && hit->distance >= t_min && hit->distance <= t_max) {
            hit->face = f;
            visit(*hit);
        }
    });
}

SurfacePoint TriangleBvh::closest_point(const Vec3d& q) const {
    SurfacePoint best;
    best.distance = std::numeric_limits<double>::infinity();
    if (nodes_.empty()) return best;
    double best_sq = std::numeric_limits<double>::infinity();
    std::pair<double, int> stack[128];
    int top = 0;
    stack[top++] = {nodes_[0].box.squared_distance(q), 0};
    while (top > 0) {
        const auto [bound, id] = stack[--top];
        if (bound > best_sq) continue;
        const Node& node = nodes_[id];
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = order_[i];
                const Vec3d p = closest_point_on_triangle(q, corner(f, 0), corner(f, 1), corner(f, 2));
                const double d = (p - q).squaredNorm();
                if (d < best_sq || (d == best_sq && f < best.face)) {
                    best_sq = d;
                    best.face = f;
                    best.point = p;
                }
            }
            continue;
        }
        const double dl = nodes_[node.left].box.squared_distance(q);
        const double dr = nodes_[node.right].box.squared_distance(q);
        if (dl <= dr) {
            if (dr <= best_sq) stack[top++] = {dr, node.right};
            if (dl <= best_sq) stack[top++] = {dl, node.left};
        } else {
            if (dl <= best_sq) stack[top++] = {dl, node.left};
            if (dr <= best_sq) stack[top++] = {dr, node.right};
        }
    }
    best.distance = std::sqrt(best_sq);
    return best;
}

std::optional<RayHit> ray_mesh_first_hit(const Ray& ray, const TriMesh& mesh, double t_min) {
    return TriangleBvh(mesh).first_hit(ray, t_min);
}

bool point_inside(const TriangleBvh& bvh, const Vec3d& p) {
    static const Vec3d kDirections[] = {Vec3d(0.5773, 0.5774, 0.5775), Vec3d(-0.3124, 0.8012, 0.5103),
                                        Vec3d(0.7071, -0.4107, -0.5757), Vec3d(-0.6011, -0.5503, 0.5796),
                                        Vec3d(0.1213, 0.2297, -0.9657)};
    int crossings = 0;
    for (const Vec3d& d : kDirections) {
        crossings = 0;
        bool grazing = false;
        bvh.for_each_hit(Ray(p, d), 0.0, std::numeric_limits<double>::infinity(), [&](const RayHit& h) {
            if (std::min({h.u, h.v, 1.0 - h.u - h.v}) < 1e-9 || h.distance < 1e-12) grazing = true;
            ++crossings;
        });
        if (!grazing) break;
    }
    return crossings % 2 == 1;
}

}  // namespace volfit
