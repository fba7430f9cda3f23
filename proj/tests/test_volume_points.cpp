#include <doctest.h>

#include <cmath>

#include "volfit/errors.hpp"
#include "volfit/sdf.hpp"
#include "volfit/volume_points.hpp"

using namespace volfit;

namespace {

const TriMesh& sphere() {
    static const TriMesh m = make_icosphere(Vec3d::Zero(), 1.0, 3);
    return m;
}

double mean_edge_length(const TriMesh& m) {
    double total = 0.0;
    for (Eigen::Index f = 0; f < m.num_faces(); ++f)
        for (int k = 0; k < 3; ++k) total += (m.corner(f, k) - m.corner(f, (k + 1) % 3)).norm();
    return total / (3.0 * m.num_faces());
}

// Far intersection of the line camera -> v with the unit sphere.
Vec3d sphere_exit(const Vec3d& camera, const Vec3d& v) {
    const Vec3d d = (v - camera).normalized();
    const double b = camera.dot(d);
    const double c = camera.squaredNorm() - 1.0;
    return camera + (-b + std::sqrt(b * b - c)) * d;
}

}  // namespace

TEST_CASE("front vertices on a convex mesh follow normal visibility") {
    const TriMesh& m = sphere();
    const Vec3d camera(0, -3, 0);
    const std::vector<bool> front = front_vertices(m, camera);
    // The polyhedron sits inside the sphere, so vertices just behind the analytic
    // silhouette can still be seen; skip a band one edge length wide around it.
    const double band = mean_edge_length(m);
    int checked = 0, agree = 0;
    for (Eigen::Index i = 0; i < m.num_vertices(); ++i) {
        const Vec3d v = m.vertex(i);
        const double facing = v.normalized().dot((camera - v).normalized());
        if (std::abs(facing) < band) continue;
        ++checked;
        agree += (facing > 0) == front[static_cast<std::size_t>(i)];
    }
    CHECK(checked > 400);
    CHECK(agree == checked);
}

TEST_CASE("icosphere pairs land near the analytic exit point") {
    const TriMesh& m = sphere();
    const Vec3d camera(0, -3, 0);
    const InterpolationPairSet ps = compute_pairs(m, camera, 64);
    CHECK(ps.points_per_pair == 6);
    CHECK(ps.pairs.size() > 32);
    const double edge = mean_edge_length(m);
    for (const auto& pr : ps.pairs) {
        CHECK(pr[0] != pr[1]);
        const Vec3d exit = sphere_exit(camera, m.vertex(pr[0]));
        CHECK((m.vertex(pr[1]) - exit).norm() <= edge);
    }
    const Points pint = internal_points(m.vertices(), ps);
    CHECK(pint.rows() == 6 * static_cast<Eigen::Index>(ps.pairs.size()));
    CHECK(pint.rowwise().norm().maxCoeff() < 1.0);
}

TEST_CASE("single front sample yields at most one pair") {
    const InterpolationPairSet ps = compute_pairs(sphere(), Vec3d(0, -3, 0), 1);
    CHECK(ps.pairs.size() <= 1);
    CHECK_THROWS_AS(compute_pairs(sphere(), Vec3d(0, -3, 0), 0), ConfigError);
}

TEST_CASE("internal points interpolate at k/7") {
    Points v(2, 3);
    v << 0, 0, 0, 0, 0, 0.7;
    InterpolationPairSet ps{{{0, 1}}, 6};
    const Points p = internal_points(v, ps);
    REQUIRE(p.rows() == 6);
    for (int k = 0; k < 6; ++k) CHECK((p.row(k) - Eigen::RowVector3d(0, 0, 0.1 * (k + 1))).norm() < 1e-15);

    Points same(2, 3);
    same << 1, 2, 3, 1, 2, 3;
    const Points q = internal_points(same, ps);
    for (int k = 0; k < 6; ++k) CHECK(q.row(k) == Eigen::RowVector3d(1, 2, 3));
}

TEST_CASE("internal points are linear and the adjoint matches") {
    Points v1 = Points::Random(10, 3), v2 = Points::Random(10, 3);
    InterpolationPairSet ps{{{0, 9}, {3, 4}, {7, 2}}, 6};
    const double a = 0.5, b = -2.0;  // exactly representable scaling
    const Points lhs = internal_points(a * v1 + b * v2, ps);
    const Points rhs = a * internal_points(v1, ps) + b * internal_points(v2, ps);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-14);

    const Points g = Points::Random(18, 3);
    Points gv = Points::Zero(10, 3);
    internal_points_backward(g, ps, gv);
    // <g, A v> == <A^T g, v>
    const double lhs_dot = (g.array() * internal_points(v1, ps).array()).sum();
    const double rhs_dot = (gv.array() * v1.array()).sum();
    CHECK(std::abs(lhs_dot - rhs_dot) < 1e-12);
}

TEST_CASE("template pairs are deterministic and mostly interior") {
    const BodyTemplate t = build_template(64);
    const InterpolationPairSet a = compute_pairs(t, 256);
    const InterpolationPairSet b = compute_pairs(t, 256);
    CHECK(a.pairs == b.pairs);
    CHECK(a.pairs.size() > 128);
    const Points pint = internal_points(t.mesh.vertices(), a);
    const SdfGrid sdf = build_sdf_grid(t.mesh, 0.05, 0.01);
    int inside = 0;
    for (Eigen::Index i = 0; i < pint.rows(); ++i) inside += sdf.sample(pint.row(i).transpose()) < 0.0;
    MESSAGE("pairs " << a.pairs.size() << " inside " << static_cast<double>(inside) / pint.rows());
    CHECK(static_cast<double>(inside) / pint.rows() > 0.95);
}
