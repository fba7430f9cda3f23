#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "volfit/errors.hpp"
#include "volfit/metrics.hpp"
#include "volfit/skeleton.hpp"

using namespace volfit;
using volfit::testing::shared_body;

namespace {

Points random_cloud(Rng& rng, int n) {
    Points p(n, 3);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) p(i, k) = standard_normal(rng);
    return p;
}

Mat3d rotation_xyz(double a, double b, double c) {
    return (Eigen::AngleAxisd(a, Vec3d::UnitX()) * Eigen::AngleAxisd(b, Vec3d::UnitY()) *
            Eigen::AngleAxisd(c, Vec3d::UnitZ()))
        .toRotationMatrix();
}

// Squared residual for a fixed rotation with the optimal scale and translation.
double residual_for(const Points& src, const Points& tgt, const Mat3d& r) {
    const Vec3d ms = src.colwise().mean().transpose(), mt = tgt.colwise().mean().transpose();
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < src.rows(); ++i) {
        const Vec3d x = r * (row3(src, i) - ms);
        num += x.dot(row3(tgt, i) - mt);
        den += x.squaredNorm();
    }
    const double s = num / den;
    double res = 0.0;
    for (Eigen::Index i = 0; i < src.rows(); ++i)
        res += (s * r * (row3(src, i) - ms) - (row3(tgt, i) - mt)).squaredNorm();
    return res;
}

// Coarse-to-fine exhaustive search over small Euler angles.
double grid_search_residual(const Points& src, const Points& tgt) {
    Vec3d center = Vec3d::Zero();
    double half = 0.5, best = std::numeric_limits<double>::infinity();
    for (int level = 0; level < 14; ++level) {
        Vec3d best_angles = center;
        const int n = 10;
        for (int i = -n; i <= n; ++i)
            for (int j = -n; j <= n; ++j)
                for (int k = -n; k <= n; ++k) {
                    const Vec3d a = center + half / n * Vec3d(i, j, k);
                    const double r = residual_for(src, tgt, rotation_xyz(a.x(), a.y(), a.z()));
                    if (r < best) {
                        best = r;
                        best_angles = a;
                    }
                }
        center = best_angles;
        half /= 4.0;
    }
    return best;
}

double brute_pm(const Points& scan, const Points& vertices) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < scan.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < vertices.rows(); ++j)
            best = std::min(best, (row3(scan, i) - row3(vertices, j)).norm());
        sum += best;
    }
    return sum / static_cast<double>(scan.rows());
}

}  // namespace

TEST_CASE("joint and vertex errors") {
    const BodyTemplate& body = *shared_body();
    Rng rng(1);
    const BodyState a = volfit::testing::perturbed(BodyState{}, rng, 0.3, 0.1, 0.05);
    CHECK(jpe_v2v(a, a, body).jpe == 0.0);
    CHECK(jpe_v2v(a, a, body).v2v == 0.0);

    BodyState moved = a;
    moved.translation += Vec3d(0.03, -0.04, 0.0);
    CHECK(jpe_v2v(moved, a, body).jpe == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(jpe_v2v(moved, a, body).v2v == doctest::Approx(0.05).epsilon(1e-12));

    const BodyState b = volfit::testing::perturbed(a, rng, 0.3, 0.1, 0.05);
    const PosedBody pa = forward(body, a), pb = forward(body, b);
    double j = 0.0, v = 0.0;
    for (int i = 0; i < skeleton::kNumJoints; ++i) j += (row3(pa.joints, i) - row3(pb.joints, i)).norm();
    for (Eigen::Index i = 0; i < pa.vertices.rows(); ++i) v += (row3(pa.vertices, i) - row3(pb.vertices, i)).norm();
    CHECK(jpe_v2v(a, b, body).jpe == doctest::Approx(j / skeleton::kNumJoints).epsilon(1e-12));
    CHECK(jpe_v2v(a, b, body).v2v == doctest::Approx(v / static_cast<double>(pa.vertices.rows())).epsilon(1e-12));
}

TEST_CASE("procrustes alignment") {
    Rng rng(2);
    SUBCASE("recovers a similarity") {
        const Points src = random_cloud(rng, 30);
        const Mat3d r = rotation_xyz(0.7, -1.1, 2.3);
        Similarity truth;
        truth.rotation = r;
        truth.scale = 1.7;
        truth.translation = Vec3d(0.5, -2.0, 3.0);
        const Points tgt = truth.apply(src);
        const Similarity s = procrustes_align(src, tgt);
        CHECK((s.apply(src) - tgt).rowwise().norm().maxCoeff() < 1e-9);
        CHECK(s.scale == doctest::Approx(1.7).epsilon(1e-12));
        CHECK(aligned_error(src, tgt) < 1e-9);
    }
    SUBCASE("identity") {
        const Points src = random_cloud(rng, 10);
        const Similarity s = procrustes_align(src, src);
        CHECK(s.rotation.isApprox(Mat3d::Identity(), 1e-12));
        CHECK(s.scale == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.translation.norm() < 1e-12);
    }
    SUBCASE("reflections are excluded") {
        const Points src = random_cloud(rng, 20);
        Points mirrored = src;
        mirrored.col(0) *= -1.0;
        const Similarity s = procrustes_align(src, mirrored);
        CHECK(s.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("rigid only") {
        const Points src = random_cloud(rng, 10);
        const Similarity s = procrustes_align(src, 2.0 * src, false);
        CHECK(s.scale == 1.0);
    }
    SUBCASE("grid-search oracle") {
        for (int trial = 0; trial < 5; ++trial) {
            const Points src = random_cloud(rng, 10);
            const Mat3d r = rotation_xyz(0.3 * standard_normal(rng), 0.3 * standard_normal(rng),
                                         0.3 * standard_normal(rng));
            Points tgt = (1.3 * src * r.transpose()).rowwise() + Vec3d(1, 2, 3).transpose();
            tgt += 0.05 * random_cloud(rng, 10);
            const Similarity s = procrustes_align(src, tgt);
            const double residual = (s.apply(src) - tgt).rowwise().squaredNorm().sum();
            CHECK(residual == doctest::Approx(grid_search_residual(src, tgt)).epsilon(1e-6));
        }
    }
    SUBCASE("degenerate input") {
        CHECK_THROWS_AS(procrustes_align(random_cloud(rng, 2), random_cloud(rng, 2)), DegenerateConfiguration);
        CHECK_THROWS_AS(procrustes_align(random_cloud(rng, 5), random_cloud(rng, 6)), DegenerateConfiguration);
        const Points same = Points::Ones(5, 3);
        CHECK_THROWS_AS(procrustes_align(same, random_cloud(rng, 5)), DegenerateConfiguration);
    }
}

TEST_CASE("non-collision ratios") {
    const TriMesh block = make_box(Vec3d::Zero(), Vec3d(0.5, 0.5, 0.5));
    const SdfGrid sdf = build_sdf_grid(block, 0.5, 0.02);
    SUBCASE("outside and inside") {
        const TriMesh far = make_icosphere(Vec3d(0, 0, 1.2), 0.2, 3);
        const TriMesh within = make_icosphere(Vec3d(0, 0, 0), 0.2, 3);
        CHECK(nc(far.vertices(), sdf) == 1.0);
        CHECK(vnc(far.vertices(), sdf) == 1.0);
        CHECK(nc(within.vertices(), sdf) == 0.0);
        CHECK(vnc(within.vertices(), sdf) == 0.0);
        CHECK(nc(Points(0, 3), sdf) == 1.0);
    }
    SUBCASE("half-submerged") {
        const TriMesh sphere = make_icosphere(Vec3d(0, 0, 0.503), 0.2, 4);
        CHECK(nc(sphere.vertices(), sdf) == doctest::Approx(0.5).epsilon(0.04));
    }
    SUBCASE("only strictly positive values count") {
        const SdfGrid zero = SdfGrid::from_function(Vec3d::Zero(), 0.1, Vec3i(3, 3, 3), [](const Vec3d&) { return 0.0; });
        CHECK(nc(Points::Constant(4, 3, 0.1), zero) == 0.0);
    }
    SUBCASE("rigid invariance") {
        const Scenario& sc = volfit::testing::scenario_with_tag("chair");
        const BodyTemplate& body = *shared_body();
        Rng rng(4);
        BodyState s = volfit::testing::perturbed(sc.gt_state, rng, 0.1, 0.05);
        const PosedBody posed = forward(body, s);
        const Points internal = internal_points(posed.vertices, *body.pairs);
        const SdfGrid grid = build_sdf_grid(sc.scene, 0.1, 0.02);

        const Mat3d r = Eigen::AngleAxisd(0.9, Vec3d(1, 2, 3).normalized()).toRotationMatrix();
        const Vec3d t(0.4, -0.3, 1.1);
        const auto move = [&](const Points& p) -> Points { return (p * r.transpose()).rowwise() + t.transpose(); };
        TriMesh moved_scene(move(sc.scene.vertices()), sc.scene.faces());
        const SdfGrid moved_grid = build_sdf_grid(moved_scene, 0.1, 0.02);
        CHECK(nc(move(posed.vertices), moved_grid) == doctest::Approx(nc(posed.vertices, grid)).epsilon(0.01));
        CHECK(vnc(move(internal), moved_grid) == doctest::Approx(vnc(internal, grid)).epsilon(0.01));
    }
}

TEST_CASE("plank through the torso versus hands on a table") {
    const BodyTemplate& body = *shared_body();
    const PosedBody posed = forward(body, BodyState{});
    const Points internal = internal_points(posed.vertices, *body.pairs);

    // Thin board in the frontal plane from the hips to above the neck.
    const Vec3d pelvis = row3(posed.joints, 0), neck = row3(posed.joints, 12);
    const TriMesh plank = make_box(0.5 * (pelvis + neck), Vec3d(0.2, 0.03, 0.5 * (neck - pelvis).norm() + 0.1));
    const SdfGrid plank_sdf = build_sdf_grid(plank, 0.3, 0.01);
    CHECK(nc(posed.vertices, plank_sdf) > 0.9);
    CHECK(vnc(internal, plank_sdf) < 0.85);

    // Table top pressed 1 cm into the underside of the right hand.
    const Vec3d hand = row3(posed.joints, 21);
    double lowest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < posed.vertices.rows(); ++i)
        if ((row3(posed.vertices, i) - hand).norm() < 0.12) lowest = std::min(lowest, posed.vertices(i, 2));
    const TriMesh table = make_box(Vec3d(hand.x(), hand.y(), lowest + 0.01 - 0.4), Vec3d(0.3, 0.3, 0.4));
    const SdfGrid table_sdf = build_sdf_grid(table, 0.3, 0.01);
    CHECK(nc(posed.vertices, table_sdf) > 0.95);
    CHECK(nc(posed.vertices, table_sdf) < 1.0);
    CHECK(vnc(internal, table_sdf) > 0.95);
}

TEST_CASE("partial matching") {
    const TriMesh sphere = make_icosphere(Vec3d(0.1, 0.2, 0.3), 0.5, 3);
    const Points& v = sphere.vertices();
    CHECK(pm(v, v).value() == 0.0);
    CHECK_FALSE(pm(Points(0, 3), v).has_value());

    const Points normals = vertex_normals(v, sphere.faces());
    const Points offset = v + 0.004 * normals;
    CHECK(pm(offset, v).value() == doctest::Approx(0.004).epsilon(1e-6));

    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const Points scan = 0.6 * random_cloud(rng, 40);
        const Points verts = 0.6 * random_cloud(rng, 60);
        CHECK(pm(scan, verts).value() == brute_pm(scan, verts));
    }
}

TEST_CASE("evaluation against ground truth") {
    const BodyTemplate& body = *shared_body();
    const Scenario& sc = volfit::testing::scenario_with_tag("control");
    const FitProblem problem = make_problem(shared_body(), sc, observe(sc, body));

    FitResult exact;
    exact.state = sc.gt_state;
    const FitReport r = evaluate(exact, sc, problem, 1.0);
    CHECK(r.jpe == 0.0);
    CHECK(r.v2v == 0.0);
    CHECK(r.p_jpe < 1e-9);
    CHECK(r.p_v2v < 1e-9);
    CHECK(r.nc == 1.0);
    CHECK(r.vnc == 1.0);
    REQUIRE(r.pm.has_value());
    CHECK(*r.pm < 0.02);
    CHECK(r.tag == "control");

    FitResult shifted;
    shifted.state = sc.gt_state;
    shifted.state.translation += Vec3d(0.0, 0.1, 0.0);
    const FitReport s = evaluate(shifted, sc, problem, 0.8);
    CHECK(s.jpe == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(s.v2v == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(s.p_jpe < 1e-9);
    CHECK(s.p_v2v < 1e-9);
    CHECK(s.alignment_consistent);
    CHECK(s.visible_ratio == 0.8);
}
