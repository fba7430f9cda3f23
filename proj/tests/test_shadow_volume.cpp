#include <doctest.h>

#include <cmath>
#include <limits>

#include "volfit/errors.hpp"
#include "volfit/scene_synth.hpp"
#include "volfit/shadow_volume.hpp"

using namespace volfit;

namespace {

Points single(const Vec3d& p) { return p.transpose(); }

const BodyTemplate& body() {
    static const BodyTemplate t = build_template(64);
    return t;
}

// Nearest scene hit beyond the start point by scanning every triangle.
double exhaustive_distance(const TriMesh& scene, const Ray& ray) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index f = 0; f < scene.num_faces(); ++f)
        if (const auto hit = intersect_triangle(ray, scene.corner(f, 0), scene.corner(f, 1), scene.corner(f, 2)))
            if (hit->distance >= 1e-6 && hit->distance < best) best = hit->distance;
    return best;
}

}  // namespace

TEST_CASE("single-ray examples") {
    const Vec3d camera = Vec3d::Zero();
    const Points ps = single(Vec3d(0, 0, 1));
    SUBCASE("no scene") {
        const TsvPoints tsv = compute_tsv(camera, ps, TriMesh());
        REQUIRE(tsv.size() == 10);
        for (int k = 0; k < 10; ++k) {
            CHECK(tsv.points.row(k).transpose().isApprox(Vec3d(0, 0, 1.0 + 0.01 * (k + 1)), 1e-12));
            CHECK(tsv.source[static_cast<std::size_t>(k)] == 0);
        }
    }
    SUBCASE("wall at z = 1.05") {
        const TriMesh wall = make_box(Vec3d(0, 0, 1.25), Vec3d(1, 1, 0.2));
        const TsvPoints tsv = compute_tsv(camera, ps, wall);
        REQUIRE(tsv.size() == 5);
        CHECK(tsv.points(4, 2) == doctest::Approx(1.05));
    }
    SUBCASE("a blocked ray contributes nothing") {
        const TriMesh wall = make_box(Vec3d(0, 0, 1.2045), Vec3d(1, 1, 0.2));
        CHECK(compute_tsv(camera, ps, wall).size() == 0);
    }
    SUBCASE("configuration") {
        CHECK_THROWS_AS(compute_tsv(camera, ps, TriMesh(), TsvConfig{0.1, 0.0}), ConfigError);
        CHECK_THROWS_AS(compute_tsv(camera, ps, TriMesh(), TsvConfig{0.01, 0.1}), ConfigError);
        CHECK_THROWS_AS(compute_tsv(Vec3d(0, 0, 1), ps, TriMesh()), DegenerateConfiguration);
        CHECK(compute_tsv(camera, ps, TriMesh(), TsvConfig{0.05, 0.02}).size() == 2);
    }
}

TEST_CASE("scenario rays match the exhaustive intersection oracle") {
    const std::vector<Scenario> suite = scenario_suite(body(), 7);
    RenderOptions opts;
    opts.body_points = 1024;
    const TsvConfig cfg;
    // Use the scenario whose scene cuts the most shadow rays short.
    const Scenario* chosen = nullptr;
    Observation obs;
    std::size_t most = 0;
    for (const auto& s : suite) {
        Observation o = observe(s, body(), opts);
        const TsvPoints t = compute_tsv(o.camera.position, o.scanned_body, s.scene, cfg);
        const std::size_t missing = 10 * static_cast<std::size_t>(o.scanned_body.rows()) - t.source.size();
        if (!chosen || missing > most) {
            chosen = &s;
            obs = std::move(o);
            most = missing;
        }
    }
    REQUIRE(obs.scanned_body.rows() == 1024);
    const TsvPoints tsv = compute_tsv(obs.camera.position, obs.scanned_body, chosen->scene, cfg);

    std::vector<int> counts(1024, 0);
    for (int s : tsv.source) ++counts[static_cast<std::size_t>(s)];
    int truncated = 0;
    Eigen::Index row = 0;
    for (int i = 0; i < 1024; ++i) {
        const Vec3d ps = obs.scanned_body.row(i).transpose();
        const Ray ray(ps, ps - obs.camera.position);
        const double di = exhaustive_distance(chosen->scene, ray);
        const double len = std::min(cfg.max_length, di);
        truncated += di < cfg.max_length;
        CHECK(counts[static_cast<std::size_t>(i)] == static_cast<int>(std::floor(len / cfg.interval + 1e-9)));
        for (int k = 0; k < counts[static_cast<std::size_t>(i)]; ++k, ++row) {
            CHECK(tsv.source[static_cast<std::size_t>(row)] == i);
            const Vec3d d = tsv.points.row(row).transpose() - ps;
            const double along = d.dot(ray.direction);
            CHECK(along > 0.0);
            CHECK(along <= len + 1e-12);
            CHECK(d.cross(ray.direction).norm() < 1e-9);
        }
    }
    CHECK(row == tsv.size());
    CHECK(tsv.size() <= 1024 * 10);
    CHECK(truncated > 0);

    // Independent of the body state: only P_b, the camera and the scene matter.
    const TsvPoints again = compute_tsv(obs.camera.position, obs.scanned_body, TriangleBvh(chosen->scene), cfg);
    CHECK(again.points == tsv.points);
    CHECK(again.source == tsv.source);
}
