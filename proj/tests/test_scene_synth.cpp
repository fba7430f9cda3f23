#include <doctest.h>

#include <cmath>

#include "volfit/bvh.hpp"
#include "volfit/errors.hpp"
#include "volfit/sampling.hpp"
#include "volfit/scene_synth.hpp"
#include "volfit/volume_points.hpp"

using namespace volfit;

namespace {

const BodyTemplate& body() {
    static const BodyTemplate t = [] {
        BodyTemplate b = build_template(64);
        b.pairs = compute_pairs(b);
        return b;
    }();
    return t;
}

const std::vector<Scenario>& suite() {
    static const std::vector<Scenario> s = scenario_suite(body(), 7);
    return s;
}

TriMesh standing_body(const Vec3d& offset) {
    BodyState s;
    s.translation = offset;
    return posed_mesh(body(), forward(body(), s));
}

double cross2(const Vec2d& a, const Vec2d& b) { return a.x() * b.y() - a.y() * b.x(); }

// Pixels whose centre falls inside some projected triangle (silhouette area).
int rasterized_silhouette(const TriMesh& mesh, const Camera& cam) {
    std::vector<std::uint8_t> cover(static_cast<std::size_t>(cam.width) * cam.height, 0);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        Vec2d p[3];
        for (int k = 0; k < 3; ++k) p[k] = *cam.project(mesh.corner(f, k));
        const double area = cross2(p[1] - p[0], p[2] - p[0]);
        if (area == 0.0) continue;
        const int u0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].x(), p[1].x(), p[2].x()}))));
        const int u1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({p[0].x(), p[1].x(), p[2].x()}))));
        const int v0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].y(), p[1].y(), p[2].y()}))));
        const int v1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({p[0].y(), p[1].y(), p[2].y()}))));
        for (int v = v0; v <= v1; ++v)
            for (int u = u0; u <= u1; ++u) {
                const Vec2d q(u, v);
                const double w0 = cross2(p[1] - p[0], q - p[0]) / area;
                const double w1 = cross2(p[2] - p[1], q - p[1]) / area;
                const double w2 = cross2(p[0] - p[2], q - p[2]) / area;
                if (w0 >= 0 && w1 >= 0 && w2 >= 0) cover[static_cast<std::size_t>(v) * cam.width + u] = 1;
            }
    }
    int n = 0;
    for (auto c : cover) n += c;
    return n;
}

}  // namespace

TEST_CASE("camera projection and back-projection agree") {
    const Camera cam = Camera::look_at(Vec3d(0.3, -2.5, 1.2), Vec3d(0, 0, 0.9));
    CHECK_NOTHROW(cam.validate());
    CHECK((cam.rotation.transpose() * cam.rotation - Mat3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(cam.rotation.determinant() == doctest::Approx(1.0));
    const Vec3d p(0.1, 0.2, 1.0);
    const Vec2d px = *cam.project(p);
    const Vec3d back = cam.back_project(px.x(), px.y(), cam.to_camera(p).z());
    CHECK((back - p).norm() < 1e-12);
    CHECK_FALSE(cam.project(Vec3d(0.3, -4.0, 1.2)).has_value());
    Camera bad = cam;
    bad.cx = 640.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scene construction") {
    const TriMesh unit = build_scene({Primitive::box("cube", Vec3d::Constant(-0.5), Vec3d::Constant(0.5))});
    CHECK(unit.num_faces() == 12);
    CHECK(unit.watertight());

    const SceneSpec spec = {Primitive::box("floor", Vec3d(-1.5, -1.5, -0.1), Vec3d(1.5, 1.5, 0.0)),
                            Primitive::box("table", Vec3d(-0.5, -0.4, 0.001), Vec3d(0.5, 0.4, 0.75))};
    const TriMesh scene = build_scene(spec, true);
    CHECK(scene.watertight());
    CHECK(scene.count_components() == 2);
    const Vec3d above_top(0.0, 0.0, 0.76);
    CHECK(scene_sdf(spec, above_top) == doctest::Approx(0.01).epsilon(1e-12));
    const SdfGrid grid = build_sdf_grid(scene, 0.1, 0.02);
    CHECK(std::abs(grid.sample(above_top) - 0.01) < 0.02);
    CHECK(grid.sample(above_top) > 0.0);

    const SceneSpec overlapping = {Primitive::box("a", Vec3d::Zero(), Vec3d::Ones()),
                                   Primitive::box("b", Vec3d::Constant(0.5), Vec3d::Constant(1.5))};
    CHECK_THROWS_AS(build_scene(overlapping, true), OverlappingPrimitives);
    CHECK_NOTHROW(build_scene(overlapping, false));

    const Primitive cyl = Primitive::cylinder("post", Vec3d(0, 0, 0), 0.1, 1.0);
    CHECK(cyl.sdf(Vec3d(0.3, 0, 0.5)) == doctest::Approx(0.2));
    CHECK(cyl.sdf(Vec3d(0, 0, 0.5)) == doctest::Approx(-0.1));
    CHECK(cyl.mesh().watertight());
}

TEST_CASE("analytic scene grid matches mesh-based SDF") {
    const SceneSpec spec = {Primitive::box("floor", Vec3d(-1, -1, -0.1), Vec3d(1, 1, 0.0)),
                            Primitive::box("seat", Vec3d(-0.3, -0.2, 0.001), Vec3d(0.3, 0.2, 0.45))};
    Aabb region;
    region.extend(Vec3d(-1.2, -1.2, -0.3));
    region.extend(Vec3d(1.2, 1.2, 0.8));
    const SdfGrid analytic = scene_sdf_grid(spec, region, 0.02);
    const SdfGrid meshed = build_sdf_grid(build_scene(spec), 0.2, 0.02);
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const Vec3d p(uniform01(rng) * 2.0 - 1.0, uniform01(rng) * 2.0 - 1.0, uniform01(rng) * 0.9 - 0.2);
        CHECK(std::abs(analytic.sample(p) - meshed.sample(p)) < 0.02);
    }
}

TEST_CASE("unoccluded render: mask, depth and scanned points") {
    const TriMesh person = standing_body(Vec3d(0, 0, 0.95));
    const SceneSpec spec = {Primitive::box("floor", Vec3d(-1.5, -1.5, -0.1), Vec3d(1.5, 1.5, 0.0))};
    const TriMesh scene = build_scene(spec);
    const Camera cam = Camera::look_at(Vec3d(0.0, -2.6, 1.1), Vec3d(0.0, 0.0, 0.9));
    const Observation obs = render_observation(scene, person, cam);

    const int silhouette = rasterized_silhouette(person, cam);
    CHECK(std::abs(obs.mask_count() - silhouette) <= 0.05 * silhouette);
    CHECK_FALSE(obs.empty_mask);
    CHECK(obs.scanned_body.rows() == 1024);
    CHECK(obs.scene_points.rows() == 4096);

    const TriangleBvh scene_bvh(scene), body_bvh(person);
    int mismatches = 0;
    for (int v = 0; v < cam.height; v += 3) {
        for (int u = 0; u < cam.width; u += 3) {
            const float d = obs.depth_at(u, v);
            if (d == 0.0f) continue;
            // Re-render the back-projected point: the first hit must be at the same depth.
            const Vec3d p = cam.back_project(u, v, d);
            const Ray ray(cam.position, p - cam.position);
            auto s = scene_bvh.first_hit(ray);
            auto b = body_bvh.first_hit(ray);
            const double t = std::min(s ? s->distance : 1e9, b ? b->distance : 1e9);
            if (std::abs(t * ray.direction.dot(cam.forward()) - d) > 1e-6) ++mismatches;
            if (obs.mask_at(u, v) && s && (!b || s->distance <= b->distance)) ++mismatches;
        }
    }
    CHECK(mismatches == 0);

    for (Eigen::Index i = 0; i < obs.scanned_body.rows(); ++i) {
        const Vec3d p = obs.scanned_body.row(i).transpose();
        CHECK(body_bvh.closest_point(p).distance < 1e-6);
        const Vec3d dir = (p - cam.position).normalized();
        const double reach = (p - cam.position).norm() - 1e-3;
        CHECK_FALSE(scene_bvh.any_hit(Ray(cam.position, dir), 0.0, reach));
        CHECK_FALSE(body_bvh.any_hit(Ray(cam.position, dir), 0.0, reach));
        const Vec2d px = *cam.project(p);
        CHECK(obs.mask_at(static_cast<int>(std::lround(px.x())), static_cast<int>(std::lround(px.y()))));
    }
}

TEST_CASE("a wall hides the body completely") {
    const TriMesh person = standing_body(Vec3d(0, 0, 0.95));
    const SceneSpec spec = {Primitive::box("wall", Vec3d(-3, -1.2, -1), Vec3d(3, -1.0, 4))};
    const Camera cam = Camera::look_at(Vec3d(0.0, -2.6, 1.1), Vec3d(0.0, 0.0, 0.9));
    const Observation obs = render_observation(build_scene(spec), person, cam);
    CHECK(obs.mask_count() == 0);
    CHECK(obs.empty_mask);
    CHECK(obs.scanned_body.rows() == 0);
}

TEST_CASE("depth noise option perturbs depth only where there is a return") {
    const TriMesh person = standing_body(Vec3d(0, 0, 0.95));
    const Camera cam = Camera::look_at(Vec3d(0.0, -2.6, 1.1), Vec3d(0.0, 0.0, 0.9));
    RenderOptions noisy;
    noisy.depth_noise_std = 0.005;
    const TriMesh scene = build_scene({Primitive::box("floor", Vec3d(-1.5, -1.5, -0.1), Vec3d(1.5, 1.5, 0.0))});
    const Observation clean = render_observation(scene, person, cam);
    const Observation rough = render_observation(scene, person, cam, noisy);
    double sq = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < clean.depth.size(); ++i) {
        CHECK((clean.depth[i] == 0.0f) == (rough.depth[i] == 0.0f));
        if (clean.depth[i] > 0.0f) {
            sq += std::pow(static_cast<double>(rough.depth[i]) - clean.depth[i], 2);
            ++n;
        }
    }
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.005).epsilon(0.05));
}

TEST_CASE("scenario suite is collision-free and deterministic") {
    const auto& s = suite();
    CHECK(s.size() >= 20);
    for (const auto& sc : s) {
        CHECK(sc.scene.watertight());
        const SdfGrid sdf = scenario_sdf(sc, body());
        const PosedBody gt = forward(body(), sc.gt_state);
        int bad = 0;
        for (Eigen::Index i = 0; i < gt.vertices.rows(); ++i) bad += sdf.sample(gt.vertices.row(i).transpose()) <= 0.0;
        const Points pint = internal_points(gt.vertices, *body().pairs);
        for (Eigen::Index i = 0; i < pint.rows(); ++i) bad += sdf.sample(pint.row(i).transpose()) <= 0.0;
        CHECK_MESSAGE(bad == 0, sc.name);
        CHECK_NOTHROW(sc.gt_state.validate());
    }
    const std::vector<Scenario> again = scenario_suite(body(), 7);
    const std::vector<Scenario> other = scenario_suite(body(), 8);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(again[i].gt_state.to_vector() == s[i].gt_state.to_vector());
        CHECK(again[i].scene.vertices() == s[i].scene.vertices());
        CHECK(again[i].camera.position == s[i].camera.position);
        CHECK(other[i].gt_state.to_vector() != s[i].gt_state.to_vector());
    }
}

TEST_CASE("poses without room for the seat are redrawn") {
    // These seeds first draw a chair / sofa pose whose thighs leave a seat of zero depth.
    for (const auto& [tag, seed] : {std::pair<std::string, int>{"chair", 11}, {"sofa", 21}}) {
        const Scenario sc = make_scenario(body(), tag, 1, static_cast<std::uint64_t>(seed));
        CHECK(sc.scene.watertight());
        CHECK(sc.name == tag + "_1");
    }
}

TEST_CASE("sitting booth hides most of the body") {
    for (const auto& sc : suite()) {
        if (sc.tag != "sitting_booth") continue;
        const TriMesh gt = posed_mesh(body(), forward(body(), sc.gt_state));
        CHECK(visible_ratio(sc.scene, gt, sc.camera) < 0.6);
    }
}

TEST_CASE("joint targets trust only visible joints") {
    const Scenario& booth = suite().front();
    const Observation obs = observe(booth, body());
    CHECK(obs.joints2d.rows() == skeleton::kNumJoints);
    CHECK(obs.joint_confidence.sum() < skeleton::kNumJoints);
    // The head is above the table; the ankles are behind it.
    CHECK(obs.joint_confidence(15) == 1.0);
    CHECK(obs.joint_confidence(7) == 0.0);
    const Observation again = observe(booth, body());
    CHECK(again.scanned_body == obs.scanned_body);
    CHECK(again.depth == obs.depth);
}
