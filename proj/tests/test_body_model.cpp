#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "volfit/body_model.hpp"
#include "volfit/errors.hpp"
#include "volfit/sampling.hpp"

using namespace volfit;

namespace {

const BodyTemplate& body() {
    static const BodyTemplate t = build_template(64);
    return t;
}

BodyState random_state(Rng& rng, double pose_scale = 0.4) {
    BodyState s;
    for (int i = 0; i < kNumShapeParams; ++i) s.shape(i) = 0.8 + 0.4 * uniform01(rng);
    for (int i = 0; i < kNumPoseParams; ++i) s.pose(i) = pose_scale * (2.0 * uniform01(rng) - 1.0);
    for (int i = 0; i < 3; ++i) {
        s.root_orient(i) = 2.0 * uniform01(rng) - 1.0;
        s.translation(i) = 2.0 * uniform01(rng) - 1.0;
    }
    return s;
}

ParamVector central_difference(const std::function<double(const BodyState&)>& f, const BodyState& s, double h) {
    ParamVector g;
    const ParamVector x = s.to_vector();
    for (int i = 0; i < kNumParams; ++i) {
        ParamVector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (f(BodyState::from_vector(xp)) - f(BodyState::from_vector(xm))) / (2.0 * h);
    }
    return g;
}

double segment_gap(const Vec3d& a0, const Vec3d& a1, const Vec3d& b0, const Vec3d& b1) {
    double best = 1e9;
    for (int i = 0; i <= 200; ++i)
        for (int j = 0; j <= 200; ++j)
            best = std::min(best, ((a0 + (a1 - a0) * (i / 200.0)) - (b0 + (b1 - b0) * (j / 200.0))).norm());
    return best;
}

}  // namespace

TEST_CASE("template is a watertight 1.70 m body with normalized two-bone weights") {
    const BodyTemplate& t = body();
    CHECK(t.mesh.watertight());
    CHECK(t.mesh.count_components() == 1);
    CHECK(t.mesh.signed_volume() > 0.0);
    const double height = t.mesh.vertices().col(2).maxCoeff() - t.mesh.vertices().col(2).minCoeff();
    CHECK(std::abs(height - 1.70) <= 0.05);
    const Eigen::MatrixXd w = t.dense_weights();
    CHECK(w.minCoeff() >= 0.0);
    CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
    CHECK(w.col(0).isZero(0.0));
    CHECK(!t.contact_vertices.empty());
    CHECK_THROWS_AS(build_template(32), ConfigError);
}

TEST_CASE("template construction is deterministic") {
    const BodyTemplate t2 = build_template(64);
    CHECK(t2.mesh.vertices() == body().mesh.vertices());
    CHECK(t2.mesh.faces() == body().mesh.faces());
    CHECK(t2.skin_weights == body().skin_weights);
}

TEST_CASE("self-penetration pairs are separated in the canonical pose") {
    for (const auto& pr : skeleton::self_penetration_pairs()) {
        const int a = pr[0], b = pr[1];
        const double gap = segment_gap(skeleton::canonical_joint(skeleton::kParent[a]), skeleton::canonical_joint(a),
                                       skeleton::canonical_joint(skeleton::kParent[b]), skeleton::canonical_joint(b));
        CHECK(gap > skeleton::bone_radius(a) + skeleton::bone_radius(b));
    }
}

TEST_CASE("forward kinematics identities") {
    const BodyTemplate& t = body();
    BodyState s;
    PosedBody p = forward(t, s);
    CHECK(p.vertices == t.mesh.vertices());
    CHECK(p.joints == t.canonical_joints);

    BodyState moved;
    moved.translation = Vec3d(1, 2, 3);
    const PosedBody q = forward(t, moved);
    CHECK((q.vertices.rowwise() - Eigen::RowVector3d(1, 2, 3) - p.vertices).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((q.joints.rowwise() - Eigen::RowVector3d(1, 2, 3) - p.joints).cwiseAbs().maxCoeff() <= 1e-12);

    // Rotation by (just under) pi about z through the root joint.
    BodyState turned;
    const double angle = M_PI - 1e-12;
    turned.root_orient = Vec3d(0, 0, angle);
    const PosedBody r = forward(t, turned);
    const Mat3d rz = Eigen::AngleAxisd(angle, Vec3d::UnitZ()).toRotationMatrix();
    const Points expected = p.vertices * rz.transpose();
    CHECK((r.vertices - expected).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((r.joints - p.joints * rz.transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rigid equivariance with posed limbs and translation") {
    const BodyTemplate& t = body();
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        BodyState s = random_state(rng);
        s.root_orient.setZero();
        const Vec3d t0 = s.translation;
        s.translation.setZero();
        const PosedBody base = forward(t, s);
        const Vec3d w(0.3 * trial - 0.6, 0.5, 0.2 * trial);
        s.root_orient = w;
        s.translation = t0;
        const PosedBody moved = forward(t, s);
        const Mat3d r = axis_angle_to_matrix<double>(w);
        const Points expected = (base.vertices * r.transpose()).rowwise() + t0.transpose();
        CHECK((moved.vertices - expected).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("skinned meshes stay finite with the template topology") {
    const BodyTemplate& t = body();
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        BodyState s = random_state(rng, 1.5);
        s.project();
        CHECK_NOTHROW(s.validate());
        const PosedBody p = forward(t, s);
        CHECK(p.vertices.allFinite());
        CHECK(p.vertices.rows() == t.mesh.num_vertices());
    }
}

TEST_CASE("state validation and axis-angle wrapping") {
    BodyState s;
    s.shape(3) = 2.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.shape(3) = 1.0;
    s.pose(4) = 4.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.project();
    CHECK_NOTHROW(s.validate());
    const Vec3d w(0, 0, 4.0);
    const Vec3d wrapped = wrap_axis_angle(w);
    CHECK(wrapped.norm() < M_PI);
    CHECK((axis_angle_to_matrix<double>(w) - axis_angle_to_matrix<double>(wrapped)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("small-angle rotation series is continuous") {
    const Vec3d a(1e-5, -2e-5, 3e-5);
    const Mat3d r = axis_angle_to_matrix<double>(a);
    const Mat3d ref = Eigen::AngleAxisd(a.norm(), a.normalized()).toRotationMatrix();
    CHECK((r - ref).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("gradient of the root joint height") {
    const BodyTemplate& t = body();
    Rng rng(3);
    const BodyState s = random_state(rng);
    const ParamVector g = parameter_gradient(t, s, [](const BodyState&, const PosedBody& p, BodyGradient& g) {
        g.joints(0, 2) = 1.0;
        return p.joints(0, 2);
    });
    CHECK(g.segment<3>(kTranslationOffset) == Vec3d(0, 0, 1));
    CHECK(g.segment<kNumKinematicParams>(kRootOrientOffset).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant functional has zero gradient") {
    const ParamVector g =
        parameter_gradient(body(), BodyState{}, [](const BodyState&, const PosedBody&, BodyGradient&) { return 4.0; });
    CHECK(g.isZero(0.0));
}

TEST_CASE("vertex distance gradient matches central differences") {
    const BodyTemplate& t = body();
    Rng rng(2024);
    const Vec3d target(0.3, -0.2, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
        const BodyState s = random_state(rng);
        const int vid = static_cast<int>(uniform01(rng) * t.num_vertices());
        const int jid = 1 + trial * 2;
        auto fn = [&](const BodyState&, const PosedBody& p, BodyGradient& g) {
            const Vec3d d = p.vertices.row(vid).transpose() - target;
            const Vec3d e = p.joints.row(jid).transpose() - target;
            g.vertices.row(vid) = 2.0 * d.transpose();
            g.joints.row(jid) = 2.0 * e.transpose();
            return d.squaredNorm() + e.squaredNorm();
        };
        const ParamVector g = parameter_gradient(t, s, fn);
        const ParamVector fd = central_difference(
            [&](const BodyState& x) {
                BodyGradient scratch = BodyGradient::zeros(static_cast<int>(t.num_vertices()));
                return fn(x, forward(t, x), scratch);
            },
            s, 1e-5);
        CHECK((g - fd).norm() / fd.norm() < 1e-4);
    }
}

TEST_CASE("template cache round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "volfit_template_test";
    std::filesystem::create_directories(dir);
    BodyTemplate t = body();
    t.pairs = InterpolationPairSet{{{0, 5}, {2, 7}}, 6};
    save_template(t, (dir / "t.ply").string(), (dir / "t.json").string());
    const BodyTemplate u = load_template((dir / "t.ply").string(), (dir / "t.json").string());
    CHECK(u.mesh.vertices() == t.mesh.vertices());
    CHECK(u.mesh.faces() == t.mesh.faces());
    CHECK(u.skin_bones == t.skin_bones);
    CHECK(u.skin_weights == t.skin_weights);
    CHECK(u.contact_vertices == t.contact_vertices);
    REQUIRE(u.pairs.has_value());
    CHECK(u.pairs->pairs == t.pairs->pairs);
    std::filesystem::remove_all(dir);
}
