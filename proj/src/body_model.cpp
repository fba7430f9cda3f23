#include "volfit/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "volfit/errors.hpp"
#include "volfit/marching_cubes.hpp"
#include "volfit/parallel.hpp"
#include "volfit/ply.hpp"

namespace volfit {

using json = nlohmann::json;

ParamVector BodyState::to_vector() const {
    ParamVector v;
    v.segment<3>(kTranslationOffset) = translation;
    v.segment<3>(kRootOrientOffset) = root_orient;
    v.segment<kNumPoseParams>(kPoseOffset) = pose;
    v.segment<kNumShapeParams>(kShapeOffset) = shape;
    return v;
}

BodyState BodyState::from_vector(const ParamVector& v) {
    BodyState s;
    s.translation = v.segment<3>(kTranslationOffset);
    s.root_orient = v.segment<3>(kRootOrientOffset);
    s.pose = v.segment<kNumPoseParams>(kPoseOffset);
    s.shape = v.segment<kNumShapeParams>(kShapeOffset);
    return s;
}

void BodyState::validate() const {
    if (!to_vector().allFinite()) throw ConfigError("body state contains non-finite values");
    for (int i = 0; i < kNumShapeParams; ++i)
        if (shape(i) < kMinShapeScale || shape(i) > kMaxShapeScale)
            throw ConfigError("shape scale " + std::to_string(i) + " outside [0.5, 2]");
    if (root_orient.norm() >= M_PI) throw ConfigError("root orientation magnitude must be below pi");
    for (int j = 0; j < skeleton::kNumBones; ++j)
        if (pose.segment<3>(3 * j).norm() >= M_PI)
            throw ConfigError("joint rotation magnitude must be below pi");
}

Vec3d wrap_axis_angle(const Vec3d& w) {
    const double th = w.norm();
    constexpr double kLimit = M_PI - 1e-6;
    if (th <= kLimit) return w;
    // Same rotation about the opposite axis: angle th - 2 pi k mapped into (-pi, pi].
    double wrapped = std::remainder(th, 2.0 * M_PI);
    Vec3d out = w * (wrapped / th);
    const double n = out.norm();
    if (n > kLimit) out *= kLimit / n;
    return out;
}

void BodyState::project() {
    shape = shape.cwiseMax(kMinShapeScale).cwiseMin(kMaxShapeScale);
    root_orient = wrap_axis_angle(root_orient);
    for (int j = 0; j < skeleton::kNumBones; ++j) pose.segment<3>(3 * j) = wrap_axis_angle(pose.segment<3>(3 * j));
}

KinematicVector<double> kinematic_vector(const BodyState& s) {
    KinematicVector<double> q;
    q.segment<3>(0) = s.root_orient;
    q.segment<kNumPoseParams>(3) = s.pose;
    q.segment<kNumShapeParams>(3 + kNumPoseParams) = s.shape;
    return q;
}

Rig<double> pose_rig(const BodyState& s) { return pose_rig<double>(kinematic_vector(s)); }

Rig<Jet> pose_rig_jet(const BodyState& s) {
    const KinematicVector<double> q = kinematic_vector(s);
    KinematicVector<Jet> qj;
    for (int i = 0; i < kNumKinematicParams; ++i) qj(i) = Jet(q(i), kNumKinematicParams, i);
    return pose_rig<Jet>(qj);
}

namespace {

Rig<double> rig_values(const Rig<Jet>& r) {
    Rig<double> out;
    for (int j = 0; j < skeleton::kNumJoints; ++j) {
        for (int a = 0; a < 3; ++a) {
            out.offset[j](a) = r.offset[j](a).value();
            out.joints[j](a) = r.joints[j](a).value();
            for (int b = 0; b < 3; ++b) {
                out.linear[j](a, b) = r.linear[j](a, b).value();
                out.rotation[j](a, b) = r.rotation[j](a, b).value();
            }
        }
    }
    return out;
}

double segment_distance(const Vec3d& p, const Vec3d& a, const Vec3d& b) {
    const Vec3d ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

double capsule_distance(const Vec3d& p, int bone) {
    const int parent = skeleton::kParent[bone];
    return segment_distance(p, skeleton::canonical_joint(parent), skeleton::canonical_joint(bone)) -
           skeleton::bone_radius(bone);
}

double capsule_union(const Vec3d& p) {
    double d = std::numeric_limits<double>::infinity();
    for (int b = 1; b < skeleton::kNumJoints; ++b) d = std::min(d, capsule_distance(p, b));
    return d;
}

constexpr double kSkinningEpsilon = 0.02;

IndexList contact_vertices(const Points& v, const Eigen::Matrix<int, Eigen::Dynamic, 2, Eigen::RowMajor>& bones) {
    const double min_z = v.col(2).minCoeff();
    IndexList out;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const Vec3d p = v.row(i).transpose();
        const int b = bones(i, 0);
        const bool sole = (b == 7 || b == 8 || b == 10 || b == 11) && p.z() < min_z + 0.025;
        const bool glute = (b <= 5 && b != 0) && p.y() > 0.04 && p.z() > -0.25 && p.z() < 0.02;
        const bool back = (b == 6 || b == 9) && p.y() > 0.06;
        const bool palm = (b == 20 || b == 21) && (p - skeleton::canonical_joint(b)).norm() < 0.06;
        if (sole || glute || back || palm) out.push_back(static_cast<int>(i));
    }
    return out;
}

}  // namespace

Eigen::MatrixXd BodyTemplate::dense_weights() const {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(skin_bones.rows(), skeleton::kNumJoints);
    for (Eigen::Index i = 0; i < skin_bones.rows(); ++i)
        for (int k = 0; k < 2; ++k) w(i, skin_bones(i, k)) += skin_weights(i, k);
    return w;
}

BodyTemplate build_template(int resolution) {
    if (resolution < 48) throw ConfigError("template resolution must be at least 48");
    Aabb box;
    for (int b = 1; b < skeleton::kNumJoints; ++b) {
        const double r = skeleton::bone_radius(b);
        for (int j : {b, skeleton::kParent[b]}) {
            box.extend(skeleton::canonical_joint(j) + Vec3d::Constant(r));
            box.extend(skeleton::canonical_joint(j) - Vec3d::Constant(r));
        }
    }
    const double voxel = box.extent().z() / resolution;
    const Vec3d origin = box.min - Vec3d::Constant(2.0 * voxel);
    const Vec3i dims = ((box.extent() / voxel).array().ceil().cast<int>() + 5).matrix();
    const SdfGrid field = SdfGrid::from_function(origin, voxel, dims, capsule_union);

    BodyTemplate t;
    // Round to float so the PLY cache reloads bit-identical vertices.
    const TriMesh raw = marching_cubes(field, 0.0);
    t.mesh = TriMesh(raw.vertices().cast<float>().cast<double>(), raw.faces());
    t.resolution = resolution;
    const Eigen::Index n = t.mesh.num_vertices();
    t.skin_bones.resize(n, 2);
    t.skin_weights.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3d p = t.mesh.vertex(i);
        std::array<std::pair<double, int>, skeleton::kNumBones> d;
        for (int b = 1; b < skeleton::kNumJoints; ++b) d[b - 1] = {std::max(capsule_distance(p, b), 0.0), b};
        std::partial_sort(d.begin(), d.begin() + 2, d.end());
        const double w0 = 1.0 / std::pow(d[0].first + kSkinningEpsilon, 2);
        const double w1 = 1.0 / std::pow(d[1].first + kSkinningEpsilon, 2);
        t.skin_bones(i, 0) = d[0].second;
        t.skin_bones(i, 1) = d[1].second;
        t.skin_weights(i, 0) = w0 / (w0 + w1);
        t.skin_weights(i, 1) = 1.0 - t.skin_weights(i, 0);
    }
    t.canonical_joints.resize(skeleton::kNumJoints, 3);
    for (int j = 0; j < skeleton::kNumJoints; ++j) t.canonical_joints.row(j) = skeleton::canonical_joint(j).transpose();
    t.contact_vertices = contact_vertices(t.mesh.vertices(), t.skin_bones);
    return t;
}

void save_template(const BodyTemplate& t, const std::string& ply_path, const std::string& json_path) {
    write_mesh_ply(ply_path, t.mesh);
    json j;
    j["resolution"] = t.resolution;
    json bones = json::array(), weights = json::array();
    for (Eigen::Index i = 0; i < t.skin_bones.rows(); ++i) {
        bones.push_back({t.skin_bones(i, 0), t.skin_bones(i, 1)});
        weights.push_back({t.skin_weights(i, 0), t.skin_weights(i, 1)});
    }
    j["bones"] = bones;
    j["weights"] = weights;
    j["contact_vertices"] = t.contact_vertices;
    if (t.pairs) {
        j["pairs"] = t.pairs->pairs;
        j["points_per_pair"] = t.pairs->points_per_pair;
    }
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write " + json_path);
    out << j.dump() << "\n";
}

BodyTemplate load_template(const std::string& ply_path, const std::string& json_path) {
    BodyTemplate t;
    t.mesh = read_mesh_ply(ply_path);
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot read " + json_path);
    json j;
    try {
        j = json::parse(in);
        t.resolution = j.at("resolution").get<int>();
        const auto& bones = j.at("bones");
        const auto& weights = j.at("weights");
        const Eigen::Index n = t.mesh.num_vertices();
        if (static_cast<Eigen::Index>(bones.size()) != n || static_cast<Eigen::Index>(weights.size()) != n)
            throw IoError("template weights do not match the mesh");
        t.skin_bones.resize(n, 2);
        t.skin_weights.resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int k = 0; k < 2; ++k) {
                t.skin_bones(i, k) = bones[i][k].get<int>();
                t.skin_weights(i, k) = weights[i][k].get<double>();
                if (t.skin_bones(i, k) < 1 || t.skin_bones(i, k) >= skeleton::kNumJoints)
                    throw IoError("template bone index out of range");
            }
        }
        t.contact_vertices = j.at("contact_vertices").get<IndexList>();
        if (j.contains("pairs")) {
            InterpolationPairSet ps;
            ps.pairs = j["pairs"].get<std::vector<std::array<int, 2>>>();
            ps.points_per_pair = j.value("points_per_pair", 6);
            t.pairs = ps;
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed template sidecar: ") + e.what());
    }
    t.canonical_joints.resize(skeleton::kNumJoints, 3);
    for (int jj = 0; jj < skeleton::kNumJoints; ++jj)
        t.canonical_joints.row(jj) = skeleton::canonical_joint(jj).transpose();
    return t;
}

PosedBody forward(const BodyTemplate& t, const BodyState& s) { return forward(t, s, pose_rig(s)); }

PosedBody forward(const BodyTemplate& t, const BodyState& s, const Rig<double>& rig) {
    PosedBody out;
    const Points& v0 = t.mesh.vertices();
    const Eigen::Index n = v0.rows();
    out.vertices.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3d x0 = v0.row(i).transpose();
        const int b0 = t.skin_bones(i, 0), b1 = t.skin_bones(i, 1);
        const double w0 = t.skin_weights(i, 0), w1 = t.skin_weights(i, 1);
        const Vec3d x = w0 * (rig.linear[b0] * x0 + rig.offset[b0]) + w1 * (rig.linear[b1] * x0 + rig.offset[b1]);
        out.vertices.row(i) = (x + s.translation).transpose();
    }
    out.joints.resize(skeleton::kNumJoints, 3);
    for (int j = 0; j < skeleton::kNumJoints; ++j) out.joints.row(j) = (rig.joints[j] + s.translation).transpose();
    return out;
}

TriMesh posed_mesh(const BodyTemplate& t, const PosedBody& body) { return TriMesh(body.vertices, t.mesh.faces()); }

BodyGradient BodyGradient::zeros(int num_vertices) {
    BodyGradient g;
    g.vertices = Points::Zero(num_vertices, 3);
    g.joints = Points::Zero(skeleton::kNumJoints, 3);
    return g;
}

ParamVector backpropagate(const BodyTemplate& t, const Rig<Jet>& rig, const BodyGradient& g) {
    std::array<Mat3d, skeleton::kNumJoints> g_lin;
    std::array<Vec3d, skeleton::kNumJoints> g_off;
    for (int j = 0; j < skeleton::kNumJoints; ++j) {
        g_lin[j].setZero();
        g_off[j].setZero();
    }
    const Points& v0 = t.mesh.vertices();
    Vec3d g_trans = Vec3d::Zero();
    for (Eigen::Index i = 0; i < v0.rows(); ++i) {
        const Vec3d gv = g.vertices.row(i).transpose();
        if (gv.isZero(0.0)) continue;
        const Vec3d x0 = v0.row(i).transpose();
        g_trans += gv;
        for (int k = 0; k < 2; ++k) {
            const int b = t.skin_bones(i, k);
            const double w = t.skin_weights(i, k);
            g_lin[b].noalias() += (w * gv) * x0.transpose();
            g_off[b] += w * gv;
        }
    }
    Eigen::Matrix<double, kNumKinematicParams, 1> gq = Eigen::Matrix<double, kNumKinematicParams, 1>::Zero();
    for (int j = 0; j < skeleton::kNumJoints; ++j) {
        const Vec3d gj = g.joints.row(j).transpose();
        g_trans += gj;
        for (int a = 0; a < 3; ++a) {
            if (gj(a) != 0.0) gq += gj(a) * rig.joints[j](a).derivatives();
            if (j == 0) continue;
            if (g_off[j](a) != 0.0) gq += g_off[j](a) * rig.offset[j](a).derivatives();
            for (int b = 0; b < 3; ++b)
                if (g_lin[j](a, b) != 0.0) gq += g_lin[j](a, b) * rig.linear[j](a, b).derivatives();
        }
    }
    ParamVector out = g.params;
    out.segment<3>(kTranslationOffset) += g_trans;
    out.segment<kNumKinematicParams>(kRootOrientOffset) += gq;
    return out;
}

ParamVector parameter_gradient(const BodyTemplate& t, const BodyState& s, const BodyFunctional& fn, double* value) {
    const Rig<Jet> rig_jet = pose_rig_jet(s);
    const PosedBody body = forward(t, s, rig_values(rig_jet));
    BodyGradient g = BodyGradient::zeros(static_cast<int>(t.num_vertices()));
    const double f = fn(s, body, g);
    if (value) *value = f;
    const ParamVector grad = backpropagate(t, rig_jet, g);
    if (!grad.allFinite()) throw NonFiniteGradient("parameter gradient is not finite");
    return grad;
}

}  // namespace volfit
