#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "volfit/mesh.hpp"
#include "volfit/skeleton.hpp"
#include "volfit/types.hpp"

namespace volfit {

constexpr int kNumShapeParams = 12;
constexpr int kNumPoseParams = 63;
// Pose-and-shape block differentiated by forward kinematics: root_orient(3), pose(63), shape(12).
constexpr int kNumKinematicParams = 3 + kNumPoseParams + kNumShapeParams;
// Full parameter vector: translation(3), root_orient(3), pose(63), shape(12).
constexpr int kNumParams = 3 + kNumKinematicParams;
constexpr double kMinShapeScale = 0.5;
constexpr double kMaxShapeScale = 2.0;

using ParamVector = Eigen::Matrix<double, kNumParams, 1>;
template <typename Scalar>
using KinematicVector = Eigen::Matrix<Scalar, kNumKinematicParams, 1>;
using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, kNumKinematicParams, 1>>;

// Parameter vector offsets.
constexpr int kTranslationOffset = 0;
constexpr int kRootOrientOffset = 3;
constexpr int kPoseOffset = 6;
constexpr int kShapeOffset = 6 + kNumPoseParams;

struct BodyState {
    Eigen::Matrix<double, kNumShapeParams, 1> shape = Eigen::Matrix<double, kNumShapeParams, 1>::Ones();
    Eigen::Matrix<double, kNumPoseParams, 1> pose = Eigen::Matrix<double, kNumPoseParams, 1>::Zero();
    Vec3d translation = Vec3d::Zero();
    Vec3d root_orient = Vec3d::Zero();

    ParamVector to_vector() const;
    static BodyState from_vector(const ParamVector& v);

    // Throws ConfigError when a scale leaves [0.5, 2], an axis-angle reaches pi
    // or any value is non-finite.
    void validate() const;
    // Clamps scales into range and wraps axis-angles so that |w| < pi.
    void project();
};

Vec3d wrap_axis_angle(const Vec3d& w);

inline double scalar_value(double x) { return x; }
template <typename D>
double scalar_value(const Eigen::AutoDiffScalar<D>& x) {
    return x.value();
}

template <typename Scalar>
Mat3<Scalar> axis_angle_to_matrix(const Vec3<Scalar>& w) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const Scalar th2 = w.squaredNorm();
    Mat3<Scalar> k;
    k << Scalar(0), -w.z(), w.y(), w.z(), Scalar(0), -w.x(), -w.y(), w.x(), Scalar(0);
    Scalar a, b;
    if (scalar_value(th2) < 1e-8) {
        a = Scalar(1) - th2 / 6.0;
        b = Scalar(0.5) - th2 / 24.0;
    } else {
        const Scalar th = sqrt(th2);
        a = sin(th) / th;
        b = (Scalar(1) - cos(th)) / th2;
    }
    Mat3<Scalar> r = Mat3<Scalar>::Identity();
    r += a * k;
    r += b * (k * k);
    return r;
}

// Posed skeleton: per-bone affine maps x0 -> linear * x0 + offset from the
// canonical (T-pose) frame, before translation. Entry 0 is the identity.
template <typename Scalar>
struct Rig {
    std::array<Mat3<Scalar>, skeleton::kNumJoints> linear;
    std::array<Vec3<Scalar>, skeleton::kNumJoints> offset;
    std::array<Vec3<Scalar>, skeleton::kNumJoints> joints;
    std::array<Mat3<Scalar>, skeleton::kNumJoints> rotation;
};

template <typename Scalar>
Rig<Scalar> pose_rig(const KinematicVector<Scalar>& q) {
    using namespace skeleton;
    Rig<Scalar> rig;
    rig.rotation[0] = axis_angle_to_matrix<Scalar>(q.template segment<3>(0));
    rig.joints[0] = canonical_joint(0).cast<Scalar>();
    rig.linear[0] = Mat3<Scalar>::Identity();
    rig.offset[0] = Vec3<Scalar>::Zero();
    for (int j = 1; j < kNumJoints; ++j) {
        const int p = kParent[j];
        const int region = bone_region(j);
        const Scalar s_len = q(3 + kNumPoseParams + region);
        const Scalar s_rad = q(3 + kNumPoseParams + kNumRegions + region);
        const Vec3d rest = canonical_joint(j) - canonical_joint(p);
        const Vec3d u = rest.normalized();
        const Mat3<Scalar> scale =
            s_rad * Mat3<Scalar>::Identity() + (s_len - s_rad) * (u * u.transpose()).cast<Scalar>();
        rig.linear[j] = rig.rotation[p] * scale;
        rig.offset[j] = rig.joints[p] - rig.linear[j] * canonical_joint(p).cast<Scalar>();
        rig.joints[j] = rig.joints[p] + rig.rotation[p] * (rest.cast<Scalar>() * s_len);
        rig.rotation[j] = rig.rotation[p] * axis_angle_to_matrix<Scalar>(q.template segment<3>(3 + 3 * (j - 1)));
    }
    return rig;
}

KinematicVector<double> kinematic_vector(const BodyState& s);
Rig<double> pose_rig(const BodyState& s);
Rig<Jet> pose_rig_jet(const BodyState& s);

// Front/back vertex pairs whose interpolation yields interior points.
struct InterpolationPairSet {
    std::vector<std::array<int, 2>> pairs;
    int points_per_pair = 6;
};

struct BodyTemplate {
    TriMesh mesh;
    // Two-bone skinning: bone ids are child joint indices in [1, 21].
    Eigen::Matrix<int, Eigen::Dynamic, 2, Eigen::RowMajor> skin_bones;
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> skin_weights;
    Points canonical_joints;
    IndexList contact_vertices;
    std::optional<InterpolationPairSet> pairs;
    int resolution = 0;

    int num_vertices() const { return mesh.num_vertices(); }
    // N x 22 dense weight matrix (column 0, the pelvis, is always zero).
    Eigen::MatrixXd dense_weights() const;
};

// Capsule-union template in T-pose. resolution counts voxels along the body height.
BodyTemplate build_template(int resolution = 64);

void save_template(const BodyTemplate& t, const std::string& ply_path, const std::string& json_path);
BodyTemplate load_template(const std::string& ply_path, const std::string& json_path);

struct PosedBody {
    Points vertices;
    Points joints;  // 22 x 3
};

PosedBody forward(const BodyTemplate& t, const BodyState& s);
PosedBody forward(const BodyTemplate& t, const BodyState& s, const Rig<double>& rig);
TriMesh posed_mesh(const BodyTemplate& t, const PosedBody& body);

// Upstream gradient of a scalar functional with respect to the posed vertices,
// the posed joints and (for direct priors) the raw parameter vector.
struct BodyGradient {
    Points vertices;
    Points joints;
    ParamVector params = ParamVector::Zero();

    static BodyGradient zeros(int num_vertices);
};

// Chains an upstream gradient through skinning and forward kinematics.
ParamVector backpropagate(const BodyTemplate& t, const Rig<Jet>& rig, const BodyGradient& g);

using BodyFunctional = std::function<double(const BodyState&, const PosedBody&, BodyGradient&)>;

// Gradient of fn over all 81 parameters. Throws NonFiniteGradient.
ParamVector parameter_gradient(const BodyTemplate& t, const BodyState& s, const BodyFunctional& fn,
                               double* value = nullptr);

}  // namespace volfit
