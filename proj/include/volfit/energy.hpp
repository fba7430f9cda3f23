#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "volfit/body_model.hpp"
#include "volfit/camera.hpp"
#include "volfit/kdtree.hpp"
#include "volfit/sdf.hpp"
#include "volfit/shadow_volume.hpp"
#include "volfit/visibility.hpp"

namespace volfit {

struct EnergyWeights {
    double lambda_j = 1.0;
    double lambda_d = 2e3;
    double lambda_r = 1.0;
    double lambda_p = 1e3;
    double lambda_c = 1e2;
    double lambda_fz = 500.0;
    double lambda_tsv = 200.0;

    double sigma_j = 100.0;  // px
    double sigma_d = 0.05;
    double sigma_fz = 0.15;
    double sigma_tsv = 0.05;

    // Regularizer: w_pose |theta|^2 + w_shape |beta - 1|^2 + w_self * capsule overlap.
    double w_pose = 1e-2;
    double w_shape = 1e-1;
    double w_self = 1e2;
    double r_contact = 0.05;

    // Throws ConfigError for negative or non-finite weights and non-positive scales.
    void validate() const;
};

struct EnergyBreakdown {
    double joints = 0.0;
    double depth = 0.0;
    double reg = 0.0;
    double penetration = 0.0;
    double contact = 0.0;
    double fz = 0.0;
    double tsv = 0.0;
    double total = 0.0;
};

// Geman-McClure: sigma^2 e^2 / (sigma^2 + e^2).
double gmof(double e, double sigma);
// Derivative with respect to e^2, i.e. sigma^4 / (sigma^2 + e^2)^2.
double gmof_dsq(double e_squared, double sigma);

// Nearest-neighbour choices made during one evaluation. Gradients hold them
// fixed, so finite differences are only comparable when they do not change.
using ArgminLog = std::vector<std::int64_t>;

// Each term optionally writes its gradient with respect to its point inputs
// (the arrays are resized and overwritten).
double e_joints(const Points& joints, const Camera& camera, const Points2& targets, const Eigen::VectorXd& confidence,
                double sigma, Points* grad = nullptr);

// Symmetric robust Chamfer between the visible vertices and P_b.
double e_depth(const Points& visible, const Points& scan, double sigma, Points* grad = nullptr,
               const PointIndex* scan_index = nullptr, ArgminLog* log = nullptr);

struct CapsuleOverlap {
    double value = 0.0;
    Points grad_joints;                         // 22 x 3
    std::array<double, 22> grad_radius{};       // per child joint
};
// max(0, r_a + r_b - distance between the segments)^2 for two capsules.
double capsule_pair_overlap(const Vec3d& a0, const Vec3d& a1, double ra, const Vec3d& b0, const Vec3d& b1, double rb);

// Sum over the self-penetration bone pairs of max(0, r_a + r_b - segment distance)^2.
CapsuleOverlap capsule_overlap(const Points& joints, const std::array<double, 22>& radius, ArgminLog* log = nullptr);

// Bone radii of a state: canonical radius times the region's radial scale.
std::array<double, 22> bone_radii(const BodyState& state);

// w_pose |pose|^2 + w_shape |shape - 1|^2 + w_self * capsule overlap.
double e_reg(const BodyState& state, const Points& joints, const EnergyWeights& w, Points* grad_joints = nullptr,
             ParamVector* grad_params = nullptr, ArgminLog* log = nullptr);

// Sum of max(0, -sdf)^2 over the vertices.
double e_penetration(const Points& vertices, const SdfGrid& sdf, Points* grad = nullptr, ArgminLog* log = nullptr);

// Contact vertices closer than r_contact to the scene surface pay gmof(distance).
double e_contact(const Points& vertices, const IndexList& contact_ids, const TriangleBvh& scene, double r_contact,
                 double sigma, Points* grad = nullptr, ArgminLog* log = nullptr);

double e_fz(const Points& internal, const PointIndex& free_zone, double sigma, Points* grad = nullptr,
            ArgminLog* log = nullptr);

// Sum over TSV points of gmof(distance to the nearest internal point).
double e_tsv(const Points& internal, const Points& tsv, double sigma, Points* grad = nullptr, ArgminLog* log = nullptr);

enum class FitMode { ours, ours_no_fz, ours_no_tsv, ours_surface_match, smplify_d, prox_d };
std::string to_string(FitMode m);
FitMode parse_fit_mode(const std::string& s);  // ConfigError on unknown names
const std::vector<FitMode>& all_fit_modes();

// Terms switched on in one stage.
struct TermSet {
    bool fz = false;
    bool tsv = false;
    bool contact = false;
    bool penetration = false;
    bool surface_match = false;  // E_fz / E_tsv on surface vertices instead of internal points

    static TermSet stage(int stage, FitMode mode);
};

// Everything the energy needs besides the body state. Frozen during a stage.
struct EnergyContext {
    std::shared_ptr<const BodyTemplate> body;
    Camera camera;
    Points2 joint_targets;
    Eigen::VectorXd joint_confidence;
    Points scan;  // P_b
    PointIndex scan_index;
    DepthBuffer scene_depth;
    std::shared_ptr<const TriangleBvh> scene;
    std::shared_ptr<const SdfGrid> scene_sdf;
    Points free_zone;
    PointIndex free_zone_index;
    Points tsv;
    EnergyWeights weights;

    void set_scan(Points p);
    void set_free_zone(Points p);
};

// Stage-weighted total with optional gradient over all 81 parameters.
EnergyBreakdown total_energy(const EnergyContext& ctx, const TermSet& terms, const BodyState& state,
                             ParamVector* grad = nullptr, ArgminLog* log = nullptr);

}  // namespace volfit
