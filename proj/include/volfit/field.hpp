#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "volfit/bvh.hpp"
#include "volfit/kdtree.hpp"
#include "volfit/sampling.hpp"

namespace volfit {

struct FieldSample {
    Vec3d query = Vec3d::Zero();
    double body_value = 0.0;
    double scene_value = 0.0;
};

// Distance from p to the nearest body / scene point. With `interior_zero`, points
// inside the (watertight) body mesh read 0 for the body. Throws EmptyPointSet.
FieldSample gt_field(const Points& body_points, const Points& scene_points, const Vec3d& p, bool interior_zero = false,
                     const TriMesh* body_mesh = nullptr);

// Batched ground-truth labels for one scene: nearest-point distances to dense
// surface samples of the body and scene, optionally zero inside the body.
class FieldLabeler {
public:
    FieldLabeler(const TriMesh& body, const TriMesh& scene, const Vec3d& root, std::uint64_t seed,
                 int body_samples = 20000, int scene_samples = 30000);

    void label(const Points& queries, bool interior_zero, Eigen::VectorXd& body, Eigen::VectorXd& scene) const;

    const Vec3d& root() const { return root_; }
    const TriMesh& body_mesh() const { return body_; }
    const TriMesh& scene_mesh() const { return scene_; }
    const Points& body_points() const { return body_index_.points(); }
    const Points& scene_points() const { return scene_index_.points(); }

private:
    TriMesh body_;
    TriMesh scene_;
    Vec3d root_;
    TriangleBvh body_bvh_;
    PointIndex body_index_;
    PointIndex scene_index_;
};

struct QuerySet {
    Points queries;
    Eigen::VectorXd gt_body;
    Eigen::VectorXd gt_scene;
};

struct SamplingOptions {
    bool interior_zero = false;
    // Read the two noise levels as standard deviations instead of variances.
    bool variance_as_std = false;
    double variance_wide = 0.02;
    double variance_narrow = 0.002;
    double near_fraction = 0.95;
};

constexpr double kCarveSide = 2.0;
constexpr int kCarveResolution = 64;

// n queries around labeler.root(): 95% perturbed surface samples (half body,
// half scene), each surface sample giving one wide and one narrow query; 5%
// uniform in the cube of side 2 about the root.
QuerySet sample_training_points(const FieldLabeler& labeler, int n, std::uint64_t seed,
                                const SamplingOptions& options = {});
QuerySet sample_training_points(const TriMesh& gt_body, const TriMesh& scene, const Vec3d& root, int n,
                                std::uint64_t seed, const SamplingOptions& options = {});

// |min(F_b, d) - min(GT_b, d)| + |min(F_s, d) - min(GT_s, d)|.
double fznet_loss(const FieldSample& pred, const FieldSample& gt, double clamp);

// Field source for carving. `evaluate` receives P_b, the cropped P_s and the
// root; implementations must be thread-safe for concurrent calls.
class FieldProvider {
public:
    virtual ~FieldProvider() = default;
    virtual std::string name() const = 0;

    void evaluate(const Points& body_points, const Points& scene_points, const Vec3d& root, const Points& queries,
                  Eigen::VectorXd& body, Eigen::VectorXd& scene) const {
        ++calls_;
        do_evaluate(body_points, scene_points, root, queries, body, scene);
    }
    long calls() const { return calls_.load(); }

protected:
    virtual void do_evaluate(const Points& body_points, const Points& scene_points, const Vec3d& root,
                             const Points& queries, Eigen::VectorXd& body, Eigen::VectorXd& scene) const = 0;

private:
    mutable std::atomic<long> calls_{0};
};

// Oracle provider backed by the ground-truth body; ignores P_b.
class GtFieldProvider : public FieldProvider {
public:
    GtFieldProvider(const TriMesh& gt_body, bool interior_zero = true, int body_samples = 20000,
                    std::uint64_t seed = 1);
    std::string name() const override { return interior_zero_ ? "gt_interior_zero" : "gt_literal"; }

protected:
    void do_evaluate(const Points& body_points, const Points& scene_points, const Vec3d& root, const Points& queries,
                     Eigen::VectorXd& body, Eigen::VectorXd& scene) const override;

private:
    TriangleBvh bvh_;
    PointIndex index_;
    Aabb bounds_;
    bool interior_zero_;
};

struct FreeZonePoints {
    Points points;
    double threshold = 0.0;
    Vec3d center = Vec3d::Zero();
    double side = kCarveSide;
    int resolution = kCarveResolution;
    bool empty() const { return points.rows() == 0; }
};

// Cell-centred lattice of resolution^3 points spanning a cube of `side` about `center`.
Points carve_lattice(const Vec3d& center, double side = kCarveSide, int resolution = kCarveResolution);

// Keeps lattice points whose body field is below mu. P_s is cropped to the unit
// sphere about the root before the provider sees it.
FreeZonePoints carve_free_zone(const FieldProvider& provider, const Points& body_points, const Points& scene_points,
                               const Vec3d& root, double mu = 1e-3);

Points crop_to_sphere(const Points& points, const Vec3d& center, double radius);

}  // namespace volfit
