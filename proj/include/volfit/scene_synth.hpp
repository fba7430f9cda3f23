#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volfit/body_model.hpp"
#include "volfit/camera.hpp"
#include "volfit/sdf.hpp"

namespace volfit {

// Axis-aligned box, or z-aligned cylinder standing on `center`.
struct Primitive {
    enum class Kind { Box, Cylinder };
    Kind kind = Kind::Box;
    std::string name;
    Vec3d center = Vec3d::Zero();
    Vec3d half_extents = Vec3d::Zero();
    double radius = 0.0;
    double height = 0.0;

    static Primitive box(std::string name, const Vec3d& lo, const Vec3d& hi);
    static Primitive cylinder(std::string name, const Vec3d& base, double radius, double height);

    // Exact signed distance of the ideal solid (the cylinder mesh is a 32-gon prism).
    double sdf(const Vec3d& p) const;
    Aabb bounds() const;
    TriMesh mesh() const;
};

using SceneSpec = std::vector<Primitive>;

// Merges the primitives into one mesh of closed components. In strict mode,
// primitives whose bounding boxes overlap with positive volume raise OverlappingPrimitives.
TriMesh build_scene(const SceneSpec& spec, bool strict = false);

// Minimum of the primitive SDFs (exact for disjoint primitives).
double scene_sdf(const SceneSpec& spec, const Vec3d& p);
SdfGrid scene_sdf_grid(const SceneSpec& spec, const Aabb& region, double voxel_size);

struct Observation {
    Camera camera;
    std::vector<float> depth;  // row-major height x width, metres along the optical axis, 0 = no return
    std::vector<std::uint8_t> body_mask;
    Points scanned_body;  // P_b, world frame
    Points scene_points;  // P_s, world frame
    bool empty_mask = false;
    // 2D joint targets (pixels) and confidences; a joint is trusted when its
    // projection lands on a body-mask pixel.
    Points2 joints2d;
    Eigen::VectorXd joint_confidence;

    float depth_at(int u, int v) const { return depth[static_cast<std::size_t>(v) * camera.width + u]; }
    bool mask_at(int u, int v) const { return body_mask[static_cast<std::size_t>(v) * camera.width + u] != 0; }
    int mask_count() const;
};

struct RenderOptions {
    int body_points = 1024;
    int scene_points = 4096;
    int scene_surface_samples = 20000;
    double depth_noise_std = 0.0;  // metres; zero-mean Gaussian along the optical axis
    std::uint64_t seed = 0;
};

Observation render_observation(const TriMesh& scene, const TriMesh& body, const Camera& camera,
                               const RenderOptions& options = {});

void attach_joint_targets(Observation& obs, const Points& joints);

// Body surface area seen by the camera with the scene present, divided by the
// area seen with the body alone. Every mask pixel marks its nearest body vertex.
double visible_ratio(const TriMesh& scene, const TriMesh& body, const Camera& camera);

struct Scenario {
    std::string tag;   // scenario type, e.g. "sitting_booth"
    std::string name;  // tag plus variant number
    std::uint64_t seed = 0;
    SceneSpec primitives;
    TriMesh scene;
    BodyState gt_state;
    Camera camera;
};

const std::vector<std::string>& scenario_tags();
// Types whose furniture stands between the camera and the body.
bool is_occluded_tag(const std::string& tag);

// One scenario of the given type; deterministic in (tag, variant, seed).
Scenario make_scenario(const BodyTemplate& body, const std::string& tag, int variant, std::uint64_t seed);

// Three variants of every type (21 scenarios), each collision-free: every
// posed vertex and internal point has positive scene SDF on the scenario grid.
std::vector<Scenario> scenario_suite(const BodyTemplate& body, std::uint64_t seed);

constexpr double kSceneVoxelSize = 0.02;
// Scene SDF grid covering the neighbourhood of the ground-truth body.
SdfGrid scenario_sdf(const Scenario& s, const BodyTemplate& body);

Observation observe(const Scenario& s, const BodyTemplate& body, const RenderOptions& options = {});

}  // namespace volfit
