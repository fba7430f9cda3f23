#include "volfit/scene_synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "volfit/errors.hpp"
#include "volfit/kdtree.hpp"
#include "volfit/parallel.hpp"
#include "volfit/sampling.hpp"
#include "volfit/volume_points.hpp"

namespace volfit {

namespace {

constexpr int kCylinderSegments = 32;
constexpr double kFloorGap = 0.005;
constexpr double kClearance = 0.015;
constexpr double kMinSceneSdf = 0.004;
constexpr int kMaxAttempts = 60;

double box_sdf(const Vec3d& p, const Vec3d& c, const Vec3d& h) {
    const Vec3d q = (p - c).cwiseAbs() - h;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

}  // namespace

Primitive Primitive::box(std::string name, const Vec3d& lo, const Vec3d& hi) {
    Primitive p;
    p.kind = Kind::Box;
    p.name = std::move(name);
    p.center = 0.5 * (lo + hi);
    p.half_extents = 0.5 * (hi - lo);
    if ((p.half_extents.array() <= 0.0).any()) throw ConfigError("box '" + p.name + "' has non-positive extent");
    return p;
}

Primitive Primitive::cylinder(std::string name, const Vec3d& base, double radius, double height) {
    if (radius <= 0.0 || height <= 0.0) throw ConfigError("cylinder '" + name + "' has non-positive size");
    Primitive p;
    p.kind = Kind::Cylinder;
    p.name = std::move(name);
    p.center = base;
    p.radius = radius;
    p.height = height;
    return p;
}

double Primitive::sdf(const Vec3d& p) const {
    if (kind == Kind::Box) return box_sdf(p, center, half_extents);
    const Eigen::Vector2d d(Eigen::Vector2d(p.x() - center.x(), p.y() - center.y()).norm() - radius,
                            std::abs(p.z() - (center.z() + 0.5 * height)) - 0.5 * height);
    return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

Aabb Primitive::bounds() const {
    Aabb b;
    if (kind == Kind::Box) {
        b.extend(center - half_extents);
        b.extend(center + half_extents);
    } else {
        b.extend(center - Vec3d(radius, radius, 0.0));
        b.extend(center + Vec3d(radius, radius, height));
    }
    return b;
}

TriMesh Primitive::mesh() const {
    if (kind == Kind::Box) return make_box(center, half_extents);
    return make_cylinder(center, radius, height, kCylinderSegments);
}

TriMesh build_scene(const SceneSpec& spec, bool strict) {
    if (spec.empty()) throw ConfigError("scene spec is empty");
    if (strict) {
        for (std::size_t i = 0; i < spec.size(); ++i) {
            for (std::size_t j = i + 1; j < spec.size(); ++j) {
                const Aabb a = spec[i].bounds(), b = spec[j].bounds();
                const Vec3d overlap = a.max.cwiseMin(b.max) - a.min.cwiseMax(b.min);
                if ((overlap.array() > 1e-9).all())
                    throw OverlappingPrimitives("primitives '" + spec[i].name + "' and '" + spec[j].name + "' overlap");
            }
        }
    }
    std::vector<TriMesh> parts;
    parts.reserve(spec.size());
    for (const auto& p : spec) parts.push_back(p.mesh());
    return merge_meshes(parts);
}

double scene_sdf(const SceneSpec& spec, const Vec3d& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& prim : spec) d = std::min(d, prim.sdf(p));
    return d;
}

SdfGrid scene_sdf_grid(const SceneSpec& spec, const Aabb& region, double voxel_size) {
    const Vec3i dims = ((region.extent() / voxel_size).array().ceil().cast<int>() + 1).max(2).matrix();
    const std::size_t n = static_cast<std::size_t>(dims.prod());
    std::vector<float> values(n);
    const std::size_t slab = static_cast<std::size_t>(dims.x()) * static_cast<std::size_t>(dims.y());
    parallel_for(dims.z(), 1, [&](int k0, int k1) {
        for (int k = k0; k < k1; ++k)
            for (int j = 0; j < dims.y(); ++j)
                for (int i = 0; i < dims.x(); ++i) {
                    const Vec3d p = region.min + voxel_size * Vec3d(i, j, k);
                    values[static_cast<std::size_t>(k) * slab + static_cast<std::size_t>(j) * dims.x() + i] =
                        static_cast<float>(scene_sdf(spec, p));
                }
    });
    return SdfGrid(region.min, voxel_size, dims, std::move(values));
}

int Observation::mask_count() const {
    return static_cast<int>(std::count_if(body_mask.begin(), body_mask.end(), [](std::uint8_t m) { return m != 0; }));
}

namespace {

struct PixelHit {
    double t = std::numeric_limits<double>::infinity();
    bool body = false;
};

// Casts every pixel against scene and body; body wins only when strictly nearer.
std::vector<PixelHit> cast_pixels(const TriangleBvh* scene, const TriangleBvh* body, const Camera& camera) {
    std::vector<PixelHit> hits(static_cast<std::size_t>(camera.width) * camera.height);
    parallel_for(camera.height, 4, [&](int v0, int v1) {
        for (int v = v0; v < v1; ++v) {
            for (int u = 0; u < camera.width; ++u) {
                const Ray ray = camera.pixel_ray(u, v);
                PixelHit h;
                if (scene) {
                    if (auto s = scene->first_hit(ray, 0.0)) h.t = s->distance;
                }
                if (body) {
                    if (auto b = body->first_hit(ray, 0.0, h.t); b && b->distance < h.t) {
                        h.t = b->distance;
                        h.body = true;
                    }
                }
                hits[static_cast<std::size_t>(v) * camera.width + u] = h;
            }
        }
    });
    return hits;
}

}  // namespace

Observation render_observation(const TriMesh& scene, const TriMesh& body, const Camera& camera,
                               const RenderOptions& options) {
    camera.validate();
    const TriangleBvh scene_bvh(scene);
    const TriangleBvh body_bvh(body);
    const std::vector<PixelHit> hits = cast_pixels(scene.empty() ? nullptr : &scene_bvh, &body_bvh, camera);

    Observation obs;
    obs.camera = camera;
    const std::size_t n = hits.size();
    obs.depth.assign(n, 0.0f);
    obs.body_mask.assign(n, 0);
    Rng noise_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Vec3d> body_pts;
    for (int v = 0; v < camera.height; ++v) {
        for (int u = 0; u < camera.width; ++u) {
            const std::size_t idx = static_cast<std::size_t>(v) * camera.width + u;
            const PixelHit& h = hits[idx];
            if (!std::isfinite(h.t)) continue;
            const Ray ray = camera.pixel_ray(u, v);
            double z = h.t * ray.direction.dot(camera.forward());
            if (options.depth_noise_std > 0.0) z = std::max(1e-3, z + options.depth_noise_std * standard_normal(noise_rng));
            obs.depth[idx] = static_cast<float>(z);
            if (h.body) {
                obs.body_mask[idx] = 1;
                // Noise-free points are taken from the exact hit, not the float depth.
                body_pts.push_back(options.depth_noise_std > 0.0 ? camera.back_project(u, v, z) : ray.at(h.t));
            }
        }
    }
    if (body_pts.empty()) {
        obs.empty_mask = true;
        obs.scanned_body.resize(0, 3);
    } else {
        const Points all = stack_points(body_pts);
        const int k = std::min<int>(options.body_points, static_cast<int>(all.rows()));
        obs.scanned_body = select_rows(all, farthest_point_sampling(all, k, 0));
    }
    if (scene.empty()) {
        obs.scene_points.resize(0, 3);
    } else {
        Rng rng(options.seed);
        const Points samples = sample_surface(scene, std::max(options.scene_surface_samples, options.scene_points), rng);
        obs.scene_points = select_rows(samples, farthest_point_sampling(samples, options.scene_points, 0));
    }
    return obs;
}

void attach_joint_targets(Observation& obs, const Points& joints) {
    const int n = static_cast<int>(joints.rows());
    obs.joints2d = Points2::Zero(n, 2);
    obs.joint_confidence = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
        const auto px = obs.camera.project(joints.row(j).transpose());
        if (!px) continue;
        obs.joints2d.row(j) = px->transpose();
        const int u = static_cast<int>(std::lround(px->x()));
        const int v = static_cast<int>(std::lround(px->y()));
        if (u >= 0 && v >= 0 && u < obs.camera.width && v < obs.camera.height && obs.mask_at(u, v))
            obs.joint_confidence(j) = 1.0;
    }
}

double visible_ratio(const TriMesh& scene, const TriMesh& body, const Camera& camera) {
    const TriangleBvh scene_bvh(scene), body_bvh(body);
    const PointIndex index(body.vertices());
    const Eigen::VectorXd areas = body.vertex_areas();
    auto covered_area = [&](const TriangleBvh* occluder) {
        const std::vector<PixelHit> hits = cast_pixels(occluder, &body_bvh, camera);
        std::vector<bool> covered(static_cast<std::size_t>(body.num_vertices()), false);
        for (int v = 0; v < camera.height; ++v)
            for (int u = 0; u < camera.width; ++u) {
                const PixelHit& h = hits[static_cast<std::size_t>(v) * camera.width + u];
                if (!h.body) continue;
                covered[static_cast<std::size_t>(index.nearest(camera.pixel_ray(u, v).at(h.t)).index)] = true;
            }
        double a = 0.0;
        for (std::size_t i = 0; i < covered.size(); ++i)
            if (covered[i]) a += areas(static_cast<Eigen::Index>(i));
        return a;
    };
    const double alone = covered_area(nullptr);
    if (alone <= 0.0) return 0.0;
    return covered_area(scene.empty() ? nullptr : &scene_bvh) / alone;
}

// ---------------------------------------------------------------------------
// Scenario suite

const std::vector<std::string>& scenario_tags() {
    static const std::vector<std::string> tags = {"sitting_booth", "chair",          "sofa",   "bed",
                                                  "standing_behind", "middle_occlusion", "control"};
    return tags;
}

bool is_occluded_tag(const std::string& tag) {
    return tag == "sitting_booth" || tag == "standing_behind" || tag == "middle_occlusion";
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + a * 0xbf58476d1ce4e5b9ULL + b * 0x94d049bb133111ebULL + 1;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

void set_joint(BodyState& s, int joint, const Vec3d& aa) { s.pose.segment<3>(3 * (joint - 1)) = aa; }

enum class Posture { Standing, Sitting, Reclined, Lying };

Posture posture_of(const std::string& tag) {
    if (tag == "sitting_booth" || tag == "chair") return Posture::Sitting;
    if (tag == "sofa") return Posture::Reclined;
    if (tag == "bed") return Posture::Lying;
    return Posture::Standing;
}

BodyState base_pose(Posture posture, Rng& rng) {
    BodyState s;
    // Arms lowered from the T-pose: left arm about +y, right arm about -y.
    const double arm_drop = uniform(rng, 0.9, 1.2);
    set_joint(s, 16, Vec3d(0.0, arm_drop, uniform(rng, -0.3, 0.0)));
    set_joint(s, 17, Vec3d(0.0, -arm_drop, uniform(rng, 0.0, 0.3)));
    set_joint(s, 18, Vec3d(0.0, 0.0, -uniform(rng, 0.1, 0.5)));
    set_joint(s, 19, Vec3d(0.0, 0.0, uniform(rng, 0.1, 0.5)));
    switch (posture) {
        case Posture::Standing:
            set_joint(s, 1, Vec3d(uniform(rng, -0.15, 0.05), 0.0, 0.05));
            set_joint(s, 2, Vec3d(uniform(rng, -0.15, 0.05), 0.0, -0.05));
            break;
        case Posture::Sitting:
        case Posture::Reclined: {
            const double recline = posture == Posture::Reclined ? uniform(rng, 0.15, 0.3) : 0.0;
            // Rotating about -x tips the trunk backwards; the hips compensate.
            s.root_orient = Vec3d(-recline, 0.0, 0.0);
            const double hip = -M_PI_2 + recline + uniform(rng, -0.1, 0.1);
            set_joint(s, 1, Vec3d(hip, 0.0, uniform(rng, 0.0, 0.12)));
            set_joint(s, 2, Vec3d(hip, 0.0, -uniform(rng, 0.0, 0.12)));
            set_joint(s, 4, Vec3d(M_PI_2 + uniform(rng, -0.15, 0.15), 0.0, 0.0));
            set_joint(s, 5, Vec3d(M_PI_2 + uniform(rng, -0.15, 0.15), 0.0, 0.0));
            break;
        }
        case Posture::Lying:
            s.root_orient = Vec3d(-M_PI_2, 0.0, 0.0);
            set_joint(s, 1, Vec3d(uniform(rng, -0.15, 0.0), 0.0, 0.05));
            set_joint(s, 2, Vec3d(uniform(rng, -0.15, 0.0), 0.0, -0.05));
            set_joint(s, 4, Vec3d(uniform(rng, 0.0, 0.2), 0.0, 0.0));
            break;
    }
    return s;
}

void jitter(BodyState& s, Rng& rng) {
    static const int kJoints[] = {3, 6, 9, 12, 15, 1, 2, 4, 5, 13, 14, 16, 17, 18, 19};
    for (int j : kJoints)
        for (int a = 0; a < 3; ++a) s.pose(3 * (j - 1) + a) += 0.08 * standard_normal(rng);
    for (int i = 0; i < kNumShapeParams; ++i) s.shape(i) = std::clamp(1.0 + 0.05 * standard_normal(rng), 0.85, 1.15);
    s.project();
}

// Bounds of the posed vertices selected by `keep`.
template <typename Pred>
Aabb bounds_where(const Points& v, Pred keep) {
    Aabb b;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const Vec3d p = v.row(i).transpose();
        if (keep(p)) b.extend(p);
    }
    return b;
}

Primitive floor_box() { return Primitive::box("floor", Vec3d(-1.5, -1.5, -0.1), Vec3d(1.5, 1.5, 0.0)); }

// Solid block in front of (-y side of) every vertex within its height range.
Primitive front_block(const std::string& name, const Points& v, double x_half, double z_lo, double z_hi, double depth,
                      double gap) {
    const Aabb near = bounds_where(v, [&](const Vec3d& p) {
        return p.z() >= z_lo - kClearance && p.z() <= z_hi + kClearance && std::abs(p.x()) <= x_half + kClearance;
    });
    const double rear = (near.empty() ? bounds_of(v).min.y() : near.min.y()) - gap;
    return Primitive::box(name, Vec3d(-x_half, rear - depth, z_lo), Vec3d(x_half, rear, z_hi));
}

struct Seat {
    SceneSpec parts;
    double top = 0.0;
};

Seat seat_under(const Points& v, const Vec3d& pelvis, const Vec3d& knee, double x_half, double back_extent) {
    Seat seat;
    const double y0 = knee.y() + 0.10, y1 = pelvis.y() + back_extent;
    const Aabb above = bounds_where(v, [&](const Vec3d& p) {
        return std::abs(p.x()) <= x_half + kClearance && p.y() >= y0 - kClearance && p.y() <= y1 + kClearance;
    });
    seat.top = above.min.z() - kClearance;
    seat.parts.push_back(Primitive::box("seat", Vec3d(-x_half, y0, 0.001), Vec3d(x_half, y1, seat.top)));
    return seat;
}

Primitive back_rest(const Points& v, double seat_top, double seat_rear, double x_half, double height) {
    const Aabb above = bounds_where(v, [&](const Vec3d& p) {
        return p.z() > seat_top && p.z() < seat_top + height && std::abs(p.x()) <= x_half + kClearance;
    });
    const double y0 = std::max(above.max.y() + kClearance, seat_rear + 0.002);
    return Primitive::box("back", Vec3d(-x_half, y0, 0.001), Vec3d(x_half, y0 + 0.08, seat_top + height));
}

struct Placement {
    SceneSpec primitives;
    Vec3d look_from;  // camera offset from the body centre
};

Placement furnish(const std::string& tag, const Points& v, const Points& joints, Rng& rng) {
    const Vec3d pelvis = joints.row(0).transpose();
    const Vec3d knee = 0.5 * (joints.row(4) + joints.row(5)).transpose();
    Placement out;
    out.primitives.push_back(floor_box());
    const double dist = uniform(rng, 2.3, 2.8);
    double azimuth = uniform(rng, -0.2, 0.2);
    double height = uniform(rng, 0.0, 0.3);
    if (tag == "sitting_booth") {
        Seat seat = seat_under(v, pelvis, knee, 0.5, 0.3);
        out.primitives.insert(out.primitives.end(), seat.parts.begin(), seat.parts.end());
        out.primitives.push_back(back_rest(v, seat.top, pelvis.y() + 0.3, 0.5, 0.75));
        const double top = pelvis.z() + uniform(rng, 0.15, 0.22);
        out.primitives.push_back(front_block("table", v, 0.6, 0.001, top, 0.6, 0.02));
        height = uniform(rng, 0.1, 0.3);
    } else if (tag == "chair") {
        Seat seat = seat_under(v, pelvis, knee, 0.25, 0.22);
        out.primitives.insert(out.primitives.end(), seat.parts.begin(), seat.parts.end());
        out.primitives.push_back(back_rest(v, seat.top, pelvis.y() + 0.22, 0.25, 0.55));
        azimuth = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.25, 0.6);
    } else if (tag == "sofa") {
        Seat seat = seat_under(v, pelvis, knee, 0.9, 0.35);
        out.primitives.insert(out.primitives.end(), seat.parts.begin(), seat.parts.end());
        out.primitives.push_back(back_rest(v, seat.top, pelvis.y() + 0.35, 0.9, 0.7));
        const Aabb side = bounds_where(v, [&](const Vec3d& p) { return p.z() < seat.top + 0.25 + kClearance; });
        const double y0 = knee.y() + 0.10, y1 = pelvis.y() + 0.35;
        const double xl = std::max(side.max.x() + kClearance, 0.9 + 0.002);
        const double xr = std::min(side.min.x() - kClearance, -0.9 - 0.002);
        out.primitives.push_back(Primitive::box("arm_left", Vec3d(xl, y0, 0.001), Vec3d(xl + 0.2, y1, seat.top + 0.25)));
        out.primitives.push_back(Primitive::box("arm_right", Vec3d(xr - 0.2, y0, 0.001), Vec3d(xr, y1, seat.top + 0.25)));
    } else if (tag == "bed") {
        const Aabb b = bounds_of(v);
        const double top = b.min.z() - kClearance;
        out.primitives.push_back(Primitive::box("bed", Vec3d(b.min.x() - 0.3, b.min.y() - 0.2, 0.001),
                                                Vec3d(b.max.x() + 0.3, b.max.y() + 0.2, top)));
        azimuth = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 1.0, 1.3);
        height = uniform(rng, 0.9, 1.2);
    } else if (tag == "standing_behind") {
        const double top = uniform(rng, 0.85, 1.0);
        out.primitives.push_back(front_block("counter", v, 0.7, 0.001, top, 0.5, 0.03));
        height = uniform(rng, 0.2, 0.4);
    } else if (tag == "middle_occlusion") {
        const double z0 = pelvis.z() - uniform(rng, 0.1, 0.2), z1 = pelvis.z() + uniform(rng, 0.35, 0.45);
        const Primitive plank = front_block("panel", v, 0.45, z0, z1, 0.04, uniform(rng, 0.2, 0.4));
        out.primitives.push_back(plank);
        const Aabb pb = plank.bounds();
        out.primitives.push_back(
            Primitive::box("post_left", Vec3d(0.47, pb.min.y(), 0.001), Vec3d(0.52, pb.max.y(), z1)));
        out.primitives.push_back(
            Primitive::box("post_right", Vec3d(-0.52, pb.min.y(), 0.001), Vec3d(-0.47, pb.max.y(), z1)));
        height = uniform(rng, 0.2, 0.4);
    } else if (tag != "control") {
        throw ConfigError("unknown scenario tag '" + tag + "'");
    }
    out.look_from = Vec3d(dist * std::sin(azimuth), -dist * std::cos(azimuth), height);
    return out;
}

bool collision_free(const SceneSpec& spec, const SdfGrid& grid, const Points& v, const Points& pint) {
    for (const Points* pts : {&v, &pint})
        for (Eigen::Index i = 0; i < pts->rows(); ++i) {
            const Vec3d p = pts->row(i).transpose();
            if (scene_sdf(spec, p) <= kMinSceneSdf || grid.sample(p) <= 0.0) return false;
        }
    return true;
}

Aabb sdf_region(const Vec3d& pelvis) {
    Aabb r;
    r.extend(Vec3d(pelvis.x() - 1.5, pelvis.y() - 1.5, -0.2));
    r.extend(Vec3d(pelvis.x() + 1.5, pelvis.y() + 1.5, 2.2));
    return r;
}

const InterpolationPairSet& pairs_of(const BodyTemplate& body, std::optional<InterpolationPairSet>& scratch) {
    if (body.pairs) return *body.pairs;
    if (!scratch) scratch = compute_pairs(body);
    return *scratch;
}

Scenario make_scenario_with(const BodyTemplate& body, const InterpolationPairSet& pairs, const std::string& tag,
                            int variant, std::uint64_t seed) {
    const auto& tags = scenario_tags();
    const auto it = std::find(tags.begin(), tags.end(), tag);
    if (it == tags.end()) throw ConfigError("unknown scenario tag '" + tag + "'");
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(it - tags.begin()), static_cast<std::uint64_t>(variant)));
    const Posture posture = posture_of(tag);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        BodyState s = base_pose(posture, rng);
        jitter(s, rng);
        PosedBody posed = forward(body, s);
        // Rest the body on the floor (or on the bed top for lying poses).
        const double lift = posture == Posture::Lying ? uniform(rng, 0.45, 0.55) : 0.0;
        const Vec3d pelvis0 = posed.joints.row(0).transpose();
        s.translation = Vec3d(-pelvis0.x(), -pelvis0.y(), lift + kFloorGap - posed.vertices.col(2).minCoeff());
        posed = forward(body, s);

        // Some poses leave no room for a piece of furniture; draw another pose.
        Placement place;
        try {
            place = furnish(tag, posed.vertices, posed.joints, rng);
        } catch (const ConfigError&) {
            continue;
        }
        const Vec3d pelvis = posed.joints.row(0).transpose();
        const SdfGrid grid = scene_sdf_grid(place.primitives, sdf_region(pelvis), kSceneVoxelSize);
        if (!collision_free(place.primitives, grid, posed.vertices, internal_points(posed.vertices, pairs))) continue;

        Scenario sc;
        sc.tag = tag;
        sc.name = tag + "_" + std::to_string(variant);
        sc.seed = seed;
        sc.primitives = place.primitives;
        sc.scene = build_scene(place.primitives, true);
        sc.gt_state = s;
        const Vec3d centre = bounds_of(posed.vertices).center();
        sc.camera = Camera::look_at(centre + place.look_from, centre);
        return sc;
    }
    throw DegenerateConfiguration("could not place a collision-free '" + tag + "' scenario");
}

}  // namespace

Scenario make_scenario(const BodyTemplate& body, const std::string& tag, int variant, std::uint64_t seed) {
    std::optional<InterpolationPairSet> scratch;
    return make_scenario_with(body, pairs_of(body, scratch), tag, variant, seed);
}

std::vector<Scenario> scenario_suite(const BodyTemplate& body, std::uint64_t seed) {
    std::optional<InterpolationPairSet> scratch;
    const InterpolationPairSet& pairs = pairs_of(body, scratch);
    std::vector<Scenario> out;
    for (const auto& tag : scenario_tags())
        for (int variant = 0; variant < 3; ++variant) out.push_back(make_scenario_with(body, pairs, tag, variant, seed));
    return out;
}

SdfGrid scenario_sdf(const Scenario& s, const BodyTemplate& body) {
    const PosedBody gt = forward(body, s.gt_state);
    return scene_sdf_grid(s.primitives, sdf_region(gt.joints.row(0).transpose()), kSceneVoxelSize);
}

Observation observe(const Scenario& s, const BodyTemplate& body, const RenderOptions& options) {
    const PosedBody gt = forward(body, s.gt_state);
    RenderOptions opts = options;
    if (opts.seed == 0) opts.seed = mix_seed(s.seed, fnv1a(s.name), 7);
    Observation obs = render_observation(s.scene, posed_mesh(body, gt), s.camera, opts);
    attach_joint_targets(obs, gt.joints);
    return obs;
}

}  // namespace volfit
