#include "volfit/field.hpp"

#include <cmath>
#include <limits>

#include "volfit/errors.hpp"
#include "volfit/parallel.hpp"

namespace volfit {

namespace {

// Scene value reported when the cropped scene cloud is empty.
constexpr double kNoSceneDistance = 1e3;
constexpr double kLabelMargin = 0.2;

}  // namespace

FieldSample gt_field(const Points& body_points, const Points& scene_points, const Vec3d& p, bool interior_zero,
                     const TriMesh* body_mesh) {
    if (body_points.rows() == 0 || scene_points.rows() == 0) throw EmptyPointSet("gt_field needs body and scene points");
    if (interior_zero && body_mesh == nullptr) throw ConfigError("interior_zero requires the body mesh");
    FieldSample s;
    s.query = p;
    s.body_value = (body_points.rowwise() - p.transpose()).rowwise().norm().minCoeff();
    s.scene_value = (scene_points.rowwise() - p.transpose()).rowwise().norm().minCoeff();
    if (interior_zero && point_inside(TriangleBvh(*body_mesh), p)) s.body_value = 0.0;
    return s;
}

namespace {

Aabb cube_about(const Vec3d& c, double half) {
    Aabb b;
    b.extend(c - Vec3d::Constant(half));
    b.extend(c + Vec3d::Constant(half));
    return b;
}

bool contains(const Aabb& b, const Vec3d& p) {
    return (p.array() >= b.min.array()).all() && (p.array() <= b.max.array()).all();
}

Points scene_samples_near(const TriMesh& scene, const Vec3d& root, int count, Rng& rng) {
    const Aabb crop = cube_about(root, 0.5 * kCarveSide + kLabelMargin);
    std::vector<Vec3d> kept;
    int batch = count;
    for (int round = 0; round < 8 && static_cast<int>(kept.size()) < count; ++round) {
        const Points s = sample_surface(scene, batch, rng);
        for (Eigen::Index i = 0; i < s.rows() && static_cast<int>(kept.size()) < count; ++i)
            if (contains(crop, s.row(i).transpose())) kept.push_back(s.row(i).transpose());
        batch *= 2;
    }
    if (kept.empty()) throw EmptyPointSet("no scene surface near the root");
    return stack_points(kept);
}

}  // namespace

FieldLabeler::FieldLabeler(const TriMesh& body, const TriMesh& scene, const Vec3d& root, std::uint64_t seed,
                           int body_samples, int scene_samples)
    : body_(body), scene_(scene), root_(root), body_bvh_(body) {
    Rng rng(seed);
    body_index_ = PointIndex(sample_surface(body, body_samples, rng));
    scene_index_ = PointIndex(scene_samples_near(scene, root, scene_samples, rng));
}

void FieldLabeler::label(const Points& queries, bool interior_zero, Eigen::VectorXd& body,
                         Eigen::VectorXd& scene) const {
    const Eigen::Index n = queries.rows();
    body.resize(n);
    scene.resize(n);
    const Aabb bounds = body_.bounds();
    parallel_for(static_cast<int>(n), 256, [&](int b, int e) {
        for (int i = b; i < e; ++i) {
            const Vec3d q = queries.row(i).transpose();
            body(i) = body_index_.nearest(q).distance;
            scene(i) = scene_index_.nearest(q).distance;
            if (interior_zero && contains(bounds, q) && point_inside(body_bvh_, q)) body(i) = 0.0;
        }
    });
}

QuerySet sample_training_points(const FieldLabeler& labeler, int n, std::uint64_t seed,
                                const SamplingOptions& options) {
    if (n < 1000) throw ConfigError("sample_training_points needs n >= 1000");
    Rng rng(seed);
    const int surface = static_cast<int>(std::lround(options.near_fraction * n)) / 2;
    const int uniform = n - 2 * surface;
    const double sd_wide = options.variance_as_std ? options.variance_wide : std::sqrt(options.variance_wide);
    const double sd_narrow = options.variance_as_std ? options.variance_narrow : std::sqrt(options.variance_narrow);
    const Points& bp = labeler.body_points();
    const Points& sp = labeler.scene_points();

    QuerySet out;
    out.queries.resize(n, 3);
    Eigen::Index r = 0;
    for (int i = 0; i < surface; ++i) {
        const Points& src = (i < surface / 2) ? bp : sp;
        const auto pick = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(src.rows()));
        const Vec3d base = src.row(std::min(pick, src.rows() - 1)).transpose();
        for (double sd : {sd_wide, sd_narrow}) {
            const Vec3d noise(standard_normal(rng), standard_normal(rng), standard_normal(rng));
            out.queries.row(r++) = (base + sd * noise).transpose();
        }
    }
    const double half = 0.5 * kCarveSide;
    for (int i = 0; i < uniform; ++i) {
        const Vec3d u(uniform01(rng), uniform01(rng), uniform01(rng));
        out.queries.row(r++) = (labeler.root() + (2.0 * u - Vec3d::Ones()) * half).transpose();
    }
    labeler.label(out.queries, options.interior_zero, out.gt_body, out.gt_scene);
    return out;
}

QuerySet sample_training_points(const TriMesh& gt_body, const TriMesh& scene, const Vec3d& root, int n,
                                std::uint64_t seed, const SamplingOptions& options) {
    return sample_training_points(FieldLabeler(gt_body, scene, root, seed ^ 0x5bd1e995ULL), n, seed, options);
}

double fznet_loss(const FieldSample& pred, const FieldSample& gt, double clamp) {
    if (!(clamp > 0.0)) throw ConfigError("clamp must be positive");
    return std::abs(std::min(pred.body_value, clamp) - std::min(gt.body_value, clamp)) +
           std::abs(std::min(pred.scene_value, clamp) - std::min(gt.scene_value, clamp));
}

GtFieldProvider::GtFieldProvider(const TriMesh& gt_body, bool interior_zero, int body_samples, std::uint64_t seed)
    : bvh_(gt_body), bounds_(gt_body.bounds()), interior_zero_(interior_zero) {
    Rng rng(seed);
    index_ = PointIndex(sample_surface(gt_body, body_samples, rng));
}

void GtFieldProvider::do_evaluate(const Points&, const Points& scene_points, const Vec3d&, const Points& queries,
                                  Eigen::VectorXd& body, Eigen::VectorXd& scene) const {
    const Eigen::Index n = queries.rows();
    body.resize(n);
    scene.resize(n);
    const PointIndex scene_index(scene_points);
    parallel_for(static_cast<int>(n), 1024, [&](int b, int e) {
        for (int i = b; i < e; ++i) {
            const Vec3d q = queries.row(i).transpose();
            body(i) = index_.nearest(q).distance;
            if (interior_zero_ && contains(bounds_, q) && point_inside(bvh_, q)) body(i) = 0.0;
            scene(i) = scene_index.empty() ? kNoSceneDistance : scene_index.nearest(q).distance;
        }
    });
}

Points carve_lattice(const Vec3d& center, double side, int resolution) {
    const double h = side / resolution;
    Points out(static_cast<Eigen::Index>(resolution) * resolution * resolution, 3);
    Eigen::Index r = 0;
    for (int k = 0; k < resolution; ++k)
        for (int j = 0; j < resolution; ++j)
            for (int i = 0; i < resolution; ++i)
                out.row(r++) = (center + Vec3d(-0.5 * side + (i + 0.5) * h, -0.5 * side + (j + 0.5) * h,
                                               -0.5 * side + (k + 0.5) * h))
                                   .transpose();
    return out;
}

Points crop_to_sphere(const Points& points, const Vec3d& center, double radius) {
    IndexList keep;
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        if ((points.row(i).transpose() - center).norm() <= radius) keep.push_back(static_cast<int>(i));
    return select_rows(points, keep);
}

FreeZonePoints carve_free_zone(const FieldProvider& provider, const Points& body_points, const Points& scene_points,
                               const Vec3d& root, double mu) {
    FreeZonePoints fz;
    fz.threshold = mu;
    fz.center = root;
    const Points lattice = carve_lattice(root);
    Eigen::VectorXd body, scene;
    provider.evaluate(body_points, crop_to_sphere(scene_points, root, 1.0), root, lattice, body, scene);
    IndexList keep;
    for (Eigen::Index i = 0; i < lattice.rows(); ++i)
        if (body(i) < mu) keep.push_back(static_cast<int>(i));
    fz.points = select_rows(lattice, keep);
    return fz;
}

}  // namespace volfit
