#include "volfit/metrics.hpp"

#include <Eigen/SVD>

#include "volfit/errors.hpp"
#include "volfit/kdtree.hpp"
#include "volfit/volume_points.hpp"

namespace volfit {

PoseErrors jpe_v2v(const PosedBody& pred, const PosedBody& gt) {
    if (pred.joints.rows() != gt.joints.rows() || pred.vertices.rows() != gt.vertices.rows())
        throw ConfigError("poses come from different templates");
    PoseErrors e;
    e.jpe = (pred.joints - gt.joints).rowwise().norm().mean();
    e.v2v = (pred.vertices - gt.vertices).rowwise().norm().mean();
    return e;
}

PoseErrors jpe_v2v(const BodyState& pred, const BodyState& gt, const BodyTemplate& body) {
    return jpe_v2v(forward(body, pred), forward(body, gt));
}

Points Similarity::apply(const Points& pts) const {
    Points out = (scale * pts * rotation.transpose()).eval();
    out.rowwise() += translation.transpose();
    return out;
}

Similarity procrustes_align(const Points& source, const Points& target, bool with_scale) {
    if (source.rows() != target.rows() || source.rows() < 3)
        throw DegenerateConfiguration("procrustes needs two clouds of at least 3 matching points");
    const Eigen::RowVector3d ms = source.colwise().mean(), mt = target.colwise().mean();
    const Points s = source.rowwise() - ms;
    const Points t = target.rowwise() - mt;
    const double var_s = s.squaredNorm() / static_cast<double>(s.rows());
    if (var_s < 1e-12) throw DegenerateConfiguration("procrustes source has no spread");
    const Mat3d cov = t.transpose() * s / static_cast<double>(s.rows());
    const Eigen::JacobiSVD<Mat3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3d d = Mat3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2, 2) = -1.0;
    Similarity out;
    out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
    out.scale = with_scale ? (svd.singularValues().asDiagonal() * d).trace() / var_s : 1.0;
    out.translation = mt.transpose() - out.scale * out.rotation * ms.transpose();
    return out;
}

double aligned_error(const Points& source, const Points& target, bool with_scale) {
    const Similarity sim = procrustes_align(source, target, with_scale);
    return (sim.apply(source) - target).rowwise().norm().mean();
}

namespace {

double positive_fraction(const Points& pts, const SdfGrid& sdf) {
    if (pts.rows() == 0) return 1.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) count += sdf.sample(pts.row(i).transpose()) > 0.0;
    return static_cast<double>(count) / static_cast<double>(pts.rows());
}

}  // namespace

double nc(const Points& vertices, const SdfGrid& sdf) { return positive_fraction(vertices, sdf); }

double vnc(const Points& internal, const SdfGrid& sdf) { return positive_fraction(internal, sdf); }

std::optional<double> pm(const Points& scan, const Points& vertices) {
    if (scan.rows() == 0) return std::nullopt;
    const PointIndex index(vertices);
    double total = 0.0;
    for (Eigen::Index i = 0; i < scan.rows(); ++i) total += index.nearest(scan.row(i).transpose()).distance;
    return total / static_cast<double>(scan.rows());
}

FitReport evaluate(const FitResult& result, const Scenario& scenario, const FitProblem& problem,
                   double visible_ratio, bool procrustes_scale) {
    const BodyTemplate& body = *problem.body;
    if (!body.pairs) throw ConfigError("evaluation needs the template's interpolation pairs");
    if (!problem.scene_sdf) throw ConfigError("evaluation needs the scene SDF");
    const PosedBody pred = forward(body, result.state);
    const PosedBody gt = forward(body, scenario.gt_state);
    FitReport r;
    r.scenario = scenario.name;
    r.tag = scenario.tag;
    r.mode = to_string(result.mode);
    const PoseErrors e = jpe_v2v(pred, gt);
    r.jpe = e.jpe;
    r.v2v = e.v2v;
    r.p_jpe = aligned_error(pred.joints, gt.joints, procrustes_scale);
    r.p_v2v = aligned_error(pred.vertices, gt.vertices, procrustes_scale);
    r.alignment_consistent = r.p_jpe <= r.jpe + 1e-12 && r.p_v2v <= r.v2v + 1e-12;
    r.nc = nc(pred.vertices, *problem.scene_sdf);
    r.vnc = vnc(internal_points(pred.vertices, *body.pairs), *problem.scene_sdf);
    r.pm = pm(problem.observation.scanned_body, pred.vertices);
    r.visible_ratio = visible_ratio;
    r.stage1_iterations = result.stage1.iterations;
    r.stage2_iterations = result.stage2.iterations;
    for (const auto& b : result.stage1.trace) r.stage1_trace.push_back(b.total);
    for (const auto& b : result.stage2.trace) r.stage2_trace.push_back(b.total);
    r.free_zone_disabled = result.free_zone_disabled;
    return r;
}

}  // namespace volfit
