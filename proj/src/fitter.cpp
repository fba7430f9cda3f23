#include "volfit/fitter.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include <Eigen/SVD>

#include "volfit/errors.hpp"
#include "volfit/sampling.hpp"
#include "volfit/skeleton.hpp"

namespace volfit {

namespace {

// Convergence is not tested before this many windows have passed.
constexpr int kMinWindows = 3;

}  // namespace

void FitConfig::validate() const {
    if (stage1_iterations < 0 || stage2_iterations < 0) throw ConfigError("iteration caps must be non-negative");
    if (!(tolerance > 0.0) || window < 1) throw ConfigError("convergence tolerance must be positive");
    if (!(adam.step > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.epsilon > 0.0))
        throw ConfigError("invalid optimizer settings");
    if (!(carve_threshold >= 0.0)) throw ConfigError("carve threshold must be non-negative");
    weights.validate();
    tsv.validate();
}

FitProblem make_problem(std::shared_ptr<const BodyTemplate> body, Observation observation, TriMesh scene,
                        std::shared_ptr<const SdfGrid> scene_sdf) {
    if (!body) throw ConfigError("fit problem needs a body template");
    FitProblem p;
    p.body = std::move(body);
    p.observation = std::move(observation);
    p.observation.camera.validate();
    p.scene_mesh = std::move(scene);
    p.scene = std::make_shared<TriangleBvh>(p.scene_mesh);
    p.scene_sdf = std::move(scene_sdf);
    p.scene_depth = render_depth(*p.scene, p.observation.camera);
    return p;
}

FitProblem make_problem(std::shared_ptr<const BodyTemplate> body, const Scenario& scenario, Observation observation) {
    auto sdf = std::make_shared<SdfGrid>(scenario_sdf(scenario, *body));
    return make_problem(std::move(body), std::move(observation), scenario.scene, std::move(sdf));
}

EnergyContext make_context(const FitProblem& problem, const EnergyWeights& weights) {
    EnergyContext ctx;
    ctx.body = problem.body;
    ctx.camera = problem.observation.camera;
    ctx.joint_targets = problem.observation.joints2d;
    ctx.joint_confidence = problem.observation.joint_confidence;
    if (ctx.joint_targets.rows() == 0) {
        ctx.joint_targets = Points2::Zero(skeleton::kNumJoints, 2);
        ctx.joint_confidence = Eigen::VectorXd::Zero(skeleton::kNumJoints);
    }
    ctx.set_scan(problem.observation.scanned_body);
    ctx.scene_depth = problem.scene_depth;
    ctx.scene = problem.scene;
    ctx.scene_sdf = problem.scene_sdf;
    ctx.weights = weights;
    return ctx;
}

namespace {

// Torso joints keep their T-pose layout in every scenario pose.
constexpr int kTorsoJoints[] = {0, 1, 2, 3, 6, 9, 12, 13, 14, 15, 16, 17};
// Trusted 2D joints are lifted this far behind the observed surface.
constexpr double kJointDepthOffset = 0.08;

// Root orientation from a rigid fit of the canonical torso joints to the lifted
// detections; empty when fewer than three joints can be lifted.
std::optional<Vec3d> orientation_from_detections(const Observation& obs) {
    const Camera& cam = obs.camera;
    if (obs.joints2d.rows() != skeleton::kNumJoints || obs.depth.empty()) return std::nullopt;
    std::vector<Vec3d> canonical, lifted;
    for (int j : kTorsoJoints) {
        if (obs.joint_confidence(j) <= 0.0) continue;
        const int u = static_cast<int>(std::lround(obs.joints2d(j, 0)));
        const int v = static_cast<int>(std::lround(obs.joints2d(j, 1)));
        if (u < 0 || v < 0 || u >= cam.width || v >= cam.height) continue;
        const float z = obs.depth_at(u, v);
        if (!(z > 0.0f) || !obs.mask_at(u, v)) continue;
        canonical.push_back(skeleton::canonical_joint(j));
        lifted.push_back(cam.back_project(obs.joints2d(j, 0), obs.joints2d(j, 1), z + kJointDepthOffset));
    }
    if (canonical.size() < 3) return std::nullopt;
    const Points a = stack_points(canonical), b = stack_points(lifted);
    const Points ac = a.rowwise() - a.colwise().mean();
    const Points bc = b.rowwise() - b.colwise().mean();
    const Eigen::JacobiSVD<Mat3d> svd(bc.transpose() * ac, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(1) < 1e-6) return std::nullopt;
    Mat3d d = Mat3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2, 2) = -1.0;
    const Eigen::AngleAxisd aa(Mat3d(svd.matrixU() * d * svd.matrixV().transpose()));
    return Vec3d(aa.angle() * aa.axis());
}

}  // namespace

BodyState initial_state(const FitProblem& problem) {
    const Observation& obs = problem.observation;
    const Camera& cam = obs.camera;
    const Points& scan = obs.scanned_body;
    BodyState s;
    s.translation = scan.rows() > 0 ? Vec3d(scan.colwise().mean().transpose()) : Vec3d(cam.position + 2.5 * cam.forward());
    if (const auto orient = orientation_from_detections(obs)) {
        s.root_orient = *orient;
    } else {
        Vec3d d = cam.position - s.translation;
        d.z() = 0.0;
        if (d.norm() > 1e-9) {
            d.normalize();
            // Rotating the body's front (-y) onto d.
            s.root_orient = Vec3d(0.0, 0.0, std::atan2(d.x(), -d.y()));
        }
    }
    s.project();
    return s;
}

StageResult minimize(const EnergyContext& ctx, const TermSet& terms, const BodyState& start, int max_iterations,
                     const FitConfig& config) {
    StageResult out;
    BodyState state = start;
    ParamVector x = state.to_vector();
    ParamVector m = ParamVector::Zero(), v = ParamVector::Zero();
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_trace;
    out.state = start;
    const AdamConfig& a = config.adam;
    for (int it = 0; it <= max_iterations; ++it) {
        ParamVector g;
        EnergyBreakdown e;
        try {
            e = total_energy(ctx, terms, state, it < max_iterations ? &g : nullptr);
        } catch (const NonFiniteGradient&) {
            out.aborted = true;
            break;
        }
        if (!std::isfinite(e.total)) {
            out.aborted = true;
            break;
        }
        out.trace.push_back(e);
        if (e.total < best) {
            best = e.total;
            out.state = state;
        }
        if (it == max_iterations) break;
        best_trace.push_back(best);
        const auto n = static_cast<int>(best_trace.size());
        if (n > kMinWindows * config.window) {
            const double before = best_trace[static_cast<std::size_t>(n - 1 - config.window)];
            if ((before - best) < config.tolerance * std::max(std::abs(before), 1e-12)) {
                out.converged = true;
                break;
            }
        }
        ++out.iterations;
        m = a.beta1 * m + (1.0 - a.beta1) * g;
        v = a.beta2 * v + (1.0 - a.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(a.beta1, out.iterations);
        const double c2 = 1.0 - std::pow(a.beta2, out.iterations);
        x -= a.step * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + a.epsilon).matrix());
        state = BodyState::from_vector(x);
        state.project();
        x = state.to_vector();
    }
    return out;
}

StageResult run_stage1(const FitProblem& problem, const FitConfig& config, const std::optional<BodyState>& init) {
    config.validate();
    const EnergyContext ctx = make_context(problem, config.weights);
    const BodyState start = init ? *init : initial_state(problem);
    return minimize(ctx, TermSet::stage(1, config.mode), start, config.stage1_iterations, config);
}

FitResult run_stage2(const FitProblem& problem, const FitConfig& config, const StageResult& stage1,
                     const FieldProvider* provider) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    FitResult r;
    r.mode = config.mode;
    r.stage1 = stage1;
    r.stage1_state = stage1.state;
    TermSet terms = TermSet::stage(2, config.mode);
    EnergyContext ctx = make_context(problem, config.weights);

    if (terms.fz) {
        if (!provider) throw ConfigError("mode " + to_string(config.mode) + " needs a field provider");
        const PosedBody posed = forward(*problem.body, stage1.state);
        const Vec3d root = posed.joints.row(0).transpose();
        r.free_zone = carve_free_zone(*provider, problem.observation.scanned_body, problem.observation.scene_points,
                                      root, config.carve_threshold);
        if (r.free_zone->empty()) {
            std::cerr << "warning: empty free zone, disabling the free-zone term\n";
            r.free_zone_disabled = true;
            terms.fz = false;
        } else {
            ctx.set_free_zone(r.free_zone->points);
        }
    }
    if (terms.tsv) {
        r.tsv = compute_tsv(problem.observation.camera.position, problem.observation.scanned_body, *problem.scene,
                            config.tsv);
        ctx.tsv = r.tsv->points;
    }
    r.stage2 = minimize(ctx, terms, stage1.state, config.stage2_iterations, config);
    r.state = r.stage2.state;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

FitResult fit(const FitProblem& problem, const FitConfig& config, const FieldProvider* provider,
              const std::optional<BodyState>& init) {
    const auto t0 = std::chrono::steady_clock::now();
    const StageResult s1 = run_stage1(problem, config, init);
    FitResult r = run_stage2(problem, config, s1, provider);
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace volfit
