#include "volfit/energy.hpp"

#include <cmath>

#include "volfit/errors.hpp"
#include "volfit/sampling.hpp"
#include "volfit/skeleton.hpp"
#include "volfit/volume_points.hpp"

namespace volfit {

void EnergyWeights::validate() const {
    for (double v : {lambda_j, lambda_d, lambda_r, lambda_p, lambda_c, lambda_fz, lambda_tsv, w_pose, w_shape, w_self})
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("energy weights must be finite and non-negative");
    for (double v : {sigma_j, sigma_d, sigma_fz, sigma_tsv, r_contact})
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("robustifier scales must be finite and positive");
}

double gmof(double e, double sigma) {
    const double s2 = sigma * sigma;
    const double e2 = e * e;
    if (std::isinf(e2)) return s2;
    return s2 * e2 / (s2 + e2);
}

double gmof_dsq(double e_squared, double sigma) {
    const double s2 = sigma * sigma;
    const double d = s2 + e_squared;
    return s2 * s2 / (d * d);
}

namespace {

void zero_like(Points* grad, Eigen::Index rows) {
    if (grad) grad->setZero(rows, 3);
}

// Robust penalty on the vector r = a - b; adds its gradient with respect to a.
double robust_pair(const Vec3d& a, const Vec3d& b, double sigma, Vec3d* grad_a) {
    const Vec3d r = a - b;
    const double e2 = r.squaredNorm();
    if (grad_a) *grad_a = 2.0 * gmof_dsq(e2, sigma) * r;
    return gmof(std::sqrt(e2), sigma);
}

}  // namespace

double e_joints(const Points& joints, const Camera& camera, const Points2& targets, const Eigen::VectorXd& confidence,
                double sigma, Points* grad) {
    if (targets.rows() != joints.rows() || confidence.size() != joints.rows())
        throw ConfigError("joint targets must match the joint count");
    zero_like(grad, joints.rows());
    double total = 0.0;
    for (Eigen::Index j = 0; j < joints.rows(); ++j) {
        if (confidence(j) == 0.0) continue;
        const Vec3d c = camera.to_camera(joints.row(j).transpose());
        if (c.z() <= 1e-9) continue;  // behind the camera: skipped
        const Vec2d proj(camera.fx * c.x() / c.z() + camera.cx, camera.fy * c.y() / c.z() + camera.cy);
        const Vec2d r = proj - targets.row(j).transpose();
        const double e2 = r.squaredNorm();
        total += confidence(j) * gmof(std::sqrt(e2), sigma);
        if (grad) {
            const Vec2d d_proj = confidence(j) * 2.0 * gmof_dsq(e2, sigma) * r;
            const double iz = 1.0 / c.z();
            const Vec3d d_cam(d_proj.x() * camera.fx * iz, d_proj.y() * camera.fy * iz,
                              -(d_proj.x() * camera.fx * c.x() + d_proj.y() * camera.fy * c.y()) * iz * iz);
            grad->row(j) = (camera.rotation * d_cam).transpose();
        }
    }
    return total;
}

double e_depth(const Points& visible, const Points& scan, double sigma, Points* grad, const PointIndex* scan_index,
               ArgminLog* log) {
    zero_like(grad, visible.rows());
    if (visible.rows() == 0 || scan.rows() == 0) return 0.0;
    PointIndex local;
    if (!scan_index) {
        local = PointIndex(scan);
        scan_index = &local;
    }
    double total = 0.0;
    Vec3d g;
    for (Eigen::Index i = 0; i < visible.rows(); ++i) {
        const Vec3d v = visible.row(i).transpose();
        const Neighbor nn = scan_index->nearest(v);
        if (log) log->push_back(nn.index);
        total += robust_pair(v, scan.row(nn.index).transpose(), sigma, grad ? &g : nullptr);
        if (grad) grad->row(i) += g.transpose();
    }
    const PointIndex vis_index(visible);
    for (Eigen::Index i = 0; i < scan.rows(); ++i) {
        const Vec3d p = scan.row(i).transpose();
        const Neighbor nn = vis_index.nearest(p);
        if (log) log->push_back(nn.index);
        total += robust_pair(visible.row(nn.index).transpose(), p, sigma, grad ? &g : nullptr);
        if (grad) grad->row(nn.index) += g.transpose();
    }
    return total;
}

namespace {

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// Closest points between segments p1-q1 and p2-q2; returns the branch taken.
int closest_segment_params(const Vec3d& p1, const Vec3d& q1, const Vec3d& p2, const Vec3d& q2, double& s, double& t) {
    constexpr double eps = 1e-14;
    const Vec3d d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
    const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
    if (a <= eps && e <= eps) {
        s = t = 0.0;
        return 0;
    }
    if (a <= eps) {
        s = 0.0;
        t = clamp01(f / e);
        return 1;
    }
    const double c = d1.dot(r);
    if (e <= eps) {
        t = 0.0;
        s = clamp01(-c / a);
        return 2;
    }
    const double b = d1.dot(d2);
    const double denom = a * e - b * b;
    s = denom > eps ? clamp01((b * f - c * e) / denom) : 0.0;
    t = (b * s + f) / e;
    if (t < 0.0) {
        t = 0.0;
        s = clamp01(-c / a);
        return 3;
    }
    if (t > 1.0) {
        t = 1.0;
        s = clamp01((b - c) / a);
        return 4;
    }
    return 5;
}

int region_offset(int joint) {
    return kShapeOffset + skeleton::kNumRegions + skeleton::bone_region(joint);
}

}  // namespace

double capsule_pair_overlap(const Vec3d& a0, const Vec3d& a1, double ra, const Vec3d& b0, const Vec3d& b1, double rb) {
    double s = 0.0, t = 0.0;
    closest_segment_params(a0, a1, b0, b1, s, t);
    const double gap = ra + rb - ((a0 + s * (a1 - a0)) - (b0 + t * (b1 - b0))).norm();
    return gap > 0.0 ? gap * gap : 0.0;
}

CapsuleOverlap capsule_overlap(const Points& joints, const std::array<double, 22>& radius, ArgminLog* log) {
    CapsuleOverlap out;
    out.grad_joints.setZero(joints.rows(), 3);
    for (const auto& pr : skeleton::self_penetration_pairs()) {
        const int a = pr[0], b = pr[1];
        const int pa = skeleton::kParent[static_cast<std::size_t>(a)];
        const int pb = skeleton::kParent[static_cast<std::size_t>(b)];
        const Vec3d p1 = joints.row(pa).transpose(), q1 = joints.row(a).transpose();
        const Vec3d p2 = joints.row(pb).transpose(), q2 = joints.row(b).transpose();
        double s = 0.0, t = 0.0;
        const int branch = closest_segment_params(p1, q1, p2, q2, s, t);
        const Vec3d diff = (p1 + s * (q1 - p1)) - (p2 + t * (q2 - p2));
        const double dist = diff.norm();
        const double gap = radius[static_cast<std::size_t>(a)] + radius[static_cast<std::size_t>(b)] - dist;
        if (log) log->push_back(gap > 0.0 ? branch + 1 : 0);
        if (gap <= 0.0) continue;
        out.value += gap * gap;
        out.grad_radius[static_cast<std::size_t>(a)] += 2.0 * gap;
        out.grad_radius[static_cast<std::size_t>(b)] += 2.0 * gap;
        if (dist < 1e-12) continue;
        const Vec3d n = -2.0 * gap * diff / dist;  // d(gap^2)/d(diff)
        out.grad_joints.row(pa) += ((1.0 - s) * n).transpose();
        out.grad_joints.row(a) += (s * n).transpose();
        out.grad_joints.row(pb) -= ((1.0 - t) * n).transpose();
        out.grad_joints.row(b) -= (t * n).transpose();
    }
    return out;
}

std::array<double, 22> bone_radii(const BodyState& state) {
    std::array<double, 22> r{};
    for (int j = 1; j < skeleton::kNumJoints; ++j)
        r[static_cast<std::size_t>(j)] =
            skeleton::bone_radius(j) * state.shape(skeleton::kNumRegions + skeleton::bone_region(j));
    return r;
}

double e_reg(const BodyState& state, const Points& joints, const EnergyWeights& w, Points* grad_joints,
             ParamVector* grad_params, ArgminLog* log) {
    const Eigen::VectorXd shape_dev = state.shape - Eigen::VectorXd::Ones(state.shape.size());
    const CapsuleOverlap cap = capsule_overlap(joints, bone_radii(state), log);
    const double value = w.w_pose * state.pose.squaredNorm() + w.w_shape * shape_dev.squaredNorm() + w.w_self * cap.value;
    if (grad_joints) *grad_joints = w.w_self * cap.grad_joints;
    if (grad_params) {
        grad_params->setZero();
        grad_params->segment(kPoseOffset, kNumPoseParams) = 2.0 * w.w_pose * state.pose;
        grad_params->segment(kShapeOffset, kNumShapeParams) = 2.0 * w.w_shape * shape_dev;
        for (int j = 1; j < skeleton::kNumJoints; ++j)
            (*grad_params)(region_offset(j)) +=
                w.w_self * cap.grad_radius[static_cast<std::size_t>(j)] * skeleton::bone_radius(j);
    }
    return value;
}

double e_penetration(const Points& vertices, const SdfGrid& sdf, Points* grad, ArgminLog* log) {
    zero_like(grad, vertices.rows());
    double total = 0.0;
    Vec3d g;
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        const Vec3d v = vertices.row(i).transpose();
        const double d = sdf.sample(v, grad ? &g : nullptr);
        if (log) {
            const Vec3i c = sdf.cell_of(v);
            log->push_back(d < 0.0 ? 1 + c.x() + 4096LL * (c.y() + 4096LL * c.z()) : 0);
        }
        if (d >= 0.0) continue;
        total += d * d;
        if (grad) grad->row(i) = (2.0 * d * g).transpose();
    }
    return total;
}

double e_contact(const Points& vertices, const IndexList& contact_ids, const TriangleBvh& scene, double r_contact,
                 double sigma, Points* grad, ArgminLog* log) {
    zero_like(grad, vertices.rows());
    if (scene.empty()) return 0.0;
    double total = 0.0;
    Vec3d g;
    for (int id : contact_ids) {
        const Vec3d v = vertices.row(id).transpose();
        const SurfacePoint sp = scene.closest_point(v);
        const bool active = sp.distance < r_contact;
        if (log) log->push_back(active ? sp.face + 1 : 0);
        if (!active) continue;
        total += robust_pair(v, sp.point, sigma, grad ? &g : nullptr);
        if (grad) grad->row(id) += g.transpose();
    }
    return total;
}

double e_fz(const Points& internal, const PointIndex& free_zone, double sigma, Points* grad, ArgminLog* log) {
    zero_like(grad, internal.rows());
    if (free_zone.empty()) return 0.0;
    double total = 0.0;
    Vec3d g;
    for (Eigen::Index i = 0; i < internal.rows(); ++i) {
        const Vec3d p = internal.row(i).transpose();
        const Neighbor nn = free_zone.nearest(p);
        if (log) log->push_back(nn.index);
        total += robust_pair(p, free_zone.points().row(nn.index).transpose(), sigma, grad ? &g : nullptr);
        if (grad) grad->row(i) = g.transpose();
    }
    return total;
}

double e_tsv(const Points& internal, const Points& tsv, double sigma, Points* grad, ArgminLog* log) {
    zero_like(grad, internal.rows());
    if (internal.rows() == 0 || tsv.rows() == 0) return 0.0;
    const PointIndex index(internal);
    double total = 0.0;
    Vec3d g;
    for (Eigen::Index i = 0; i < tsv.rows(); ++i) {
        const Vec3d t = tsv.row(i).transpose();
        const Neighbor nn = index.nearest(t);
        if (log) log->push_back(nn.index);
        total += robust_pair(internal.row(nn.index).transpose(), t, sigma, grad ? &g : nullptr);
        if (grad) grad->row(nn.index) += g.transpose();
    }
    return total;
}

std::string to_string(FitMode m) {
    switch (m) {
        case FitMode::ours: return "ours";
        case FitMode::ours_no_fz: return "ours_no_fz";
        case FitMode::ours_no_tsv: return "ours_no_tsv";
        case FitMode::ours_surface_match: return "ours_surface_match";
        case FitMode::smplify_d: return "smplify_d";
        case FitMode::prox_d: return "prox_d";
    }
    return "unknown";
}

const std::vector<FitMode>& all_fit_modes() {
    static const std::vector<FitMode> modes{FitMode::ours,        FitMode::ours_no_fz,         FitMode::ours_no_tsv,
                                            FitMode::ours_surface_match, FitMode::smplify_d, FitMode::prox_d};
    return modes;
}

FitMode parse_fit_mode(const std::string& s) {
    for (FitMode m : all_fit_modes())
        if (to_string(m) == s) return m;
    throw ConfigError("unknown fit mode '" + s + "'");
}

TermSet TermSet::stage(int stage, FitMode mode) {
    if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
    TermSet t;
    if (stage == 1 || mode == FitMode::smplify_d) return t;
    t.contact = true;
    if (mode == FitMode::prox_d) {
        t.penetration = true;
        return t;
    }
    t.fz = mode != FitMode::ours_no_fz;
    t.tsv = mode != FitMode::ours_no_tsv;
    t.surface_match = mode == FitMode::ours_surface_match;
    return t;
}

void EnergyContext::set_scan(Points p) {
    PointIndex index = p.rows() > 0 ? PointIndex(p) : PointIndex();
    scan = std::move(p);
    scan_index = std::move(index);
}

void EnergyContext::set_free_zone(Points p) {
    PointIndex index = p.rows() > 0 ? PointIndex(p) : PointIndex();
    free_zone = std::move(p);
    free_zone_index = std::move(index);
}

EnergyBreakdown total_energy(const EnergyContext& ctx, const TermSet& terms, const BodyState& state, ParamVector* grad,
                             ArgminLog* log) {
    if (!ctx.body) throw ConfigError("energy context has no body template");
    const BodyTemplate& body = *ctx.body;
    const EnergyWeights& w = ctx.weights;
    const bool volume = (terms.fz || terms.tsv) && !terms.surface_match;
    if (volume && !body.pairs) throw ConfigError("volume terms need the template's interpolation pairs");
    if (terms.penetration && !ctx.scene_sdf) throw ConfigError("penetration term needs a scene SDF");

    EnergyBreakdown out;
    const BodyFunctional fn = [&](const BodyState& s, const PosedBody& posed, BodyGradient& g) {
        Points tmp;
        const bool want = grad != nullptr;

        // Argmin choices of a zero-weight term do not affect the total.
        auto log_for = [&](double weight) { return weight != 0.0 ? log : nullptr; };

        out.joints = e_joints(posed.joints, ctx.camera, ctx.joint_targets, ctx.joint_confidence, w.sigma_j,
                              want ? &tmp : nullptr);
        if (want) g.joints += w.lambda_j * tmp;

        DepthBuffer no_scene;
        const DepthBuffer* scene_depth = &ctx.scene_depth;
        if (ctx.scene_depth.width != ctx.camera.width || ctx.scene_depth.height != ctx.camera.height) {
            no_scene = DepthBuffer(ctx.camera.width, ctx.camera.height);
            scene_depth = &no_scene;
        }
        const IndexList vis = visible_vertices(posed.vertices, body.mesh.faces(), ctx.camera, *scene_depth);
        ArgminLog* depth_log = log_for(w.lambda_d);
        if (depth_log) depth_log->insert(depth_log->end(), vis.begin(), vis.end());
        const Points visible = select_rows(posed.vertices, vis);
        out.depth = e_depth(visible, ctx.scan, w.sigma_d, want ? &tmp : nullptr,
                            ctx.scan_index.empty() ? nullptr : &ctx.scan_index, depth_log);
        if (want)
            for (std::size_t i = 0; i < vis.size(); ++i)
                g.vertices.row(vis[i]) += w.lambda_d * tmp.row(static_cast<Eigen::Index>(i));

        ParamVector gp;
        out.reg = e_reg(s, posed.joints, w, want ? &tmp : nullptr, want ? &gp : nullptr, log_for(w.lambda_r));
        if (want) {
            g.joints += w.lambda_r * tmp;
            g.params += w.lambda_r * gp;
        }
        double total = w.lambda_j * out.joints + w.lambda_d * out.depth + w.lambda_r * out.reg;

        if (terms.penetration) {
            out.penetration =
                e_penetration(posed.vertices, *ctx.scene_sdf, want ? &tmp : nullptr, log_for(w.lambda_p));
            if (want) g.vertices += w.lambda_p * tmp;
            total += w.lambda_p * out.penetration;
        }
        if (terms.contact && ctx.scene) {
            out.contact = e_contact(posed.vertices, body.contact_vertices, *ctx.scene, w.r_contact, w.sigma_d,
                                    want ? &tmp : nullptr, log_for(w.lambda_c));
            if (want) g.vertices += w.lambda_c * tmp;
            total += w.lambda_c * out.contact;
        }
        if (terms.fz || terms.tsv) {
            const Points pts = volume ? internal_points(posed.vertices, *body.pairs) : posed.vertices;
            Points gpts = Points::Zero(pts.rows(), 3);
            if (terms.fz) {
                out.fz = e_fz(pts, ctx.free_zone_index, w.sigma_fz, want ? &tmp : nullptr, log_for(w.lambda_fz));
                if (want) gpts += w.lambda_fz * tmp;
                total += w.lambda_fz * out.fz;
            }
            if (terms.tsv) {
                out.tsv = e_tsv(pts, ctx.tsv, w.sigma_tsv, want ? &tmp : nullptr, log_for(w.lambda_tsv));
                if (want) gpts += w.lambda_tsv * tmp;
                total += w.lambda_tsv * out.tsv;
            }
            if (want) {
                if (volume)
                    internal_points_backward(gpts, *body.pairs, g.vertices);
                else
                    g.vertices += gpts;
            }
        }
        out.total = total;
        return total;
    };

    if (grad) {
        *grad = parameter_gradient(body, state, fn);
    } else {
        BodyGradient g = BodyGradient::zeros(body.num_vertices());
        fn(state, forward(body, state), g);
    }
    return out;
}

}  // namespace volfit
