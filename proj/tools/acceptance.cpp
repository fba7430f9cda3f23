// Acceptance suite: one [PASS]/[FAIL] line per criterion.
//
//   volfit_acceptance [--only 1,3,...] [--known-red 7,...] [--seeds N] [--threads N]
//                     [--fznet-queries N] [--fznet-batch N] [--json PATH]
//
// Criteria listed in --known-red still run and print their real [PASS]/[FAIL]
// line; they are only left out of the exit status.

#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "volfit/errors.hpp"
#include "volfit/gradient_check.hpp"
#include "volfit/parallel.hpp"
#include "volfit/sampling.hpp"
#include "volfit/sdf.hpp"
#include "volfit/shadow_volume.hpp"
#include "volfit/volume_points.hpp"

using namespace volfit;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::shared_ptr<const BodyTemplate> shared_body() {
    static const std::shared_ptr<const BodyTemplate> body = [] {
        auto t = std::make_shared<BodyTemplate>(build_template(64));
        t->pairs = compute_pairs(*t);
        return std::shared_ptr<const BodyTemplate>(t);
    }();
    return body;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Standard error of the mean (sample standard deviation / sqrt(n)).
double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return std::numeric_limits<double>::infinity();
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

Points random_points(Rng& rng, int n, double scale) {
    Points p(n, 3);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) p(i, k) = scale * (2.0 * uniform01(rng) - 1.0);
    return p;
}

double brute_nn(const Vec3d& q, const Points& set) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < set.rows(); ++j) best = std::min(best, (row3(set, j) - q).norm());
    return best;
}

BodyState perturbed(const BodyState& base, Rng& rng, double pose_std, double trans_std = 0.0,
                    double shape_std = 0.0) {
    BodyState s = base;
    for (int i = 0; i < kNumPoseParams; ++i) s.pose(i) += pose_std * standard_normal(rng);
    for (int i = 0; i < 3; ++i) {
        s.root_orient(i) += 0.5 * pose_std * standard_normal(rng);
        s.translation(i) += trans_std * standard_normal(rng);
    }
    for (int i = 0; i < kNumShapeParams; ++i) s.shape(i) += shape_std * standard_normal(rng);
    s.project();
    return s;
}

// ---------------------------------------------------------------------------
// Criteria 1 and 2: ablation and baseline directions over the synthetic suite.

struct SuiteRow {
    int seed = 0;
    std::string scenario;
    bool occluded = false;
    std::map<FitMode, FitReport> reports;
};

struct SuiteRun {
    std::vector<SuiteRow> rows;
    double seconds = 0.0;
};

const std::vector<FitMode>& suite_modes() {
    static const std::vector<FitMode> modes = {FitMode::ours, FitMode::ours_no_fz, FitMode::ours_no_tsv,
                                               FitMode::prox_d, FitMode::smplify_d};
    return modes;
}

// Stage 1 does not depend on the mode, so it runs once per scenario and every
// mode continues from the same stage-1 result.
SuiteRun run_suite(int seeds) {
    SuiteRun run;
    const auto t0 = Clock::now();
    const auto body = shared_body();
    const FitConfig base;
    for (int seed = 1; seed <= seeds; ++seed) {
        for (const Scenario& sc : scenario_suite(*body, static_cast<std::uint64_t>(seed))) {
            const FitProblem problem = make_problem(body, sc, observe(sc, *body));
            const GtFieldProvider provider(posed_mesh(*body, forward(*body, sc.gt_state)));
            const StageResult s1 = run_stage1(problem, base);
            SuiteRow row{seed, sc.name, is_occluded_tag(sc.tag), {}};
            for (FitMode m : suite_modes()) {
                FitConfig cfg = base;
                cfg.mode = m;
                const FitResult r = run_stage2(problem, cfg, s1, &provider);
                row.reports[m] = evaluate(r, sc, problem, 1.0);
            }
            std::fprintf(stderr, "  seed %d %-22s vnc %.3f/%.3f pm %.2f/%.2f cm (%.0f s)\n", seed, sc.name.c_str(),
                         row.reports[FitMode::ours].vnc, row.reports[FitMode::ours_no_fz].vnc,
                         100.0 * row.reports[FitMode::ours].pm.value_or(0.0),
                         100.0 * row.reports[FitMode::ours_no_tsv].pm.value_or(0.0), seconds_since(t0));
            run.rows.push_back(std::move(row));
        }
    }
    run.seconds = seconds_since(t0);
    return run;
}

Outcome criterion_ablation(const SuiteRun& run, int seeds) {
    // Per-seed suite means, then the paired difference across seeds.
    std::vector<double> dvnc, dpm;
    std::map<FitMode, std::vector<double>> vnc_all, pm_all;
    for (int seed = 1; seed <= seeds; ++seed) {
        std::map<FitMode, std::vector<double>> vnc, pm;
        for (const auto& row : run.rows) {
            if (row.seed != seed) continue;
            for (const auto& [m, r] : row.reports) {
                vnc[m].push_back(r.vnc);
                if (r.pm) pm[m].push_back(*r.pm);
            }
        }
        dvnc.push_back(mean(vnc[FitMode::ours]) - mean(vnc[FitMode::ours_no_fz]));
        dpm.push_back(mean(pm[FitMode::ours_no_tsv]) - mean(pm[FitMode::ours]));
        for (FitMode m : {FitMode::ours, FitMode::ours_no_fz, FitMode::ours_no_tsv}) {
            vnc_all[m].push_back(mean(vnc[m]));
            pm_all[m].push_back(mean(pm[m]));
        }
    }
    const double vnc_gap = mean(dvnc), vnc_se = standard_error(dvnc);
    const double pm_gap = mean(dpm), pm_se = standard_error(dpm);
    const bool runtime_ok = run.seconds < 1800.0;
    Outcome o;
    o.pass = vnc_gap > vnc_se && pm_gap > pm_se && runtime_ok;
    o.detail = fmt("VNC ours %.4f vs no_fz %.4f (gap %.4f, SE %.4f); PM ours %.3f cm vs no_tsv %.3f cm (gap %.4f cm, "
                   "SE %.4f cm); %zu scenarios x %d seeds in %.0f s (limit 1800 s)",
                   mean(vnc_all[FitMode::ours]), mean(vnc_all[FitMode::ours_no_fz]), vnc_gap, vnc_se,
                   100.0 * mean(pm_all[FitMode::ours]), 100.0 * mean(pm_all[FitMode::ours_no_tsv]), 100.0 * pm_gap,
                   100.0 * pm_se, run.rows.size() / static_cast<std::size_t>(seeds), seeds, run.seconds);
    return o;
}

Outcome criterion_baselines(const SuiteRun& run) {
    std::vector<double> ours, prox, smpl;
    int violations = 0;
    for (const auto& row : run.rows) {
        if (!row.occluded) continue;
        const double a = row.reports.at(FitMode::ours).vnc, b = row.reports.at(FitMode::prox_d).vnc;
        ours.push_back(a);
        prox.push_back(b);
        smpl.push_back(row.reports.at(FitMode::smplify_d).vnc);
        violations += a < b;
    }
    const double rate = ours.empty() ? 1.0 : static_cast<double>(violations) / static_cast<double>(ours.size());
    Outcome o;
    o.pass = !ours.empty() && mean(ours) >= mean(prox) && mean(prox) >= mean(smpl) && rate <= 0.2;
    o.detail = fmt("occluded VNC ours %.4f >= prox_d %.4f >= smplify_d %.4f; ours < prox_d on %d of %zu scenarios "
                   "(%.0f%%, limit 20%%)",
                   mean(ours), mean(prox), mean(smpl), violations, ours.size(), 100.0 * rate);
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 3: gradients of every energy term.

IndexList every_nth(Eigen::Index n, int step) {
    IndexList out;
    for (Eigen::Index i = 0; i < n; i += step) out.push_back(static_cast<int>(i));
    return out;
}

Outcome criterion_gradients() {
    const auto body = shared_body();
    const Scenario scenario = make_scenario(*body, "sitting_booth", 0, 7);
    const FitProblem problem = make_problem(body, scenario, observe(scenario, *body));
    EnergyContext base = make_context(problem, EnergyWeights{});
    // Thinned sets keep nearest-neighbour switches under a 1e-5 step rare.
    const Points internal = internal_points(forward(*body, scenario.gt_state).vertices, *body->pairs);
    base.set_free_zone(select_rows(internal, every_nth(internal.rows(), 5)));
    const Points tsv = compute_tsv(base.camera.position, base.scan, *problem.scene).points;
    base.tsv = select_rows(tsv, every_nth(tsv.rows(), 25));

    const auto t0 = Clock::now();
    Rng rng(99);
    bool ok = true;
    double worst = 0.0;
    int skipped = 0;
    std::string failures;
    for (EnergyTerm term : all_energy_terms()) {
        TermSet terms;
        const EnergyContext ctx = isolate_term(base, term, &terms);
        int checked = 0, attempts = 0;
        while (checked < 10 && attempts < 80) {
            ++attempts;
            const BodyState s = perturbed(scenario.gt_state, rng, 0.15, 0.03, 0.05);
            const GradientCheck g = check_gradient(ctx, terms, s, 1e-5, 2, rng);
            if (g.skipped || g.value == 0.0) {
                ++skipped;
                continue;
            }
            ++checked;
            worst = std::max(worst, g.relative_error);
            if (!(g.relative_error < 1e-4)) ok = false;
        }
        if (checked < 10) {
            ok = false;
            failures += " " + to_string(term) + fmt("(%d states)", checked);
        }
    }
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = ok && elapsed < 5.0;
    o.detail = fmt("7 terms x 10 states, worst relative error %.2e (limit 1e-4), %d states skipped for argmin "
                   "changes or zero value, %.2f s (limit 5 s)%s",
                   worst, skipped, elapsed, failures.empty() ? "" : (";" + failures).c_str());
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 4: geometry oracles.

std::optional<RayHit> brute_first_hit(const Ray& ray, const TriMesh& mesh, double t_min) {
    std::optional<RayHit> best;
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        auto h = intersect_triangle(ray, mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2));
        if (h && h->distance >= t_min && (!best || h->distance < best->distance)) {
            h->face = static_cast<int>(f);
            best = h;
        }
    }
    return best;
}

// Exhaustive closest-triangle distance, signed by the generalized winding number.
double brute_signed_distance(const TriMesh& mesh, const Vec3d& p) {
    double best = std::numeric_limits<double>::infinity();
    double winding = 0.0;
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        const Vec3d a = mesh.corner(f, 0), b = mesh.corner(f, 1), c = mesh.corner(f, 2);
        best = std::min(best, (closest_point_on_triangle(p, a, b, c) - p).norm());
        const Vec3d ra = a - p, rb = b - p, rc = c - p;
        const double la = ra.norm(), lb = rb.norm(), lc = rc.norm();
        const double num = ra.dot(rb.cross(rc));
        const double den = la * lb * lc + ra.dot(rb) * lc + rb.dot(rc) * la + rc.dot(ra) * lb;
        winding += 2.0 * std::atan2(num, den);
    }
    return winding / (4.0 * M_PI) > 0.5 ? -best : best;
}

Outcome criterion_oracles() {
    std::vector<std::string> parts;
    bool ok = true;
    auto record = [&](const std::string& name, int trials, int mismatches, const std::string& extra = "") {
        ok = ok && mismatches == 0 && trials >= 100;
        parts.push_back(fmt("%s %d/%d%s", name.c_str(), trials - mismatches, trials, extra.c_str()));
    };

    {  // Ray casting: BVH first hit against every triangle.
        Rng rng(7);
        const TriMesh mesh = merge_meshes({make_icosphere(Vec3d(0.2, 0, 0), 0.7, 2),
                                           make_box(Vec3d(0.5, 0.5, 0.5), Vec3d(0.3, 0.2, 0.4)),
                                           make_cylinder(Vec3d(-0.5, -0.4, -0.6), 0.25, 0.9, 17)});
        const TriangleBvh bvh(mesh);
        int bad = 0;
        for (int trial = 0; trial < 500; ++trial) {
            const Vec3d o = random_points(rng, 1, 2.0).row(0).transpose();
            const Vec3d target = random_points(rng, 1, 0.8).row(0).transpose();
            const Ray ray(o, target - o);
            const double t_min = trial % 3 == 0 ? 0.3 : 0.0;
            const auto a = bvh.first_hit(ray, t_min);
            const auto e = brute_first_hit(ray, mesh, t_min);
            if (a.has_value() != e.has_value() || (a && (a->distance != e->distance || a->face != e->face))) ++bad;
        }
        record("ray casting", 500, bad);
    }
    {  // Nearest neighbour: k-d tree against a linear scan.
        Rng rng(3);
        const Points pts = random_points(rng, 10000, 1.0);
        const PointIndex index(pts);
        int bad = 0;
        for (int q = 0; q < 200; ++q) {
            const Vec3d p = random_points(rng, 1, 1.2).row(0).transpose();
            int best = -1;
            double best_sq = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                const double d = (row3(pts, i) - p).squaredNorm();
                if (d < best_sq) {
                    best_sq = d;
                    best = static_cast<int>(i);
                }
            }
            const Neighbor r = index.nearest(p);
            if (r.index != best || r.distance != std::sqrt(best_sq)) ++bad;
        }
        record("nearest neighbour", 200, bad);
    }
    {  // SDF sampling against the exact signed distance, within one voxel.
        const TriMesh sphere = make_icosphere(Vec3d::Zero(), 1.0, 3);
        const double vs = 0.05;
        const SdfGrid grid = build_sdf_grid(sphere, 0.2, vs);
        Rng rng(21);
        int bad = 0;
        double worst = 0.0;
        for (int i = 0; i < 500; ++i) {
            const Vec3d p = random_points(rng, 1, 1.15).row(0).transpose();
            const double err = std::abs(grid.sample(p) - brute_signed_distance(sphere, p));
            worst = std::max(worst, err);
            bad += !(err < vs);
        }
        record("SDF sampling", 500, bad, fmt(" (max error %.4f, voxel %.2f)", worst, vs));
    }
    {  // TSV point sets: per-ray counts and positions against an exhaustive intersection scan.
        // Use the suite scenario whose scene cuts the most shadow rays short.
        const auto body = shared_body();
        const TsvConfig cfg;
        const auto suite = scenario_suite(*body, 7);
        const Scenario* chosen = nullptr;
        Observation obs;
        TsvPoints tsv;
        for (const Scenario& s : suite) {
            Observation o = observe(s, *body);
            TsvPoints t = compute_tsv(o.camera.position, o.scanned_body, s.scene, cfg);
            if (!chosen || t.size() < tsv.size()) {
                chosen = &s;
                obs = std::move(o);
                tsv = std::move(t);
            }
        }
        const Scenario& sc = *chosen;
        std::vector<int> counts(static_cast<std::size_t>(obs.scanned_body.rows()), 0);
        for (int s : tsv.source) ++counts[static_cast<std::size_t>(s)];
        int bad = 0, truncated = 0;
        Eigen::Index row = 0;
        const int rays = static_cast<int>(obs.scanned_body.rows());
        for (int i = 0; i < rays; ++i) {
            const Vec3d ps = row3(obs.scanned_body, i);
            const Ray ray(ps, ps - obs.camera.position);
            double di = std::numeric_limits<double>::infinity();
            for (Eigen::Index f = 0; f < sc.scene.num_faces(); ++f)
                if (const auto hit =
                        intersect_triangle(ray, sc.scene.corner(f, 0), sc.scene.corner(f, 1), sc.scene.corner(f, 2)))
                    if (hit->distance >= 1e-6 && hit->distance < di) di = hit->distance;
            const double len = std::min(cfg.max_length, di);
            truncated += di < cfg.max_length;
            bool ray_ok = counts[static_cast<std::size_t>(i)] == static_cast<int>(std::floor(len / cfg.interval + 1e-9));
            for (int k = 0; k < counts[static_cast<std::size_t>(i)]; ++k, ++row) {
                const Vec3d expected = ps + cfg.interval * (k + 1) * ray.direction;
                ray_ok = ray_ok && tsv.source[static_cast<std::size_t>(row)] == i &&
                         (row3(tsv.points, row) - expected).norm() < 1e-12;
            }
            bad += !ray_ok;
        }
        record("TSV rays", rays, bad + (row != tsv.size()), fmt(" (%d truncated)", truncated));
    }
    {  // E_fz and E_tsv against quadratic scans.
        Rng rng(5);
        int bad = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const Points internal = random_points(rng, 40, 0.3);
            const Points other = random_points(rng, 30, 0.3);
            double fz = 0.0, tsv = 0.0;
            for (int i = 0; i < 40; ++i) fz += gmof(brute_nn(row3(internal, i), other), 0.15);
            for (int i = 0; i < 30; ++i) tsv += gmof(brute_nn(row3(other, i), internal), 0.05);
            bad += e_fz(internal, PointIndex(other), 0.15) != fz || e_tsv(internal, other, 0.05) != tsv;
        }
        record("E_fz/E_tsv", 100, bad);
    }
    {  // PM against a quadratic scan.
        Rng rng(8);
        int bad = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const Points scan = random_points(rng, 40, 1.0);
            const Points verts = random_points(rng, 60, 1.0);
            double sum = 0.0;
            for (Eigen::Index i = 0; i < scan.rows(); ++i) sum += brute_nn(row3(scan, i), verts);
            bad += pm(scan, verts).value() != sum / static_cast<double>(scan.rows());
        }
        record("PM", 100, bad);
    }
    Outcome o;
    o.pass = ok;
    for (std::size_t i = 0; i < parts.size(); ++i) o.detail += (i ? "; " : "") + parts[i];
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 5: single-ray shadow volumes.

Outcome criterion_tsv_examples() {
    const Vec3d camera = Vec3d::Zero();
    Points ps(1, 3);
    ps << 0, 0, 1;
    bool ok = true;
    const TsvPoints open = compute_tsv(camera, ps, TriMesh());
    ok = ok && open.size() == 10;
    for (int k = 0; ok && k < 10; ++k)
        ok = (row3(open.points, k) - Vec3d(0, 0, 1.0 + 0.01 * (k + 1))).norm() < 1e-12;
    const TsvPoints walled = compute_tsv(camera, ps, make_box(Vec3d(0, 0, 1.25), Vec3d(1, 1, 0.2)));
    const bool wall_ok = walled.size() == 5 && std::abs(walled.points(4, 2) - 1.05) < 1e-12;
    Outcome o;
    o.pass = ok && wall_ok;
    o.detail = fmt("unblocked ray: %td points from 1.01 to 1.10 (expected 10); wall at 1.05: %td points, last at %.4f "
                   "(expected 5, 1.05)",
                   static_cast<std::ptrdiff_t>(open.size()), static_cast<std::ptrdiff_t>(walled.size()),
                   walled.size() ? walled.points(walled.size() - 1, 2) : 0.0);
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 6: VNC separates a plank through the torso from hands on a table.

Outcome criterion_vnc_discrimination() {
    const BodyTemplate& body = *shared_body();
    const PosedBody posed = forward(body, BodyState{});
    const Points internal = internal_points(posed.vertices, *body.pairs);

    const Vec3d pelvis = row3(posed.joints, 0), neck = row3(posed.joints, 12);
    const TriMesh plank = make_box(0.5 * (pelvis + neck), Vec3d(0.2, 0.03, 0.5 * (neck - pelvis).norm() + 0.1));
    const SdfGrid plank_sdf = build_sdf_grid(plank, 0.3, 0.01);
    const double plank_nc = nc(posed.vertices, plank_sdf), plank_vnc = vnc(internal, plank_sdf);

    const Vec3d hand = row3(posed.joints, 21);
    double lowest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < posed.vertices.rows(); ++i)
        if ((row3(posed.vertices, i) - hand).norm() < 0.12) lowest = std::min(lowest, posed.vertices(i, 2));
    const TriMesh table = make_box(Vec3d(hand.x(), hand.y(), lowest + 0.01 - 0.4), Vec3d(0.3, 0.3, 0.4));
    const SdfGrid table_sdf = build_sdf_grid(table, 0.3, 0.01);
    const double table_nc = nc(posed.vertices, table_sdf), table_vnc = vnc(internal, table_sdf);

    Outcome o;
    o.pass = plank_nc > 0.9 && plank_vnc < 0.85 && table_nc > 0.95 && table_vnc > 0.95;
    o.detail = fmt("plank NC %.3f (> 0.9) VNC %.3f (< 0.85); table NC %.4f (> 0.95) VNC %.4f (> 0.95)", plank_nc,
                   plank_vnc, table_nc, table_vnc);
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 7: FZNet overfit on 10 scenarios.

struct FznetSettings {
    int queries = 2000;
    int batch = 2000;
    double carve_threshold = 0.03125;
};

Outcome criterion_fznet(const FznetSettings& settings) {
    const auto body = shared_body();
    const auto suite = scenario_suite(*body, 1);
    std::vector<FzNetTrainingScene> scenes;
    std::vector<Points> internals;
    std::vector<Vec3d> roots;
    for (int i = 0; i < 10; ++i) {
        const Scenario& s = suite[static_cast<std::size_t>(2 * i) % suite.size()];
        const Observation obs = observe(s, *body);
        const PosedBody gt = forward(*body, s.gt_state);
        const Vec3d root = row3(gt.joints, 0);
        roots.push_back(root);
        internals.push_back(internal_points(gt.vertices, *body->pairs));
        scenes.push_back({obs.scanned_body, obs.scene_points,
                          std::make_shared<FieldLabeler>(posed_mesh(*body, gt), s.scene, root, 11 + i)});
    }
    FzNetTrainConfig cfg;  // lr 1e-4, x0.5 from epoch 100, 200 epochs
    cfg.queries_per_epoch = settings.queries;
    cfg.batch_size = settings.batch;
    cfg.sampling.interior_zero = true;

    const auto t0 = Clock::now();
    const FzNetTrainResult trained = train_fznet(scenes, cfg);
    const double train_seconds = seconds_since(t0);
    const double loss = evaluate_fznet(trained.model, scenes, 2000, 77, cfg.clamp, cfg.sampling);

    const FzNetProvider provider(trained.model);
    const double reach = kCarveSide / kCarveResolution * std::sqrt(3.0);
    Eigen::Index covered = 0, total = 0;
    double worst = 1.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const FreeZonePoints fz = carve_free_zone(provider, scenes[i].body_points, scenes[i].scene_points, roots[i],
                                                  settings.carve_threshold);
        Eigen::Index hit = 0;
        if (!fz.empty()) {
            const PointIndex index(fz.points);
            for (Eigen::Index k = 0; k < internals[i].rows(); ++k)
                hit += index.nearest(row3(internals[i], k)).distance <= reach;
        }
        covered += hit;
        total += internals[i].rows();
        worst = std::min(worst, static_cast<double>(hit) / static_cast<double>(internals[i].rows()));
    }
    const double coverage = static_cast<double>(covered) / static_cast<double>(total);
    Outcome o;
    o.pass = loss < 0.02 && coverage >= 0.9;
    o.detail = fmt("mean clamped L1 %.4f on fresh queries (final epoch %.4f, limit 0.02); internal-point coverage "
                   "%.1f%% (worst scene %.1f%%, limit 90%%, mu %.5f); %d epochs, %d queries/scene/epoch, batch %d, "
                   "%.0f s",
                   loss, trained.loss_trace.back(), 100.0 * coverage, 100.0 * worst, settings.carve_threshold,
                   cfg.epochs, cfg.queries_per_epoch, cfg.batch_size, train_seconds);
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 8: recovery on the unoccluded control scenario.

Outcome criterion_recovery() {
    const auto body = shared_body();
    const Scenario sc = make_scenario(*body, "control", 0, 7);
    const FitProblem problem = make_problem(body, sc, observe(sc, *body));
    const GtFieldProvider provider(posed_mesh(*body, forward(*body, sc.gt_state)));
    Rng rng(5);
    const BodyState init = perturbed(sc.gt_state, rng, 0.1);
    const FitResult r = fit(problem, FitConfig{}, &provider, init);
    const double jpe0 = jpe_v2v(init, sc.gt_state, *body).jpe;
    const double jpe = jpe_v2v(r.state, sc.gt_state, *body).jpe;
    Outcome o;
    o.pass = jpe < 0.02 && r.total_iterations() <= 800;
    o.detail = fmt("JPE %.4f m -> %.4f m (limit 0.02) in %d iterations (limit 800)", jpe0, jpe, r.total_iterations());
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 9: determinism across reruns and thread counts.

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"volfit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

double max_numeric_difference(const json& a, const json& b, bool& same_shape) {
    if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>());
    if (a.type() != b.type() || a.size() != b.size()) {
        same_shape = false;
        return 0.0;
    }
    double worst = 0.0;
    if (a.is_array()) {
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, max_numeric_difference(a[i], b[i], same_shape));
    } else if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) {
                same_shape = false;
                continue;
            }
            worst = std::max(worst, max_numeric_difference(it.value(), b.at(it.key()), same_shape));
        }
    } else if (a != b) {
        same_shape = false;
    }
    return worst;
}

Outcome criterion_determinism(int threads_n) {
    const fs::path base = fs::temp_directory_path() / ("volfit_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(base);
    const fs::path data = base / "data";
    bool ok = run_cli({"--threads", "1", "synth", "--seed", "11", "--out", data.string()}) == 0;
    bool bytes_equal = ok, values_close = ok, synth_equal = ok;
    double worst = 0.0;
    int compared = 0;
    if (ok) {
        const fs::path data2 = base / "data_n";
        ok = run_cli({"--threads", std::to_string(threads_n), "synth", "--seed", "11", "--out", data2.string()}) == 0;
        const json m1 = read_json(data / "manifest.json"), m2 = read_json(data2 / "manifest.json");
        synth_equal = ok && m1.at("outputs") == m2.at("outputs");
    }
    for (const char* name : {"sitting_booth_0", "standing_behind_0"}) {
        if (!ok) break;
        const std::string scenario = (data / name / "scenario.json").string();
        std::vector<std::string> report_texts;
        for (const std::string& tag : {std::string("t1a"), std::string("t1b"), std::string("tn")}) {
            const std::string threads = tag == "tn" ? std::to_string(threads_n) : "1";
            const fs::path out = base / name / tag;
            ok = ok && run_cli({"--threads", threads, "fit", "--scenario", scenario, "--mode", "ours", "--out",
                                out.string()}) == 0;
            if (!ok) break;
            report_texts.push_back(read_text(out / "report.json") + read_text(out / "result.json"));
        }
        if (!ok) break;
        bytes_equal = bytes_equal && report_texts[0] == report_texts[1];
        for (const char* file : {"report.json", "result.json"}) {
            bool same_shape = true;
            const double d = max_numeric_difference(read_json(base / name / "t1a" / file),
                                                    read_json(base / name / "tn" / file), same_shape);
            worst = std::max(worst, d);
            values_close = values_close && same_shape && d <= 1e-12;
        }
        ++compared;
    }
    fs::remove_all(base);
    Outcome o;
    o.pass = ok && bytes_equal && values_close && synth_equal;
    o.detail = fmt("%d fits: threads 1 reruns byte-identical: %s; threads 1 vs %d max difference %.3g (limit 1e-12); "
                   "synth outputs identical across thread counts: %s",
                   compared, bytes_equal ? "yes" : "no", threads_n, worst, synth_equal ? "yes" : "no");
    if (!ok) o.detail += "; a CLI command failed";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"volfit acceptance suite"};
    std::string only;
    std::string known_red;
    int seeds = 3;
    int threads = 1;
    int determinism_threads = 4;
    FznetSettings fznet;
    std::string json_path;
    app.add_option("--only", only, "Comma-separated criterion numbers (default: all)");
    app.add_option("--known-red", known_red, "Comma-separated criteria excluded from the exit status");
    app.add_option("--seeds", seeds, "Suite seeds for criteria 1 and 2")->check(CLI::Range(2, 20));
    app.add_option("--threads", threads, "Worker threads for criteria other than 9")->check(CLI::NonNegativeNumber);
    app.add_option("--determinism-threads", determinism_threads, "Thread count compared against 1 in criterion 9")
        ->check(CLI::Range(2, 64));
    app.add_option("--fznet-queries", fznet.queries, "Training queries per scene and epoch");
    app.add_option("--fznet-batch", fznet.batch, "Queries per optimizer step");
    app.add_option("--json", json_path, "Also write the results as JSON");
    CLI11_PARSE(app, argc, argv);

    auto parse_list = [](const std::string& text) {
        std::set<int> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
        return out;
    };
    const std::set<int> selected = parse_list(only);
    const std::set<int> excused = parse_list(known_red);
    auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

    set_thread_count(threads);
    std::optional<SuiteRun> suite;
    auto get_suite = [&]() -> const SuiteRun& {
        if (!suite) suite = run_suite(seeds);
        return *suite;
    };

    const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria = {
        {1, {"ablation direction", [&] { return criterion_ablation(get_suite(), seeds); }}},
        {2, {"baseline direction", [&] { return criterion_baselines(get_suite()); }}},
        {3, {"gradient suite", [&] { return criterion_gradients(); }}},
        {4, {"geometry oracles", [&] { return criterion_oracles(); }}},
        {5, {"TSV single-ray analytics", [&] { return criterion_tsv_examples(); }}},
        {6, {"VNC discriminates where NC does not", [&] { return criterion_vnc_discrimination(); }}},
        {7, {"FZNet overfit", [&] { return criterion_fznet(fznet); }}},
        {8, {"recovery on the control scenario", [&] { return criterion_recovery(); }}},
        {9, {"determinism", [&] {
                 const Outcome o = criterion_determinism(determinism_threads);
                 set_thread_count(threads);
                 return o;
             }}},
    };

    int failed = 0, gating_failures = 0;
    json results = json::array();
    for (const auto& [id, named] : criteria) {
        if (!wanted(id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = named.second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double elapsed = seconds_since(t0);
        failed += !o.pass;
        gating_failures += !o.pass && excused.count(id) == 0;
        std::printf("[%s] %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, named.first.c_str(), o.detail.c_str(),
                    elapsed);
        std::fflush(stdout);
        results.push_back({{"criterion", id}, {"name", named.first}, {"pass", o.pass}, {"detail", o.detail},
                           {"seconds", elapsed}});
    }
    if (!json_path.empty()) write_json(json_path, results);
    std::printf("%d of %zu criteria passed", static_cast<int>(results.size()) - failed, results.size());
    if (failed != gating_failures) std::printf(" (%d known red, not counted in the exit status)", failed - gating_failures);
    std::printf("\n");
    return gating_failures == 0 ? 0 : 1;
}
