#pragma once

#include <optional>
#include <string>
#include <vector>

#include "volfit/fitter.hpp"

namespace volfit {

struct PoseErrors {
    double jpe = 0.0;  // mean joint error (m)
    double v2v = 0.0;  // mean vertex error (m)
};

PoseErrors jpe_v2v(const PosedBody& pred, const PosedBody& gt);
PoseErrors jpe_v2v(const BodyState& pred, const BodyState& gt, const BodyTemplate& body);

// x -> scale * rotation * x + translation
struct Similarity {
    Mat3d rotation = Mat3d::Identity();
    double scale = 1.0;
    Vec3d translation = Vec3d::Zero();

    Vec3d apply(const Vec3d& p) const { return scale * rotation * p + translation; }
    Points apply(const Points& pts) const;
};

// Least-squares similarity (or rigid) transform taking source onto target, with
// reflections excluded. Throws DegenerateConfiguration for fewer than 3 points,
// mismatched counts or a source spread below 1e-12.
Similarity procrustes_align(const Points& source, const Points& target, bool with_scale = true);

// Mean point distance after alignment.
double aligned_error(const Points& source, const Points& target, bool with_scale = true);

// Fractions of points with strictly positive scene SDF (1.0 for an empty set).
double nc(const Points& vertices, const SdfGrid& sdf);
double vnc(const Points& internal, const SdfGrid& sdf);

// Mean distance from each scanned point to its nearest vertex; empty for an empty scan.
std::optional<double> pm(const Points& scan, const Points& vertices);

struct FitReport {
    std::string scenario;
    std::string tag;
    std::string mode;
    double jpe = 0.0;
    double v2v = 0.0;
    double p_jpe = 0.0;
    double p_v2v = 0.0;
    double nc = 1.0;
    double vnc = 1.0;
    std::optional<double> pm;
    double visible_ratio = 1.0;
    int stage1_iterations = 0;
    int stage2_iterations = 0;
    std::vector<double> stage1_trace;
    std::vector<double> stage2_trace;
    bool free_zone_disabled = false;
    // p_jpe <= jpe and p_v2v <= v2v held.
    bool alignment_consistent = true;
};

// Metrics against the scenario's ground truth. The scene SDF and P_b come from the problem.
FitReport evaluate(const FitResult& result, const Scenario& scenario, const FitProblem& problem,
                   double visible_ratio, bool procrustes_scale = true);

}  // namespace volfit
