#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "volfit/energy.hpp"
#include "volfit/field.hpp"
#include "volfit/scene_synth.hpp"

namespace volfit {

struct AdamConfig {
    double step = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct FitConfig {
    int stage1_iterations = 400;
    int stage2_iterations = 400;
    AdamConfig adam;
    // Stop when the energy fell by less than this fraction over `window` iterations.
    double tolerance = 1e-4;
    int window = 10;
    EnergyWeights weights;
    FitMode mode = FitMode::ours;
    TsvConfig tsv;
    double carve_threshold = 1e-3;  // mu

    void validate() const;  // ConfigError
};

// Observation and scene in the world frame, with the static data every energy
// evaluation needs (scene BVH, scene depth map, scene SDF).
struct FitProblem {
    std::shared_ptr<const BodyTemplate> body;
    Observation observation;
    TriMesh scene_mesh;
    std::shared_ptr<const TriangleBvh> scene;
    std::shared_ptr<const SdfGrid> scene_sdf;
    DepthBuffer scene_depth;
};

FitProblem make_problem(std::shared_ptr<const BodyTemplate> body, Observation observation, TriMesh scene,
                        std::shared_ptr<const SdfGrid> scene_sdf);
// Uses the scenario's scene and its analytic SDF grid.
FitProblem make_problem(std::shared_ptr<const BodyTemplate> body, const Scenario& scenario, Observation observation);

EnergyContext make_context(const FitProblem& problem, const EnergyWeights& weights);

// T-pose facing the camera, root at the centroid of P_b (or 2.5 m along the
// optical axis when P_b is empty).
BodyState initial_state(const FitProblem& problem);

struct StageResult {
    BodyState state;
    std::vector<EnergyBreakdown> trace;  // one entry per iteration (plus the final state)
    int iterations = 0;
    bool converged = false;
    bool aborted = false;  // non-finite energy: state is the last finite one
};

// Adam over all parameters; returns the lowest-energy state visited.
StageResult minimize(const EnergyContext& ctx, const TermSet& terms, const BodyState& start, int max_iterations,
                     const FitConfig& config);

struct FitResult {
    FitMode mode = FitMode::ours;
    BodyState state;
    BodyState stage1_state;
    StageResult stage1;
    StageResult stage2;
    std::optional<FreeZonePoints> free_zone;
    std::optional<TsvPoints> tsv;
    bool free_zone_disabled = false;  // carving came back empty
    double wall_time = 0.0;          // seconds
    int total_iterations() const { return stage1.iterations + stage2.iterations; }
};

StageResult run_stage1(const FitProblem& problem, const FitConfig& config,
                       const std::optional<BodyState>& init = std::nullopt);

// Carves the free zone at the stage-1 root (when the mode uses it), computes the
// shadow volume and runs stage 2. `provider` may be null for modes without E_fz.
FitResult run_stage2(const FitProblem& problem, const FitConfig& config, const StageResult& stage1,
                     const FieldProvider* provider);

FitResult fit(const FitProblem& problem, const FitConfig& config, const FieldProvider* provider,
              const std::optional<BodyState>& init = std::nullopt);

}  // namespace volfit
