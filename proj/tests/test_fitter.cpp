#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "volfit/errors.hpp"
#include "volfit/metrics.hpp"

using namespace volfit;
using volfit::testing::shared_body;

namespace {

struct Setup {
    Scenario scenario;
    FitProblem problem;
    TriMesh gt_mesh;

    explicit Setup(const std::string& tag) {
        const auto body = shared_body();
        scenario = make_scenario(*body, tag, 0, 7);
        problem = make_problem(body, scenario, observe(scenario, *body));
        gt_mesh = posed_mesh(*body, forward(*body, scenario.gt_state));
    }
};

const Setup& control() {
    static const Setup s("control");
    return s;
}

// Provider whose body field is large everywhere, so nothing is carved.
class FarProvider : public FieldProvider {
public:
    std::string name() const override { return "far"; }

protected:
    void do_evaluate(const Points&, const Points&, const Vec3d&, const Points& queries, Eigen::VectorXd& body,
                     Eigen::VectorXd& scene) const override {
        body = Eigen::VectorXd::Constant(queries.rows(), 1.0);
        scene = Eigen::VectorXd::Constant(queries.rows(), 1.0);
    }
};

bool same_state(const BodyState& a, const BodyState& b) { return a.to_vector() == b.to_vector(); }

}  // namespace

TEST_CASE("configuration") {
    FitConfig c;
    CHECK_NOTHROW(c.validate());
    c.tolerance = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = FitConfig{};
    c.stage1_iterations = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = FitConfig{};
    c.adam.beta1 = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = FitConfig{};
    c.weights.lambda_tsv = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("initialization") {
    const Setup& s = control();
    const BodyState init = initial_state(s.problem);
    const Points& scan = s.problem.observation.scanned_body;
    CHECK((init.translation - scan.colwise().mean().transpose()).norm() < 1e-12);
    CHECK(init.pose.isZero());
    CHECK(init.shape.isOnes());

    FitProblem unseen = s.problem;
    unseen.observation.scanned_body = Points(0, 3);
    const Camera& cam = unseen.observation.camera;
    CHECK((initial_state(unseen).translation - (cam.position + 2.5 * cam.forward())).norm() < 1e-12);
}

TEST_CASE("zero iteration caps return the initialization") {
    const Setup& s = control();
    FitConfig cfg;
    cfg.stage1_iterations = 0;
    cfg.stage2_iterations = 0;
    GtFieldProvider provider(s.gt_mesh);
    Rng rng(3);
    const BodyState init = volfit::testing::perturbed(s.scenario.gt_state, rng, 0.1);
    const FitResult r = fit(s.problem, cfg, &provider, init);
    CHECK(same_state(r.state, init));
    CHECK(r.total_iterations() == 0);
    CHECK(r.stage1.trace.size() == 1);
    CHECK(std::isfinite(r.stage2.trace.back().total));
}

TEST_CASE("recovery on the unoccluded control scenario") {
    const Setup& s = control();
    GtFieldProvider provider(s.gt_mesh);
    Rng rng(5);
    const BodyState init = volfit::testing::perturbed(s.scenario.gt_state, rng, 0.1);
    const FitResult r = fit(s.problem, FitConfig{}, &provider, init);
    CHECK(r.total_iterations() <= 800);
    CHECK(jpe_v2v(r.state, s.scenario.gt_state, *shared_body()).jpe < 0.02);
    CHECK(r.free_zone.has_value());
    CHECK(r.tsv.has_value());
    CHECK_FALSE(r.stage1.trace.empty());
    CHECK(std::isfinite(r.stage2.trace.back().total));
    // The returned state is the best one visited.
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : r.stage2.trace) best = std::min(best, e.total);
    const EnergyContext ctx = [&] {
        EnergyContext c = make_context(s.problem, FitConfig{}.weights);
        c.set_free_zone(r.free_zone->points);
        c.tsv = r.tsv->points;
        return c;
    }();
    CHECK(total_energy(ctx, TermSet::stage(2, FitMode::ours), r.state).total == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("mode isolation") {
    const Setup& s = control();
    FitConfig cfg;
    cfg.stage1_iterations = 20;
    cfg.stage2_iterations = 20;
    const StageResult s1 = run_stage1(s.problem, cfg);

    GtFieldProvider provider(s.gt_mesh);
    for (FitMode m : {FitMode::ours_no_fz, FitMode::smplify_d, FitMode::prox_d}) {
        cfg.mode = m;
        const FitResult r = run_stage2(s.problem, cfg, s1, &provider);
        CHECK_FALSE(r.free_zone.has_value());
        CHECK(r.tsv.has_value() == (m == FitMode::ours_no_fz));
    }
    CHECK(provider.calls() == 0);

    cfg.mode = FitMode::ours_no_fz;
    CHECK_NOTHROW(run_stage2(s.problem, cfg, s1, nullptr));
    cfg.mode = FitMode::ours;
    CHECK_THROWS_AS(run_stage2(s.problem, cfg, s1, nullptr), ConfigError);

    cfg.mode = FitMode::ours_no_tsv;
    const FitResult r = run_stage2(s.problem, cfg, s1, &provider);
    CHECK(provider.calls() > 0);
    CHECK(r.free_zone.has_value());
    CHECK_FALSE(r.tsv.has_value());
}

TEST_CASE("an empty free zone disables the term") {
    const Setup& s = control();
    FitConfig cfg;
    cfg.stage1_iterations = 5;
    cfg.stage2_iterations = 5;
    const FarProvider provider;
    const FitResult r = fit(s.problem, cfg, &provider);
    CHECK(r.free_zone_disabled);
    CHECK(r.stage2.trace.back().fz == 0.0);
    CHECK(std::isfinite(r.stage2.trace.back().total));
}

TEST_CASE("a non-finite energy aborts with the last finite state") {
    const Setup& s = control();
    FitConfig cfg;
    EnergyContext ctx = make_context(s.problem, cfg.weights);
    CHECK_THROWS_AS(ctx.set_scan(Points::Constant(3, 3, std::numeric_limits<double>::quiet_NaN())), NonFiniteInput);
    ctx.joint_targets(0, 0) = std::numeric_limits<double>::quiet_NaN();
    ctx.joint_confidence(0) = 1.0;
    const BodyState start = initial_state(s.problem);
    const StageResult r = minimize(ctx, TermSet::stage(1, FitMode::ours), start, 10, cfg);
    CHECK(r.aborted);
    CHECK(same_state(r.state, start));
}

TEST_CASE("fits are deterministic") {
    const Setup s("sitting_booth");
    FitConfig cfg;
    cfg.stage1_iterations = 25;
    cfg.stage2_iterations = 25;
    GtFieldProvider provider(s.gt_mesh);
    const FitResult a = fit(s.problem, cfg, &provider);
    const FitResult b = fit(s.problem, cfg, &provider);
    CHECK(same_state(a.state, b.state));
    REQUIRE(a.stage2.trace.size() == b.stage2.trace.size());
    for (std::size_t i = 0; i < a.stage2.trace.size(); ++i) CHECK(a.stage2.trace[i].total == b.stage2.trace[i].total);
}
