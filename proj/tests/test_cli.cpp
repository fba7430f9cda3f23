#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "fixtures.hpp"
#include "volfit/ply.hpp"

using namespace volfit;
namespace fs = std::filesystem;

namespace {

struct RunOutput {
    int code = 0;
    std::string out;
    std::string err;
};

RunOutput run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "volfit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    RunOutput r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("volfit_test_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::map<std::string, std::string> output_hashes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    const json manifest = read_json(dir / "manifest.json");
    for (const auto& e : manifest.at("outputs"))
        out[e.at("path").get<std::string>()] = e.at("hash").get<std::string>();
    return out;
}

// Synthesized once per binary (seed 3).
const fs::path& synth_dir() {
    static const fs::path dir = [] {
        const fs::path d = scratch("synth_a");
        REQUIRE(run_cli({"--threads", "1", "synth", "--seed", "3", "--out", d.string()}).code == 0);
        return d;
    }();
    return dir;
}

fs::path write_fast_config(const fs::path& dir) {
    const fs::path p = dir / "fast.json";
    write_json(p, {{"stage1_iterations", 40}, {"stage2_iterations", 40}});
    return p;
}

FitReport report_with(const std::string& mode, const std::string& scenario, const std::string& tag, double jpe,
                      double vnc, std::optional<double> pm, double visible) {
    FitReport r;
    r.mode = mode;
    r.scenario = scenario;
    r.tag = tag;
    r.jpe = jpe;
    r.v2v = 2.0 * jpe;
    r.p_jpe = jpe;
    r.p_v2v = jpe;
    r.nc = 1.0;
    r.vnc = vnc;
    r.pm = pm;
    r.visible_ratio = visible;
    return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& csv) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("git blob hash matches git hash-object") {
    CHECK(cli::git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(cli::git_blob_hash("hello world\n") == "3b18e512dba79e4c8300dd08aeb37f8e728b8dad");
}

TEST_CASE("help text matches the stored snapshot") {
    const RunOutput r = run_cli({"--help"});
    CHECK(r.code == 0);
    const std::string expected = read_text(fs::path(VOLFIT_TEST_DATA_DIR) / "help.txt");
    CHECK(r.out == expected);
    for (const char* flag : {"--threads", "synth", "fit", "eval", "fznet", "Exit codes"})
        CHECK(r.out.find(flag) != std::string::npos);
    const RunOutput fit_help = run_cli({"fit", "--help"});
    CHECK(fit_help.code == 0);
    for (const char* flag : {"--scenario", "--mode", "--config", "--out"})
        CHECK(fit_help.out.find(flag) != std::string::npos);
}

TEST_CASE("synth is deterministic and seed dependent") {
    const fs::path a = synth_dir();
    const json suite = read_json(a / "suite.json");
    CHECK(suite.at("scenarios").size() >= 20);
    CHECK(fs::exists(a / "manifest.json"));

    const fs::path b = scratch("synth_b");
    REQUIRE(run_cli({"synth", "--seed", "3", "--out", b.string()}).code == 0);
    const auto ha = output_hashes(a);
    CHECK(ha.size() >= 20 * 8);
    CHECK(ha == output_hashes(b));

    // Another seed changes every ground-truth pose.
    const auto other = scenario_suite(*testing::shared_body(), 4);
    for (const Scenario& s : other) {
        const Scenario mine = read_scenario(a / s.name / "scenario.json");
        CHECK((mine.gt_state.to_vector() - s.gt_state.to_vector()).norm() > 1e-6);
    }
}

TEST_CASE("emitted PLY files parse back losslessly") {
    const fs::path a = synth_dir();
    const fs::path tmp = scratch("ply");
    const auto body = testing::shared_body();
    for (const char* name : {"sitting_booth_0", "control_0"}) {
        const fs::path dir = a / name;
        const Scenario s = read_scenario(dir / "scenario.json");
        const TriMesh gt = read_mesh_ply(dir / "gt_body.ply");
        const TriMesh expected = posed_mesh(*body, forward(*body, s.gt_state));
        REQUIRE(gt.num_vertices() == expected.num_vertices());
        CHECK(gt.faces() == expected.faces());
        CHECK(gt.vertices() == expected.vertices().cast<float>().cast<double>());
        for (const char* f : {"gt_body.ply", "scene.ply"}) {
            write_mesh_ply(tmp / f, read_mesh_ply(dir / f));
            CHECK(read_text(tmp / f) == read_text(dir / f));
        }
        for (const char* f : {"body_points.ply", "scene_points.ply"}) {
            write_points_ply(tmp / f, read_points_ply(dir / f).points);
            CHECK(read_text(tmp / f) == read_text(dir / f));
        }
        const Observation obs = read_observation(dir);
        CHECK(obs.scanned_body.rows() > 0);
        CHECK(obs.body_mask.size() == obs.depth.size());
    }
}

TEST_CASE("fit outputs, mode isolation and reruns") {
    const fs::path base = scratch("fit");
    const fs::path config = write_fast_config(base);
    const std::string scenario = (synth_dir() / "sitting_booth_0" / "scenario.json").string();

    const fs::path sd = base / "smplify_d";
    REQUIRE(run_cli({"--threads", "1", "fit", "--scenario", scenario, "--mode", "smplify_d", "--config",
                     config.string(), "--out", sd.string()})
                .code == 0);
    for (const char* f : {"result.json", "report.json", "body.ply", "trace.jsonl", "manifest.json"})
        CHECK(fs::exists(sd / f));
    CHECK_FALSE(fs::exists(sd / "free_zone.ply"));
    CHECK_FALSE(fs::exists(sd / "tsv.ply"));

    const json result = read_json(sd / "result.json");
    const int total = result.at("stage1").at("iterations").get<int>() + result.at("stage2").at("iterations").get<int>();
    const std::string trace = read_text(sd / "trace.jsonl");
    CHECK(std::count(trace.begin(), trace.end(), '\n') == total);

    const fs::path rerun = base / "smplify_d_rerun";
    REQUIRE(run_cli({"--threads", "1", "fit", "--scenario", scenario, "--mode", "smplify_d", "--config",
                     config.string(), "--out", rerun.string()})
                .code == 0);
    CHECK(read_text(sd / "result.json") == read_text(rerun / "result.json"));
    CHECK(read_text(sd / "report.json") == read_text(rerun / "report.json"));

    const fs::path ours = base / "ours";
    REQUIRE(run_cli({"fit", "--scenario", scenario, "--mode", "ours", "--config", config.string(), "--out",
                     ours.string()})
                .code == 0);
    CHECK(fs::exists(ours / "free_zone.ply"));
    CHECK(fs::exists(ours / "tsv.ply"));
    const FitReport report = report_from_json(read_json(ours / "report.json"));
    CHECK(report.mode == "ours");
    CHECK(report.scenario == "sitting_booth_0");

    const RunOutput ev = run_cli({"eval", "--results", (base / "*").string(), "--out", (base / "table.csv").string()});
    CHECK(ev.code == 0);
    const auto rows = parse_csv(read_text(base / "table.csv"));
    CHECK(rows.size() == 1 + 3 + 2 * 3);  // header, 3 fits, per-mode / tag / bucket means for 2 modes
}

TEST_CASE("eval of a ground-truth result") {
    const fs::path a = synth_dir();
    const Scenario s = read_scenario(a / "control_0" / "scenario.json");
    const Observation obs = read_observation(a / "control_0");
    const FitProblem problem = make_problem(testing::shared_body(), s, obs);
    FitResult r;
    r.mode = FitMode::smplify_d;
    r.state = s.gt_state;
    r.stage1_state = s.gt_state;
    const FitReport rep = evaluate(r, s, problem, 1.0);
    const auto rows = parse_csv(cli::eval_csv({rep}));
    REQUIRE(rows.size() == 5);
    CHECK(rows[1][6] == "0");   // jpe
    CHECK(rows[1][11] == "1");  // vnc
}

TEST_CASE("visible-ratio buckets are left-closed") {
    CHECK(cli::visible_bucket(0.0) == "0-25");
    CHECK(cli::visible_bucket(0.2499) == "0-25");
    CHECK(cli::visible_bucket(0.25) == "25-50");
    CHECK(cli::visible_bucket(0.5) == "50-75");
    CHECK(cli::visible_bucket(0.75) == "75-100");
    CHECK(cli::visible_bucket(1.0) == "75-100");
}

TEST_CASE("mean rows equal hand-computed means") {
    std::vector<FitReport> reports = {
        report_with("ours", "a_0", "a", 0.01, 0.90, 0.002, 0.10),
        report_with("ours", "a_1", "a", 0.03, 1.00, std::nullopt, 0.30),
        report_with("ours", "b_0", "b", 0.05, 0.95, 0.004, 0.32),
        report_with("prox_d", "a_0", "a", 0.02, 0.80, 0.003, 0.10),
    };
    const auto rows = parse_csv(cli::eval_csv(reports));
    REQUIRE(rows[0][6] == "jpe");
    auto find = [&](const std::string& group, const std::string& mode, const std::string& tag,
                    const std::string& bucket) -> const std::vector<std::string>& {
        for (const auto& r : rows)
            if (r[0] == group && r[1] == mode && r[3] == tag && r[4] == bucket) return r;
        FAIL("row not found: " << group << " " << mode << " " << tag << " " << bucket);
        return rows[0];
    };
    const auto& mode = find("mode_mean", "ours", "", "");
    CHECK(mode[5] == "3");
    CHECK(std::stod(mode[6]) == doctest::Approx(0.03).epsilon(1e-9));
    CHECK(std::stod(mode[11]) == doctest::Approx(0.95).epsilon(1e-9));
    CHECK(std::stod(mode[12]) == doctest::Approx(0.003).epsilon(1e-9));  // pm over the two reports that have it
    const auto& tag = find("tag_mean", "ours", "a", "");
    CHECK(std::stod(tag[6]) == doctest::Approx(0.02).epsilon(1e-9));
    CHECK(std::stod(tag[11]) == doctest::Approx(0.95).epsilon(1e-9));
    const auto& bucket = find("bucket_mean", "ours", "", "25-50");
    CHECK(bucket[5] == "2");
    CHECK(std::stod(bucket[6]) == doctest::Approx(0.04).epsilon(1e-9));
    const auto& low = find("bucket_mean", "ours", "", "0-25");
    CHECK(low[5] == "1");
    CHECK(std::stod(find("mode_mean", "prox_d", "", "")[11]) == doctest::Approx(0.80).epsilon(1e-9));

    CHECK_THROWS_AS(cli::eval_csv({}), NoResults);
}

TEST_CASE("fznet commands") {
    const fs::path base = scratch("fznet");
    const fs::path random_model = base / "random" / "model.json";
    const fs::path trained_model = base / "trained" / "model.json";
    REQUIRE(run_cli({"fznet", "init", "--model", random_model.string(), "--seed", "5"}).code == 0);
    CHECK(fs::exists(random_model.parent_path() / "manifest.json"));

    // Serialization round trip: the saved model predicts exactly what the in-memory one does.
    const FzNetModel fresh = FzNetModel::initialize(5);
    const FzNetModel loaded = load_fznet(random_model);
    const Observation obs = read_observation(synth_dir() / "control_0");
    Rng rng(3);
    Points queries(50, 3);
    for (Eigen::Index i = 0; i < queries.rows(); ++i)
        queries.row(i) = row3(obs.scanned_body, i).transpose() + Vec3d(0.1 * standard_normal(rng), 0.0, 0.0).transpose();
    const Vec3d root = obs.scanned_body.colwise().mean().transpose();
    CHECK(fresh.predict(obs.scanned_body, obs.scene_points, root, queries) ==
          loaded.predict(obs.scanned_body, obs.scene_points, root, queries));

    const fs::path cfg = base / "train.json";
    write_json(cfg, {{"epochs", 12}, {"decay_epoch", 6}, {"learning_rate", 1e-4}, {"queries_per_epoch", 1000},
                     {"batch_size", 250}});
    REQUIRE(run_cli({"fznet", "train", "--data", synth_dir().string(), "--model", trained_model.string(), "--config",
                     cfg.string(), "--scenes", "2", "--seed", "5"})
                .code == 0);
    const json train = read_json(trained_model.parent_path() / "train_report.json");
    CHECK(train.at("loss_trace").size() == 12);
    CHECK(fs::exists(trained_model.parent_path() / "manifest.json"));

    auto eval = [&](const fs::path& model, const std::string& out) {
        const RunOutput r = run_cli({"fznet", "eval", "--data", synth_dir().string(), "--model", model.string(),
                                     "--scenes", "2", "--eval-queries", "1000", "--out", (base / out).string()});
        REQUIRE(r.code == 0);
        return read_json(base / out / "eval_report.json");
    };
    const json before = eval(random_model, "eval_random");
    const json after = eval(trained_model, "eval_trained");
    CHECK(before.at("mean_clamped_loss").get<double>() >= after.at("mean_clamped_loss").get<double>());
    CHECK(after.at("scenes").size() == 2);
    for (const auto& s : after.at("scenes")) {
        CHECK(s.at("gt_points").get<int>() > 0);
        CHECK(s.at("internal_coverage").get<double>() >= 0.0);
    }
}

TEST_CASE("exit codes") {
    const fs::path base = scratch("exit");
    const std::string scenario = (synth_dir() / "control_0" / "scenario.json").string();
    CHECK(run_cli({}).code == cli::kExitConfig);
    CHECK(run_cli({"fit", "--scenario", scenario}).code == cli::kExitConfig);  // missing --out
    CHECK(run_cli({"fit", "--scenario", scenario, "--mode", "nope", "--out", (base / "a").string()}).code ==
          cli::kExitConfig);
    write_json(base / "bad.json", {{"stage1_iterations", -1}});
    CHECK(run_cli({"fit", "--scenario", scenario, "--config", (base / "bad.json").string(), "--out",
                   (base / "b").string()})
              .code == cli::kExitConfig);
    write_json(base / "unknown.json", {{"no_such_field", 1}});
    CHECK(run_cli({"fit", "--scenario", scenario, "--config", (base / "unknown.json").string(), "--out",
                   (base / "c").string()})
              .code == cli::kExitConfig);
    CHECK(run_cli({"fit", "--scenario", (base / "missing.json").string(), "--out", (base / "d").string()}).code ==
          cli::kExitData);
    CHECK(run_cli({"eval", "--results", (base / "nothing*").string(), "--out", (base / "t.csv").string()}).code ==
          cli::kExitData);

    write_json(base / "diverge.json", {{"epochs", 3}, {"learning_rate", 1e30}, {"queries_per_epoch", 1000},
                                        {"batch_size", 1000}});
    CHECK(run_cli({"fznet", "train", "--data", synth_dir().string(), "--model", (base / "m" / "model.json").string(),
                   "--config", (base / "diverge.json").string(), "--scenes", "1"})
              .code == cli::kExitNumeric);

    CHECK(cli::exit_code_for(ErrorKind::Config) == 1);
    CHECK(cli::exit_code_for(ErrorKind::Data) == 2);
    CHECK(cli::exit_code_for(ErrorKind::Numeric) == 3);
}
