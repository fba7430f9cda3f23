#include "cli.hpp"

#include <glob.h>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "volfit/errors.hpp"
#include "volfit/fznet.hpp"
#include "volfit/parallel.hpp"
#include "volfit/ply.hpp"
#include "volfit/volume_points.hpp"

namespace volfit::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("cannot allocate a digest context");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string git_blob_hash_file(const fs::path& path) { return git_blob_hash(read_text(path)); }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::write(const fs::path& out_dir) const {
    json in = json::array();
    std::string combined;
    for (const auto& p : inputs) {
        const std::string h = git_blob_hash_file(p);
        in.push_back({{"path", p.generic_string()}, {"hash", h}});
        combined += h;
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out_dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    json out = json::array();
    for (const auto& p : files)
        out.push_back({{"path", fs::relative(p, out_dir).generic_string()}, {"hash", git_blob_hash_file(p)}});

    json j = {{"tool", "volfit"},
              {"version", kToolVersion},
              {"command", command},
              {"config", config},
              {"seed", seed ? json(*seed) : json(nullptr)},
              {"threads", threads},
              {"inputs", in},
              {"input_hash", git_blob_hash(combined)},
              {"outputs", out},
              {"started_at", started_at},
              {"finished_at", utc_timestamp()}};
    write_json(out_dir / "manifest.json", j);
}

// ---------------------------------------------------------------------------
// Shared setup

namespace {

std::shared_ptr<const BodyTemplate> body_template() {
    static const std::shared_ptr<const BodyTemplate> body = [] {
        auto t = std::make_shared<BodyTemplate>(build_template(64));
        t->pairs = compute_pairs(*t);
        return std::shared_ptr<const BodyTemplate>(t);
    }();
    return body;
}

void prepare_out_dir(const fs::path& out) {
    if (out.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth

void cmd_synth(const SynthOptions& o) {
    prepare_out_dir(o.out);
    RunManifest m{"synth", {{"seed", o.seed}}, o.seed, {}, thread_count(), utc_timestamp()};
    const auto body = body_template();
    const std::vector<Scenario> suite = scenario_suite(*body, o.seed);
    json names = json::array();
    for (const Scenario& s : suite) {
        const fs::path dir = o.out / s.name;
        write_scenario(dir, s, *body);
        write_observation(dir, observe(s, *body));
        names.push_back({{"name", s.name}, {"tag", s.tag}, {"scenario", s.name + "/scenario.json"}});
    }
    write_json(o.out / "suite.json", {{"seed", o.seed}, {"scenarios", names}});
    m.write(o.out);
}

// ---------------------------------------------------------------------------
// fit

void cmd_fit(const FitOptions& o) {
    prepare_out_dir(o.out);
    FitConfig cfg = o.config ? load_fit_config(*o.config) : FitConfig{};
    if (!o.mode.empty()) cfg.mode = parse_fit_mode(o.mode);
    if (o.provider != "gt" && o.provider != "fznet") throw ConfigError("unknown provider '" + o.provider + "'");
    if (o.provider == "fznet" && !o.model) throw ConfigError("--provider fznet needs --model");

    RunManifest m{"fit", {{"fit", to_json(cfg)}, {"provider", o.provider}}, std::nullopt, {o.scenario},
                  thread_count(), utc_timestamp()};
    const fs::path dir = o.scenario.parent_path();
    for (const char* f : {"observation.json", "depth.bin", "mask.pgm", "body_points.ply", "scene_points.ply"})
        m.inputs.push_back(dir / f);
    if (o.config) m.inputs.push_back(*o.config);

    const auto body = body_template();
    const Scenario sc = read_scenario(o.scenario);
    const Observation obs = read_observation(dir);
    const FitProblem problem = make_problem(body, sc, obs);
    const TriMesh gt_mesh = posed_mesh(*body, forward(*body, sc.gt_state));

    std::unique_ptr<FieldProvider> provider;
    std::optional<FzNetModel> model;
    if (o.provider == "fznet") {
        model = load_fznet(*o.model);
        m.inputs.push_back(*o.model);
        provider = std::make_unique<FzNetProvider>(*model);
    } else {
        provider = std::make_unique<GtFieldProvider>(gt_mesh);
    }

    const FitResult r = fit(problem, cfg, provider.get());
    const FitReport report = evaluate(r, sc, problem, visible_ratio(sc.scene, gt_mesh, sc.camera));

    json result = result_json(r);
    result["scenario"] = sc.name;
    write_json(o.out / "result.json", result);
    write_json(o.out / "report.json", to_json(report));
    write_text(o.out / "trace.jsonl", trace_jsonl(r));
    write_mesh_ply(o.out / "body.ply", posed_mesh(*body, forward(*body, r.state)));
    if (r.free_zone) write_points_ply(o.out / "free_zone.ply", r.free_zone->points);
    if (r.tsv) write_tsv_ply(o.out / "tsv.ply", *r.tsv);
    m.config["wall_time_seconds"] = r.wall_time;
    m.write(o.out);
}

// ---------------------------------------------------------------------------
// eval

std::string visible_bucket(double ratio) {
    const int b = std::clamp(static_cast<int>(std::floor(ratio * 4.0)), 0, 3);
    static const char* const labels[] = {"0-25", "25-50", "50-75", "75-100"};
    return labels[b];
}

std::string eval_csv(std::vector<FitReport> reports) {
    if (reports.empty()) throw NoResults("no fit reports to aggregate");
    std::sort(reports.begin(), reports.end(), [](const FitReport& a, const FitReport& b) {
        return std::tie(a.mode, a.scenario) < std::tie(b.mode, b.scenario);
    });
    std::string csv = "group,mode,scenario,tag,visible_bucket,count,jpe,v2v,p_jpe,p_v2v,nc,vnc,pm,visible_ratio\n";
    for (const auto& r : reports)
        csv += "scenario," + r.mode + "," + r.scenario + "," + r.tag + "," + visible_bucket(r.visible_ratio) + ",1," +
               fmt(r.jpe) + "," + fmt(r.v2v) + "," + fmt(r.p_jpe) + "," + fmt(r.p_v2v) + "," + fmt(r.nc) + "," +
               fmt(r.vnc) + "," + (r.pm ? fmt(*r.pm) : "") + "," + fmt(r.visible_ratio) + "\n";

    auto mean_row = [&](const std::string& group, const std::string& mode, const std::string& tag,
                        const std::string& bucket, const std::vector<const FitReport*>& rows) {
        double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        int pm_count = 0;
        for (const FitReport* r : rows) {
            s[0] += r->jpe;
            s[1] += r->v2v;
            s[2] += r->p_jpe;
            s[3] += r->p_v2v;
            s[4] += r->nc;
            s[5] += r->vnc;
            if (r->pm) {
                s[6] += *r->pm;
                ++pm_count;
            }
            s[7] += r->visible_ratio;
        }
        const double n = static_cast<double>(rows.size());
        csv += group + "," + mode + ",," + tag + "," + bucket + "," + std::to_string(rows.size()) + "," +
               fmt(s[0] / n) + "," + fmt(s[1] / n) + "," + fmt(s[2] / n) + "," + fmt(s[3] / n) + "," +
               fmt(s[4] / n) + "," + fmt(s[5] / n) + "," + (pm_count ? fmt(s[6] / pm_count) : "") + "," +
               fmt(s[7] / n) + "\n";
    };

    std::map<std::string, std::vector<const FitReport*>> by_mode;
    std::map<std::pair<std::string, std::string>, std::vector<const FitReport*>> by_tag, by_bucket;
    for (const auto& r : reports) {
        by_mode[r.mode].push_back(&r);
        by_tag[{r.mode, r.tag}].push_back(&r);
        by_bucket[{r.mode, visible_bucket(r.visible_ratio)}].push_back(&r);
    }
    for (const auto& [mode, rows] : by_mode) mean_row("mode_mean", mode, "", "", rows);
    for (const auto& [key, rows] : by_tag) mean_row("tag_mean", key.first, key.second, "", rows);
    for (const auto& [key, rows] : by_bucket) mean_row("bucket_mean", key.first, "", key.second, rows);
    return csv;
}

void cmd_eval(const EvalOptions& o) {
    std::vector<fs::path> files;
    for (const std::string& pattern : o.results) {
        if (fs::is_directory(pattern)) {
            for (const auto& e : fs::recursive_directory_iterator(pattern))
                if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
            continue;
        }
        glob_t g{};
        if (glob(pattern.c_str(), 0, nullptr, &g) == 0)
            for (std::size_t i = 0; i < g.gl_pathc; ++i) {
                const fs::path p = g.gl_pathv[i];
                if (fs::is_directory(p) && fs::exists(p / "report.json"))
                    files.push_back(p / "report.json");
                else if (fs::is_regular_file(p) && (p.filename() == "report.json" || p == fs::path(pattern)))
                    files.push_back(p);
            }
        globfree(&g);
    }
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    if (files.empty()) throw NoResults("no fit reports match the given results");

    std::vector<FitReport> reports;
    for (const auto& f : files) reports.push_back(report_from_json(read_json(f)));
    const std::string csv = eval_csv(reports);

    if (o.out.empty()) throw ConfigError("--out is required");
    const fs::path dir = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
    prepare_out_dir(dir);
    write_text(o.out, csv);
    RunManifest m{"eval", {{"results", o.results}, {"out", o.out.filename().string()}}, std::nullopt, files,
                  thread_count(), utc_timestamp()};
    m.write(dir);
}

// ---------------------------------------------------------------------------
// fznet

FzNetTrainConfig fznet_config_from_json(const json& j, FzNetTrainConfig c) {
    if (!j.is_object()) throw ConfigError("fznet config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "epochs") c.epochs = v.get<int>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "decay_epoch") c.decay_epoch = v.get<int>();
            else if (key == "decay") c.decay = v.get<double>();
            else if (key == "clamp") c.clamp = v.get<double>();
            else if (key == "queries_per_epoch") c.queries_per_epoch = v.get<int>();
            else if (key == "batch_size") c.batch_size = v.get<int>();
            else if (key == "rotate_z") c.rotate_z = v.get<bool>();
            else if (key == "saturated_gradient") c.saturated_gradient = v.get<bool>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "interior_zero") c.sampling.interior_zero = v.get<bool>();
            else if (key == "variance_as_std") c.sampling.variance_as_std = v.get<bool>();
            else throw ConfigError("unknown fznet config field '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("fznet config: ") + e.what());
    }
    return c;
}

namespace {

struct DatasetScene {
    Scenario scenario;
    Vec3d root;
    TriMesh gt_body;
    Points internal;
    FzNetTrainingScene training;
};

std::vector<DatasetScene> load_dataset(const fs::path& data, int limit, std::vector<fs::path>& inputs) {
    const json suite = read_json(data / "suite.json");
    inputs.push_back(data / "suite.json");
    const auto body = body_template();
    std::vector<DatasetScene> out;
    std::uint64_t k = 0;
    for (const auto& entry : suite.at("scenarios")) {
        if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
        const fs::path sj = data / entry.at("scenario").get<std::string>();
        DatasetScene d;
        d.scenario = read_scenario(sj);
        const Observation obs = read_observation(sj.parent_path());
        inputs.push_back(sj);
        const PosedBody gt = forward(*body, d.scenario.gt_state);
        d.root = gt.joints.row(0).transpose();
        d.gt_body = posed_mesh(*body, gt);
        d.internal = internal_points(gt.vertices, *body->pairs);
        d.training.body_points = obs.scanned_body;
        d.training.scene_points = obs.scene_points;
        d.training.labeler = std::make_shared<FieldLabeler>(d.gt_body, d.scenario.scene, d.root, 1000 + k++);
        out.push_back(std::move(d));
    }
    if (out.empty()) throw NoResults("dataset " + data.string() + " has no scenarios");
    return out;
}

// Fraction of `reference` points with a point of `set` within `radius`.
double coverage(const Points& reference, const Points& set, double radius) {
    if (reference.rows() == 0) return 1.0;
    if (set.rows() == 0) return 0.0;
    const PointIndex index(set);
    Eigen::Index hit = 0;
    for (Eigen::Index i = 0; i < reference.rows(); ++i)
        if (index.nearest(row3(reference, i)).distance <= radius) ++hit;
    return static_cast<double>(hit) / static_cast<double>(reference.rows());
}

}  // namespace

json cmd_fznet(const FznetOptions& o) {
    if (o.model.empty()) throw ConfigError("--model is required");
    const fs::path report_dir = o.out ? *o.out : o.model.parent_path();
    if (o.action == "init") {
        const fs::path dir = o.model.has_parent_path() ? o.model.parent_path() : fs::path(".");
        prepare_out_dir(dir);
        RunManifest m{"fznet init", {{"seed", o.seed}}, o.seed, {}, thread_count(), utc_timestamp()};
        save_fznet(FzNetModel::initialize(o.seed), o.model);
        m.write(dir);
        return {{"action", "init"}, {"seed", o.seed}};
    }
    if (o.action != "train" && o.action != "eval") throw ConfigError("unknown fznet action '" + o.action + "'");

    std::vector<fs::path> inputs;
    if (o.config) inputs.push_back(*o.config);
    FzNetTrainConfig cfg;
    cfg.seed = o.seed;
    cfg.sampling.interior_zero = true;
    if (o.config) cfg = fznet_config_from_json(read_json(*o.config), cfg);
    std::vector<DatasetScene> data = load_dataset(o.data, o.scenes, inputs);
    std::vector<FzNetTrainingScene> scenes;
    for (const auto& d : data) scenes.push_back(d.training);

    json report;
    json echo = {{"epochs", cfg.epochs},
                 {"learning_rate", cfg.learning_rate},
                 {"decay_epoch", cfg.decay_epoch},
                 {"decay", cfg.decay},
                 {"clamp", cfg.clamp},
                 {"queries_per_epoch", cfg.queries_per_epoch},
                 {"batch_size", cfg.batch_size},
                 {"interior_zero", cfg.sampling.interior_zero},
                 {"seed", cfg.seed},
                 {"scenes", scenes.size()}};
    if (o.action == "train") {
        prepare_out_dir(report_dir);
        const FzNetTrainResult r = train_fznet(scenes, cfg);
        save_fznet(r.model, o.model);
        report = {{"action", "train"}, {"config", echo}, {"loss_trace", r.loss_trace},
                  {"final_loss", r.loss_trace.empty() ? json(nullptr) : json(r.loss_trace.back())}};
    } else {
        inputs.push_back(o.model);
        prepare_out_dir(report_dir);
        const FzNetModel model = load_fznet(o.model);
        const double loss = evaluate_fznet(model, scenes, o.eval_queries, o.seed + 1, cfg.clamp, cfg.sampling);
        const FzNetProvider net(model);
        const double reach = kCarveSide / kCarveResolution * std::sqrt(3.0);
        json per_scene = json::array();
        double mean_cov = 0.0;
        for (const auto& d : data) {
            const GtFieldProvider gt(d.gt_body);
            const FreeZonePoints fz_net =
                carve_free_zone(net, d.training.body_points, d.training.scene_points, d.root, o.carve_threshold);
            const FreeZonePoints fz_gt =
                carve_free_zone(gt, d.training.body_points, d.training.scene_points, d.root, o.carve_threshold);
            const double cov = coverage(d.internal, fz_net.points, reach);
            mean_cov += cov;
            per_scene.push_back({{"scenario", d.scenario.name},
                                 {"net_points", fz_net.points.rows()},
                                 {"gt_points", fz_gt.points.rows()},
                                 {"internal_coverage", cov},
                                 {"gt_recall", coverage(fz_gt.points, fz_net.points, reach)},
                                 {"net_precision", coverage(fz_net.points, fz_gt.points, reach)}});
        }
        report = {{"action", "eval"},
                  {"config", echo},
                  {"mean_clamped_loss", loss},
                  {"carve_threshold", o.carve_threshold},
                  {"mean_internal_coverage", mean_cov / static_cast<double>(data.size())},
                  {"scenes", per_scene}};
    }
    const std::string name = o.action == "train" ? "train_report.json" : "eval_report.json";
    write_json(report_dir / name, report);
    if (o.action == "train") inputs.push_back(o.data / "suite.json");
    RunManifest m{"fznet " + o.action, echo, cfg.seed, {}, thread_count(), utc_timestamp()};
    std::sort(inputs.begin(), inputs.end());
    inputs.erase(std::unique(inputs.begin(), inputs.end()), inputs.end());
    m.inputs = inputs;
    m.write(report_dir);
    return report;
}

// ---------------------------------------------------------------------------
// Command line

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return kExitConfig;
        case ErrorKind::Data: return kExitData;
        case ErrorKind::Numeric: return kExitNumeric;
    }
    return kExitData;
}

int run(int argc, const char* const* argv) {
    CLI::App app{"volfit: volumetric human body fitting with free-zone and shadow-volume constraints"};
    app.name("volfit");
    app.set_version_flag("--version", kToolVersion);
    app.footer(
        "Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric error.\n"
        "--threads 0 uses every hardware thread; a fixed count makes runs reproducible.");
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = auto)")->check(CLI::NonNegativeNumber);

    SynthOptions synth;
    auto* s = app.add_subcommand("synth", "Generate the synthetic scenario suite");
    s->add_option("--seed", synth.seed, "Suite seed");
    s->add_option("--out", synth.out, "Output directory")->required();

    FitOptions fitopt;
    auto* f = app.add_subcommand("fit", "Fit the body model to one scenario");
    f->add_option("--scenario", fitopt.scenario, "scenario.json written by synth")->required();
    f->add_option("--mode", fitopt.mode,
                  "ours | ours_no_fz | ours_no_tsv | ours_surface_match | smplify_d | prox_d");
    f->add_option("--config", fitopt.config, "Fit configuration JSON");
    f->add_option("--out", fitopt.out, "Output directory")->required();
    f->add_option("--provider", fitopt.provider, "Free-zone field source: gt | fznet");
    f->add_option("--model", fitopt.model, "FZNet manifest for --provider fznet");

    EvalOptions evalopt;
    auto* e = app.add_subcommand("eval", "Aggregate fit reports into a CSV table");
    e->add_option("--results", evalopt.results, "report.json files, result directories or glob patterns")
        ->required();
    e->add_option("--out", evalopt.out, "Output CSV path")->required();

    FznetOptions netopt;
    auto* n = app.add_subcommand("fznet", "Create, train or evaluate the free-zone network");
    n->add_option("action", netopt.action, "init | train | eval")->required();
    n->add_option("--data", netopt.data, "Dataset directory written by synth");
    n->add_option("--model", netopt.model, "Model manifest path")->required();
    n->add_option("--config", netopt.config, "Training configuration JSON");
    n->add_option("--out", netopt.out, "Report directory (default: the model's directory)");
    n->add_option("--seed", netopt.seed, "Initialization and sampling seed");
    n->add_option("--scenes", netopt.scenes, "Use the first N scenarios (0 = all)");
    n->add_option("--eval-queries", netopt.eval_queries, "Fresh queries per scene for eval");
    n->add_option("--carve-threshold", netopt.carve_threshold, "Carving threshold mu for eval");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitConfig;
    }

    try {
        set_thread_count(threads);
        if (*s) {
            cmd_synth(synth);
        } else if (*f) {
            cmd_fit(fitopt);
        } else if (*e) {
            cmd_eval(evalopt);
        } else if (*n) {
            if (netopt.action != "init" && netopt.data.empty()) throw ConfigError("--data is required");
            const json r = cmd_fznet(netopt);
            if (netopt.action == "eval")
                std::cout << "mean clamped loss " << r.at("mean_clamped_loss").get<double>()
                          << ", internal-point coverage " << r.at("mean_internal_coverage").get<double>() << "\n";
            else if (netopt.action == "train")
                std::cout << "final loss " << r.at("final_loss") << "\n";
        }
    } catch (const Error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return exit_code_for(ex.kind());
    } catch (const fs::filesystem_error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitData;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

}  // namespace volfit::cli
