#include "volfit/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "volfit/errors.hpp"
#include "volfit/ply.hpp"

namespace volfit {

namespace fs = std::filesystem;

namespace {

json vec_json(const Vec3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename Derived>
json array_json(const Eigen::MatrixBase<Derived>& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

template <typename Err>
const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw Err(std::string("missing field '") + key + "'");
    return j.at(key);
}

template <typename Err, typename T>
T get_as(const json& j, const char* key) {
    try {
        return field<Err>(j, key).template get<T>();
    } catch (const json::exception& e) {
        throw Err(std::string("field '") + key + "': " + e.what());
    }
}

template <typename Err, typename T>
void read_optional(const json& j, const char* key, T& out) {
    if (j.is_object() && j.contains(key)) out = get_as<Err, T>(j, key);
}

template <typename Err>
Vec3d vec_from(const json& j, const char* key) {
    const auto v = get_as<Err, std::vector<double>>(j, key);
    if (v.size() != 3) throw Err(std::string("field '") + key + "' must have 3 entries");
    return Vec3d(v[0], v[1], v[2]);
}

template <typename Err, int N>
Eigen::Matrix<double, N, 1> fixed_from(const json& j, const char* key) {
    const auto v = get_as<Err, std::vector<double>>(j, key);
    if (static_cast<int>(v.size()) != N)
        throw Err(std::string("field '") + key + "' must have " + std::to_string(N) + " entries");
    return Eigen::Map<const Eigen::Matrix<double, N, 1>>(v.data());
}

void check_little_endian() {
    static_assert(std::endian::native == std::endian::little, "depth blobs are written in native little-endian order");
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain types

json to_json(const BodyState& s) {
    return {{"translation", vec_json(s.translation)},
            {"root_orient", vec_json(s.root_orient)},
            {"pose", array_json(s.pose)},
            {"shape", array_json(s.shape)}};
}

BodyState body_state_from_json(const json& j) {
    BodyState s;
    s.translation = vec_from<IoError>(j, "translation");
    s.root_orient = vec_from<IoError>(j, "root_orient");
    s.pose = fixed_from<IoError, kNumPoseParams>(j, "pose");
    s.shape = fixed_from<IoError, kNumShapeParams>(j, "shape");
    return s;
}

json to_json(const Camera& c) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back(json::array({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)}));
    return {{"fx", c.fx},       {"fy", c.fy},         {"cx", c.cx},
            {"cy", c.cy},       {"width", c.width},   {"height", c.height},
            {"rotation", rot}, {"position", vec_json(c.position)}};
}

Camera camera_from_json(const json& j) {
    Camera c;
    c.fx = get_as<IoError, double>(j, "fx");
    c.fy = get_as<IoError, double>(j, "fy");
    c.cx = get_as<IoError, double>(j, "cx");
    c.cy = get_as<IoError, double>(j, "cy");
    c.width = get_as<IoError, int>(j, "width");
    c.height = get_as<IoError, int>(j, "height");
    const auto rot = get_as<IoError, std::vector<std::vector<double>>>(j, "rotation");
    if (rot.size() != 3) throw IoError("camera rotation must be 3x3");
    for (int r = 0; r < 3; ++r) {
        if (rot[static_cast<std::size_t>(r)].size() != 3) throw IoError("camera rotation must be 3x3");
        for (int k = 0; k < 3; ++k) c.rotation(r, k) = rot[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
    }
    c.position = vec_from<IoError>(j, "position");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw IoError(e.what());
    }
    return c;
}

json to_json(const Primitive& p) {
    json j = {{"kind", p.kind == Primitive::Kind::Box ? "box" : "cylinder"}, {"name", p.name}};
    if (p.kind == Primitive::Kind::Box) {
        j["center"] = vec_json(p.center);
        j["half_extents"] = vec_json(p.half_extents);
    } else {
        j["base"] = vec_json(p.center);
        j["radius"] = p.radius;
        j["height"] = p.height;
    }
    return j;
}

Primitive primitive_from_json(const json& j) {
    const auto kind = get_as<IoError, std::string>(j, "kind");
    const auto name = get_as<IoError, std::string>(j, "name");
    if (kind == "box") {
        const Vec3d c = vec_from<IoError>(j, "center"), h = vec_from<IoError>(j, "half_extents");
        Primitive p = Primitive::box(name, c - h, c + h);
        p.center = c;
        p.half_extents = h;
        return p;
    }
    if (kind == "cylinder")
        return Primitive::cylinder(name, vec_from<IoError>(j, "base"), get_as<IoError, double>(j, "radius"),
                                   get_as<IoError, double>(j, "height"));
    throw IoError("unknown primitive kind '" + kind + "'");
}

json to_json(const EnergyWeights& w) {
    return {{"lambda_j", w.lambda_j},   {"lambda_d", w.lambda_d},     {"lambda_r", w.lambda_r},
            {"lambda_p", w.lambda_p},   {"lambda_c", w.lambda_c},     {"lambda_fz", w.lambda_fz},
            {"lambda_tsv", w.lambda_tsv}, {"sigma_j", w.sigma_j},     {"sigma_d", w.sigma_d},
            {"sigma_fz", w.sigma_fz},   {"sigma_tsv", w.sigma_tsv},   {"w_pose", w.w_pose},
            {"w_shape", w.w_shape},     {"w_self", w.w_self},         {"r_contact", w.r_contact}};
}

EnergyWeights weights_from_json(const json& j, EnergyWeights w) {
    if (!j.is_object()) throw ConfigError("weights must be a JSON object");
    static const char* const keys[] = {"lambda_j", "lambda_d",  "lambda_r", "lambda_p", "lambda_c",
                                       "lambda_fz", "lambda_tsv", "sigma_j", "sigma_d",  "sigma_fz",
                                       "sigma_tsv", "w_pose",    "w_shape",  "w_self",   "r_contact"};
    double* const slots[] = {&w.lambda_j, &w.lambda_d,  &w.lambda_r, &w.lambda_p, &w.lambda_c,
                             &w.lambda_fz, &w.lambda_tsv, &w.sigma_j, &w.sigma_d,  &w.sigma_fz,
                             &w.sigma_tsv, &w.w_pose,    &w.w_shape,  &w.w_self,   &w.r_contact};
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (std::size_t i = 0; i < std::size(keys); ++i)
            if (key == keys[i]) {
                read_optional<ConfigError>(j, keys[i], *slots[i]);
                known = true;
            }
        if (!known) throw ConfigError("unknown weight '" + key + "'");
    }
    w.validate();
    return w;
}

json to_json(const FitConfig& c) {
    return {{"stage1_iterations", c.stage1_iterations},
            {"stage2_iterations", c.stage2_iterations},
            {"adam",
             {{"step", c.adam.step}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
            {"tolerance", c.tolerance},
            {"window", c.window},
            {"weights", to_json(c.weights)},
            {"mode", to_string(c.mode)},
            {"tsv", {{"max_length", c.tsv.max_length}, {"interval", c.tsv.interval}}},
            {"carve_threshold", c.carve_threshold}};
}

FitConfig fit_config_from_json(const json& j, FitConfig c) {
    if (!j.is_object()) throw ConfigError("fit config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "stage1_iterations" || key == "stage2_iterations" || key == "window") {
            read_optional<ConfigError>(j, "stage1_iterations", c.stage1_iterations);
            read_optional<ConfigError>(j, "stage2_iterations", c.stage2_iterations);
            read_optional<ConfigError>(j, "window", c.window);
        } else if (key == "tolerance") {
            read_optional<ConfigError>(j, "tolerance", c.tolerance);
        } else if (key == "carve_threshold") {
            read_optional<ConfigError>(j, "carve_threshold", c.carve_threshold);
        } else if (key == "mode") {
            c.mode = parse_fit_mode(get_as<ConfigError, std::string>(j, "mode"));
        } else if (key == "weights") {
            c.weights = weights_from_json(value, c.weights);
        } else if (key == "adam") {
            read_optional<ConfigError>(value, "step", c.adam.step);
            read_optional<ConfigError>(value, "beta1", c.adam.beta1);
            read_optional<ConfigError>(value, "beta2", c.adam.beta2);
            read_optional<ConfigError>(value, "epsilon", c.adam.epsilon);
        } else if (key == "tsv") {
            read_optional<ConfigError>(value, "max_length", c.tsv.max_length);
            read_optional<ConfigError>(value, "interval", c.tsv.interval);
        } else {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
    c.validate();
    return c;
}

FitConfig load_fit_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return fit_config_from_json(j);
}

json to_json(const EnergyBreakdown& b) {
    return {{"joints", b.joints},   {"depth", b.depth}, {"reg", b.reg}, {"penetration", b.penetration},
            {"contact", b.contact}, {"fz", b.fz},       {"tsv", b.tsv}, {"total", b.total}};
}

json to_json(const FitReport& r) {
    return {{"scenario", r.scenario},
            {"tag", r.tag},
            {"mode", r.mode},
            {"jpe", r.jpe},
            {"v2v", r.v2v},
            {"p_jpe", r.p_jpe},
            {"p_v2v", r.p_v2v},
            {"nc", r.nc},
            {"vnc", r.vnc},
            {"pm", r.pm ? json(*r.pm) : json(nullptr)},
            {"visible_ratio", r.visible_ratio},
            {"stage1_iterations", r.stage1_iterations},
            {"stage2_iterations", r.stage2_iterations},
            {"stage1_trace", r.stage1_trace},
            {"stage2_trace", r.stage2_trace},
            {"free_zone_disabled", r.free_zone_disabled},
            {"alignment_consistent", r.alignment_consistent}};
}

FitReport report_from_json(const json& j) {
    FitReport r;
    r.scenario = get_as<IoError, std::string>(j, "scenario");
    r.tag = get_as<IoError, std::string>(j, "tag");
    r.mode = get_as<IoError, std::string>(j, "mode");
    r.jpe = get_as<IoError, double>(j, "jpe");
    r.v2v = get_as<IoError, double>(j, "v2v");
    r.p_jpe = get_as<IoError, double>(j, "p_jpe");
    r.p_v2v = get_as<IoError, double>(j, "p_v2v");
    r.nc = get_as<IoError, double>(j, "nc");
    r.vnc = get_as<IoError, double>(j, "vnc");
    if (!field<IoError>(j, "pm").is_null()) r.pm = get_as<IoError, double>(j, "pm");
    r.visible_ratio = get_as<IoError, double>(j, "visible_ratio");
    read_optional<IoError>(j, "stage1_iterations", r.stage1_iterations);
    read_optional<IoError>(j, "stage2_iterations", r.stage2_iterations);
    read_optional<IoError>(j, "stage1_trace", r.stage1_trace);
    read_optional<IoError>(j, "stage2_trace", r.stage2_trace);
    read_optional<IoError>(j, "free_zone_disabled", r.free_zone_disabled);
    read_optional<IoError>(j, "alignment_consistent", r.alignment_consistent);
    return r;
}

json result_json(const FitResult& r) {
    auto stage = [](const StageResult& s) {
        return json{{"iterations", s.iterations},
                    {"converged", s.converged},
                    {"aborted", s.aborted},
                    {"final_energy", s.trace.empty() ? json(nullptr) : to_json(s.trace.back())}};
    };
    return {{"mode", to_string(r.mode)},
            {"state", to_json(r.state)},
            {"stage1_state", to_json(r.stage1_state)},
            {"stage1", stage(r.stage1)},
            {"stage2", stage(r.stage2)},
            {"total_iterations", r.total_iterations()},
            {"free_zone_points", r.free_zone ? json(r.free_zone->points.rows()) : json(nullptr)},
            {"free_zone_disabled", r.free_zone_disabled},
            {"tsv_points", r.tsv ? json(r.tsv->points.rows()) : json(nullptr)}};
}

std::string trace_jsonl(const FitResult& r) {
    std::string out;
    auto emit = [&](int stage, const StageResult& s) {
        for (int it = 0; it < s.iterations; ++it) {
            json line = to_json(s.trace[static_cast<std::size_t>(it)]);
            line["stage"] = stage;
            line["iteration"] = it;
            out += line.dump();
            out += '\n';
        }
    };
    emit(1, r.stage1);
    emit(2, r.stage2);
    return out;
}

// ---------------------------------------------------------------------------
// Files

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_scenario(const fs::path& dir, const Scenario& s, const BodyTemplate& body) {
    fs::create_directories(dir);
    json prims = json::array();
    for (const auto& p : s.primitives) prims.push_back(to_json(p));
    const json j = {{"tag", s.tag},
                    {"name", s.name},
                    {"seed", s.seed},
                    {"primitives", prims},
                    {"gt_state", to_json(s.gt_state)},
                    {"camera", to_json(s.camera)},
                    {"scene_mesh", "scene.ply"},
                    {"gt_body_mesh", "gt_body.ply"}};
    write_json(dir / "scenario.json", j);
    write_mesh_ply(dir / "scene.ply", s.scene);
    write_mesh_ply(dir / "gt_body.ply", posed_mesh(body, forward(body, s.gt_state)));
}

Scenario read_scenario(const fs::path& scenario_json) {
    const json j = read_json(scenario_json);
    Scenario s;
    s.tag = get_as<IoError, std::string>(j, "tag");
    s.name = get_as<IoError, std::string>(j, "name");
    s.seed = get_as<IoError, std::uint64_t>(j, "seed");
    for (const auto& p : field<IoError>(j, "primitives")) s.primitives.push_back(primitive_from_json(p));
    s.gt_state = body_state_from_json(field<IoError>(j, "gt_state"));
    s.camera = camera_from_json(field<IoError>(j, "camera"));
    s.scene = build_scene(s.primitives);
    return s;
}

void write_observation(const fs::path& dir, const Observation& obs) {
    check_little_endian();
    fs::create_directories(dir);
    const int w = obs.camera.width, h = obs.camera.height;
    json joints = json::array();
    for (Eigen::Index r = 0; r < obs.joints2d.rows(); ++r) joints.push_back({obs.joints2d(r, 0), obs.joints2d(r, 1)});
    const json header = {{"width", w},
                         {"height", h},
                         {"camera", to_json(obs.camera)},
                         {"depth", "depth.bin"},
                         {"depth_format", "float32 little-endian row-major, metres along the optical axis, 0 = no return"},
                         {"mask", "mask.pgm"},
                         {"scanned_body", "body_points.ply"},
                         {"scene_points", "scene_points.ply"},
                         {"empty_mask", obs.empty_mask},
                         {"joints2d", joints},
                         {"joint_confidence", array_json(obs.joint_confidence)}};
    write_json(dir / "observation.json", header);

    std::string blob(obs.depth.size() * sizeof(float), '\0');
    std::memcpy(blob.data(), obs.depth.data(), blob.size());
    write_text(dir / "depth.bin", blob);

    std::string pgm = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::uint8_t m : obs.body_mask) pgm.push_back(static_cast<char>(m ? 255 : 0));
    write_text(dir / "mask.pgm", pgm);

    write_points_ply(dir / "body_points.ply", obs.scanned_body);
    write_points_ply(dir / "scene_points.ply", obs.scene_points);
}

Observation read_observation(const fs::path& dir) {
    check_little_endian();
    const json j = read_json(dir / "observation.json");
    Observation obs;
    obs.camera = camera_from_json(field<IoError>(j, "camera"));
    const int w = get_as<IoError, int>(j, "width"), h = get_as<IoError, int>(j, "height");
    if (w != obs.camera.width || h != obs.camera.height) throw IoError("observation size does not match its camera");
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);

    const std::string blob = read_text(dir / get_as<IoError, std::string>(j, "depth"));
    if (blob.size() != n * sizeof(float)) throw IoError("depth blob has the wrong size");
    obs.depth.resize(n);
    std::memcpy(obs.depth.data(), blob.data(), blob.size());

    const std::string pgm = read_text(dir / get_as<IoError, std::string>(j, "mask"));
    std::istringstream hdr(pgm);
    std::string magic;
    int pw = 0, ph = 0, maxval = 0;
    hdr >> magic >> pw >> ph >> maxval;
    if (!hdr || magic != "P5" || pw != w || ph != h || maxval != 255) throw IoError("malformed mask PGM");
    const auto offset = static_cast<std::size_t>(hdr.tellg()) + 1;
    if (pgm.size() != offset + n) throw IoError("mask PGM has the wrong size");
    obs.body_mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) obs.body_mask[i] = pgm[offset + i] != 0 ? 1 : 0;

    obs.scanned_body = read_points_ply(dir / get_as<IoError, std::string>(j, "scanned_body")).points;
    obs.scene_points = read_points_ply(dir / get_as<IoError, std::string>(j, "scene_points")).points;
    obs.empty_mask = get_as<IoError, bool>(j, "empty_mask");

    const auto joints = get_as<IoError, std::vector<std::vector<double>>>(j, "joints2d");
    obs.joints2d.resize(static_cast<Eigen::Index>(joints.size()), 2);
    for (std::size_t r = 0; r < joints.size(); ++r) {
        if (joints[r].size() != 2) throw IoError("joints2d rows must have 2 entries");
        obs.joints2d(static_cast<Eigen::Index>(r), 0) = joints[r][0];
        obs.joints2d(static_cast<Eigen::Index>(r), 1) = joints[r][1];
    }
    const auto conf = get_as<IoError, std::vector<double>>(j, "joint_confidence");
    if (conf.size() != joints.size()) throw IoError("joint confidences do not match the joints");
    obs.joint_confidence = Eigen::Map<const Eigen::VectorXd>(conf.data(), static_cast<Eigen::Index>(conf.size()));
    return obs;
}

}  // namespace volfit
