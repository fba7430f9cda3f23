#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "volfit/fitter.hpp"
#include "volfit/metrics.hpp"

namespace volfit {

using json = nlohmann::json;

// JSON forms of the domain types. Readers throw ConfigError (configs) or
// IoError (data files) on missing or mistyped fields.
json to_json(const BodyState& s);
BodyState body_state_from_json(const json& j);

json to_json(const Camera& c);
Camera camera_from_json(const json& j);

json to_json(const Primitive& p);
Primitive primitive_from_json(const json& j);

// Every field is written; on reading, absent fields keep their defaults.
json to_json(const EnergyWeights& w);
EnergyWeights weights_from_json(const json& j, EnergyWeights base = {});
json to_json(const FitConfig& c);
FitConfig fit_config_from_json(const json& j, FitConfig base = {});
FitConfig load_fit_config(const std::filesystem::path& path);

json to_json(const EnergyBreakdown& b);
json to_json(const FitReport& r);
FitReport report_from_json(const json& j);

// Final state and per-stage summaries; excludes wall time so reruns compare equal.
json result_json(const FitResult& r);

// One JSON object per optimizer iteration (stage 1 then stage 2).
std::string trace_jsonl(const FitResult& r);

// Scenario directory: scenario.json, scene.ply (inspection only; the mesh is
// rebuilt from the primitives on load) and gt_body.ply.
void write_scenario(const std::filesystem::path& dir, const Scenario& s, const BodyTemplate& body);
Scenario read_scenario(const std::filesystem::path& scenario_json);

// Observation bundle: observation.json header, depth.bin (little-endian float32,
// row-major H x W), mask.pgm (binary PGM, 255 = body), body_points.ply, scene_points.ply.
void write_observation(const std::filesystem::path& dir, const Observation& obs);
Observation read_observation(const std::filesystem::path& dir);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace volfit
