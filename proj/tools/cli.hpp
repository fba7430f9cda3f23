#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "volfit/errors.hpp"
#include "volfit/fznet.hpp"
#include "volfit/io.hpp"

namespace volfit::cli {

inline constexpr const char* kToolVersion = "1.0.0";

// Process exit codes (stable API).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Git blob hash ("blob <size>\0" + content, SHA-1, hex) of a file or string.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::filesystem::path& path);

// Audit record written once per output directory as manifest.json.
struct RunManifest {
    std::string command;
    json config = json::object();
    std::optional<std::uint64_t> seed;
    std::vector<std::filesystem::path> inputs;
    int threads = 0;
    std::string started_at;  // ISO 8601 UTC

    // Hashes the inputs and every regular file under `out_dir` (except the
    // manifest itself) and writes out_dir/manifest.json.
    void write(const std::filesystem::path& out_dir) const;
};

std::string utc_timestamp();

struct SynthOptions {
    std::uint64_t seed = 7;
    std::filesystem::path out;
};
// Writes the scenario suite: out/<name>/{scenario.json, scene.ply, gt_body.ply,
// observation bundle}, out/suite.json and the manifest.
void cmd_synth(const SynthOptions& o);

struct FitOptions {
    std::filesystem::path scenario;  // <dir>/scenario.json, observation bundle alongside
    std::string mode = "ours";
    std::optional<std::filesystem::path> config;
    std::filesystem::path out;
    std::string provider = "gt";  // gt | fznet
    std::optional<std::filesystem::path> model;
};
// Writes result.json, report.json, body.ply, trace.jsonl and, when the mode
// uses them, free_zone.ply and tsv.ply.
void cmd_fit(const FitOptions& o);

struct EvalOptions {
    std::vector<std::string> results;  // report.json files, directories or glob patterns
    std::filesystem::path out;         // CSV path
};
void cmd_eval(const EvalOptions& o);

// Visible-ratio bucket label, left-closed: [0,25), [25,50), [50,75), [75,100].
std::string visible_bucket(double ratio);

// Aggregate table for a set of reports (one row per report, then mean rows).
std::string eval_csv(std::vector<FitReport> reports);

struct FznetOptions {
    std::string action;  // init | train | eval
    std::filesystem::path data;
    std::filesystem::path model;
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::uint64_t seed = 1;
    int scenes = 0;  // 0 = all scenarios in the dataset
    int eval_queries = 2000;
    double carve_threshold = 0.03125;
};
// Returns the JSON report it wrote (train: loss trace; eval: loss and carve stats).
json cmd_fznet(const FznetOptions& o);

FzNetTrainConfig fznet_config_from_json(const json& j, FzNetTrainConfig base = {});

// Exit code for a library error kind.
int exit_code_for(ErrorKind kind);

// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace volfit::cli
