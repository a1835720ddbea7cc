#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "slicesim/config.hpp"
#include "slicesim/controller.hpp"
#include "slicesim/explain.hpp"

namespace slicesim::trace {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kAttentionFile = "attention.jsonl";
inline constexpr const char* kExplanationFile = "explanations.jsonl";
inline constexpr const char* kEventFile = "events.jsonl";
inline constexpr const char* kTimingFile = "timing.csv";

/// Unreadable or structurally wrong trace files.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Manifest {
    std::string command;
    std::vector<std::uint64_t> seeds;
    nlohmann::json extra = nlohmann::json::object();
};

std::string code_version();

/// Creates `dir` and writes manifest.json (config hash, seeds, code version, full config).
/// Call before any other file in the directory is created.
void write_manifest(const std::filesystem::path& dir, const Manifest& m, const Config& cfg);
nlohmann::json read_manifest(const std::filesystem::path& dir);

nlohmann::json bundle_to_json(const AttentionBundle& b);
AttentionBundle bundle_from_json(const nlohmann::json& j);

/// FNV-1a of the exact attention line bytes, as hex.
std::string line_hash(std::string_view line);

/// Formats doubles with 17 significant digits ("inf"/"nan" for non-finite values).
std::string format_double(double v);

/// The CSV header, in column order.
const std::vector<std::string>& trace_columns();

/// Writes manifest, trace.csv, attention.jsonl, explanations.jsonl (hash-linked to the
/// attention lines), events.jsonl and timing.csv. Everything except timing.csv is a
/// deterministic function of the trajectory.
void write_run(const std::filesystem::path& dir, const controller::Trajectory& traj, const Config& cfg, const Manifest& m);

struct ReplayVerdict {
    bool pass = true;
    long rows_checked = 0;
    long attention_checked = 0;
    long explanations_checked = 0;
    std::vector<std::string> failures;
    std::vector<explain::ExplanationRecord> rendered;
};

/// Recomputes utilities, explainability scores, rewards, explanation hashes and rendered
/// explanations from the files in `dir`. Throws SchemaError on malformed input.
ReplayVerdict replay(const std::filesystem::path& dir, double tol = 1e-9);

}  // namespace slicesim::trace
