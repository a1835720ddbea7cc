#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "slicesim/config.hpp"
#include "slicesim/controller.hpp"
#include "slicesim/explain.hpp"
#include "slicesim/policy.hpp"

namespace slicesim::scenario {

struct SlaRow {
    std::string metric;
    std::string target;
    double achieved = 0.0;
    bool met = false;
};

struct ChainStep {
    std::string stage;  // detect, diagnose, act, recover
    long tick = 0;
    std::string text;
};

struct CaseStudyReport {
    std::uint64_t seed = 0;
    std::string config_hash;
    bool spike_enabled = true;
    long spike_tick = 0;
    std::optional<long> detection_tick;
    std::optional<long> resolution_tick;
    bool resolved = false;        // restored and sustained before the horizon
    bool within_bound = false;    // resolution_tick - detection_tick <= max_resolution_ticks
    bool passed = false;
    double decision_wall_ms_mean = 0.0;
    double decision_wall_ms_p99 = 0.0;
    double wall_ms_to_resolution = 0.0;
    ShareMatrix before{};
    ShareMatrix after{};
    std::array<QosAchieved, kNumSlices> qos_before{};
    std::array<QosAchieved, kNumSlices> qos_after{};  // mean over the sustain window
    double post_resolution_reliability = 0.0;
    double max_embb_latency_ms = 0.0;
    bool mmtc_maintained = true;
    std::vector<explain::FeatureWeight> attention_excerpt;
    std::vector<explain::CounterfactualEntry> counterfactual;
    std::vector<ChainStep> chain;
    std::vector<SlaRow> sla;
    double manual_troubleshooting_min = 0.0;
    double reported_resolution_min = 0.0;

    std::optional<long> resolution_ticks() const;
    bool urllc_up() const;   // URLLC power and PRB shares increased
    bool embb_down() const;  // eMBB power and PRB shares decreased
    std::string verdict() const { return passed ? "PASSED" : "FAILED"; }
    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// The case-study environment: random spikes off, initial shares set to the "before"
/// allocation, and (when enabled) the buffer + interference spike on URLLC at the end of
/// warmup.
Config case_study_config(const Config& cfg, bool spike_enabled = true);

struct CaseStudyOptions {
    bool spike_enabled = true;
    std::optional<std::filesystem::path> out_dir;  // traces plus report.json / report.txt
};

struct CaseStudyRun {
    CaseStudyReport report;
    controller::Trajectory trajectory;
};

CaseStudyRun run_spike_case_study(policy::Policy& pol, const Config& cfg, std::uint64_t seed, const CaseStudyOptions& opts = {});

struct Stat {
    double mean = 0.0;
    double sd = 0.0;
    double ci95 = 0.0;  // half-width, normal approximation
    static Stat of(const std::vector<double>& v);
};

struct SeedMetrics {
    std::uint64_t seed = 0;
    long ticks = 0;
    double mean_u_total = 0.0;
    double mean_e = 0.0;
    std::array<double, kNumSlices> violation_rate{};
    std::array<double, kNumSlices> mean_latency_ms{};
    double decision_ms_p99 = 0.0;
};

struct EvaluationSummary {
    std::vector<SeedMetrics> per_seed;
    Stat u_total, e;
    std::array<Stat, kNumSlices> violation_rate{};
    nlohmann::json to_json() const;
};

enum class Driver { Controller, ReactiveOnly, Random };

struct EvalOptions {
    long horizon = 0;  // 0 means a full episode
    Driver driver = Driver::Controller;
    std::optional<std::filesystem::path> out_dir;  // per-seed traces under seed_<n>/
};

/// Violation: any positive QoS violation term (u_qos < 1) on that tick.
SeedMetrics metrics_from_trajectory(const controller::Trajectory& traj, std::uint64_t seed);

/// Seeds run independently (in parallel up to SLICESIM_THREADS) and reduce in seed order.
EvaluationSummary evaluate(const policy::Policy& pol, const Config& cfg, const std::vector<std::uint64_t>& seeds,
                           const EvalOptions& opts = {});

struct PairedDelta {
    std::uint64_t seed = 0;
    double d_u_total = 0.0;  // full - ablation
    double d_e = 0.0;
    std::optional<long> full_resolution;
    std::optional<long> ablation_resolution;
};

struct AblationComparison {
    std::vector<PairedDelta> pairs;
    int u_positive = 0, u_negative = 0;
    int e_positive = 0, e_negative = 0;
    Stat d_u_total, d_e;
    nlohmann::json to_json() const;
};

AblationComparison compare_ablation(const policy::Policy& full, const policy::Policy& ablation, const Config& cfg,
                                    const std::vector<std::uint64_t>& seeds, long horizon = 0);

}  // namespace slicesim::scenario
