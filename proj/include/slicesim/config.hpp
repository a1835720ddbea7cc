#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "slicesim/types.hpp"

namespace slicesim {

enum class SpikeMechanism { BufferSurge, InterferenceSurge, GainDrop };

std::string_view mechanism_name(SpikeMechanism m);

struct SpikeEvent {
    long trigger_tick = 0;
    SliceId target_slice = SliceId::URLLC;
    SpikeMechanism mechanism = SpikeMechanism::BufferSurge;
    double magnitude = 2.0;
    long duration_ticks = 1;

    bool active_at(long tick) const { return tick >= trigger_tick && tick < trigger_tick + duration_ticks; }
    void validate() const;
};

/// Randomly scheduled copies of the case-study spike (buffer surge + interference surge on URLLC).
struct RandomSpikeConfig {
    double episode_probability = 0.0;
    long min_duration_ticks = 50;
    long max_duration_ticks = 200;
    double buffer_magnitude = 5.0;
    double interference_min = 20.0;
    double interference_max = 60.0;
    long earliest_tick = 50;
};

struct LinkParams {
    double gain = 1.0;              // linear channel gain g_n
    double packet_bits = 1000.0;    // L
    double service_rate = 100.0;    // mu, packets/s per unit compute
    double circuit_power_w = 0.1;   // P_circuit
};

struct TrafficParams {
    double ue_arrival_rate_per_s = 1.0;
    double mean_session_s = 5.0;
    double packet_rate_per_ue_s = 10.0;
    double queue_capacity_packets = 100.0;
    double diurnal_amplitude = 0.0;
    double diurnal_phase = 0.0;
};

struct SliceConfig {
    QosTargets targets;
    LinkParams link;
    TrafficParams traffic;
    std::array<double, kNumResources> initial_shares{0.3, 0.3, 0.3};
};

struct EnvConfig {
    double tick_ms = 10.0;
    long episode_ticks = 1000;
    Budgets budgets;
    double prb_bandwidth_hz = 360e3;
    double noise_w_per_prb = 1e-3;
    double gain_jitter_db = 1.0;
    double share_floor = 0.05;
    long diurnal_period_ticks = 1000;
    double ue_weight_sigma = 0.5;
    long latency_window_ticks = 100;
    long forecast_horizon_ticks = 10;
    double anomaly_queue_threshold = 0.5;
    /// coupling[victim][source]: fraction of source slice power received as interference.
    std::array<std::array<double, kNumSlices>, kNumSlices> interference_coupling{};
    std::array<SliceConfig, kNumSlices> slices{};
    std::vector<SpikeEvent> spikes;
    RandomSpikeConfig random_spikes;

    double tick_s() const { return tick_ms * 1e-3; }
    /// Clamp value for +inf latency before it enters utilities.
    double latency_clamp_ms() const;
    const SliceConfig& slice(int s) const { return slices[static_cast<std::size_t>(s)]; }
};

struct UtilityWeights {
    std::array<double, kNumSlices> slice_weights{0.5, 0.3, 0.2};
    std::array<std::array<double, 3>, kNumSlices> abg{{{0.6, 0.2, 0.2}, {0.6, 0.2, 0.2}, {0.6, 0.2, 0.2}}};
    double lambda_latency = 2.0;      // per ms
    double lambda_reliability = 100.0;
    double lambda_throughput = 5.0;
    double lambda_power = 1.0;        // per mW
    double w_xrl = 0.1;
    double clamp_penalty = 0.05;

    void validate() const;
};

struct ExplainConfig {
    std::array<double, 3> eta{0.3, 0.3, 0.4};
    double epsilon = 0.1;
    int window = 512;
    double fd_rel_step = 1e-4;
    int top_k = 3;
    double dominance_ratio = 3.0;   // max semantic weight must exceed ratio/d to name a cause

    void validate() const;
};

struct PolicyConfig {
    int hidden = 64;
    int history = 8;
    int key_dim = 16;
    int slice_embed = 16;
    int qhat_hidden = 32;
    int critic_hidden = 64;
    double confidence_threshold = 0.3;
    double latency_guard_ratio = 0.5;  // 0 disables the latency guard mask
    double cf_temperature = 0.05;
    double init_scale = 1.0;
    double noop_bias_init = 1.0;   // initial logit bias of the zero-delta option
    std::uint64_t init_seed = 1;

    void validate() const;
};

struct TrainConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_eps = 0.2;
    double learning_rate = 3e-4;
    int epochs = 4;
    int minibatch = 256;
    double alpha_xrl = 0.5;
    std::array<double, 3> beta{0.3, 0.3, 0.4};
    int rollout_length = 2048;
    int iterations = 200;
    int num_envs = 4;
    double value_coef = 0.5;
    double qhat_coef = 0.5;
    double entropy_coef = 0.01;
    double max_grad_norm = 0.5;
    int max_pairs_per_minibatch = 128;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ControllerConfig {
    int reactive_every = 1;
    int inter_slice_every = 5;
    int predictive_every = 10;
    double predictive_threshold = 1.5;
    double predictive_delta = 0.05;
    double trade_delta = 0.05;
    bool enable_inter_slice = true;
    bool enable_predictive = true;

    void validate() const;
};

struct ScenarioConfig {
    long warmup_ticks = 20;
    long horizon_ticks = 300;
    long sustain_ticks = 10;
    long max_resolution_ticks = 5;
    std::array<double, kNumResources> urllc_before{0.25, 0.30, 0.35};
    std::array<double, kNumResources> embb_before{0.45, 0.50, 0.35};
    std::array<double, kNumResources> mmtc_before{0.20, 0.15, 0.20};
    double buffer_magnitude = 5.0;
    double interference_magnitude = 50.0;
    long spike_duration_ticks = 200;
    double manual_troubleshooting_min = 11.5;
    double reported_resolution_min = 0.8;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
};

struct Config {
    std::uint64_t seed = 1;
    EnvConfig env;
    UtilityWeights utility;
    ExplainConfig explain;
    PolicyConfig policy;
    TrainConfig train;
    ControllerConfig controller;
    ScenarioConfig scenario;

    void validate() const;
};

/// Built-in defaults (identical to configs/default.json).
Config default_config();

Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& c);
Config load_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
/// Stable 64-bit FNV-1a hash of the canonical JSON dump.
std::uint64_t config_hash(const Config& c);
std::string hex64(std::uint64_t v);

}  // namespace slicesim
