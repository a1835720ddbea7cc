#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "slicesim/config.hpp"
#include "slicesim/link.hpp"
#include "slicesim/state.hpp"
#include "slicesim/types.hpp"

namespace slicesim::env {

struct SliceState {
    SliceId slice_id = SliceId::URLLC;
    long active_ues = 0;
    double arrival_rate = 0.0;   // UEs per second at the current tick
    double queue_occupancy = 0.0;
    double mean_snr = 0.0;       // linear SINR of the last tick
    std::array<double, kNumResources> shares{};
};

/// Empirical per-slice latency compliance over a sliding window of ticks (packet weighted).
class LatencyWindow {
public:
    explicit LatencyWindow(long length = 100) : length_(length) {}
    void push(double served_packets, bool met);
    /// Fraction of served packets that met the latency target; 1 when nothing was served.
    double fraction() const;
    std::size_t size() const { return entries_.size(); }

private:
    long length_;
    std::deque<std::pair<double, bool>> entries_;
    double served_ = 0.0;
    double met_ = 0.0;
};

struct FeasibilityReport {
    std::array<bool, 3> budget_ok{true, true, true};       // C1..C3
    std::array<double, 3> slack{};                          // budget minus used (absolute units)
    std::array<double, 3> slack_fraction{};                 // slack / budget
    std::array<bool, kNumSlices> c4_ok{true, true, true};
    std::array<double, kNumSlices> c4_fraction{1.0, 1.0, 1.0};
    std::array<bool, kNumSlices> c5_ok{true, true, true};

    bool budgets_feasible() const { return budget_ok[0] && budget_ok[1] && budget_ok[2]; }
    /// Names of violated budget constraints, e.g. "C1,C3".
    std::string violated_budgets() const;
};

/// Thrown by SliceEnv::step when an allocation breaks C1-C3.
class ConstraintViolation : public std::runtime_error {
public:
    ConstraintViolation(const std::string& what, FeasibilityReport r) : std::runtime_error(what), report(r) {}
    FeasibilityReport report;
};

FeasibilityReport check_constraints(const Allocation& alloc, const std::array<QosAchieved, kNumSlices>& achieved,
                                    const std::array<QosTargets, kNumSlices>& targets, const Budgets& budgets,
                                    const std::array<LatencyWindow, kNumSlices>* windows = nullptr);

struct InfoRecord {
    long tick = 0;
    std::array<double, 3> slack{};
    std::array<bool, kNumSlices> spike_active{};
    std::array<bool, kNumSlices> anomaly{};
    std::array<double, kNumSlices> arrivals{};
    std::array<double, kNumSlices> served{};
    std::array<double, kNumSlices> dropped{};
    std::array<double, kNumSlices> interference_w{};
    std::array<long, kNumSlices> ues{};
    std::array<std::array<double, 3>, kNumSlices> gini{};
    FeasibilityReport feasibility;
};

struct StepResult {
    GlobalState state;
    std::array<QosAchieved, kNumSlices> qos{};
    InfoRecord info;
};

enum class StepMode {
    Stochastic,
    /// Arrivals at their expectation, no fading jitter, no UE churn; consumes no randomness.
    Expected
};

/// Deterministic discrete-time slicing environment. Value type: copying clones the
/// complete state including the random engine.
class SliceEnv {
public:
    SliceEnv(EnvConfig cfg, std::uint64_t seed);

    /// Starts a new episode. Scheduled spikes come from the config plus the random-spike draw.
    void reset(std::uint64_t seed);

    Allocation make_allocation(const ShareMatrix& shares) const;
    StepResult step(const Allocation& alloc, StepMode mode = StepMode::Stochastic);
    StepResult step_shares(const ShareMatrix& shares, StepMode mode = StepMode::Stochastic) {
        return step(make_allocation(shares), mode);
    }

    const GlobalState& state() const { return state_; }
    const RawObservation& raw_observation() const { return raw_; }
    const ShareMatrix& shares() const { return shares_; }
    void set_shares(const ShareMatrix& s);
    long tick() const { return tick_; }
    bool episode_done() const { return tick_ >= cfg_.episode_ticks; }
    const EnvConfig& config() const { return cfg_; }
    const std::array<QosAchieved, kNumSlices>& last_qos() const { return last_qos_; }
    const std::array<LatencyWindow, kNumSlices>& latency_windows() const { return windows_; }
    std::array<SliceState, kNumSlices> slice_states() const;
    const std::vector<SpikeEvent>& spikes() const { return spikes_; }
    void set_spikes(std::vector<SpikeEvent> spikes);
    bool spike_active(int slice) const;
    double arrival_rate(int slice, long tick) const;

private:
    struct SliceRuntime {
        std::vector<double> ue_weights;  // sorted ascending
        double queue_packets = 0.0;
        double forecast_level = 0.0;
        double forecast_trend = 0.0;
        double prev_occupancy = 0.0;
    };

    struct Multipliers {
        std::array<double, kNumSlices> arrivals{1, 1, 1};
        std::array<double, kNumSlices> interference{1, 1, 1};
        std::array<double, kNumSlices> gain{1, 1, 1};
        std::array<bool, kNumSlices> active{};
    };

    Multipliers multipliers(long tick) const;
    std::array<QosAchieved, kNumSlices> compute_qos(const Allocation& alloc, const Multipliers& m,
                                                    const std::array<double, kNumSlices>& jitter,
                                                    std::array<double, kNumSlices>& interference) const;
    void admit_ue(int slice);
    void refresh_observation(const std::array<double, kNumSlices>& arrivals);

    EnvConfig cfg_;
    Rng rng_;
    std::vector<SpikeEvent> spikes_;
    std::array<SliceRuntime, kNumSlices> rt_{};
    std::array<LatencyWindow, kNumSlices> windows_;
    ShareMatrix shares_{};
    std::array<QosAchieved, kNumSlices> last_qos_{};
    RawObservation raw_;
    GlobalState state_;
    long tick_ = 0;
};

}  // namespace slicesim::env
