#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slicesim/config.hpp"
#include "slicesim/env.hpp"
#include "slicesim/explain.hpp"
#include "slicesim/policy.hpp"
#include "slicesim/trainer.hpp"

namespace slicesim::controller {

enum class Phase { Reactive, InterSlice, Predictive };

std::string_view phase_name(Phase p);

/// Throws ConfigError unless periods are positive and the reactive period divides the others.
void validate_schedule(const ControllerConfig& c);

/// One phase invocation. `before` and `after` are the pending shares around the phase.
struct PhaseEvent {
    long tick = 0;
    Phase phase = Phase::Reactive;
    bool applied = false;
    ShareMatrix before{};
    ShareMatrix after{};
    int donor = -1;
    int recipient = -1;
    double u_without = 0.0;  // inter-slice lookahead U_total, pending shares
    double u_with = 0.0;     // inter-slice lookahead U_total, with the trade
    std::string detail;
};

struct ReactiveOutcome {
    policy::Decision decision;
    policy::Projection projection;
    std::array<explain::ExplanationRecord, kNumSlices> explanations;
    double wall_ms = 0.0;  // forward + mask + projection + explanation render
};

/// Executes the policy's masked action on the current state.
ReactiveOutcome reactive_phase(policy::Policy& pol, const trainer::EpisodeContext& ctx, const env::InfoRecord& context,
                               const Config& cfg, bool greedy, env::Rng* rng);

/// Per-slice violation severity used to pick trade partners: normalized latency excess plus
/// reliability shortfall in log-decades. Throughput and power terms are left out.
std::array<double, kNumSlices> violation_scores(const std::array<QosAchieved, kNumSlices>& qos, const EnvConfig& env);

struct TradeProposal {
    int donor = -1;
    int recipient = -1;
    int catalog = -1;
};

/// Recipient is the most violated slice (if any violation); donor is the least violated of
/// the unguarded others, ties broken by the recipient agent's cross-slice attention on it.
TradeProposal propose_trade(const std::array<double, kNumSlices>& violation, const std::array<double, kNumSlices>& cross_row,
                            const std::array<bool, kNumSlices>& guarded = {});

/// Applies the proposed trade only if the expected-mode one-tick lookahead strictly improves
/// U_total over keeping `pending`.
PhaseEvent inter_slice_phase(const env::SliceEnv& env, const ShareMatrix& pending, const std::array<double, kNumSlices>& violation,
                             const std::array<AttentionBundle, kNumSlices>& bundles, const Config& cfg);

/// Bounded pre-allocation for slices whose predicted-demand feature exceeds the threshold.
/// Latency-guarded slices never donate; with no donor only the budget slack is used.
PhaseEvent predictive_phase(const std::deque<StateVector>& history, int window,
                            const std::array<AttentionBundle, kNumSlices>& bundles, const ShareMatrix& pending,
                            const ControllerConfig& c, double floor, double guard_ratio = 0.0);

struct TickRecord {
    long tick = 0;
    std::string phase;  // "warmup" or the executed phases joined by '+'
    std::optional<StateVector> decision_state;
    ShareMatrix shares{};
    trainer::TickResult result;
    std::array<double, kNumSlices> queue{};
    std::array<AttentionBundle, kNumSlices> bundles{};
    bool has_bundles = false;
    env::InfoRecord context;  // info of the previous tick, the explanation context
    double decision_wall_ms = 0.0;
};

struct Trajectory {
    std::vector<TickRecord> ticks;
    std::vector<PhaseEvent> events;
    std::vector<explain::ExplanationRecord> explanations;
};

struct LoopOptions {
    long horizon = 0;
    bool greedy = true;
    std::uint64_t action_seed = 0;
    env::StepMode mode = env::StepMode::Stochastic;
    /// Shares stay fixed (no phase runs) until the env reaches this tick.
    long hold_until_tick = 0;
    /// Called once per executed phase, in execution order.
    std::function<void(long tick, Phase phase)> probe;
};

/// Interleaves the phases per schedule. On coinciding ticks the order is reactive,
/// inter-slice, predictive; the env steps once per tick with the final shares.
Trajectory run_loop(trainer::EpisodeContext& ctx, policy::Policy& pol, const Config& cfg, const LoopOptions& opts);

}  // namespace slicesim::controller
