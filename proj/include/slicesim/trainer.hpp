#pragma once

#include <array>
#include <bitset>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "slicesim/config.hpp"
#include "slicesim/env.hpp"
#include "slicesim/explain.hpp"
#include "slicesim/policy.hpp"
#include "slicesim/utility.hpp"

namespace slicesim::trainer {

struct RewardParts {
    double utility = 0.0;       // U_total
    double explain = 0.0;       // w_xrl * E
    double penalty = 0.0;       // -clamp_penalty * clamp events
    double total() const { return utility + explain + penalty; }
};

/// r = U_total + w_xrl * E.
double reward(const utility::UtilityBreakdown& u, double e, double w_xrl);
RewardParts reward_parts(const utility::UtilityBreakdown& u, double e, int clamp_events, const UtilityWeights& w);

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// Generalized advantage estimation. `dones[t]` marks a terminal transition (no
/// bootstrapping past it); `bootstrap` is the value after the final transition.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
              double bootstrap, double gamma, double lambda);

/// -min(ratio*A, clip(ratio, 1-eps, 1+eps)*A).
double clipped_surrogate(double ratio, double advantage, double eps);

struct AttentionLosses {
    double sparse = 0.0;
    double cons = 0.0;
    double faith = 0.0;
    bool cons_empty = false;
};

/// Value-level attention losses for a batch of fused attentions (complements of the
/// explainability metrics; faithfulness rescaled by (1 - corr)/2).
AttentionLosses attention_losses(const std::vector<StateVector>& attentions, const std::vector<std::pair<int, int>>& pairs,
                                 const std::vector<StateVector>& states, const explain::UtilityFn& utility_fn,
                                 double rel_step);

struct LossTerms {
    double ppo = 0.0;
    double value = 0.0;
    double qhat = 0.0;
    double entropy = 0.0;
    AttentionLosses attention;
};

double total_loss(const LossTerms& l, const TrainConfig& c);

/// One decision tick of one environment.
struct Transition {
    StateVector state{};
    std::vector<StateVector> history;
    ShareMatrix shares{};
    policy::JointAction action{};
    policy::AgentMasks masks{};
    std::array<double, kNumSlices> logp{};
    std::array<double, kActionEncodingDim> action_encoding{};
    double value_net = 0.0;
    RewardParts reward;
    double reward_total = 0.0;
    double u_total = 0.0;
    double e = 0.0;
    std::array<bool, kNumSlices> violated{};
    int clamp_events = 0;
    bool done = false;
};

struct Batch {
    std::vector<Transition> transitions;  // env-major, time-ordered per env
    std::vector<std::size_t> env_begin;   // start offsets per env plus a final sentinel
    std::vector<double> bootstrap_value_net;
    std::size_t size() const { return transitions.size(); }
};

struct TickResult {
    env::StepResult step;
    Allocation alloc;
    utility::UtilityBreakdown util;
    explain::ExplainScore explain;                       // mean over agents
    std::array<explain::ExplainScore, kNumSlices> agent_explain{};
    RewardParts reward;
    int clamp_events = 0;
};

/// Environment plus the per-episode state the policy and the explainability metrics need.
class EpisodeContext {
public:
    EpisodeContext(const Config& cfg, std::uint64_t seed);

    void reset(std::uint64_t seed);
    policy::BatchInput input() const;
    void append_input(policy::BatchInput& in) const;

    /// Scores the bundles on the current state, steps the env with `new_shares`, updates
    /// history and the consistency windows.
    TickResult apply(const ShareMatrix& new_shares, int clamp_events,
                     const std::array<AttentionBundle, kNumSlices>* bundles, env::StepMode mode = env::StepMode::Stochastic);

    env::SliceEnv& env() { return env_; }
    const env::SliceEnv& env() const { return env_; }
    const std::deque<StateVector>& history() const { return history_; }
    void set_env(const env::SliceEnv& e);

private:
    Config cfg_;
    env::SliceEnv env_;
    std::deque<StateVector> history_;
    std::array<explain::ConsistencyWindow, kNumSlices> windows_;
    StateUtilityModel umodel_;
};

explain::ExplainScore score_bundles(const std::array<AttentionBundle, kNumSlices>& bundles, const StateVector& s,
                                    const std::vector<double>& utility_gradient,
                                    std::array<explain::ConsistencyWindow, kNumSlices>& windows, const Config& cfg,
                                    std::array<explain::ExplainScore, kNumSlices>* per_agent = nullptr);

/// Uniform choice over unmasked deltas.
policy::JointAction random_action(const ShareMatrix& shares, double floor, env::Rng& rng);

struct RolloutWorker {
    EpisodeContext ctx;
    env::Rng rng;
    std::uint64_t base_seed = 0;
    long episode = 0;
};

std::vector<RolloutWorker> make_workers(const Config& cfg, int n, std::uint64_t seed);

/// Collects `length` transitions in total, split evenly across workers.
Batch collect_rollouts(policy::Policy& pol, std::vector<RolloutWorker>& workers, int length, const Config& cfg);

struct Minibatch {
    const Batch* batch = nullptr;
    std::vector<int> idx;
    std::vector<double> advantages;  // per idx, normalized
    std::vector<double> returns;     // per idx, in value_net units
    /// Fixed faithfulness target; computed from the critic when empty.
    std::vector<StateVector> faith_target;
};

struct LossGraph {
    ad::Var total;
    LossTerms terms;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
};

/// Builds the complete training loss on a tape. With `qhat_grad`, the counterfactual head
/// also differentiates through the scoring network (used for gradient checks).
LossGraph build_loss(ad::Tape& t, const policy::Policy& pol, const Minibatch& mb, const TrainConfig& tc,
                     const ExplainConfig& ec, bool qhat_grad = false);

class Adam {
public:
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::vector<double>& params, const std::vector<double>& grads);
    long steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

/// Scales gradients to the given global norm; returns the norm before clipping.
double clip_grad_norm(std::vector<double>& g, double max_norm);

struct UpdateMetrics {
    LossTerms terms;
    double total = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
    int steps = 0;
};

UpdateMetrics update(policy::Policy& pol, Adam& opt, const Batch& batch, const TrainConfig& tc, const ExplainConfig& ec,
                     env::Rng& rng);

struct IterationMetrics {
    int iteration = 0;
    double mean_reward = 0.0;
    double mean_u_total = 0.0;
    double mean_e = 0.0;
    std::array<double, kNumSlices> violation_rate{};
    UpdateMetrics update;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const IterationMetrics& m);

struct TrainOptions {
    std::optional<std::filesystem::path> metrics_csv;
    std::function<void(const IterationMetrics&)> on_iteration;
};

/// Full training run from cfg.policy initialization. Deterministic for fixed config.
policy::Policy train(const Config& cfg, const TrainOptions& opts = {});

/// Greedy (or sampled) policy rollout from a fresh episode, the reference the controller
/// must reproduce when only its reactive phase is enabled.
std::vector<TickResult> evaluation_rollout(policy::Policy& pol, const Config& cfg, std::uint64_t seed, long horizon,
                                           bool greedy = true, std::uint64_t action_seed = 0);

/// Applies the plain-MAPPO ablation: alpha_xrl = 0 and w_xrl = 0.
Config ablation_config(Config cfg);

}  // namespace slicesim::trainer
