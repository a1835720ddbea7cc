#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "slicesim/autograd.hpp"
#include "slicesim/bundle.hpp"
#include "slicesim/config.hpp"
#include "slicesim/link.hpp"
#include "slicesim/state.hpp"

namespace slicesim::policy {

/// Non-finite network output. A parameter snapshot is written to `snapshot_path`.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::filesystem::path snapshot)
        : std::runtime_error(what), snapshot_path(std::move(snapshot)) {}
    std::filesystem::path snapshot_path;
};

/// Named parameter tensors in one flat buffer.
class ParamStore {
public:
    struct Block {
        std::string name;
        int rows = 0;
        int cols = 0;
        std::size_t offset = 0;
    };

    int add(std::string name, int rows, int cols);
    int find(const std::string& name) const;
    const Block& block(int i) const { return blocks_[static_cast<std::size_t>(i)]; }
    const std::vector<Block>& blocks() const { return blocks_; }
    double* value(int i) { return values_.data() + blocks_[static_cast<std::size_t>(i)].offset; }
    const double* value(int i) const { return values_.data() + blocks_[static_cast<std::size_t>(i)].offset; }
    double* grad(int i) { return grads_.data() + blocks_[static_cast<std::size_t>(i)].offset; }

    /// Leaf on the tape; gradients accumulate into this store unless `trainable` is false.
    ad::Var bind(ad::Tape& t, int i, bool trainable = true) const;

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& grads() { return grads_; }
    const std::vector<double>& grads() const { return grads_; }
    void zero_grad();
    std::size_t size() const { return values_.size(); }

private:
    std::vector<Block> blocks_;
    std::vector<double> values_;
    mutable std::vector<double> grads_;
};

/// mask[resource][delta]: true when the delta may be chosen.
using ActionMask = std::array<std::array<bool, kDeltas>, kNumResources>;
using AgentMasks = std::array<ActionMask, kNumSlices>;
/// delta index per [slice][resource].
using JointAction = std::array<std::array<int, kNumResources>, kNumSlices>;

/// A delta is masked when applying it alone would leave the slice share outside
/// [floor, 1] or push the resource total above the budget. Low confidence also masks
/// the +/-10% options. A latency-guarded slice may not shed power or PRB share. The zero
/// delta is never masked.
ActionMask mask_actions(const ShareMatrix& shares, int slice, double floor, bool low_confidence,
                        bool latency_guard = false);

/// True when the encoded latency of `slice` sits above guard_ratio times its target.
/// The encoding saturates below half the target, so ratios under 0.5 behave like 0.5.
bool latency_guarded(const StateVector& x, int slice, double guard_ratio);

struct Projection {
    ShareMatrix shares{};
    int clamp_events = 0;  // resources whose increments had to be scaled back
};

/// Applies deltas, clamps to [floor, 1] and scales positive increments back per resource
/// until the budget holds.
Projection project(const ShareMatrix& shares, const JointAction& action, double floor);

// Individual heads on the tape. Shapes use B rows (batch).
ad::Var semantic_attention(ad::Tape& t, ad::Var s, ad::Var w, ad::Var b);
/// Scaled dot-product of a B x k query against W keys of B x k each; returns B x W.
ad::Var temporal_attention(ad::Tape& t, ad::Var query, const std::vector<ad::Var>& keys);
/// Row i = softmax_j((e_i Wq) . (e_j Wk) / sqrt(k)). Returns B x 9, row-major over (i, j).
ad::Var cross_slice_attention(ad::Tape& t, const std::array<ad::Var, kNumSlices>& emb, ad::Var wq, ad::Var wk);
/// 1 - H(semantic)/log d, B x 1.
ad::Var confidence_attention(ad::Tape& t, ad::Var semantic);
/// softmax(scores / tau) over available candidates (mask entries 0 are excluded), B x K.
ad::Var counterfactual_attention(ad::Tape& t, ad::Var scores, const ad::Matrix& available, double tau);
/// Per-head inputs to the fusion step, each already on its native axis.
struct FuseInputs {
    ad::Var semantic;        // B x d
    ad::Var temporal;        // B x W
    ad::Var cross;           // B x 9 (rows sum to 3)
    ad::Var confidence;      // B x 1
    ad::Var counterfactual;  // B x K
    ad::Var meta;            // B x 6
};
/// Projection logits for every head except semantic (identity); rows are softmaxed.
struct FuseProjections {
    ad::Var temporal, cross, confidence, counterfactual, meta;
};
ad::Var meta_fuse(ad::Tape& t, const FuseInputs& in, const FuseProjections& p);

struct BatchInput {
    std::vector<StateVector> states;
    std::vector<std::vector<StateVector>> history;  // per row: W slots, oldest first
    std::vector<ShareMatrix> shares;
    std::size_t rows() const { return states.size(); }
};

struct AgentGraph {
    ad::Var logp;  // B x 15 masked log-probabilities, three 5-way factors
    ad::Var semantic, temporal, cross, confidence, counterfactual, meta, fused;
};

struct Graph {
    std::array<AgentGraph, kNumSlices> agents;
    ad::Var value_net;  // B x 1, value scaled by (1 - gamma)
    std::vector<AgentMasks> masks;
    std::vector<std::array<int, kCandidates>> candidates;
    std::vector<std::array<double, kCandidates>> candidate_scores;
};

struct Decision {
    JointAction action{};
    std::array<double, kNumSlices> logp{};  // per agent, sum over its three factors
    AgentMasks masks{};
    std::array<AttentionBundle, kNumSlices> bundles{};
    double value = 0.0;
    double value_net = 0.0;
};

class Policy {
public:
    Policy(const PolicyConfig& cfg, double share_floor, double gamma);

    const PolicyConfig& config() const { return cfg_; }
    double share_floor() const { return floor_; }
    double gamma() const { return gamma_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Builds the joint forward pass. `masks` overrides the confidence-dependent masks
    /// (used to replay stored rollouts). `qhat_grad` lets the counterfactual head send
    /// gradients into the scoring network.
    Graph build(ad::Tape& t, const BatchInput& in, const std::vector<AgentMasks>* masks = nullptr,
                bool qhat_grad = false) const;

    /// Scoring network on rows of [state, action encoding]; returns B x 1.
    ad::Var qhat(ad::Tape& t, const ad::Matrix& input, bool trainable = true) const;
    ad::Var critic(ad::Tape& t, ad::Var states) const;

    /// One decision per row. `rngs` may be empty when greedy. Counts one forward per row.
    std::vector<Decision> act(const BatchInput& in, const std::vector<env::Rng*>& rngs, bool greedy);

    /// d(value_net)/d(state), computed analytically for each row.
    std::vector<StateVector> critic_input_gradient(const std::vector<StateVector>& states) const;

    long forward_calls() const { return forward_calls_; }
    void reset_forward_calls() { forward_calls_ = 0; }

    nlohmann::json to_json() const;
    static Policy from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& p) const;
    static Policy load(const std::filesystem::path& p);

    /// Throws NumericalError (after writing a snapshot) when any value is non-finite.
    void check_finite(std::span<const double> values, const std::string& what) const;

private:
    struct AgentParams {
        int sem_w, sem_b, tmp_wq, tmp_wk, crs_we, crs_be, crs_wq, crs_wk, meta_w, meta_b;
        int proj_tmp, proj_crs, proj_conf, proj_cf, proj_meta;
        int w1, b1, w2, b2, w3, b3;
    };
    struct MlpParams {
        int w1, b1, w2, b2, w3 = -1, b3 = -1;
    };

    void init_parameters();

    PolicyConfig cfg_;
    double floor_;
    double gamma_;
    ParamStore params_;
    std::array<AgentParams, kNumSlices> agents_{};
    MlpParams critic_{};
    MlpParams qhat_{};
    long forward_calls_ = 0;
};

}  // namespace slicesim::policy
