#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "slicesim/bundle.hpp"
#include "slicesim/config.hpp"
#include "slicesim/env.hpp"
#include "slicesim/state.hpp"

namespace slicesim::explain {

/// Metric value plus a flag set when a degenerate-case convention was applied.
struct Metric {
    double value = 0.0;
    bool flagged = false;
};

/// Throws std::invalid_argument unless weights are nonnegative and sum to 1 within 1e-6.
void validate_attention(std::span<const double> a);

/// 1 - H(a)/log d with 0 log 0 := 0. Requires d >= 2.
double sparsity(std::span<const double> a);

/// Unordered pairs (i < j) with ||s_i - s_j|| / sqrt(d) <= eps.
std::vector<std::pair<int, int>> epsilon_similar_pairs(const std::vector<StateVector>& states, double eps);
double normalized_distance(const StateVector& a, const StateVector& b);

double cosine(std::span<const double> a, std::span<const double> b);

/// Mean cosine similarity over pairs. Empty pairs give 1 with the flag set.
Metric consistency(const std::vector<std::pair<StateVector, StateVector>>& attention_pairs);

/// Pearson correlation of attention x against gradient magnitudes y. Zero variance, or
/// fewer than three distinct values in y, give 0 with the flag set.
Metric pearson(std::span<const double> x, std::span<const double> y);

using UtilityFn = std::function<double(std::span<const double>)>;

/// Central finite differences with h_i = rel_step * (1 + |s_i|).
std::vector<double> finite_difference_gradient(const UtilityFn& u, std::span<const double> s, double rel_step);

Metric faithfulness(std::span<const double> a, std::span<const double> s, const UtilityFn& u, double rel_step);
/// Faithfulness against a precomputed gradient (absolute values are taken here).
Metric faithfulness_from_gradient(std::span<const double> a, std::span<const double> gradient);

double explainability_utility(double e_sparse, double e_cons, double e_faith, const std::array<double, 3>& eta);

/// Sliding replay window used for the per-tick consistency estimate.
class ConsistencyWindow {
public:
    explicit ConsistencyWindow(std::size_t capacity = 512) : capacity_(capacity) {}
    /// Mean cosine between `attention` and stored attentions of eps-similar stored states.
    Metric score(const StateVector& state, const StateVector& attention, double eps) const;
    void push(const StateVector& state, const StateVector& attention);
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    std::size_t capacity_;
    std::deque<std::pair<StateVector, StateVector>> entries_;
};

struct ExplainScore {
    double e_sparse = 0.0;
    double e_cons = 1.0;
    double e_faith = 0.0;
    double e = 0.0;
    bool cons_flagged = false;
    bool faith_flagged = false;
};

struct FeatureWeight {
    int index = 0;
    std::string name;
    double weight = 0.0;
};

struct CounterfactualEntry {
    int catalog = 0;
    std::string label;
    double weight = 0.0;
    double score = 0.0;
};

struct ExplanationRecord {
    long tick = 0;
    int agent = 0;
    std::vector<FeatureWeight> top_features;
    int cross_source = -1;
    int cross_target = -1;
    double cross_weight = 0.0;
    std::string temporal_pattern;   // "recent", "recurring" or "flat"
    std::vector<CounterfactualEntry> counterfactual;  // descending weight
    double confidence = 0.0;
    bool dominant = false;
    std::string summary;
    std::string attention_hash;

    nlohmann::json to_json() const;
    static ExplanationRecord from_json(const nlohmann::json& j);
};

ExplanationRecord render_explanation(const AttentionBundle& bundle, const env::InfoRecord& context,
                                     const ExplainConfig& cfg, double confidence_threshold = 0.3);

}  // namespace slicesim::explain
