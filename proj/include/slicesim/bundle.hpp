#pragma once

#include <array>
#include <string>
#include <vector>

#include "slicesim/state.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

// Factored action space: per slice, per resource, one of five share deltas.
inline constexpr int kDeltas = 5;
inline constexpr std::array<double, kDeltas> kDeltaValues{-0.10, -0.05, 0.0, 0.05, 0.10};
inline constexpr int kNoopDelta = 2;
inline constexpr int kAgentLogits = kNumResources * kDeltas;

/// Counterfactual catalog: entry 0 is the no-op, entries 1..6 move `kTradeSize` of power
/// and PRB share from a donor slice to a recipient slice.
inline constexpr int kCatalogSize = 7;
inline constexpr int kCandidates = 5;
inline constexpr double kTradeSize = 0.05;
inline constexpr int kHeads = 6;
inline constexpr int kActionEncodingDim = kNumSlices * kNumResources;

struct Trade {
    int donor = -1;
    int recipient = -1;
    bool noop() const { return donor < 0; }
};

Trade catalog_entry(int k);
std::string catalog_label(int k);
/// Share-delta encoding (scaled by 10) used as the action input of the scoring network.
std::array<double, kActionEncodingDim> encode_catalog(int k);
std::array<double, kActionEncodingDim> encode_share_change(const ShareMatrix& before, const ShareMatrix& after);
bool catalog_feasible(const ShareMatrix& shares, int k, double floor);
ShareMatrix apply_catalog(const ShareMatrix& shares, int k);

enum Head : int { kSemanticHead = 0, kTemporalHead, kCrossHead, kConfidenceHead, kCounterfactualHead, kMetaHead };
std::string_view head_name(int h);

/// The six head outputs of one agent plus the fused feature-space attention.
struct AttentionBundle {
    int agent = 0;
    StateVector semantic{};
    std::vector<double> temporal;                        // oldest slot first
    std::array<std::array<double, kNumSlices>, kNumSlices> cross{};
    double confidence = 0.0;
    std::array<double, kCandidates> counterfactual{};
    std::array<int, kCandidates> candidates{};           // catalog indices, -1 when unavailable
    std::array<double, kCandidates> candidate_scores{};  // scoring-network values
    std::array<double, kHeads> meta{};
    StateVector fused{};
};

}  // namespace slicesim
