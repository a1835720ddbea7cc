#pragma once

#include <array>
#include <span>
#include <string>

#include "slicesim/config.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

// Observation layout. Each slice owns a block of kSliceFeatures entries, followed by
// kContextFeatures RIC-level entries. This enum is the single source of the ordering.
enum SliceFeature : int {
    kQueueOccupancy = 0,
    kOfferedLoad,
    kMeanSnr,
    kPowerHeadroom,
    kPrbHeadroom,
    kComputeHeadroom,
    kPredictedDemand,
    kLatencyRatio,
    kThroughputRatio,
    kReliabilityMargin,
    kSpikeFlag,
    kTimeOfDaySin,
    kSliceFeatures
};

enum ContextFeature : int { kPowerUtilization = 0, kPrbUtilization, kComputeUtilization, kTimeOfDayCos, kContextFeatures };

inline constexpr int kStateDim = kNumSlices * kSliceFeatures + kContextFeatures;
static_assert(kStateDim == 40);

constexpr int feature_index(int slice, SliceFeature f) { return slice * kSliceFeatures + f; }
constexpr int context_index(ContextFeature f) { return kNumSlices * kSliceFeatures + f; }
constexpr int headroom_feature(int resource) { return kPowerHeadroom + resource; }

std::string feature_name(int i);
/// Short operator-facing phrase, e.g. "URLLC buffer occupancy".
std::string feature_phrase(int i);
/// Slice owning feature i, or -1 for context features.
int feature_slice(int i);

using StateVector = std::array<double, kStateDim>;

/// Fixed-dimension observation; every entry is kept inside [-3, 3].
struct GlobalState {
    StateVector x{};

    std::span<const double> slice_block(int s) const {
        return std::span<const double>(x).subspan(static_cast<std::size_t>(s * kSliceFeatures), kSliceFeatures);
    }
    bool operator==(const GlobalState&) const = default;
};

/// Unencoded per-slice quantities that the encoder turns into features.
struct SliceObservation {
    double queue_occupancy = 0.0;
    double offered_load = 0.0;        // arrivals / service capacity over the last tick
    double sinr = 0.0;
    std::array<double, kNumResources> shares{};
    double predicted_load = 0.0;      // forecast arrivals / service capacity
    double latency_ms = 0.0;
    double throughput_mbps = 0.0;
    double reliability = 1.0;
    bool anomaly = false;
};

struct RawObservation {
    std::array<SliceObservation, kNumSlices> slices{};
    double time_phase = 0.0;  // radians
};

GlobalState encode_state(const RawObservation& raw, const EnvConfig& env);

/// Differentiable map from an encoded state to the total slice utility implied by its
/// QoS-ratio and headroom features. Quantities that the observation does not carry
/// (intra-slice fairness, per-device power) are held at their satisfied values.
class StateUtilityModel {
public:
    StateUtilityModel(const EnvConfig& env, const UtilityWeights& w) : env_(env), w_(w) {}
    double operator()(std::span<const double> s) const;

private:
    EnvConfig env_;
    UtilityWeights w_;
};

}  // namespace slicesim
