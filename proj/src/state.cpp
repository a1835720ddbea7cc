#include "slicesim/state.hpp"

#include <algorithm>
#include <cmath>

#include "slicesim/utility.hpp"

namespace slicesim {

namespace {

constexpr std::array<const char*, kSliceFeatures> kSliceFeatureNames{
    "queue_occupancy", "offered_load",     "mean_snr",         "power_headroom",
    "prb_headroom",    "compute_headroom", "predicted_demand", "latency_ratio",
    "throughput_ratio", "reliability_margin", "spike_flag",     "time_of_day_sin"};

constexpr std::array<const char*, kSliceFeatures> kSliceFeaturePhrases{
    "buffer occupancy", "offered load",        "SNR",                "power headroom",
    "PRB headroom",     "compute headroom",    "predicted demand",   "latency",
    "throughput",       "reliability margin",  "anomaly flag",       "time of day"};

constexpr std::array<const char*, kContextFeatures> kContextNames{"power_utilization", "prb_utilization",
                                                                  "compute_utilization", "time_of_day_cos"};

double clamp3(double v) { return std::clamp(v, -3.0, 3.0); }

}  // namespace

std::string feature_name(int i) {
    if (i < 0 || i >= kStateDim) return "?";
    if (i < kNumSlices * kSliceFeatures)
        return std::string(slice_name(i / kSliceFeatures)) + "." + kSliceFeatureNames[static_cast<std::size_t>(i % kSliceFeatures)];
    return std::string("ric.") + kContextNames[static_cast<std::size_t>(i - kNumSlices * kSliceFeatures)];
}

std::string feature_phrase(int i) {
    if (i < 0 || i >= kStateDim) return "?";
    if (i < kNumSlices * kSliceFeatures)
        return std::string(slice_name(i / kSliceFeatures)) + " " + kSliceFeaturePhrases[static_cast<std::size_t>(i % kSliceFeatures)];
    return std::string("RIC ") + kContextNames[static_cast<std::size_t>(i - kNumSlices * kSliceFeatures)];
}

int feature_slice(int i) { return i < kNumSlices * kSliceFeatures ? i / kSliceFeatures : -1; }

GlobalState encode_state(const RawObservation& raw, const EnvConfig& env) {
    GlobalState g;
    std::array<double, kNumResources> util{};
    for (int s = 0; s < kNumSlices; ++s) {
        const auto& o = raw.slices[static_cast<std::size_t>(s)];
        const auto& t = env.slice(s).targets;
        auto at = [&](SliceFeature f) -> double& { return g.x[static_cast<std::size_t>(feature_index(s, f))]; };
        at(kQueueOccupancy) = clamp3(4.0 * o.queue_occupancy - 1.0);
        at(kOfferedLoad) = clamp3(std::log2(std::max(o.offered_load, 0.125)));
        at(kMeanSnr) = o.sinr > 0 ? clamp3((10.0 * std::log10(o.sinr) - 15.0) / 10.0) : -3.0;
        for (int r = 0; r < kNumResources; ++r) {
            at(static_cast<SliceFeature>(headroom_feature(r))) = 4.0 * (1.0 - o.shares[static_cast<std::size_t>(r)]) - 2.0;
            util[static_cast<std::size_t>(r)] += o.shares[static_cast<std::size_t>(r)];
        }
        at(kPredictedDemand) = clamp3(4.0 * (o.predicted_load - 0.5));
        const double lr = o.latency_ms / t.latency_ms;
        at(kLatencyRatio) = std::isfinite(lr) && lr > 0 ? clamp3(3.0 * std::log2(lr)) : (lr > 0 ? 3.0 : -3.0);
        const double tr = o.throughput_mbps / t.throughput_mbps;
        at(kThroughputRatio) = tr > 0 ? clamp3(std::log2(tr)) : -3.0;
        at(kReliabilityMargin) = clamp3(-std::log10((1.0 - o.reliability + 1e-15) / (1.0 - t.reliability + 1e-15)));
        at(kSpikeFlag) = o.anomaly ? 1.0 : 0.0;
        at(kTimeOfDaySin) = std::sin(raw.time_phase);
    }
    for (int r = 0; r < kNumResources; ++r)
        g.x[static_cast<std::size_t>(context_index(static_cast<ContextFeature>(r)))] =
            4.0 * util[static_cast<std::size_t>(r)] - 2.0;
    g.x[static_cast<std::size_t>(context_index(kTimeOfDayCos))] = std::cos(raw.time_phase);
    return g;
}

double StateUtilityModel::operator()(std::span<const double> s) const {
    std::array<double, kNumSlices> us{};
    for (int n = 0; n < kNumSlices; ++n) {
        const auto& t = env_.slice(n).targets;
        auto f = [&](SliceFeature k) { return s[static_cast<std::size_t>(feature_index(n, k))]; };
        QosAchieved a;
        a.latency_ms = t.latency_ms * std::exp2(f(kLatencyRatio) / 3.0);
        a.throughput_mbps = t.throughput_mbps * std::exp2(f(kThroughputRatio));
        a.reliability = 1.0 - (1.0 - t.reliability + 1e-15) * std::pow(10.0, -f(kReliabilityMargin)) + 1e-15;
        a.power_used_mw = t.power_mw.value_or(0.0);
        auto v = utility::violation_terms(a, t, env_.latency_clamp_ms());
        const double uq = utility::qos_utility(v, w_);
        std::array<double, 3> used{};
        for (int r = 0; r < kNumResources; ++r)
            used[static_cast<std::size_t>(r)] = std::clamp(1.0 - (f(static_cast<SliceFeature>(headroom_feature(r))) + 2.0) / 4.0, 0.0, 1.0);
        const double ue = utility::efficiency_utility(used, {1.0, 1.0, 1.0}).value;
        us[static_cast<std::size_t>(n)] = utility::slice_utility(uq, ue, 1.0, w_.abg[static_cast<std::size_t>(n)]);
    }
    return utility::total_utility(us, w_.slice_weights);
}

}  // namespace slicesim
