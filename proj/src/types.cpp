#include "slicesim/types.hpp"

#include <cmath>
#include <numeric>

namespace slicesim {

std::string_view slice_name(SliceId s) { return slice_name(index(s)); }

std::string_view slice_name(int s) {
    switch (s) {
        case 0: return "URLLC";
        case 1: return "eMBB";
        case 2: return "mMTC";
        default: return "?";
    }
}

std::optional<SliceId> parse_slice(std::string_view name) {
    for (auto s : kAllSlices)
        if (slice_name(s) == name) return s;
    return std::nullopt;
}

std::string_view resource_name(int r) {
    switch (r) {
        case 0: return "power";
        case 1: return "prb";
        case 2: return "compute";
        default: return "?";
    }
}

void QosTargets::validate(std::string_view who) const {
    auto fail = [&](const std::string& what) {
        throw ConfigError(std::string(who) + ": " + what);
    };
    if (!(latency_ms > 0.0) || !std::isfinite(latency_ms)) fail("latency target must be > 0");
    if (!(reliability > 0.0 && reliability <= 1.0)) fail("reliability target must be in (0, 1]");
    if (!(throughput_mbps > 0.0) || !std::isfinite(throughput_mbps)) fail("throughput target must be > 0");
    if (power_mw && !(*power_mw > 0.0)) fail("power target must be > 0 when present");
}

double SliceAllocation::total(int r) const {
    const auto& v = r == 0 ? power_w : (r == 1 ? prbs : compute);
    return std::accumulate(v.begin(), v.end(), 0.0);
}

double Allocation::total(int r) const {
    double t = 0.0;
    for (const auto& s : slices) t += s.total(r);
    return t;
}

}  // namespace slicesim
