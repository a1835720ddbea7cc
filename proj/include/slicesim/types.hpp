#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slicesim {

enum class SliceId : int { URLLC = 0, eMBB = 1, mMTC = 2 };
enum class Resource : int { Power = 0, Prb = 1, Compute = 2 };

inline constexpr int kNumSlices = 3;
inline constexpr int kNumResources = 3;
inline constexpr std::array<SliceId, kNumSlices> kAllSlices{SliceId::URLLC, SliceId::eMBB, SliceId::mMTC};

constexpr int index(SliceId s) { return static_cast<int>(s); }
constexpr int index(Resource r) { return static_cast<int>(r); }

std::string_view slice_name(SliceId s);
std::string_view slice_name(int s);
std::optional<SliceId> parse_slice(std::string_view name);
std::string_view resource_name(int r);

/// Invalid or inconsistent configuration input.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-slice SLA targets. Power target is only present for mMTC in the reference setup.
struct QosTargets {
    double latency_ms = 1.0;
    double reliability = 0.99999;
    double throughput_mbps = 50.0;
    std::optional<double> power_mw;

    void validate(std::string_view who) const;
};

/// Measured QoS of one slice over one tick.
struct QosAchieved {
    double latency_ms = 0.0;       // may be +inf (no throughput or no compute)
    double reliability = 1.0;
    double throughput_mbps = 0.0;
    double power_used_mw = 0.0;    // per-device mean consumption, see env docs
    double sinr = 0.0;             // linear
};

/// Slice shares of the global budgets, indexed [slice][resource].
using ShareMatrix = std::array<std::array<double, kNumResources>, kNumSlices>;

struct Budgets {
    double power_w = 40.0;
    double prbs = 100.0;
    double compute = 1.0;

    double operator[](int r) const { return r == 0 ? power_w : (r == 1 ? prbs : compute); }
};

/// Per-UE resource vectors of one slice.
struct SliceAllocation {
    std::vector<double> power_w;
    std::vector<double> prbs;
    std::vector<double> compute;

    double total(int r) const;
    std::size_t ues() const { return power_w.size(); }
};

/// Per-slice, per-UE power/PRB/compute assignment.
struct Allocation {
    std::array<SliceAllocation, kNumSlices> slices;

    double total(int r) const;
    double slice_total(int s, int r) const { return slices[static_cast<std::size_t>(s)].total(r); }
};

}  // namespace slicesim
