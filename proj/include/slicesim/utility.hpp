#pragma once

#include <array>
#include <span>

#include "slicesim/config.hpp"
#include "slicesim/types.hpp"

namespace slicesim::utility {

struct Violations {
    double latency = 0.0;      // ms above target
    double reliability = 0.0;  // probability below target
    double throughput = 0.0;   // normalized shortfall in [0, 1]
    double power = 0.0;        // mW above target (0 when no power target)
};

struct QosTerms {
    double u_latency = 1.0;
    double u_reliability = 1.0;
    double u_throughput = 1.0;
    double u_power = 1.0;

    double product() const { return u_latency * u_reliability * u_throughput * u_power; }
};

/// (x)_+ violation terms. Non-finite latency is clamped to `latency_clamp_ms` first.
Violations violation_terms(const QosAchieved& achieved, const QosTargets& targets,
                           double latency_clamp_ms = 1e4);

QosTerms qos_terms(const Violations& v, const UtilityWeights& w);
double qos_utility(const Violations& v, const UtilityWeights& w);

struct Efficiency {
    double value = 1.0;
    std::array<double, 3> utilization{};
    std::array<bool, 3> zero_budget{};
};

/// 1 - mean(used/budget). A zero budget component counts as fully used and is flagged.
Efficiency efficiency_utility(const std::array<double, 3>& used, const std::array<double, 3>& budget);

/// Gini coefficient. Empty input or negative entries throw; an all-zero vector is 0.
double gini(std::span<const double> x);

/// O(n^2) pairwise definition, kept for cross-checking.
double gini_pairwise(std::span<const double> x);

double fairness_utility(std::span<const double> power, std::span<const double> prbs, std::span<const double> compute);

double slice_utility(double u_qos, double u_eff, double u_fair, const std::array<double, 3>& abg);

double total_utility(std::span<const double> slice_utilities, std::span<const double> weights);

struct SliceBreakdown {
    QosTerms terms;
    Violations violations;
    double u_qos = 1.0;
    double u_eff = 1.0;
    double u_fair = 1.0;
    double u_slice = 1.0;
    std::array<double, 3> gini{};  // power, prb, compute
};

struct UtilityBreakdown {
    std::array<SliceBreakdown, kNumSlices> slices{};
    double u_total = 0.0;
};

/// Full breakdown for one tick. Efficiency budgets are the global budgets (see README).
UtilityBreakdown evaluate(const Allocation& alloc, const std::array<QosAchieved, kNumSlices>& achieved,
                          const EnvConfig& env, const UtilityWeights& w);

/// Recomputes a breakdown from per-slice aggregate values as logged in traces.
struct SliceRecord {
    QosAchieved achieved;
    std::array<double, 3> shares{};
    std::array<double, 3> gini{};
};
UtilityBreakdown evaluate_records(const std::array<SliceRecord, kNumSlices>& rec, const EnvConfig& env,
                                  const UtilityWeights& w);

}  // namespace slicesim::utility
