#include "slicesim/utility.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace slicesim::utility {

namespace {
double pos(double x) { return x > 0.0 ? x : 0.0; }
double sat(double lambda, double v) { return std::min(1.0, std::exp(-lambda * v)); }
}  // namespace

Violations violation_terms(const QosAchieved& a, const QosTargets& t, double latency_clamp_ms) {
    Violations v;
    double lat = a.latency_ms;
    if (!std::isfinite(lat) || lat > latency_clamp_ms) lat = latency_clamp_ms;
    v.latency = pos(lat - t.latency_ms);
    v.reliability = pos(t.reliability - a.reliability);
    v.throughput = std::min(1.0, pos(t.throughput_mbps - a.throughput_mbps) / t.throughput_mbps);
    v.power = t.power_mw ? pos(a.power_used_mw - *t.power_mw) : 0.0;
    return v;
}

QosTerms qos_terms(const Violations& v, const UtilityWeights& w) {
    return {sat(w.lambda_latency, v.latency), sat(w.lambda_reliability, v.reliability),
            sat(w.lambda_throughput, v.throughput), sat(w.lambda_power, v.power)};
}

double qos_utility(const Violations& v, const UtilityWeights& w) { return qos_terms(v, w).product(); }

Efficiency efficiency_utility(const std::array<double, 3>& used, const std::array<double, 3>& budget) {
    Efficiency e;
    double mean = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        double u;
        if (budget[r] <= 0.0) {
            u = 1.0;
            e.zero_budget[r] = true;
        } else {
            u = std::clamp(used[r] / budget[r], 0.0, 1.0);
        }
        e.utilization[r] = u;
        mean += u / 3.0;
    }
    e.value = std::clamp(1.0 - mean, 0.0, 1.0);
    return e;
}

double gini(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("gini: empty vector");
    double sum = 0.0;
    for (double v : x) {
        if (!(v >= 0.0)) throw std::invalid_argument("gini: entries must be nonnegative");
        sum += v;
    }
    const auto n = x.size();
    if (n == 1 || sum == 0.0) return 0.0;
    auto weighted = [n](auto first, auto last) {
        double acc = 0.0;
        double i = 1.0;
        for (auto it = first; it != last; ++it, i += 1.0) acc += (2.0 * i - double(n) - 1.0) * *it;
        return acc;
    };
    double num;
    if (std::is_sorted(x.begin(), x.end())) {
        num = weighted(x.begin(), x.end());
    } else {
        std::vector<double> s(x.begin(), x.end());
        std::sort(s.begin(), s.end());
        num = weighted(s.begin(), s.end());
    }
    return std::clamp(num / (double(n) * sum), 0.0, 1.0);
}

double gini_pairwise(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("gini: empty vector");
    const double n = double(x.size());
    double sum = std::accumulate(x.begin(), x.end(), 0.0);
    if (sum == 0.0) return 0.0;
    double acc = 0.0;
    for (double a : x)
        for (double b : x) acc += std::abs(a - b);
    return acc / (2.0 * n * n * (sum / n));
}

double fairness_utility(std::span<const double> power, std::span<const double> prbs, std::span<const double> compute) {
    if (power.size() != prbs.size() || power.size() != compute.size())
        throw std::invalid_argument("fairness_utility: vectors must share length");
    if (power.empty()) return 1.0;
    return ((1.0 - gini(power)) + (1.0 - gini(prbs)) + (1.0 - gini(compute))) / 3.0;
}

double slice_utility(double u_qos, double u_eff, double u_fair, const std::array<double, 3>& abg) {
    return abg[0] * u_qos + abg[1] * u_eff + abg[2] * u_fair;
}

double total_utility(std::span<const double> u, std::span<const double> w) {
    if (u.size() != w.size()) throw std::invalid_argument("total_utility: size mismatch");
    double t = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) t += w[i] * u[i];
    return t;
}

namespace {

SliceBreakdown finish_slice(const QosAchieved& a, const QosTargets& t, double clamp_ms,
                            const std::array<double, 3>& used, const Budgets& b, const std::array<double, 3>& g,
                            const std::array<double, 3>& abg, const UtilityWeights& w) {
    SliceBreakdown s;
    s.violations = violation_terms(a, t, clamp_ms);
    s.terms = qos_terms(s.violations, w);
    s.u_qos = s.terms.product();
    s.u_eff = efficiency_utility(used, {b.power_w, b.prbs, b.compute}).value;
    s.gini = g;
    s.u_fair = ((1.0 - g[0]) + (1.0 - g[1]) + (1.0 - g[2])) / 3.0;
    s.u_slice = slice_utility(s.u_qos, s.u_eff, s.u_fair, abg);
    return s;
}

}  // namespace

UtilityBreakdown evaluate(const Allocation& alloc, const std::array<QosAchieved, kNumSlices>& achieved,
                          const EnvConfig& env, const UtilityWeights& w) {
    UtilityBreakdown out;
    std::array<double, kNumSlices> us{};
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        const auto& sa = alloc.slices[si];
        std::array<double, 3> used{sa.total(0), sa.total(1), sa.total(2)};
        std::array<double, 3> g{0.0, 0.0, 0.0};
        if (sa.ues() > 0) g = {gini(sa.power_w), gini(sa.prbs), gini(sa.compute)};
        out.slices[si] = finish_slice(achieved[si], env.slice(s).targets, env.latency_clamp_ms(), used, env.budgets, g,
                                      w.abg[si], w);
        us[si] = out.slices[si].u_slice;
    }
    out.u_total = total_utility(us, w.slice_weights);
    return out;
}

UtilityBreakdown evaluate_records(const std::array<SliceRecord, kNumSlices>& rec, const EnvConfig& env,
                                  const UtilityWeights& w) {
    UtilityBreakdown out;
    std::array<double, kNumSlices> us{};
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        const auto& r = rec[si];
        std::array<double, 3> used{r.shares[0] * env.budgets.power_w, r.shares[1] * env.budgets.prbs,
                                   r.shares[2] * env.budgets.compute};
        out.slices[si] = finish_slice(r.achieved, env.slice(s).targets, env.latency_clamp_ms(), used, env.budgets,
                                      r.gini, w.abg[si], w);
        us[si] = out.slices[si].u_slice;
    }
    out.u_total = total_utility(us, w.slice_weights);
    return out;
}

}  // namespace slicesim::utility
