#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "slicesim/utility.hpp"

using namespace slicesim;
using namespace slicesim::utility;

TEST_CASE("violation terms") {
    QosTargets t{1.0, 0.99999, 50.0, std::nullopt};
    QosAchieved a{1.15, 0.999999, 60.0, 0.0, 10.0};
    auto v = violation_terms(a, t);
    CHECK(v.latency == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(v.reliability == 0.0);
    CHECK(v.throughput == 0.0);
    CHECK(v.power == 0.0);

    QosAchieved ok{0.5, 1.0, 100.0, 0.0, 10.0};
    auto z = violation_terms(ok, t);
    CHECK(z.latency == 0.0);
    CHECK(z.reliability == 0.0);
    CHECK(z.throughput == 0.0);

    QosAchieved dead{std::numeric_limits<double>::infinity(), 0.5, 0.0, 0.0, 0.0};
    auto d = violation_terms(dead, t, 10.0);
    CHECK(d.throughput == 1.0);
    CHECK(d.latency == doctest::Approx(9.0));

    QosTargets tp{1000.0, 0.99, 0.1, 10.0};
    QosAchieved pa{1.0, 1.0, 1.0, 12.5, 1.0};
    CHECK(violation_terms(pa, tp).power == doctest::Approx(2.5));
}

TEST_CASE("qos utility") {
    UtilityWeights w;
    CHECK(qos_utility({}, w) == 1.0);
    Violations v;
    v.latency = 0.15;
    CHECK(std::abs(qos_utility(v, w) - std::exp(-0.3)) < 1e-12);
    CHECK(std::abs(qos_utility(v, w) - 0.7408) < 1e-4);
    Violations big;
    big.reliability = 1e6;
    CHECK(qos_utility(big, w) < 1e-300);
    // strictness: any positive violation lowers the utility below 1
    for (int k = 0; k < 4; ++k) {
        Violations s;
        (k == 0 ? s.latency : k == 1 ? s.reliability : k == 2 ? s.throughput : s.power) = 1e-6;
        CHECK(qos_utility(s, w) < 1.0);
    }
}

TEST_CASE("qos utility monotone in each violation") {
    UtilityWeights w;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        Violations v{u(rng), u(rng) / 100.0, u(rng) / 2.0, u(rng)};
        const double base = qos_utility(v, w);
        CHECK(base >= 0.0);
        CHECK(base <= 1.0);
        Violations m = v;
        m.latency += 0.1;
        CHECK(qos_utility(m, w) <= base);
        m = v;
        m.power += 0.1;
        CHECK(qos_utility(m, w) <= base);
    }
}

TEST_CASE("efficiency utility") {
    CHECK(efficiency_utility({0, 0, 0}, {40, 100, 1}).value == 1.0);
    CHECK(efficiency_utility({40, 100, 1}, {40, 100, 1}).value == 0.0);
    CHECK(std::abs(efficiency_utility({0.3, 0.6, 0.9}, {1, 1, 1}).value - 0.4) < 1e-12);
    auto z = efficiency_utility({0.0, 0.5, 0.5}, {0.0, 1.0, 1.0});
    CHECK(z.zero_budget[0]);
    CHECK(z.utilization[0] == 1.0);
    CHECK(efficiency_utility({0.3, 0.6, 0.5}, {1, 1, 1}).value > efficiency_utility({0.3, 0.6, 0.6}, {1, 1, 1}).value);
}

TEST_CASE("gini oracles") {
    std::vector<double> eq{3.0, 3.0, 3.0};
    CHECK(gini(eq) == 0.0);
    std::vector<double> two{1.0, 0.0};
    CHECK(std::abs(gini(two) - 0.5) < 1e-12);
    CHECK(gini(std::vector<double>{0.0, 0.0}) == 0.0);
    CHECK(gini(std::vector<double>{7.0}) == 0.0);
    CHECK_THROWS(gini(std::vector<double>{}));
    CHECK_THROWS(gini(std::vector<double>{1.0, -1.0}));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(6);
        for (auto& v : x) v = u(rng);
        double pair = 0.0, sum = 0.0;
        for (double a : x) {
            sum += a;
            for (double b : x) pair += std::abs(a - b);
        }
        const double oracle = pair / (2.0 * 36.0 * (sum / 6.0));
        CHECK(std::abs(gini(x) - oracle) < 1e-12);
        CHECK(std::abs(gini_pairwise(x) - oracle) < 1e-12);
        // permutation and scale invariance
        auto p = x;
        std::shuffle(p.begin(), p.end(), rng);
        CHECK(std::abs(gini(p) - gini(x)) < 1e-12);
        for (auto& v : p) v *= 3.7;
        CHECK(std::abs(gini(p) - gini(x)) < 1e-12);
    }
}

TEST_CASE("fairness utility") {
    std::vector<double> a{2, 2}, p{1, 0}, one{4};
    CHECK(fairness_utility(a, a, a) == 1.0);
    std::vector<double> b{1, 1};
    CHECK(std::abs(fairness_utility(p, b, b) - 5.0 / 6.0) < 1e-12);
    CHECK(fairness_utility(one, one, one) == 1.0);
    std::vector<double> longer{1, 1, 1};
    CHECK_THROWS(fairness_utility(a, longer, a));
}

TEST_CASE("slice and total utility") {
    CHECK(slice_utility(0.3, 0.9, 0.1, {1.0, 0.0, 0.0}) == 0.3);
    CHECK(slice_utility(1.0, 1.0, 1.0, {0.1, 0.7, 0.2}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(slice_utility(0.8, 0.5, 0.9, {0.6, 0.2, 0.2}) - 0.76) < 1e-12);
    std::vector<double> u{0.2, 0.4, 0.9}, w{0.5, 0.3, 0.2};
    CHECK(std::abs(total_utility(u, w) - (0.1 + 0.12 + 0.18)) < 1e-12);
    std::vector<double> u2{0.4, 0.8, 1.8};
    CHECK(std::abs(total_utility(u2, w) - 2.0 * total_utility(u, w)) < 1e-12);
}

TEST_CASE("breakdown ranges on random allocations") {
    Config c = default_config();
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Allocation al;
        std::array<QosAchieved, kNumSlices> q{};
        for (int s = 0; s < kNumSlices; ++s) {
            auto& sa = al.slices[static_cast<std::size_t>(s)];
            const int n = 1 + int(u(rng) * 5);
            for (int i = 0; i < n; ++i) {
                sa.power_w.push_back(u(rng) * 40.0 / 15.0);
                sa.prbs.push_back(u(rng) * 100.0 / 15.0);
                sa.compute.push_back(u(rng) / 15.0);
            }
            q[static_cast<std::size_t>(s)] = {u(rng) * 40.0, u(rng), u(rng) * 200.0, u(rng) * 5.0, u(rng) * 100.0};
        }
        auto br = evaluate(al, q, c.env, c.utility);
        CHECK(br.u_total >= 0.0);
        CHECK(br.u_total <= 1.0);
        for (const auto& s : br.slices) {
            CHECK(s.u_qos == s.terms.product());
            for (double x : {s.u_qos, s.u_eff, s.u_fair, s.u_slice, s.terms.u_latency, s.terms.u_reliability,
                             s.terms.u_throughput, s.terms.u_power}) {
                CHECK(x >= 0.0);
                CHECK(x <= 1.0);
            }
        }
    }
}
