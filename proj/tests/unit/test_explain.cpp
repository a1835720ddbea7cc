#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "slicesim/explain.hpp"

using namespace slicesim;
using namespace slicesim::explain;

namespace {

std::vector<double> softmax(const std::vector<double>& z, double t) {
    double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(t * (z[i] - m)));
    for (auto& v : p) v /= s;
    return p;
}

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

StateVector random_attention(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StateVector a{};
    double s = 0;
    for (auto& v : a) s += (v = u(rng));
    for (auto& v : a) v /= s;
    return a;
}

}  // namespace

TEST_CASE("sparsity oracles") {
    std::vector<double> one_hot{0, 1, 0, 0}, uniform(4, 0.25), half{0.5, 0.5, 0, 0};
    CHECK(sparsity(one_hot) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(sparsity(uniform)) < 1e-12);
    CHECK(std::abs(sparsity(half) - (1.0 - std::log(2.0) / std::log(4.0))) < 1e-12);
    CHECK(std::abs(sparsity(half) - 0.5) < 1e-12);
    std::vector<double> single{1.0};
    CHECK_THROWS(sparsity(single));
    std::vector<double> bad{0.7, 0.7};
    CHECK_THROWS(validate_attention(bad));
}

TEST_CASE("sparsity is nondecreasing in softmax sharpness") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> z(12);
        for (auto& v : z) v = n(rng);
        double prev = -1.0;
        for (double t = 0.1; t < 20.0; t *= 1.5) {
            const double s = sparsity(softmax(z, t));
            CHECK(s >= prev - 1e-12);
            prev = s;
        }
    }
}

TEST_CASE("epsilon-similar pairs match brute force") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    std::vector<StateVector> states(10);
    for (auto& s : states)
        for (auto& v : s) v = u(rng);
    states[7] = states[2];
    for (double eps : {0.05, 0.1, 0.2, 0.25}) {
        std::vector<std::pair<int, int>> oracle;
        for (int i = 0; i < 10; ++i)
            for (int j = i + 1; j < 10; ++j) {
                double d = 0;
                for (int k = 0; k < kStateDim; ++k) d += std::pow(states[i][k] - states[j][k], 2);
                if (std::sqrt(d / kStateDim) <= eps) oracle.push_back({i, j});
            }
        auto got = epsilon_similar_pairs(states, eps);
        std::sort(got.begin(), got.end());
        CHECK(got == oracle);
        CHECK(std::find(got.begin(), got.end(), std::make_pair(2, 7)) != got.end());
    }
    const auto exact = epsilon_similar_pairs(states, 0.0);
    REQUIRE(exact.size() == 1);
    CHECK(exact[0] == std::make_pair(2, 7));
}

TEST_CASE("consistency oracles") {
    StateVector a{}, b{}, c{};
    a[0] = 1.0;
    b[1] = 1.0;
    c[0] = 0.5;
    c[1] = 0.5;
    CHECK(consistency({{a, a}}).value == doctest::Approx(1.0));
    CHECK(std::abs(consistency({{a, b}}).value) < 1e-15);
    const double expected = (1.0 + 0.0 + 1.0 / std::sqrt(2.0)) / 3.0;
    CHECK(std::abs(consistency({{a, a}, {a, b}, {a, c}}).value - expected) < 1e-12);
    const auto empty = consistency({});
    CHECK(empty.value == 1.0);
    CHECK(empty.flagged);
}

TEST_CASE("faithfulness oracles") {
    std::vector<double> g{0.5, 1.0, 2.0};
    std::vector<double> prop{0.5 / 3.5, 1.0 / 3.5, 2.0 / 3.5};
    CHECK(faithfulness_from_gradient(prop, g).value == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> anti{2.0 / 3.5, 1.0 / 3.5, 0.5 / 3.5};
    std::vector<double> lin{1.0, 2.0, 3.0};
    std::vector<double> anti_lin{3.0 / 6, 2.0 / 6, 1.0 / 6};
    CHECK(faithfulness_from_gradient(anti_lin, lin).value == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(faithfulness_from_gradient(anti, g).value < -0.9);
    const auto flat = faithfulness_from_gradient(prop, std::vector<double>{1.0, 1.0, 1.0});
    CHECK(flat.value == 0.0);
    CHECK(flat.flagged);
    const auto two = faithfulness_from_gradient(prop, std::vector<double>{1.0, 1.0, 2.0});
    CHECK(two.flagged);
}

TEST_CASE("quadratic toy: fd gradient and faithfulness") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.1, 2.0);
    std::vector<double> k(kStateDim), s(kStateDim);
    for (int i = 0; i < kStateDim; ++i) k[i] = pos(rng), s[i] = u(rng);
    UtilityFn f = [&](std::span<const double> x) {
        double v = 0;
        for (int i = 0; i < kStateDim; ++i) v += k[i] * x[i] * x[i];
        return v;
    };
    const auto g = finite_difference_gradient(f, s, 1e-4);
    std::vector<double> mag(kStateDim);
    for (int i = 0; i < kStateDim; ++i) {
        CHECK(std::abs(g[i] - 2 * k[i] * s[i]) < 1e-6);
        mag[i] = std::abs(2 * k[i] * s[i]);
    }
    std::mt19937_64 arng(4);
    const StateVector a = random_attention(arng);
    const auto m = faithfulness(a, s, f, 1e-4);
    std::vector<double> av(a.begin(), a.end());
    CHECK(std::abs(m.value - pearson_oracle(av, mag)) < 1e-9);
}

TEST_CASE("faithfulness invariant under affine gradient rescaling") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const StateVector a = random_attention(rng);
        std::vector<double> g(kStateDim), h(kStateDim);
        for (int i = 0; i < kStateDim; ++i) {
            g[i] = u(rng);
            h[i] = 2.5 * g[i] + 0.7;
        }
        CHECK(std::abs(faithfulness_from_gradient(a, g).value - faithfulness_from_gradient(a, h).value) < 1e-12);
    }
}

TEST_CASE("metrics invariant under a common permutation") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<int> perm(kStateDim);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const StateVector a = random_attention(rng), b = random_attention(rng);
    std::vector<double> g(kStateDim);
    for (auto& v : g) v = u(rng);
    StateVector pa{}, pb{};
    std::vector<double> pg(kStateDim);
    for (int i = 0; i < kStateDim; ++i) {
        pa[i] = a[perm[i]];
        pb[i] = b[perm[i]];
        pg[i] = g[perm[i]];
    }
    CHECK(std::abs(consistency({{a, b}}).value - consistency({{pa, pb}}).value) < 1e-12);
    CHECK(std::abs(faithfulness_from_gradient(a, g).value - faithfulness_from_gradient(pa, pg).value) < 1e-12);
    CHECK(std::abs(sparsity(a) - sparsity(pa)) < 1e-12);
}

TEST_CASE("explainability utility") {
    const std::array<double, 3> eta{0.3, 0.3, 0.4};
    CHECK(explainability_utility(1, 1, 1, eta) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(explainability_utility(0, 0, 0, eta) == 0.0);
    CHECK(std::abs(explainability_utility(0.5, 0.8, 0.6, eta) - 0.63) < 1e-12);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        double c[3] = {u(rng), u(rng), u(rng)};
        const double base = explainability_utility(c[0], c[1], c[2], eta);
        const int k = t % 3;
        c[k] = std::min(1.0, c[k] + u(rng) * 0.2);
        CHECK(explainability_utility(c[0], c[1], c[2], eta) >= base - 1e-15);
    }
}

TEST_CASE("consistency window uses eps-similar stored states") {
    ConsistencyWindow w(4);
    StateVector s{}, far{}, a{}, b{};
    far.fill(2.0);
    a[0] = 1.0;
    b[1] = 1.0;
    CHECK(w.score(s, a, 0.1).flagged);
    w.push(s, a);
    w.push(far, b);
    const auto m = w.score(s, a, 0.1);
    CHECK_FALSE(m.flagged);
    CHECK(m.value == doctest::Approx(1.0));
    for (int i = 0; i < 5; ++i) w.push(far, b);
    CHECK(w.size() == 4);
    CHECK(w.score(s, a, 0.1).flagged);
}

TEST_CASE("render explanation") {
    ExplainConfig cfg;
    env::InfoRecord ctx;
    ctx.tick = 42;
    ctx.anomaly[0] = true;

    AttentionBundle b;
    b.agent = 0;
    const int q = feature_index(0, kQueueOccupancy);
    b.semantic.fill(0.11 / (kStateDim - 1));
    b.semantic[q] = 0.89;
    b.temporal.assign(8, 1.0 / 8);
    for (auto& row : b.cross) row.fill(1.0 / 3);
    b.confidence = 0.7;
    auto by_label = [](const std::string& l) {
        for (int k = 0; k < kCatalogSize; ++k)
            if (catalog_label(k) == l) return k;
        return -1;
    };
    const int throttle = by_label("throttle mMTC for URLLC");
    REQUIRE(throttle > 1);
    b.candidates = {0, 1, throttle, -1, -1};
    b.counterfactual = {0.2, 0.7, 0.1, 0.0, 0.0};
    b.candidate_scores = {0.5, 0.9, 0.4, 0.0, 0.0};
    REQUIRE(catalog_label(1) == "reduce eMBB for URLLC");

    const auto r = render_explanation(b, ctx, cfg);
    CHECK(r.tick == 42);
    CHECK(r.dominant);
    CHECK(r.top_features[0].index == q);
    CHECK(r.summary.find("primary cause URLLC buffer") != std::string::npos);
    CHECK(r.summary.find("(0.89)") != std::string::npos);
    REQUIRE(r.counterfactual.size() == 3);
    CHECK(r.counterfactual[0].label == "reduce eMBB for URLLC");
    const auto p_noop = r.summary.find("do nothing"), p_mmtc = r.summary.find("throttle mMTC");
    CHECK(r.summary.find("preferred reduce eMBB for URLLC, rejecting") != std::string::npos);
    CHECK(p_noop < p_mmtc);
    CHECK(r.temporal_pattern == "flat");
    CHECK(r.summary.find("anomaly active") != std::string::npos);

    AttentionBundle u;
    u.semantic.fill(1.0 / kStateDim);
    u.temporal.assign(8, 1.0 / 8);
    for (auto& row : u.cross) row.fill(1.0 / 3);
    u.confidence = 0.0;
    u.candidates = {0, -1, -1, -1, -1};
    u.counterfactual = {1, 0, 0, 0, 0};
    const auto ru = render_explanation(u, {}, cfg);
    CHECK_FALSE(ru.dominant);
    CHECK(ru.summary.find("no dominant cause") != std::string::npos);
    CHECK(ru.summary.find("(low)") != std::string::npos);

    const auto back = ExplanationRecord::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
}
