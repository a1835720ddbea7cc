#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "slicesim/policy.hpp"
#include "support/gradcheck.hpp"

using namespace slicesim;
using namespace slicesim::policy;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using slicesim::testing::check_graph;
using slicesim::testing::random_matrix;
using slicesim::testing::random_simplex;

namespace {

std::vector<double> softmax(std::vector<double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (auto& v : z) s += (v = std::exp(v - m));
    for (auto& v : z) v /= s;
    return z;
}

ShareMatrix before_shares() { return {{{0.25, 0.30, 0.35}, {0.45, 0.50, 0.35}, {0.20, 0.15, 0.20}}}; }

BatchInput random_batch(int B, int W, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0), sh(0.05, 0.5);
    BatchInput in;
    for (int b = 0; b < B; ++b) {
        StateVector s{};
        for (auto& v : s) v = u(rng);
        in.states.push_back(s);
        std::vector<StateVector> h(static_cast<std::size_t>(W));
        for (auto& x : h)
            for (auto& v : x) v = u(rng);
        in.history.push_back(h);
        ShareMatrix m{};
        for (int r = 0; r < kNumResources; ++r) {
            double tot = 0;
            for (int n = 0; n < kNumSlices; ++n) tot += (m[n][r] = sh(rng));
            if (tot > 1.0)
                for (int n = 0; n < kNumSlices; ++n) m[n][r] /= tot;
        }
        in.shares.push_back(m);
    }
    return in;
}

double row_sum(const Matrix& m, int r) {
    double s = 0;
    for (int c = 0; c < m.cols; ++c) s += m(r, c);
    return s;
}

}  // namespace

TEST_CASE("semantic attention") {
    Tape t;
    Matrix s(1, kStateDim, 0.3);
    Var zero = semantic_attention(t, t.constant(s), t.constant(Matrix(kStateDim, kStateDim)), t.constant(Matrix(1, kStateDim)));
    for (double v : t.value(zero).data) CHECK(std::abs(v - 1.0 / kStateDim) < 1e-15);

    Matrix b(1, kStateDim);
    b(0, 0) = 2.0;
    b(0, 1) = 1.0;
    Var a = semantic_attention(t, t.constant(s), t.constant(Matrix(kStateDim, kStateDim)), t.constant(b));
    std::vector<double> z(b.data);
    const auto oracle = softmax(z);
    for (int i = 0; i < kStateDim; ++i) CHECK(std::abs(t.value(a)(0, i) - oracle[static_cast<std::size_t>(i)]) < 1e-12);

    Matrix sat(1, kStateDim);
    sat(0, 5) = 800.0;
    Var one = semantic_attention(t, t.constant(s), t.constant(Matrix(kStateDim, kStateDim)), t.constant(sat));
    CHECK(t.value(one)(0, 5) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("temporal attention") {
    Tape t;
    std::mt19937_64 rng(1);
    Var q = t.constant(random_matrix(2, 4, rng));
    Var single = temporal_attention(t, q, {t.constant(random_matrix(2, 4, rng))});
    CHECK(t.value(single)(0, 0) == 1.0);
    CHECK(t.value(single)(1, 0) == 1.0);

    Var k = t.constant(random_matrix(2, 4, rng));
    Var same = temporal_attention(t, q, {k, k, k});
    for (double v : t.value(same).data) CHECK(std::abs(v - 1.0 / 3) < 1e-15);

    // 3-slot toy, k = 2: logits q.k / sqrt(2)
    Var q1 = t.constant(Matrix(1, 2, {1.0, 2.0}));
    Var toy = temporal_attention(t, q1, {t.constant(Matrix(1, 2, {1.0, 0.0})), t.constant(Matrix(1, 2, {0.0, 1.0})),
                                         t.constant(Matrix(1, 2, {1.0, 1.0}))});
    const double r2 = std::sqrt(2.0);
    const auto oracle = softmax({1.0 / r2, 2.0 / r2, 3.0 / r2});
    for (int j = 0; j < 3; ++j) CHECK(std::abs(t.value(toy)(0, j) - oracle[static_cast<std::size_t>(j)]) < 1e-12);
}

TEST_CASE("cross-slice attention") {
    Tape t;
    std::mt19937_64 rng(2);
    const Matrix e = random_matrix(2, 5, rng);
    Var wq = t.constant(random_matrix(5, 5, rng)), wk = t.constant(random_matrix(5, 5, rng));
    Var same = cross_slice_attention(t, {t.constant(e), t.constant(e), t.constant(e)}, wq, wk);
    for (double v : t.value(same).data) CHECK(std::abs(v - 1.0 / 3) < 1e-14);

    // One dominant key: slice 2's key vector is large along every query direction.
    Matrix eye(3, 3);
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    std::array<Var, kNumSlices> emb{t.constant(Matrix(1, 3, {1, 0, 0})), t.constant(Matrix(1, 3, {1, 0, 0})),
                                    t.constant(Matrix(1, 3, {30, 0, 0}))};
    Var dom = cross_slice_attention(t, emb, t.constant(Matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1})), t.constant(eye));
    for (int i = 0; i < 3; ++i) CHECK(t.value(dom)(0, i * 3 + 2) > 0.99);

    // Random embeddings against a direct oracle.
    std::array<Matrix, 3> E{random_matrix(1, 5, rng), random_matrix(1, 5, rng), random_matrix(1, 5, rng)};
    const Matrix Wq = random_matrix(5, 4, rng), Wk = random_matrix(5, 4, rng);
    Var out = cross_slice_attention(t, {t.constant(E[0]), t.constant(E[1]), t.constant(E[2])}, t.constant(Wq), t.constant(Wk));
    auto proj = [](const Matrix& x, const Matrix& w) {
        std::vector<double> r(static_cast<std::size_t>(w.cols));
        for (int c = 0; c < w.cols; ++c)
            for (int k = 0; k < w.rows; ++k) r[static_cast<std::size_t>(c)] += x(0, k) * w(k, c);
        return r;
    };
    for (int i = 0; i < 3; ++i) {
        const auto qi = proj(E[i], Wq);
        std::vector<double> z;
        for (int j = 0; j < 3; ++j) {
            const auto kj = proj(E[j], Wk);
            z.push_back(std::inner_product(qi.begin(), qi.end(), kj.begin(), 0.0) / 2.0);
        }
        const auto p = softmax(z);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(t.value(out)(0, i * 3 + j) - p[static_cast<std::size_t>(j)]) < 1e-12);
    }
}

TEST_CASE("confidence attention") {
    Tape t;
    Matrix one(1, kStateDim);
    one(0, 3) = 1.0;
    CHECK(std::abs(t.item(confidence_attention(t, t.constant(one))) - 1.0) < 1e-12);
    CHECK(std::abs(t.item(confidence_attention(t, t.constant(Matrix(1, kStateDim, 1.0 / kStateDim))))) < 1e-12);
    Matrix half(1, kStateDim);
    half(0, 0) = half(0, 1) = 0.5;
    CHECK(std::abs(t.item(confidence_attention(t, t.constant(half))) - (1.0 - std::log(2.0) / std::log(40.0))) < 1e-12);
}

TEST_CASE("counterfactual attention") {
    Tape t;
    Matrix all(1, kCandidates, 1.0);
    Var same = counterfactual_attention(t, t.constant(Matrix(1, kCandidates, 0.4)), all, 0.05);
    for (double v : t.value(same).data) CHECK(std::abs(v - 1.0 / kCandidates) < 1e-15);

    Matrix margin(1, kCandidates);
    margin(0, 2) = 100.0;
    CHECK(t.value(counterfactual_attention(t, t.constant(margin), all, 0.05))(0, 2) == doctest::Approx(1.0).epsilon(1e-15));

    Matrix three(1, kCandidates, {0.3, 0.1, 0.25, 0, 0});
    Matrix avail(1, kCandidates, {1, 1, 1, 0, 0});
    Var cf = counterfactual_attention(t, t.constant(three), avail, 0.05);
    const auto oracle = softmax({0.3 / 0.05, 0.1 / 0.05, 0.25 / 0.05});
    for (int c = 0; c < 3; ++c) CHECK(std::abs(t.value(cf)(0, c) - oracle[static_cast<std::size_t>(c)]) < 1e-12);
    CHECK(t.value(cf)(0, 3) == 0.0);
    CHECK(t.value(cf)(0, 4) == 0.0);
}

TEST_CASE("meta fuse") {
    std::mt19937_64 rng(8);
    const int W = 8, B = 2;
    Tape t;
    const Matrix sem = random_simplex(B, kStateDim, rng), tmp = random_simplex(B, W, rng);
    Matrix crs = random_simplex(B, 9, rng);
    for (auto& v : crs.data) v *= 3.0;
    const Matrix conf(B, 1, {0.3, 0.8});
    const Matrix cf = random_simplex(B, kCandidates, rng);
    const Matrix pt = random_matrix(W, kStateDim, rng), pc = random_matrix(9, kStateDim, rng), pf = random_matrix(2, kStateDim, rng),
                 pk = random_matrix(kCandidates, kStateDim, rng), pm = random_matrix(kHeads, kStateDim, rng);
    auto fuse = [&](const Matrix& meta) {
        FuseInputs in{t.constant(sem), t.constant(tmp), t.constant(crs), t.constant(conf), t.constant(cf), t.constant(meta)};
        FuseProjections p{t.constant(pt), t.constant(pc), t.constant(pf), t.constant(pk), t.constant(pm)};
        return t.value(meta_fuse(t, in, p));
    };

    Matrix onehot(B, kHeads);
    onehot(0, kSemanticHead) = onehot(1, kSemanticHead) = 1.0;
    const Matrix f = fuse(onehot);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f.data[i] == doctest::Approx(sem.data[i]).epsilon(1e-15));

    // Reference composition for a random meta vector.
    const Matrix meta = random_simplex(B, kHeads, rng);
    const Matrix got = fuse(meta);
    const auto P = [](const Matrix& p) { return ad::softmax_rows(p); };
    const std::array<Matrix, 5> proj{P(pt), P(pc), P(pf), P(pk), P(pm)};
    for (int b = 0; b < B; ++b) {
        std::vector<std::vector<double>> heads{
            std::vector<double>(tmp.row(b).begin(), tmp.row(b).end()), {}, {conf(b, 0), 1.0 - conf(b, 0)},
            std::vector<double>(cf.row(b).begin(), cf.row(b).end()), std::vector<double>(meta.row(b).begin(), meta.row(b).end())};
        for (int c = 0; c < 9; ++c) heads[1].push_back(crs(b, c) / 3.0);
        std::vector<double> f2(kStateDim);
        double tot = 0;
        for (int i = 0; i < kStateDim; ++i) {
            double v = meta(b, kSemanticHead) * sem(b, i);
            for (int h = 0; h < 5; ++h) {
                double m = 0;
                for (std::size_t k = 0; k < heads[static_cast<std::size_t>(h)].size(); ++k)
                    m += heads[static_cast<std::size_t>(h)][k] * proj[static_cast<std::size_t>(h)](static_cast<int>(k), i);
                v += meta(b, h + 1) * m;
            }
            tot += (f2[static_cast<std::size_t>(i)] = v);
        }
        for (int i = 0; i < kStateDim; ++i) CHECK(std::abs(got(b, i) - f2[static_cast<std::size_t>(i)] / tot) < 1e-12);
    }

    // All heads uniform with uniform meta and zero projections give a uniform fusion.
    Tape t2;
    const Matrix zero9(9, kStateDim), zw(W, kStateDim), z2(2, kStateDim), zk(kCandidates, kStateDim), zm(kHeads, kStateDim);
    FuseInputs in{t2.constant(Matrix(1, kStateDim, 1.0 / kStateDim)), t2.constant(Matrix(1, W, 1.0 / W)), t2.constant(Matrix(1, 9, 1.0 / 3)),
                  t2.constant(Matrix(1, 1, 0.5)), t2.constant(Matrix(1, kCandidates, 1.0 / kCandidates)),
                  t2.constant(Matrix(1, kHeads, 1.0 / kHeads))};
    FuseProjections p{t2.constant(zw), t2.constant(zero9), t2.constant(z2), t2.constant(zk), t2.constant(zm)};
    for (double v : t2.value(meta_fuse(t2, in, p)).data) CHECK(std::abs(v - 1.0 / kStateDim) < 1e-15);
}

TEST_CASE("head gradients match central differences") {
    std::mt19937_64 rng(31);
    const int B = 2, W = 4, k = 3, e = 4;
    for (int probe = 0; probe < 10; ++probe) {
        const auto seed = static_cast<std::uint64_t>(100 + probe);
        CHECK(check_graph([](Tape& t, const auto& v) { return semantic_attention(t, v[0], v[1], v[2]); },
                          {random_matrix(B, kStateDim, rng), random_matrix(kStateDim, kStateDim, rng, 0.2), random_matrix(1, kStateDim, rng)},
                          seed) < 1e-4);
        CHECK(check_graph(
                  [&](Tape& t, const auto& v) {
                      return temporal_attention(t, v[0], std::vector<Var>(v.begin() + 1, v.end()));
                  },
                  {random_matrix(B, k, rng), random_matrix(B, k, rng), random_matrix(B, k, rng), random_matrix(B, k, rng),
                   random_matrix(B, k, rng)},
                  seed) < 1e-4);
        CHECK(check_graph([](Tape& t, const auto& v) { return cross_slice_attention(t, {v[0], v[1], v[2]}, v[3], v[4]); },
                          {random_matrix(B, e, rng), random_matrix(B, e, rng), random_matrix(B, e, rng), random_matrix(e, e, rng),
                           random_matrix(e, e, rng)},
                          seed) < 1e-4);
        CHECK(check_graph([](Tape& t, const auto& v) { return confidence_attention(t, t.softmax_rows(v[0])); },
                          {random_matrix(B, kStateDim, rng)}, seed) < 1e-4);
        Matrix avail(B, kCandidates, 1.0);
        avail(1, 4) = 0.0;
        CHECK(check_graph([&](Tape& t, const auto& v) { return counterfactual_attention(t, v[0], avail, 0.5); },
                          {random_matrix(B, kCandidates, rng)}, seed) < 1e-4);
        CHECK(check_graph(
                  [](Tape& t, const auto& v) {
                      FuseInputs in{t.softmax_rows(v[0]), t.softmax_rows(v[1]), t.scale(t.softmax_rows(v[2]), 3.0),
                                    t.slice_cols(t.softmax_rows(v[3]), 0, 1), t.softmax_rows(v[4]), t.softmax_rows(v[5])};
                      FuseProjections p{v[6], v[7], v[8], v[9], v[10]};
                      return meta_fuse(t, in, p);
                  },
                  {random_matrix(B, kStateDim, rng), random_matrix(B, W, rng), random_matrix(B, 9, rng), random_matrix(B, 2, rng),
                   random_matrix(B, kCandidates, rng), random_matrix(B, kHeads, rng), random_matrix(W, kStateDim, rng),
                   random_matrix(9, kStateDim, rng), random_matrix(2, kStateDim, rng), random_matrix(kCandidates, kStateDim, rng),
                   random_matrix(kHeads, kStateDim, rng)},
                  seed) < 1e-4);
    }
}

TEST_CASE("action masks") {
    const double floor = 0.05;
    ShareMatrix full = before_shares();
    full[2] = {0.30, 0.20, 0.30};  // every resource at the budget ceiling
    for (int s = 0; s < kNumSlices; ++s) {
        const auto m = mask_actions(full, s, floor, false);
        for (int r = 0; r < kNumResources; ++r) {
            CHECK_FALSE(m[r][3]);
            CHECK_FALSE(m[r][4]);
            CHECK(m[r][kNoopDelta]);
        }
    }
    ShareMatrix low = before_shares();
    low[1] = {floor, floor, floor};
    const auto lm = mask_actions(low, 1, floor, false);
    for (int r = 0; r < kNumResources; ++r) {
        CHECK_FALSE(lm[r][0]);
        CHECK_FALSE(lm[r][1]);
    }

    // Brute force: a delta is allowed iff applying it alone projects without clamping.
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 0.6);
    for (int trial = 0; trial < 300; ++trial) {
        ShareMatrix sh{};
        for (int r = 0; r < kNumResources; ++r) {
            double tot = 0;
            for (int n = 0; n < kNumSlices; ++n) tot += (sh[n][r] = floor + std::round(u(rng) * 20) / 20);
            if (tot > 1.0)
                for (int n = 0; n < kNumSlices; ++n) sh[n][r] = std::max(floor, sh[n][r] / tot);
        }
        bool feasible = true;
        for (int r = 0; r < kNumResources; ++r) {
            double tot = 0;
            for (int n = 0; n < kNumSlices; ++n) tot += sh[n][r];
            feasible = feasible && tot <= 1.0 + 1e-12;
        }
        if (!feasible) continue;
        const bool lowc = trial % 3 == 0;
        for (int s = 0; s < kNumSlices; ++s) {
            const auto m = mask_actions(sh, s, floor, lowc);
            for (int r = 0; r < kNumResources; ++r)
                for (int k = 0; k < kDeltas; ++k) {
                    JointAction a;
                    for (auto& row : a) row.fill(kNoopDelta);
                    a[s][r] = k;
                    const auto p = project(sh, a, floor);
                    const double want = sh[s][r] + kDeltaValues[k];
                    bool ok = p.clamp_events == 0 && std::abs(p.shares[s][r] - want) < 1e-12;
                    if (lowc && std::abs(kDeltaValues[k]) > 0.075) ok = false;
                    if (k == kNoopDelta) ok = true;
                    CHECK(m[r][k] == ok);
                }
        }
    }
}

TEST_CASE("latency guard") {
    StateVector x{};
    const int f = feature_index(1, kLatencyRatio);
    x[f] = -3.0;  // at or below half the target
    CHECK_FALSE(latency_guarded(x, 1, 0.5));
    x[f] = 3.0 * std::log2(0.6);
    CHECK(latency_guarded(x, 1, 0.5));
    CHECK_FALSE(latency_guarded(x, 1, 0.0));
    CHECK_FALSE(latency_guarded(x, 1, 0.7));
    const auto m = mask_actions(before_shares(), 1, 0.05, false, true);
    for (int r = 0; r < kNumResources; ++r) {
        const bool compute = r == static_cast<int>(Resource::Compute);
        CHECK(m[r][0] == compute);
        CHECK(m[r][1] == compute);
        CHECK(m[r][3]);
    }
}

TEST_CASE("projection keeps budgets and floors") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> d(0, kDeltas - 1);
    for (int trial = 0; trial < 500; ++trial) {
        JointAction a;
        for (auto& row : a)
            for (auto& k : row) k = d(rng);
        const auto p = project(before_shares(), a, 0.05);
        for (int r = 0; r < kNumResources; ++r) {
            double tot = 0;
            for (int n = 0; n < kNumSlices; ++n) {
                CHECK(p.shares[n][r] >= 0.05 - 1e-12);
                tot += p.shares[n][r];
            }
            CHECK(tot <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("policy forward invariants") {
    PolicyConfig pc;
    Policy pol(pc, 0.05, 0.99);
    std::mt19937_64 rng(6);
    const auto in = random_batch(6, pc.history, rng);

    Tape t;
    const Graph g = pol.build(t, in);
    for (int a = 0; a < kNumSlices; ++a) {
        const auto& ag = g.agents[a];
        for (int b = 0; b < 6; ++b) {
            CHECK(std::abs(row_sum(t.value(ag.semantic), b) - 1.0) < 1e-6);
            CHECK(std::abs(row_sum(t.value(ag.temporal), b) - 1.0) < 1e-6);
            CHECK(std::abs(row_sum(t.value(ag.cross), b) - 3.0) < 1e-6);
            CHECK(std::abs(row_sum(t.value(ag.counterfactual), b) - 1.0) < 1e-6);
            CHECK(std::abs(row_sum(t.value(ag.meta), b) - 1.0) < 1e-6);
            CHECK(std::abs(row_sum(t.value(ag.fused), b) - 1.0) < 1e-6);
            const double c = t.value(ag.confidence)(b, 0);
            CHECK((c >= 0.0 && c <= 1.0));
            for (int r = 0; r < kNumResources; ++r) {
                double mass = 0;
                for (int k = 0; k < kDeltas; ++k) {
                    const double p = std::exp(t.value(ag.logp)(b, r * kDeltas + k));
                    if (!g.masks[b][a][r][k]) CHECK(p == 0.0);
                    mass += p;
                }
                CHECK(std::abs(mass - 1.0) < 1e-12);
            }
        }
    }

    pol.reset_forward_calls();
    const auto d1 = pol.act(in, {}, true);
    const auto d2 = pol.act(in, {}, true);
    CHECK(pol.forward_calls() == 12);
    for (int b = 0; b < 6; ++b) {
        CHECK(d1[b].action == d2[b].action);
        CHECK(d1[b].value_net == d2[b].value_net);
        for (int a = 0; a < kNumSlices; ++a) CHECK(d1[b].bundles[a].fused == d2[b].bundles[a].fused);
    }

    std::vector<env::Rng> rngs(6, env::Rng(3));
    std::vector<env::Rng*> ptr;
    for (auto& r : rngs) ptr.push_back(&r);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = pol.act(in, ptr, false);
        for (int b = 0; b < 6; ++b)
            for (int a = 0; a < kNumSlices; ++a)
                for (int r = 0; r < kNumResources; ++r) CHECK(ds[b].masks[a][r][ds[b].action[a][r]]);
    }
}

TEST_CASE("all-zero parameters give a uniform distribution over unmasked deltas") {
    Policy pol(PolicyConfig{}, 0.05, 0.99);
    std::fill(pol.params().values().begin(), pol.params().values().end(), 0.0);
    std::mt19937_64 rng(7);
    const auto in = random_batch(4, PolicyConfig{}.history, rng);
    Tape t;
    const Graph g = pol.build(t, in);
    for (int a = 0; a < kNumSlices; ++a)
        for (int b = 0; b < 4; ++b)
            for (int r = 0; r < kNumResources; ++r) {
                int open = 0;
                for (int k = 0; k < kDeltas; ++k) open += g.masks[b][a][r][k];
                for (int k = 0; k < kDeltas; ++k)
                    if (g.masks[b][a][r][k])
                        CHECK(std::abs(t.value(g.agents[a].logp)(b, r * kDeltas + k) + std::log(double(open))) < 1e-12);
            }
}

TEST_CASE("fused attention responds continuously to the input") {
    Policy pol(PolicyConfig{}, 0.05, 0.99);
    std::mt19937_64 rng(9);
    auto in = random_batch(1, PolicyConfig{}.history, rng);
    const auto base = pol.act(in, {}, true)[0].bundles[0].fused;
    double prev = 0.0;
    for (double h : {1e-3, 1e-5, 1e-7}) {
        auto p = in;
        p.states[0][feature_index(0, kQueueOccupancy)] += h;
        const auto f = pol.act(p, {}, true)[0].bundles[0].fused;
        double diff = 0;
        for (int i = 0; i < kStateDim; ++i) diff = std::max(diff, std::abs(f[i] - base[i]));
        CHECK(diff <= 10.0 * h);
        if (prev > 0) CHECK(diff <= prev);
        prev = std::max(diff, 1e-300);
    }
}

TEST_CASE("checkpoint round trip is bit-exact") {
    PolicyConfig pc;
    pc.init_seed = 5;
    Policy pol(pc, 0.05, 0.99);
    const auto path = std::filesystem::temp_directory_path() / "slicesim_policy_roundtrip.json";
    pol.save(path);
    const Policy back = Policy::load(path);
    CHECK(back.params().values() == pol.params().values());
    CHECK(back.to_json() == pol.to_json());
    std::mt19937_64 rng(1);
    const auto in = random_batch(2, pc.history, rng);
    Policy a = pol, b = back;
    CHECK(a.act(in, {}, true)[1].value_net == b.act(in, {}, true)[1].value_net);
    std::filesystem::remove(path);
}
