#include "doctest.h"

#include <map>

#include "slicesim/controller.hpp"

using namespace slicesim;
using namespace slicesim::controller;

namespace {

Config small_config() {
    Config c = default_config();
    c.policy.hidden = 16;
    c.policy.critic_hidden = 16;
    c.policy.qhat_hidden = 8;
    c.policy.key_dim = 4;
    c.policy.slice_embed = 4;
    c.policy.history = 3;
    c.validate();
    return c;
}

void require_feasible(const ShareMatrix& s, double floor) {
    for (int r = 0; r < kNumResources; ++r) {
        double tot = 0;
        for (int n = 0; n < kNumSlices; ++n) {
            CHECK(s[n][r] >= floor - 1e-9);
            CHECK(s[n][r] <= 1.0 + 1e-9);
            tot += s[n][r];
        }
        CHECK(tot <= 1.0 + 1e-9);
    }
}

}  // namespace

TEST_CASE("schedule validation") {
    ControllerConfig c;
    CHECK_NOTHROW(validate_schedule(c));
    c.inter_slice_every = 0;
    CHECK_THROWS_AS(validate_schedule(c), ConfigError);
    c = ControllerConfig{};
    c.reactive_every = 2;
    c.inter_slice_every = 5;
    CHECK_THROWS_AS(validate_schedule(c), ConfigError);
}

TEST_CASE("propose_trade picks the most violated recipient and least violated donor") {
    const std::array<double, 3> flat{0.3, 0.3, 0.3};
    CHECK(propose_trade({0, 0, 0}, flat).catalog < 0);

    auto p = propose_trade({0.9, 0.1, 0.3}, flat);
    CHECK(p.recipient == 0);
    CHECK(p.donor == 1);
    CHECK(p.catalog >= 0);

    p = propose_trade({0.9, 0.1, 0.3}, flat, {false, true, false});
    CHECK(p.donor == 2);
    CHECK(propose_trade({0.9, 0.1, 0.3}, flat, {false, true, true}).catalog < 0);

    // Tie between eMBB and mMTC: the recipient's cross-slice attention decides.
    CHECK(propose_trade({0.9, 0.0, 0.0}, {0.1, 0.2, 0.7}).donor == 2);
    CHECK(propose_trade({0.9, 0.0, 0.0}, {0.1, 0.7, 0.2}).donor == 1);
}

TEST_CASE("inter-slice trade is applied only on a strict lookahead gain") {
    Config cfg = small_config();
    cfg.policy.latency_guard_ratio = 0.0;
    env::SliceEnv env(cfg.env, 3);
    for (int i = 0; i < 5; ++i) env.step_shares(env.shares());
    std::array<AttentionBundle, kNumSlices> bundles{};
    const ShareMatrix pending = env.shares();
    const auto ev = inter_slice_phase(env, pending, {0.9, 0.1, 0.0}, bundles, cfg);
    CHECK(ev.recipient == 0);
    CHECK(ev.applied == (ev.u_with > ev.u_without));
    if (!ev.applied) CHECK(ev.after == pending);
    else CHECK(ev.after != pending);
    require_feasible(ev.after, cfg.env.share_floor);

    // Donor already at the floor: rejected without touching the allocation.
    ShareMatrix at_floor = pending;
    for (int r = 0; r < kNumResources; ++r) at_floor[2][r] = cfg.env.share_floor;
    const auto rej = inter_slice_phase(env, at_floor, {0.9, 0.5, 0.0}, bundles, cfg);
    CHECK_FALSE(rej.applied);
    CHECK(rej.after == at_floor);
    CHECK(rej.detail.find("floor") != std::string::npos);
}

TEST_CASE("predictive phase") {
    ControllerConfig c;
    const double floor = 0.05;
    std::array<AttentionBundle, kNumSlices> bundles{};
    ShareMatrix pending{};
    for (auto& row : pending) row = {0.3, 0.3, 0.3};

    std::deque<StateVector> flat(3, StateVector{});
    auto ev = predictive_phase(flat, 3, bundles, pending, c, floor);
    CHECK_FALSE(ev.applied);
    CHECK(ev.after == pending);

    CHECK(predictive_phase(std::deque<StateVector>(2), 3, bundles, pending, c, floor).detail == "insufficient history");

    std::deque<StateVector> rising(3, StateVector{});
    rising.back()[feature_index(0, kPredictedDemand)] = 2.0;
    ev = predictive_phase(rising, 3, bundles, pending, c, floor);
    CHECK(ev.applied);
    CHECK(ev.recipient == 0);
    for (int r = 0; r < kNumResources; ++r) {
        CHECK(ev.after[0][r] > pending[0][r]);
        CHECK(ev.after[0][r] - pending[0][r] <= 0.05 + 1e-12);
    }
    require_feasible(ev.after, floor);

    // A full budget forces a donor; a guarded donor is skipped.
    ShareMatrix full{};
    full[0] = {0.5, 0.5, 0.5};
    full[1] = {0.3, 0.3, 0.3};
    full[2] = {0.2, 0.2, 0.2};
    StateVector s{};
    s[feature_index(0, kPredictedDemand)] = 2.0;
    s[feature_index(1, kLatencyRatio)] = 0.0;   // at target: guarded
    s[feature_index(2, kLatencyRatio)] = -3.0;  // far below target: free
    std::deque<StateVector> h(3, s);
    ev = predictive_phase(h, 3, bundles, full, c, floor, 0.5);
    CHECK(ev.donor == 2);
    CHECK(ev.applied);
    CHECK(ev.after[1] == full[1]);
    require_feasible(ev.after, floor);
}

TEST_CASE("run_loop phase order, feasibility and horizon") {
    Config cfg = small_config();
    policy::Policy pol(cfg.policy, cfg.env.share_floor, cfg.train.gamma);

    trainer::EpisodeContext empty(cfg, 2);
    CHECK(run_loop(empty, pol, cfg, {.horizon = 0}).ticks.empty());

    trainer::EpisodeContext ctx(cfg, 2);
    std::map<long, std::vector<Phase>> seen;
    LoopOptions o;
    o.horizon = 31;
    o.hold_until_tick = 3;
    o.probe = [&](long tick, Phase p) { seen[tick].push_back(p); };
    const auto traj = run_loop(ctx, pol, cfg, o);
    REQUIRE(traj.ticks.size() == 31);
    for (const auto& t : traj.ticks) {
        if (t.tick < 3) {
            CHECK(t.phase == "warmup");
            CHECK(seen.count(t.tick) == 0);
            continue;
        }
        const long rel = t.tick - 3;
        std::vector<Phase> want{Phase::Reactive};
        if (rel % 5 == 0) want.push_back(Phase::InterSlice);
        if (rel % 10 == 0) want.push_back(Phase::Predictive);
        CHECK(seen[t.tick] == want);
        require_feasible(t.shares, cfg.env.share_floor);
    }
    for (const auto& e : traj.events) {
        require_feasible(e.after, cfg.env.share_floor);
        if (!e.applied) CHECK(e.after == e.before);
    }
}

TEST_CASE("reactive-only loop reproduces the evaluation rollout") {
    Config cfg = small_config();
    cfg.controller.enable_inter_slice = false;
    cfg.controller.enable_predictive = false;
    policy::Policy pol(cfg.policy, cfg.env.share_floor, cfg.train.gamma);
    const auto ref = trainer::evaluation_rollout(pol, cfg, 11, 25);
    trainer::EpisodeContext ctx(cfg, 11);
    const auto traj = run_loop(ctx, pol, cfg, {.horizon = 25});
    REQUIRE(ref.size() == traj.ticks.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        for (int n = 0; n < kNumSlices; ++n)
            for (int r = 0; r < kNumResources; ++r)
                CHECK(ref[i].alloc.slice_total(n, r) == traj.ticks[i].result.alloc.slice_total(n, r));
        CHECK(ref[i].util.u_total == traj.ticks[i].result.util.u_total);
        CHECK(ref[i].explain.e == traj.ticks[i].result.explain.e);
    }
}
