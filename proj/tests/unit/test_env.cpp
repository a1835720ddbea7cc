#include "doctest.h"

#include <cmath>

#include "slicesim/env.hpp"

using namespace slicesim;
using namespace slicesim::env;

namespace {

EnvConfig quiet_env() {
    EnvConfig e = default_config().env;
    e.random_spikes.episode_probability = 0.0;
    e.spikes.clear();
    return e;
}

ShareMatrix table1_after() { return {{{0.42, 0.45, 0.40}, {0.30, 0.35, 0.30}, {0.18, 0.15, 0.20}}}; }

}  // namespace

TEST_CASE("zero arrivals keep queues empty") {
    EnvConfig e = quiet_env();
    for (auto& s : e.slices) s.traffic.packet_rate_per_ue_s = 0.0;
    SliceEnv env(e, 3);
    for (int t = 0; t < 50; ++t) {
        auto r = env.step_shares(env.shares());
        for (int s = 0; s < kNumSlices; ++s) CHECK(env.slice_states()[static_cast<std::size_t>(s)].queue_occupancy == 0.0);
        CHECK(r.info.tick == t);
    }
}

TEST_CASE("buffer surge raises URLLC queue on the trigger tick") {
    EnvConfig e = quiet_env();
    e.spikes.push_back({10, SliceId::URLLC, SpikeMechanism::BufferSurge, 5.0, 50});
    SliceEnv env(e, 17);
    for (int t = 0; t < 10; ++t) env.step_shares(env.shares());
    const double before = env.slice_states()[0].queue_occupancy;
    auto r = env.step_shares(env.shares());
    CHECK(r.info.spike_active[0]);
    CHECK(env.slice_states()[0].queue_occupancy > before);
}

TEST_CASE("spike causality: trajectories match until the trigger tick") {
    EnvConfig base = quiet_env();
    EnvConfig spiked = base;
    spiked.spikes.push_back({40, SliceId::URLLC, SpikeMechanism::InterferenceSurge, 50.0, 20});
    SliceEnv a(base, 5), b(spiked, 5);
    for (int t = 0; t < 40; ++t) {
        auto ra = a.step_shares(a.shares());
        auto rb = b.step_shares(b.shares());
        CHECK(ra.state == rb.state);
        CHECK(ra.qos[0].latency_ms == rb.qos[0].latency_ms);
    }
    auto ra = a.step_shares(a.shares());
    auto rb = b.step_shares(b.shares());
    CHECK(rb.qos[0].latency_ms > ra.qos[0].latency_ms);
}

TEST_CASE("determinism for a fixed seed and action sequence") {
    EnvConfig e = default_config().env;
    SliceEnv a(e, 99), b(e, 99);
    const ShareMatrix alt = table1_after();
    const ShareMatrix init = a.shares();
    for (int t = 0; t < 300; ++t) {
        const ShareMatrix& s = (t / 7) % 2 ? alt : init;
        auto ra = a.step_shares(s);
        auto rb = b.step_shares(s);
        REQUIRE(ra.state == rb.state);
        for (int k = 0; k < kNumSlices; ++k) {
            CHECK(ra.qos[static_cast<std::size_t>(k)].latency_ms == rb.qos[static_cast<std::size_t>(k)].latency_ms);
            CHECK(ra.info.ues[static_cast<std::size_t>(k)] == rb.info.ues[static_cast<std::size_t>(k)]);
        }
    }
    CHECK(a.tick() == 300);
}

TEST_CASE("infeasible allocations are rejected naming the constraint") {
    SliceEnv env(quiet_env(), 1);
    ShareMatrix over = env.shares();
    over[0][0] = 0.9;
    try {
        env.step_shares(over);
        FAIL("expected ConstraintViolation");
    } catch (const ConstraintViolation& ex) {
        CHECK(std::string(ex.what()).find("C1") != std::string::npos);
        CHECK_FALSE(ex.report.budget_ok[0]);
        CHECK(ex.report.budget_ok[1]);
    }
    CHECK(env.tick() == 0);
}

TEST_CASE("check_constraints examples") {
    EnvConfig e = quiet_env();
    SliceEnv env(e, 2);
    std::array<QosTargets, kNumSlices> targets{};
    for (int s = 0; s < kNumSlices; ++s) targets[static_cast<std::size_t>(s)] = e.slice(s).targets;

    auto after = env.make_allocation(table1_after());
    auto rep = check_constraints(after, env.last_qos(), targets, e.budgets);
    CHECK(rep.budget_ok[0]);
    CHECK(std::abs(rep.slack_fraction[0] - 0.10) < 1e-9);

    Allocation zero = env.make_allocation({});
    std::array<QosAchieved, kNumSlices> none{};
    auto rz = check_constraints(zero, none, targets, e.budgets);
    CHECK(rz.budgets_feasible());
    for (bool c5 : rz.c5_ok) CHECK_FALSE(c5);

    std::array<QosAchieved, kNumSlices> q = env.last_qos();
    q[0].latency_ms = 0.98;
    CHECK(check_constraints(after, q, targets, e.budgets).c4_ok[0]);
}

TEST_CASE("default calibration reproduces the reference operating points") {
    EnvConfig e = quiet_env();
    e.gain_jitter_db = 0.0;
    SliceEnv env(e, 4);
    ShareMatrix before{{{0.25, 0.30, 0.35}, {0.45, 0.50, 0.35}, {0.20, 0.15, 0.20}}};
    auto r = env.step_shares(before, StepMode::Expected);
    CHECK(r.qos[0].latency_ms < 1.0);
    CHECK(r.qos[1].latency_ms < 30.0);

    EnvConfig s = e;
    s.spikes.push_back({0, SliceId::URLLC, SpikeMechanism::InterferenceSurge, 50.0, 10});
    SliceEnv spiked(s, 4);
    auto rs = spiked.step_shares(before, StepMode::Expected);
    CHECK(rs.qos[0].latency_ms > 1.0);
    CHECK(rs.qos[0].latency_ms < 1.3);
    auto ra = spiked.step_shares(table1_after(), StepMode::Expected);
    CHECK(ra.qos[0].latency_ms <= 1.0);
    CHECK(ra.qos[1].latency_ms <= 30.0);
}

TEST_CASE("allocation is feasible and per-UE sorted") {
    SliceEnv env(default_config().env, 8);
    for (int t = 0; t < 30; ++t) {
        auto al = env.make_allocation(env.shares());
        for (int r = 0; r < kNumResources; ++r) CHECK(al.total(r) <= env.config().budgets[r] * (1 + 1e-12));
        for (int s = 0; s < kNumSlices; ++s) {
            const auto& sa = al.slices[static_cast<std::size_t>(s)];
            CHECK(sa.total(0) == doctest::Approx(env.shares()[static_cast<std::size_t>(s)][0] * 40.0));
        }
        env.step(al);
    }
}

TEST_CASE("latency window fraction") {
    LatencyWindow w(3);
    CHECK(w.fraction() == 1.0);
    w.push(10, true);
    w.push(10, false);
    CHECK(w.fraction() == doctest::Approx(0.5));
    w.push(20, true);
    w.push(20, true);
    CHECK(w.size() == 3);
    CHECK(w.fraction() == doctest::Approx(40.0 / 50.0));
}
