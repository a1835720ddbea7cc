#include "slicesim/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace slicesim::controller {

std::string_view phase_name(Phase p) {
    switch (p) {
        case Phase::Reactive: return "reactive";
        case Phase::InterSlice: return "inter_slice";
        case Phase::Predictive: return "predictive";
    }
    return "?";
}

void validate_schedule(const ControllerConfig& c) {
    if (c.reactive_every < 1 || c.inter_slice_every < 1 || c.predictive_every < 1)
        throw ConfigError("controller: phase periods must be positive");
    if (c.inter_slice_every % c.reactive_every != 0 || c.predictive_every % c.reactive_every != 0)
        throw ConfigError("controller: reactive period must divide the other periods");
}

ReactiveOutcome reactive_phase(policy::Policy& pol, const trainer::EpisodeContext& ctx, const env::InfoRecord& context,
                               const Config& cfg, bool greedy, env::Rng* rng) {
    const auto t0 = std::chrono::steady_clock::now();
    ReactiveOutcome out;
    const auto in = ctx.input();
    std::vector<env::Rng*> rngs;
    if (rng) rngs.push_back(rng);
    out.decision = std::move(pol.act(in, rngs, greedy)[0]);
    out.projection = policy::project(in.shares[0], out.decision.action, cfg.env.share_floor);
    for (int a = 0; a < kNumSlices; ++a)
        out.explanations[static_cast<std::size_t>(a)] = explain::render_explanation(
            out.decision.bundles[static_cast<std::size_t>(a)], context, cfg.explain, cfg.policy.confidence_threshold);
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::array<double, kNumSlices> violation_scores(const std::array<QosAchieved, kNumSlices>& qos, const EnvConfig& env) {
    std::array<double, kNumSlices> v{};
    for (int s = 0; s < kNumSlices; ++s) {
        const auto& q = qos[static_cast<std::size_t>(s)];
        const auto& t = env.slice(s).targets;
        double lat = std::isfinite(q.latency_ms) ? q.latency_ms : env.latency_clamp_ms();
        double score = std::max(0.0, lat - t.latency_ms) / t.latency_ms;
        if (q.reliability < t.reliability)
            score += std::log10((1.0 - q.reliability + 1e-15) / (1.0 - t.reliability + 1e-15));
        v[static_cast<std::size_t>(s)] = score;
    }
    return v;
}

namespace {

int catalog_index(int donor, int recipient) {
    for (int k = 1; k < kCatalogSize; ++k) {
        const auto tr = catalog_entry(k);
        if (tr.donor == donor && tr.recipient == recipient) return k;
    }
    return -1;
}

double lookahead_utility(env::SliceEnv clone, const ShareMatrix& shares, const Config& cfg) {
    const auto alloc = clone.make_allocation(shares);
    const auto r = clone.step(alloc, env::StepMode::Expected);
    return utility::evaluate(alloc, r.qos, cfg.env, cfg.utility).u_total;
}

std::string fmt(const char* f, double a, double b) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

}  // namespace

TradeProposal propose_trade(const std::array<double, kNumSlices>& violation, const std::array<double, kNumSlices>& cross_row,
                            const std::array<bool, kNumSlices>& guarded) {
    TradeProposal p;
    int rec = 0;
    for (int s = 1; s < kNumSlices; ++s)
        if (violation[static_cast<std::size_t>(s)] > violation[static_cast<std::size_t>(rec)]) rec = s;
    if (!(violation[static_cast<std::size_t>(rec)] > 0.0)) return p;
    int donor = -1;
    for (int s = 0; s < kNumSlices; ++s) {
        if (s == rec || guarded[static_cast<std::size_t>(s)]) continue;
        if (!(violation[static_cast<std::size_t>(s)] < violation[static_cast<std::size_t>(rec)])) continue;
        if (donor < 0) {
            donor = s;
            continue;
        }
        const double vs = violation[static_cast<std::size_t>(s)], vd = violation[static_cast<std::size_t>(donor)];
        if (vs < vd || (vs == vd && cross_row[static_cast<std::size_t>(s)] > cross_row[static_cast<std::size_t>(donor)])) donor = s;
    }
    if (donor < 0) return p;
    p.donor = donor;
    p.recipient = rec;
    p.catalog = catalog_index(donor, rec);
    return p;
}

PhaseEvent inter_slice_phase(const env::SliceEnv& env, const ShareMatrix& pending, const std::array<double, kNumSlices>& violation,
                             const std::array<AttentionBundle, kNumSlices>& bundles, const Config& cfg) {
    PhaseEvent ev;
    ev.tick = env.tick();
    ev.phase = Phase::InterSlice;
    ev.before = ev.after = pending;
    int rec = 0;
    for (int s = 1; s < kNumSlices; ++s)
        if (violation[static_cast<std::size_t>(s)] > violation[static_cast<std::size_t>(rec)]) rec = s;
    const auto& cross = bundles[static_cast<std::size_t>(rec)].cross[static_cast<std::size_t>(rec)];
    std::array<bool, kNumSlices> guarded{};
    for (int n = 0; n < kNumSlices; ++n)
        guarded[static_cast<std::size_t>(n)] = policy::latency_guarded(env.state().x, n, cfg.policy.latency_guard_ratio);
    const auto prop = propose_trade(violation, cross, guarded);
    if (prop.catalog < 0) {
        ev.detail = "no trade: no violated slice with a less violated, unguarded donor";
        return ev;
    }
    ev.donor = prop.donor;
    ev.recipient = prop.recipient;
    if (!catalog_feasible(pending, prop.catalog, cfg.env.share_floor)) {
        ev.detail = "rejected " + catalog_label(prop.catalog) + ": donor at floor";
        return ev;
    }
    const ShareMatrix traded = apply_catalog(pending, prop.catalog);
    try {
        ev.u_without = lookahead_utility(env, pending, cfg);
        ev.u_with = lookahead_utility(env, traded, cfg);
    } catch (const std::exception& e) {
        ev.detail = std::string("no trade: lookahead failed: ") + e.what();
        return ev;
    }
    if (ev.u_with > ev.u_without) {
        ev.applied = true;
        ev.after = traded;
        ev.detail = "accepted " + catalog_label(prop.catalog) + fmt(": U_total %.6f -> %.6f", ev.u_without, ev.u_with);
    } else {
        ev.detail = "rejected " + catalog_label(prop.catalog) + fmt(": U_total %.6f vs %.6f", ev.u_without, ev.u_with);
    }
    return ev;
}

PhaseEvent predictive_phase(const std::deque<StateVector>& history, int window,
                            const std::array<AttentionBundle, kNumSlices>& bundles, const ShareMatrix& pending,
                            const ControllerConfig& c, double floor, double guard_ratio) {
    PhaseEvent ev;
    ev.phase = Phase::Predictive;
    ev.before = ev.after = pending;
    if (static_cast<int>(history.size()) < window) {
        ev.detail = "insufficient history";
        return ev;
    }
    const StateVector& s = history.back();
    std::array<double, kNumSlices> demand{};
    for (int n = 0; n < kNumSlices; ++n) demand[static_cast<std::size_t>(n)] = s[static_cast<std::size_t>(feature_index(n, kPredictedDemand))];

    int target = -1;
    for (int n = 0; n < kNumSlices; ++n)
        if (demand[static_cast<std::size_t>(n)] > c.predictive_threshold &&
            (target < 0 || demand[static_cast<std::size_t>(n)] > demand[static_cast<std::size_t>(target)]))
            target = n;
    if (target < 0) {
        ev.detail = "no forecast above threshold";
        return ev;
    }
    int donor = -1;
    for (int n = 0; n < kNumSlices; ++n)
        if (n != target && !policy::latency_guarded(s, n, guard_ratio) &&
            (donor < 0 || demand[static_cast<std::size_t>(n)] < demand[static_cast<std::size_t>(donor)]))
            donor = n;
    ev.recipient = target;
    ev.donor = donor;

    const double delta = std::clamp(c.predictive_delta, 0.0, 0.05);
    ShareMatrix next = pending;
    double moved = 0.0;
    for (int r = 0; r < kNumResources; ++r) {
        double tot = 0.0;
        for (int n = 0; n < kNumSlices; ++n) tot += pending[static_cast<std::size_t>(n)][static_cast<std::size_t>(r)];
        auto& mine = next[static_cast<std::size_t>(target)][static_cast<std::size_t>(r)];
        double none = 0.0;
        auto& theirs = donor < 0 ? none : next[static_cast<std::size_t>(donor)][static_cast<std::size_t>(r)];
        double inc = std::min(delta, 1.0 - mine);
        const double slack = std::max(0.0, 1.0 - tot);
        const double from_donor = donor < 0 ? 0.0 : std::clamp(inc - slack, 0.0, std::max(0.0, theirs - floor));
        inc = std::min(inc, slack + from_donor);
        if (inc <= 0.0) continue;
        mine += inc;
        theirs -= from_donor;
        moved += inc;
    }
    const auto& b = bundles[static_cast<std::size_t>(target)];
    const int f = feature_index(target, kPredictedDemand);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s forecast %.2f > %.2f (semantic weight %.3f, temporal peak %.3f): +%.2f from %s",
                  std::string(slice_name(target)).c_str(), demand[static_cast<std::size_t>(target)], c.predictive_threshold,
                  b.semantic[static_cast<std::size_t>(f)],
                  b.temporal.empty() ? 0.0 : *std::max_element(b.temporal.begin(), b.temporal.end()), delta,
                  donor < 0 ? "slack" : std::string(slice_name(donor)).c_str());
    ev.detail = buf;
    ev.applied = moved > 0.0;
    if (ev.applied) ev.after = next;
    else ev.detail += " (no room)";
    return ev;
}

namespace {

void check_feasible(const ShareMatrix& s, double floor, Phase p) {
    for (int r = 0; r < kNumResources; ++r) {
        double tot = 0.0;
        for (int n = 0; n < kNumSlices; ++n) {
            const double v = s[static_cast<std::size_t>(n)][static_cast<std::size_t>(r)];
            if (v < floor - 1e-9 || v > 1.0 + 1e-9) throw std::logic_error(std::string(phase_name(p)) + ": share out of bounds");
            tot += v;
        }
        if (tot > 1.0 + 1e-9) throw std::logic_error(std::string(phase_name(p)) + ": budget exceeded");
    }
}

}  // namespace

Trajectory run_loop(trainer::EpisodeContext& ctx, policy::Policy& pol, const Config& cfg, const LoopOptions& opts) {
    validate_schedule(cfg.controller);
    Trajectory traj;
    env::Rng rng(opts.action_seed);
    const auto& sc = cfg.controller;
    env::InfoRecord last_info;
    last_info.tick = ctx.env().tick();
    std::array<QosAchieved, kNumSlices> last_qos = ctx.env().last_qos();

    for (long k = 0; k < opts.horizon && !ctx.env().episode_done(); ++k) {
        TickRecord rec;
        const long tick = ctx.env().tick();
        rec.tick = tick;
        rec.context = last_info;
        rec.context.tick = tick;
        ShareMatrix pending = ctx.env().shares();
        int clamp_events = 0;
        const bool hold = tick < opts.hold_until_tick;
        const long rel = tick - opts.hold_until_tick;

        if (hold) {
            rec.phase = "warmup";
        } else {
            std::string phases;
            auto mark = [&](Phase p) {
                if (!phases.empty()) phases += '+';
                phases += phase_name(p);
                if (opts.probe) opts.probe(tick, p);
            };
            if (rel % sc.reactive_every == 0) {
                mark(Phase::Reactive);
                auto ro = reactive_phase(pol, ctx, rec.context, cfg, opts.greedy, &rng);
                rec.decision_state = ctx.env().state().x;
                rec.bundles = ro.decision.bundles;
                rec.has_bundles = true;
                rec.decision_wall_ms = ro.wall_ms;
                PhaseEvent ev;
                ev.tick = tick;
                ev.phase = Phase::Reactive;
                ev.before = pending;
                ev.after = ro.projection.shares;
                ev.applied = ev.after != ev.before;
                ev.detail = ro.explanations[static_cast<std::size_t>(index(SliceId::URLLC))].summary;
                pending = ro.projection.shares;
                clamp_events = ro.projection.clamp_events;
                check_feasible(pending, cfg.env.share_floor, Phase::Reactive);
                traj.events.push_back(std::move(ev));
                for (auto& e : ro.explanations) traj.explanations.push_back(std::move(e));
            }
            if (sc.enable_inter_slice && rel % sc.inter_slice_every == 0) {
                mark(Phase::InterSlice);
                auto ev = inter_slice_phase(ctx.env(), pending, violation_scores(last_qos, cfg.env), rec.bundles, cfg);
                pending = ev.after;
                check_feasible(pending, cfg.env.share_floor, Phase::InterSlice);
                traj.events.push_back(std::move(ev));
            }
            if (sc.enable_predictive && rel % sc.predictive_every == 0) {
                mark(Phase::Predictive);
                auto ev = predictive_phase(ctx.history(), cfg.policy.history, rec.bundles, pending, sc, cfg.env.share_floor,
                                           cfg.policy.latency_guard_ratio);
                ev.tick = tick;
                pending = ev.after;
                check_feasible(pending, cfg.env.share_floor, Phase::Predictive);
                traj.events.push_back(std::move(ev));
            }
            rec.phase = phases.empty() ? "idle" : phases;
        }

        rec.result = ctx.apply(pending, clamp_events, rec.has_bundles ? &rec.bundles : nullptr, opts.mode);
        rec.shares = pending;
        for (int s = 0; s < kNumSlices; ++s)
            rec.queue[static_cast<std::size_t>(s)] = ctx.env().raw_observation().slices[static_cast<std::size_t>(s)].queue_occupancy;
        last_info = rec.result.step.info;
        last_qos = rec.result.step.qos;
        traj.ticks.push_back(std::move(rec));
    }
    return traj;
}

}  // namespace slicesim::controller
