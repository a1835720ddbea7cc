#include "slicesim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "slicesim/parallel.hpp"
#include "slicesim/trace.hpp"

namespace slicesim::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kU = 0;  // URLLC
constexpr int kE = 1;  // eMBB
constexpr int kM = 2;  // mMTC

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * double(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

json qos_json(const QosAchieved& q) {
    return {{"latency_ms", std::isfinite(q.latency_ms) ? json(q.latency_ms) : json("inf")},
            {"reliability", q.reliability},
            {"throughput_mbps", q.throughput_mbps},
            {"power_used_mw", q.power_used_mw}};
}

std::string f3(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3f", v);
    return b;
}

}  // namespace

std::optional<long> CaseStudyReport::resolution_ticks() const {
    if (!detection_tick || !resolution_tick) return std::nullopt;
    return *resolution_tick - *detection_tick;
}

bool CaseStudyReport::urllc_up() const { return after[kU][0] > before[kU][0] && after[kU][1] > before[kU][1]; }
bool CaseStudyReport::embb_down() const { return after[kE][0] < before[kE][0] && after[kE][1] < before[kE][1]; }

json CaseStudyReport::to_json() const {
    json alloc = json::array();
    for (int s = 0; s < kNumSlices; ++s) {
        json row{{"slice", std::string(slice_name(s))}};
        for (int r = 0; r < kNumResources; ++r) {
            row[std::string(resource_name(r)) + "_before"] = before[static_cast<std::size_t>(s)][static_cast<std::size_t>(r)];
            row[std::string(resource_name(r)) + "_after"] = after[static_cast<std::size_t>(s)][static_cast<std::size_t>(r)];
        }
        alloc.push_back(row);
    }
    json qos = json::array();
    for (int s = 0; s < kNumSlices; ++s)
        qos.push_back({{"slice", std::string(slice_name(s))},
                       {"before", qos_json(qos_before[static_cast<std::size_t>(s)])},
                       {"after", qos_json(qos_after[static_cast<std::size_t>(s)])}});
    json att = json::array();
    for (const auto& f : attention_excerpt) att.push_back({{"feature", f.name}, {"weight", f.weight}});
    json cf = json::array();
    for (const auto& c : counterfactual) cf.push_back({{"action", c.label}, {"weight", c.weight}, {"score", c.score}});
    json ch = json::array();
    for (const auto& c : chain) ch.push_back({{"stage", c.stage}, {"tick", c.tick}, {"text", c.text}});
    json sl = json::array();
    for (const auto& r : sla) sl.push_back({{"metric", r.metric}, {"target", r.target}, {"achieved", r.achieved}, {"met", r.met}});
    auto opt = [](const std::optional<long>& v) { return v ? json(*v) : json(nullptr); };
    return {{"verdict", verdict()},
            {"provenance", {{"seed", seed}, {"config_hash", config_hash}}},
            {"spike_enabled", spike_enabled},
            {"spike_tick", spike_tick},
            {"detection_tick", opt(detection_tick)},
            {"resolution_tick", opt(resolution_tick)},
            {"resolution_ticks", opt(resolution_ticks())},
            {"resolved", resolved},
            {"within_bound", within_bound},
            {"decision_wall_ms", {{"mean", decision_wall_ms_mean}, {"p99", decision_wall_ms_p99}}},
            {"wall_ms_to_resolution", wall_ms_to_resolution},
            {"allocation", alloc},
            {"qos", qos},
            {"urllc_shares_up", urllc_up()},
            {"embb_shares_down", embb_down()},
            {"post_resolution_reliability", post_resolution_reliability},
            {"max_embb_latency_ms", max_embb_latency_ms},
            {"mmtc_maintained", mmtc_maintained},
            {"attention_excerpt", att},
            {"counterfactual", cf},
            {"explanation_chain", ch},
            {"sla", sl},
            {"context", {{"manual_troubleshooting_min", manual_troubleshooting_min},
                         {"reported_resolution_min", reported_resolution_min},
                         {"note", "reported context only, not measured against operators"}}}};
}

std::string CaseStudyReport::to_text() const {
    std::ostringstream os;
    os << "Spike case study: " << verdict() << "\n";
    os << "seed " << seed << ", config " << config_hash << "\n";
    os << "spike at tick " << spike_tick << (spike_enabled ? "" : " (disabled)") << "\n";
    os << "detection tick: " << (detection_tick ? std::to_string(*detection_tick) : "none") << "\n";
    os << "resolution tick: " << (resolution_tick ? std::to_string(*resolution_tick) : "none");
    if (auto r = resolution_ticks()) os << " (" << *r << " ticks after detection)";
    os << "\n\nAllocation (power / PRB / compute)\n";
    for (int s = 0; s < kNumSlices; ++s) {
        const auto& b = before[static_cast<std::size_t>(s)];
        const auto& a = after[static_cast<std::size_t>(s)];
        os << "  " << slice_name(s) << ": " << f3(b[0]) << " " << f3(b[1]) << " " << f3(b[2]) << "  ->  " << f3(a[0]) << " "
           << f3(a[1]) << " " << f3(a[2]) << "\n";
    }
    os << "\nQoS before -> after (latency ms, reliability, throughput Mbps)\n";
    for (int s = 0; s < kNumSlices; ++s) {
        const auto& b = qos_before[static_cast<std::size_t>(s)];
        const auto& a = qos_after[static_cast<std::size_t>(s)];
        os << "  " << slice_name(s) << ": " << f3(b.latency_ms) << " " << b.reliability << " " << f3(b.throughput_mbps)
           << "  ->  " << f3(a.latency_ms) << " " << a.reliability << " " << f3(a.throughput_mbps) << "\n";
    }
    os << "\nExplanation chain\n";
    for (const auto& c : chain) os << "  [" << c.stage << " @" << c.tick << "] " << c.text << "\n";
    os << "\nSLA\n";
    for (const auto& r : sla) os << "  " << r.metric << " (" << r.target << "): " << r.achieved << (r.met ? " met" : " MISSED") << "\n";
    os << "\nDecision time mean " << f3(decision_wall_ms_mean) << " ms, p99 " << f3(decision_wall_ms_p99) << " ms\n";
    os << "Reported context: manual troubleshooting " << manual_troubleshooting_min << " min vs " << reported_resolution_min
       << " min (not measured here)\n";
    return os.str();
}

Config case_study_config(const Config& cfg, bool spike_enabled) {
    Config c = cfg;
    const auto& sc = c.scenario;
    c.env.random_spikes.episode_probability = 0.0;
    c.env.spikes.clear();
    c.env.slices[kU].initial_shares = sc.urllc_before;
    c.env.slices[kE].initial_shares = sc.embb_before;
    c.env.slices[kM].initial_shares = sc.mmtc_before;
    if (spike_enabled) {
        SpikeEvent buf;
        buf.trigger_tick = sc.warmup_ticks;
        buf.target_slice = SliceId::URLLC;
        buf.mechanism = SpikeMechanism::BufferSurge;
        buf.magnitude = sc.buffer_magnitude;
        buf.duration_ticks = sc.spike_duration_ticks;
        SpikeEvent intf = buf;
        intf.mechanism = SpikeMechanism::InterferenceSurge;
        intf.magnitude = sc.interference_magnitude;
        c.env.spikes = {buf, intf};
    }
    c.env.episode_ticks = std::max(c.env.episode_ticks, sc.horizon_ticks);
    return c;
}

CaseStudyRun run_spike_case_study(policy::Policy& pol, const Config& cfg, std::uint64_t seed, const CaseStudyOptions& opts) {
    const Config c = case_study_config(cfg, opts.spike_enabled);
    const auto& sc = c.scenario;
    CaseStudyRun run;
    auto& rep = run.report;
    rep.seed = seed;
    rep.config_hash = hex64(config_hash(c));
    rep.spike_enabled = opts.spike_enabled;
    rep.spike_tick = sc.warmup_ticks;
    rep.manual_troubleshooting_min = sc.manual_troubleshooting_min;
    rep.reported_resolution_min = sc.reported_resolution_min;

    trainer::EpisodeContext ctx(c, seed);
    controller::LoopOptions lo;
    lo.horizon = sc.horizon_ticks;
    lo.greedy = true;
    lo.action_seed = env::derive_seed(seed, 77);
    lo.hold_until_tick = sc.warmup_ticks;
    run.trajectory = controller::run_loop(ctx, pol, c, lo);
    const auto& ticks = run.trajectory.ticks;

    const double target = c.env.slice(kU).targets.latency_ms;
    std::vector<double> wall;
    for (const auto& t : ticks)
        if (t.has_bundles) wall.push_back(t.decision_wall_ms);
    if (!wall.empty()) {
        double s = 0.0;
        for (double w : wall) s += w;
        rep.decision_wall_ms_mean = s / double(wall.size());
        rep.decision_wall_ms_p99 = percentile(wall, 0.99);
    }

    std::size_t det = ticks.size();
    for (std::size_t i = 0; i < ticks.size(); ++i)
        if (ticks[i].tick >= sc.warmup_ticks && ticks[i].result.step.info.anomaly[kU]) {
            det = i;
            break;
        }
    const std::size_t before_idx = static_cast<std::size_t>(std::max<long>(0, std::min<long>(sc.warmup_ticks, static_cast<long>(ticks.size())) - 1));
    if (!ticks.empty()) {
        rep.before = ticks[before_idx].shares;
        rep.qos_before = ticks[before_idx].result.step.qos;
        rep.after = ticks.back().shares;
        rep.qos_after = ticks.back().result.step.qos;
    }

    std::size_t res = ticks.size();
    if (det < ticks.size()) {
        rep.detection_tick = ticks[det].tick;
        for (std::size_t i = det + 1; i + static_cast<std::size_t>(sc.sustain_ticks) <= ticks.size(); ++i) {
            bool ok = true;
            for (std::size_t k = i; k < i + static_cast<std::size_t>(sc.sustain_ticks) && ok; ++k)
                ok = ticks[k].result.step.qos[kU].latency_ms <= target;
            if (ok) {
                res = i;
                break;
            }
        }
    }
    if (res < ticks.size()) {
        rep.resolution_tick = ticks[res].tick;
        rep.resolved = true;
        rep.within_bound = *rep.resolution_ticks() <= sc.max_resolution_ticks;
        const std::size_t end = res + static_cast<std::size_t>(sc.sustain_ticks);
        rep.after = ticks[end - 1].shares;
        std::array<QosAchieved, kNumSlices> mean{};
        for (auto& m : mean) m.reliability = 0.0;
        for (std::size_t k = res; k < end; ++k)
            for (int s = 0; s < kNumSlices; ++s) {
                const auto& q = ticks[k].result.step.qos[static_cast<std::size_t>(s)];
                auto& m = mean[static_cast<std::size_t>(s)];
                m.latency_ms += q.latency_ms / double(sc.sustain_ticks);
                m.reliability += q.reliability / double(sc.sustain_ticks);
                m.throughput_mbps += q.throughput_mbps / double(sc.sustain_ticks);
                m.power_used_mw += q.power_used_mw / double(sc.sustain_ticks);
                m.sinr += q.sinr / double(sc.sustain_ticks);
            }
        rep.qos_after = mean;
        rep.post_resolution_reliability = mean[kU].reliability;
        for (std::size_t k = det; k <= res && k < ticks.size(); ++k)
            if (ticks[k].has_bundles) rep.wall_ms_to_resolution += ticks[k].decision_wall_ms;
    }

    for (std::size_t i = std::min(before_idx, ticks.size()); i < ticks.size(); ++i) {
        const auto& q = ticks[i].result.step.qos;
        rep.max_embb_latency_ms = std::max(rep.max_embb_latency_ms, q[kE].latency_ms);
        if (!(q[kM].throughput_mbps > 0.0) || !std::isfinite(q[kM].latency_ms) || ticks[i].result.step.info.ues[kM] <= 0)
            rep.mmtc_maintained = false;
    }

    // Explanation chain from the URLLC agent.
    auto urllc_expl = [&](long tick) -> const explain::ExplanationRecord* {
        for (const auto& e : run.trajectory.explanations)
            if (e.tick >= tick && e.agent == kU) return &e;
        return nullptr;
    };
    if (rep.detection_tick) {
        if (const auto* e = urllc_expl(*rep.detection_tick + 1)) {
            rep.chain.push_back({"detect", e->tick, "URLLC anomaly flagged; " + e->summary});
            std::string diag;
            for (const auto& f : e->top_features) diag += (diag.empty() ? "" : ", ") + f.name + " " + f3(f.weight);
            if (e->cross_source >= 0)
                diag += "; cross-slice " + std::string(slice_name(e->cross_source)) + " -> " +
                        std::string(slice_name(e->cross_target)) + " " + f3(e->cross_weight);
            rep.chain.push_back({"diagnose", e->tick, diag});
            rep.attention_excerpt = e->top_features;
            rep.counterfactual = e->counterfactual;
        }
        const std::size_t act_idx = std::min(det + 1, ticks.size() - 1);
        const auto& s0 = ticks[det].shares;
        const auto& s1 = ticks[act_idx].shares;
        rep.chain.push_back({"act", ticks[act_idx].tick,
                             "URLLC power " + f3(s0[kU][0]) + " -> " + f3(s1[kU][0]) + ", PRB " + f3(s0[kU][1]) + " -> " +
                                 f3(s1[kU][1]) + "; eMBB power " + f3(s0[kE][0]) + " -> " + f3(s1[kE][0]) + " (" +
                                 ticks[act_idx].phase + ")"});
    }
    if (rep.resolution_tick) {
        const auto* e = urllc_expl(*rep.resolution_tick);
        rep.chain.push_back({"recover", *rep.resolution_tick,
                             "URLLC latency " + f3(rep.qos_after[kU].latency_ms) + " ms sustained " +
                                 std::to_string(sc.sustain_ticks) + " ticks" + (e ? "; " + e->summary : "")});
    }

    rep.sla = {{"URLLC latency", "< 1 ms", rep.qos_after[kU].latency_ms, rep.qos_after[kU].latency_ms <= target},
               {"URLLC reliability", ">= 99.999%", rep.qos_after[kU].reliability,
                rep.qos_after[kU].reliability >= c.env.slice(kU).targets.reliability},
               {"eMBB latency", "<= 30 ms", rep.max_embb_latency_ms,
                rep.max_embb_latency_ms <= c.env.slice(kE).targets.latency_ms},
               {"mMTC connections", "maintained", rep.mmtc_maintained ? 1.0 : 0.0, rep.mmtc_maintained},
               {"Decision time p99", "< 25 ms", rep.decision_wall_ms_p99, rep.decision_wall_ms_p99 < 25.0},
               {"Resolution", "<= " + std::to_string(sc.max_resolution_ticks) + " ticks",
                rep.resolution_ticks() ? double(*rep.resolution_ticks()) : -1.0, rep.within_bound}};
    rep.passed = opts.spike_enabled ? (rep.resolved && rep.within_bound && rep.sla[2].met && rep.mmtc_maintained)
                                    : !rep.detection_tick.has_value();

    if (opts.out_dir) {
        trace::Manifest m;
        m.command = "case-study";
        m.seeds = {seed};
        trace::write_run(*opts.out_dir, run.trajectory, c, m);
        std::ofstream(*opts.out_dir / "report.json") << rep.to_json().dump(2) << '\n';
        std::ofstream(*opts.out_dir / "report.txt") << rep.to_text();
    }
    return run;
}

Stat Stat::of(const std::vector<double>& v) {
    Stat s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x / double(v.size());
    if (v.size() > 1) {
        double q = 0.0;
        for (double x : v) q += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(q / double(v.size() - 1));
        s.ci95 = 1.96 * s.sd / std::sqrt(double(v.size()));
    }
    return s;
}

SeedMetrics metrics_from_trajectory(const controller::Trajectory& traj, std::uint64_t seed) {
    SeedMetrics m;
    m.seed = seed;
    m.ticks = static_cast<long>(traj.ticks.size());
    if (traj.ticks.empty()) return m;
    const double n = double(traj.ticks.size());
    std::vector<double> wall;
    std::array<long, kNumSlices> violated{};
    for (const auto& t : traj.ticks) {
        m.mean_u_total += t.result.util.u_total / n;
        m.mean_e += t.result.explain.e / n;
        for (int s = 0; s < kNumSlices; ++s) {
            if (t.result.util.slices[static_cast<std::size_t>(s)].u_qos < 1.0) ++violated[static_cast<std::size_t>(s)];
            m.mean_latency_ms[static_cast<std::size_t>(s)] += t.result.step.qos[static_cast<std::size_t>(s)].latency_ms / n;
        }
        if (t.has_bundles) wall.push_back(t.decision_wall_ms);
    }
    for (int s = 0; s < kNumSlices; ++s) m.violation_rate[static_cast<std::size_t>(s)] = double(violated[static_cast<std::size_t>(s)]) / n;
    m.decision_ms_p99 = percentile(wall, 0.99);
    return m;
}

namespace {

controller::Trajectory random_loop(const Config& cfg, std::uint64_t seed, long horizon) {
    trainer::EpisodeContext ctx(cfg, seed);
    env::Rng rng(env::derive_seed(seed, 78));
    controller::Trajectory traj;
    for (long k = 0; k < horizon && !ctx.env().episode_done(); ++k) {
        controller::TickRecord rec;
        rec.tick = ctx.env().tick();
        rec.phase = "random";
        const auto a = trainer::random_action(ctx.env().shares(), cfg.env.share_floor, rng);
        const auto p = policy::project(ctx.env().shares(), a, cfg.env.share_floor);
        rec.shares = p.shares;
        rec.result = ctx.apply(p.shares, p.clamp_events, nullptr);
        traj.ticks.push_back(std::move(rec));
    }
    return traj;
}

}  // namespace

json EvaluationSummary::to_json() const {
    auto st = [](const Stat& s) { return json{{"mean", s.mean}, {"sd", s.sd}, {"ci95", s.ci95}}; };
    json seeds = json::array();
    for (const auto& m : per_seed)
        seeds.push_back({{"seed", m.seed},
                         {"ticks", m.ticks},
                         {"mean_u_total", m.mean_u_total},
                         {"mean_e", m.mean_e},
                         {"violation_rate", m.violation_rate},
                         {"mean_latency_ms", m.mean_latency_ms},
                         {"decision_ms_p99", m.decision_ms_p99}});
    json vr = json::object();
    for (int s = 0; s < kNumSlices; ++s) vr[std::string(slice_name(s))] = st(violation_rate[static_cast<std::size_t>(s)]);
    return {{"per_seed", seeds}, {"u_total", st(u_total)}, {"e", st(e)}, {"violation_rate", vr}};
}

EvaluationSummary evaluate(const policy::Policy& pol, const Config& cfg, const std::vector<std::uint64_t>& seeds,
                           const EvalOptions& opts) {
    if (seeds.empty()) throw std::invalid_argument("evaluate: at least one seed required");
    const long horizon = opts.horizon > 0 ? opts.horizon : cfg.env.episode_ticks;
    EvaluationSummary sum;
    sum.per_seed.resize(seeds.size());
    parallel_for(static_cast<int>(seeds.size()), [&](int i) {
        const auto seed = seeds[static_cast<std::size_t>(i)];
        controller::Trajectory traj;
        if (opts.driver == Driver::Random) {
            traj = random_loop(cfg, seed, horizon);
        } else {
            policy::Policy local = pol;
            Config c = cfg;
            if (opts.driver == Driver::ReactiveOnly) c.controller.enable_inter_slice = c.controller.enable_predictive = false;
            trainer::EpisodeContext ctx(c, seed);
            controller::LoopOptions lo;
            lo.horizon = horizon;
            lo.action_seed = env::derive_seed(seed, 77);
            traj = controller::run_loop(ctx, local, c, lo);
        }
        sum.per_seed[static_cast<std::size_t>(i)] = metrics_from_trajectory(traj, seed);
        if (opts.out_dir) {
            trace::Manifest m;
            m.command = "evaluate";
            m.seeds = {seed};
            trace::write_run(*opts.out_dir / ("seed_" + std::to_string(seed)), traj, cfg, m);
        }
    });
    std::vector<double> u, e;
    std::array<std::vector<double>, kNumSlices> vr;
    for (const auto& m : sum.per_seed) {
        u.push_back(m.mean_u_total);
        e.push_back(m.mean_e);
        for (int s = 0; s < kNumSlices; ++s) vr[static_cast<std::size_t>(s)].push_back(m.violation_rate[static_cast<std::size_t>(s)]);
    }
    sum.u_total = Stat::of(u);
    sum.e = Stat::of(e);
    for (int s = 0; s < kNumSlices; ++s) sum.violation_rate[static_cast<std::size_t>(s)] = Stat::of(vr[static_cast<std::size_t>(s)]);
    return sum;
}

json AblationComparison::to_json() const {
    json p = json::array();
    auto opt = [](const std::optional<long>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& d : pairs)
        p.push_back({{"seed", d.seed},
                     {"d_u_total", d.d_u_total},
                     {"d_e", d.d_e},
                     {"full_resolution_ticks", opt(d.full_resolution)},
                     {"ablation_resolution_ticks", opt(d.ablation_resolution)}});
    return {{"pairs", p},
            {"sign_counts", {{"u_total", {{"positive", u_positive}, {"negative", u_negative}}},
                             {"e", {{"positive", e_positive}, {"negative", e_negative}}}}},
            {"d_u_total", {{"mean", d_u_total.mean}, {"ci95", d_u_total.ci95}}},
            {"d_e", {{"mean", d_e.mean}, {"ci95", d_e.ci95}}}};
}

AblationComparison compare_ablation(const policy::Policy& full, const policy::Policy& ablation, const Config& cfg,
                                    const std::vector<std::uint64_t>& seeds, long horizon) {
    EvalOptions eo;
    eo.horizon = horizon;
    const auto ef = evaluate(full, cfg, seeds, eo);
    const auto ea = evaluate(ablation, cfg, seeds, eo);
    AblationComparison cmp;
    cmp.pairs.resize(seeds.size());
    parallel_for(static_cast<int>(seeds.size()), [&](int i) {
        policy::Policy pf = full, pa = ablation;
        auto& d = cmp.pairs[static_cast<std::size_t>(i)];
        d.seed = seeds[static_cast<std::size_t>(i)];
        d.full_resolution = run_spike_case_study(pf, cfg, d.seed).report.resolution_ticks();
        d.ablation_resolution = run_spike_case_study(pa, cfg, d.seed).report.resolution_ticks();
    });
    std::vector<double> du, de;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto& d = cmp.pairs[i];
        d.d_u_total = ef.per_seed[i].mean_u_total - ea.per_seed[i].mean_u_total;
        d.d_e = ef.per_seed[i].mean_e - ea.per_seed[i].mean_e;
        cmp.u_positive += d.d_u_total > 0;
        cmp.u_negative += d.d_u_total < 0;
        cmp.e_positive += d.d_e > 0;
        cmp.e_negative += d.d_e < 0;
        du.push_back(d.d_u_total);
        de.push_back(d.d_e);
    }
    cmp.d_u_total = Stat::of(du);
    cmp.d_e = Stat::of(de);
    return cmp;
}

}  // namespace slicesim::scenario
