#include "slicesim/trace.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "slicesim/utility.hpp"

#ifndef SLICESIM_VERSION
#define SLICESIM_VERSION "0.0.0"
#endif

namespace slicesim::trace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string code_version() { return SLICESIM_VERSION; }

void write_manifest(const fs::path& dir, const Manifest& m, const Config& cfg) {
    fs::create_directories(dir);
    json j{{"format", "slicesim-run"},
           {"version", 1},
           {"command", m.command},
           {"config_hash", hex64(config_hash(cfg))},
           {"seeds", m.seeds},
           {"code_version", code_version()},
           {"config", config_to_json(cfg)},
           {"extra", m.extra}};
    std::ofstream os(dir / kManifestFile);
    if (!os) throw std::runtime_error("cannot write " + (dir / kManifestFile).string());
    os << j.dump(2) << '\n';
}

json read_manifest(const fs::path& dir) {
    std::ifstream is(dir / kManifestFile);
    if (!is) throw SchemaError("missing " + (dir / kManifestFile).string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: ") + e.what());
    }
    if (j.value("format", "") != "slicesim-run" || j.value("version", 0) != 1) throw SchemaError("manifest: unknown format");
    return j;
}

json bundle_to_json(const AttentionBundle& b) {
    json cross = json::array();
    for (const auto& row : b.cross) cross.push_back(row);
    return {{"agent", b.agent},
            {"semantic", b.semantic},
            {"temporal", b.temporal},
            {"cross", cross},
            {"confidence", b.confidence},
            {"counterfactual", b.counterfactual},
            {"candidates", b.candidates},
            {"candidate_scores", b.candidate_scores},
            {"meta", b.meta},
            {"fused", b.fused}};
}

AttentionBundle bundle_from_json(const json& j) {
    AttentionBundle b;
    try {
        b.agent = j.at("agent").get<int>();
        b.semantic = j.at("semantic").get<StateVector>();
        b.temporal = j.at("temporal").get<std::vector<double>>();
        const auto& c = j.at("cross");
        for (int i = 0; i < kNumSlices; ++i) b.cross[static_cast<std::size_t>(i)] = c.at(static_cast<std::size_t>(i)).get<std::array<double, kNumSlices>>();
        b.confidence = j.at("confidence").get<double>();
        b.counterfactual = j.at("counterfactual").get<std::array<double, kCandidates>>();
        b.candidates = j.at("candidates").get<std::array<int, kCandidates>>();
        b.candidate_scores = j.at("candidate_scores").get<std::array<double, kCandidates>>();
        b.meta = j.at("meta").get<std::array<double, kHeads>>();
        b.fused = j.at("fused").get<StateVector>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("attention bundle: ") + e.what());
    }
    return b;
}

std::string line_hash(std::string_view line) { return hex64(fnv1a64(line)); }

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> cols{
        "tick",         "slice",       "phase",       "power_share", "prb_share",  "compute_share", "latency_ms",
        "reliability",  "throughput_mbps", "power_used_mw", "queue", "spike_active", "ues",     "gini_power",
        "gini_prb",     "gini_compute", "u_qos",      "u_eff",       "u_fair",     "u_slice",       "u_total",
        "e",            "reward",      "clamp_events"};
    return cols;
}

namespace {

json attention_record(const controller::TickRecord& r, int agent) {
    json anomaly = json::array();
    for (bool a : r.context.anomaly) anomaly.push_back(a);
    const auto& sc = r.result.agent_explain[static_cast<std::size_t>(agent)];
    return {{"tick", r.tick},
            {"agent", agent},
            {"state", *r.decision_state},
            {"context", {{"tick", r.context.tick}, {"anomaly", anomaly}}},
            {"bundle", bundle_to_json(r.bundles[static_cast<std::size_t>(agent)])},
            {"score", {{"e_sparse", sc.e_sparse}, {"e_cons", sc.e_cons}, {"e_faith", sc.e_faith}, {"e", sc.e}}}};
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

json shares_json(const ShareMatrix& s) {
    json j = json::array();
    for (const auto& row : s) j.push_back(row);
    return j;
}

}  // namespace

void write_run(const fs::path& dir, const controller::Trajectory& traj, const Config& cfg, const Manifest& m) {
    write_manifest(dir, m, cfg);

    auto csv = open_out(dir / kTraceFile);
    const auto& cols = trace_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
    csv << '\n';
    auto att = open_out(dir / kAttentionFile);
    std::map<std::pair<long, int>, std::string> hashes;
    for (const auto& r : traj.ticks) {
        const auto& u = r.result.util;
        for (int s = 0; s < kNumSlices; ++s) {
            const auto& q = r.result.step.qos[static_cast<std::size_t>(s)];
            const auto& sb = u.slices[static_cast<std::size_t>(s)];
            const auto& sh = r.shares[static_cast<std::size_t>(s)];
            csv << r.tick << ',' << slice_name(s) << ',' << r.phase << ',' << format_double(sh[0]) << ','
                << format_double(sh[1]) << ',' << format_double(sh[2]) << ',' << format_double(q.latency_ms) << ','
                << format_double(q.reliability) << ',' << format_double(q.throughput_mbps) << ','
                << format_double(q.power_used_mw) << ',' << format_double(r.queue[static_cast<std::size_t>(s)]) << ','
                << (r.result.step.info.spike_active[static_cast<std::size_t>(s)] ? 1 : 0) << ','
                << r.result.step.info.ues[static_cast<std::size_t>(s)] << ',' << format_double(sb.gini[0]) << ','
                << format_double(sb.gini[1]) << ',' << format_double(sb.gini[2]) << ',' << format_double(sb.u_qos) << ','
                << format_double(sb.u_eff) << ',' << format_double(sb.u_fair) << ',' << format_double(sb.u_slice) << ','
                << format_double(u.u_total) << ',' << format_double(r.result.explain.e) << ','
                << format_double(r.result.reward.total()) << ',' << r.result.clamp_events << '\n';
        }
        if (!r.has_bundles) continue;
        for (int a = 0; a < kNumSlices; ++a) {
            const std::string line = attention_record(r, a).dump();
            att << line << '\n';
            hashes[{r.tick, a}] = line_hash(line);
        }
    }

    auto ex = open_out(dir / kExplanationFile);
    for (auto rec : traj.explanations) {
        auto it = hashes.find({rec.tick, rec.agent});
        if (it == hashes.end()) throw std::logic_error("explanation without attention record");
        rec.attention_hash = it->second;
        ex << rec.to_json().dump() << '\n';
    }

    auto ev = open_out(dir / kEventFile);
    for (const auto& e : traj.events)
        ev << json{{"tick", e.tick},
                   {"phase", std::string(controller::phase_name(e.phase))},
                   {"applied", e.applied},
                   {"before", shares_json(e.before)},
                   {"after", shares_json(e.after)},
                   {"donor", e.donor >= 0 ? std::string(slice_name(e.donor)) : ""},
                   {"recipient", e.recipient >= 0 ? std::string(slice_name(e.recipient)) : ""},
                   {"u_without", e.u_without},
                   {"u_with", e.u_with},
                   {"detail", e.detail}}
                  .dump()
           << '\n';

    auto tm = open_out(dir / kTimingFile);
    tm << "tick,decision_wall_ms\n";
    for (const auto& r : traj.ticks)
        if (r.has_bundles) tm << r.tick << ',' << format_double(r.decision_wall_ms) << '\n';
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw SchemaError(where + ": not a number: '" + s + "'");
    return v;
}

struct Row {
    long line = 0;
    long tick = 0;
    int slice = 0;
    std::map<std::string, double> v;
};

bool close(double a, double b, double tol) {
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

}  // namespace

ReplayVerdict replay(const fs::path& dir, double tol) {
    const json manifest = read_manifest(dir);
    Config cfg;
    try {
        cfg = config_from_json(manifest.at("config"));
    } catch (const std::exception& e) {
        throw SchemaError(std::string("manifest config: ") + e.what());
    }
    ReplayVerdict verdict;
    auto fail = [&](std::string msg) {
        verdict.pass = false;
        verdict.failures.push_back(std::move(msg));
    };

    // trace.csv
    std::ifstream csv(dir / kTraceFile);
    if (!csv) throw SchemaError("missing " + (dir / kTraceFile).string());
    std::string line;
    std::getline(csv, line);
    if (split(line) != trace_columns()) throw SchemaError("trace.csv: unexpected header");
    const auto& cols = trace_columns();
    std::vector<Row> rows;
    long lineno = 1;
    while (std::getline(csv, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != cols.size()) throw SchemaError("trace.csv line " + std::to_string(lineno) + ": wrong column count");
        Row r;
        r.line = lineno;
        const std::string where = "trace.csv line " + std::to_string(lineno);
        r.tick = static_cast<long>(parse_double(f[0], where));
        auto sl = parse_slice(f[1]);
        if (!sl) throw SchemaError(where + ": unknown slice");
        r.slice = index(*sl);
        for (std::size_t c = 3; c < cols.size(); ++c) r.v[cols[c]] = parse_double(f[c], where);
        rows.push_back(std::move(r));
    }
    if (rows.size() % kNumSlices != 0) throw SchemaError("trace.csv: incomplete tick");

    // attention.jsonl
    struct Att {
        std::string raw;
        json j;
    };
    std::map<std::pair<long, int>, Att> atts;
    std::vector<std::pair<long, int>> att_order;
    {
        std::ifstream is(dir / kAttentionFile);
        if (!is) throw SchemaError("missing " + (dir / kAttentionFile).string());
        long n = 0;
        while (std::getline(is, line)) {
            ++n;
            if (line.empty()) continue;
            Att a;
            a.raw = line;
            try {
                a.j = json::parse(line);
                const auto key = std::make_pair(a.j.at("tick").get<long>(), a.j.at("agent").get<int>());
                att_order.push_back(key);
                atts[key] = std::move(a);
            } catch (const json::exception& e) {
                throw SchemaError("attention.jsonl line " + std::to_string(n) + ": " + e.what());
            }
        }
    }

    // Explainability scores, replaying the consistency windows in order.
    std::array<explain::ConsistencyWindow, kNumSlices> windows;
    for (auto& w : windows) w = explain::ConsistencyWindow(static_cast<std::size_t>(cfg.explain.window));
    const StateUtilityModel umodel(cfg.env, cfg.utility);
    std::map<long, double> tick_e;
    std::map<long, StateVector> grads_cache;
    for (const auto& key : att_order) {
        const auto& j = atts.at(key).j;
        const std::string where = "attention.jsonl tick " + std::to_string(key.first) + " agent " + std::to_string(key.second);
        try {
            const auto state = j.at("state").get<StateVector>();
            const auto b = bundle_from_json(j.at("bundle"));
            explain::validate_attention(b.fused);
            auto git = grads_cache.find(key.first);
            if (git == grads_cache.end()) {
                const auto g = explain::finite_difference_gradient(
                    [&](std::span<const double> x) { return umodel(x); }, state, cfg.explain.fd_rel_step);
                StateVector gv{};
                std::copy(g.begin(), g.end(), gv.begin());
                git = grads_cache.emplace(key.first, gv).first;
            }
            auto& w = windows[static_cast<std::size_t>(key.second)];
            const double sp = explain::sparsity(b.fused);
            const double co = w.score(state, b.fused, cfg.explain.epsilon).value;
            const double fa = explain::faithfulness_from_gradient(b.fused, git->second).value;
            const double e = explain::explainability_utility(sp, co, fa, cfg.explain.eta);
            w.push(state, b.fused);
            const auto& sc = j.at("score");
            const std::array<std::pair<const char*, double>, 4> checks{
                {{"e_sparse", sp}, {"e_cons", co}, {"e_faith", fa}, {"e", e}}};
            for (const auto& [name, val] : checks)
                if (!close(sc.at(name).get<double>(), val, tol))
                    fail(where + ": " + name + " logged " + format_double(sc.at(name).get<double>()) + " recomputed " +
                         format_double(val));
            tick_e[key.first] += e / kNumSlices;
        } catch (const json::exception& e) {
            throw SchemaError(where + ": " + e.what());
        }
        ++verdict.attention_checked;
    }

    // Utilities and rewards per tick.
    for (std::size_t i = 0; i < rows.size(); i += kNumSlices) {
        std::array<utility::SliceRecord, kNumSlices> rec{};
        for (int s = 0; s < kNumSlices; ++s) {
            const auto& r = rows[i + static_cast<std::size_t>(s)];
            if (r.slice != s || r.tick != rows[i].tick) throw SchemaError("trace.csv line " + std::to_string(r.line) + ": slice order");
            auto& x = rec[static_cast<std::size_t>(s)];
            x.achieved.latency_ms = r.v.at("latency_ms");
            x.achieved.reliability = r.v.at("reliability");
            x.achieved.throughput_mbps = r.v.at("throughput_mbps");
            x.achieved.power_used_mw = r.v.at("power_used_mw");
            x.shares = {r.v.at("power_share"), r.v.at("prb_share"), r.v.at("compute_share")};
            x.gini = {r.v.at("gini_power"), r.v.at("gini_prb"), r.v.at("gini_compute")};
        }
        const auto u = utility::evaluate_records(rec, cfg.env, cfg.utility);
        const long tick = rows[i].tick;
        const auto eit = tick_e.find(tick);
        const double e = eit == tick_e.end() ? 0.0 : eit->second;
        for (int s = 0; s < kNumSlices; ++s) {
            const auto& r = rows[i + static_cast<std::size_t>(s)];
            const auto& sb = u.slices[static_cast<std::size_t>(s)];
            const double reward = u.u_total + cfg.utility.w_xrl * e - cfg.utility.clamp_penalty * r.v.at("clamp_events");
            const std::array<std::pair<const char*, double>, 7> checks{{{"u_qos", sb.u_qos},
                                                                        {"u_eff", sb.u_eff},
                                                                        {"u_fair", sb.u_fair},
                                                                        {"u_slice", sb.u_slice},
                                                                        {"u_total", u.u_total},
                                                                        {"e", e},
                                                                        {"reward", reward}}};
            for (const auto& [name, val] : checks)
                if (!close(r.v.at(name), val, tol))
                    fail("trace.csv line " + std::to_string(r.line) + " (tick " + std::to_string(tick) + ", " +
                         std::string(slice_name(s)) + "): " + name + " logged " + format_double(r.v.at(name)) +
                         " recomputed " + format_double(val));
            ++verdict.rows_checked;
        }
    }

    // Explanation hash links and re-rendering.
    std::ifstream ex(dir / kExplanationFile);
    if (!ex) throw SchemaError("missing " + (dir / kExplanationFile).string());
    long n = 0;
    while (std::getline(ex, line)) {
        ++n;
        if (line.empty()) continue;
        const std::string where = "explanations.jsonl line " + std::to_string(n);
        explain::ExplanationRecord logged;
        json lj;
        try {
            lj = json::parse(line);
            logged = explain::ExplanationRecord::from_json(lj);
        } catch (const std::exception& e) {
            throw SchemaError(where + ": " + e.what());
        }
        auto it = atts.find({logged.tick, logged.agent});
        if (it == atts.end()) {
            fail(where + ": no attention record for tick " + std::to_string(logged.tick));
            continue;
        }
        const std::string h = line_hash(it->second.raw);
        if (h != logged.attention_hash) fail(where + ": attention hash mismatch");
        env::InfoRecord ctx;
        const auto& c = it->second.j.at("context");
        ctx.tick = c.at("tick").get<long>();
        for (int s = 0; s < kNumSlices; ++s) ctx.anomaly[static_cast<std::size_t>(s)] = c.at("anomaly").at(static_cast<std::size_t>(s)).get<bool>();
        auto rendered = explain::render_explanation(bundle_from_json(it->second.j.at("bundle")), ctx, cfg.explain,
                                                    cfg.policy.confidence_threshold);
        rendered.attention_hash = h;
        if (rendered.to_json() != lj) fail(where + ": re-rendered explanation differs");
        verdict.rendered.push_back(std::move(rendered));
        ++verdict.explanations_checked;
    }
    return verdict;
}

}  // namespace slicesim::trace
