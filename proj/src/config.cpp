#include "slicesim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace slicesim {

using json = nlohmann::json;

std::string_view mechanism_name(SpikeMechanism m) {
    switch (m) {
        case SpikeMechanism::BufferSurge: return "buffer_surge";
        case SpikeMechanism::InterferenceSurge: return "interference_surge";
        case SpikeMechanism::GainDrop: return "gain_drop";
    }
    return "?";
}

namespace {

SpikeMechanism parse_mechanism(const std::string& s) {
    for (auto m : {SpikeMechanism::BufferSurge, SpikeMechanism::InterferenceSurge, SpikeMechanism::GainDrop})
        if (mechanism_name(m) == s) return m;
    throw ConfigError("unknown spike mechanism '" + s + "'");
}

bool near_one(double x) { return std::abs(x - 1.0) <= 1e-9; }

// Reads optional keys of one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string sub(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_shares(const json& j, const std::string& path, std::array<double, 3>& out) {
    ObjectReader r(j, path);
    r.get("power", out[0]);
    r.get("prb", out[1]);
    r.get("compute", out[2]);
    r.finish();
}

json shares_json(const std::array<double, 3>& s) {
    return json{{"power", s[0]}, {"prb", s[1]}, {"compute", s[2]}};
}

void read_slice(const json& j, const std::string& path, SliceConfig& sc) {
    ObjectReader r(j, path);
    if (auto* t = r.child("targets")) {
        ObjectReader tr(*t, r.sub("targets"));
        tr.get("latency_ms", sc.targets.latency_ms);
        tr.get("reliability", sc.targets.reliability);
        tr.get("throughput_mbps", sc.targets.throughput_mbps);
        if (auto* p = tr.child("power_mw")) {
            if (p->is_null()) sc.targets.power_mw.reset();
            else if (p->is_number()) sc.targets.power_mw = p->get<double>();
            else throw ConfigError(tr.sub("power_mw") + ": expected number or null");
        }
        tr.finish();
    }
    if (auto* l = r.child("link")) {
        ObjectReader lr(*l, r.sub("link"));
        lr.get("gain", sc.link.gain);
        lr.get("packet_bits", sc.link.packet_bits);
        lr.get("service_rate", sc.link.service_rate);
        lr.get("circuit_power_w", sc.link.circuit_power_w);
        lr.finish();
    }
    if (auto* t = r.child("traffic")) {
        ObjectReader tr(*t, r.sub("traffic"));
        tr.get("ue_arrival_rate_per_s", sc.traffic.ue_arrival_rate_per_s);
        tr.get("mean_session_s", sc.traffic.mean_session_s);
        tr.get("packet_rate_per_ue_s", sc.traffic.packet_rate_per_ue_s);
        tr.get("queue_capacity_packets", sc.traffic.queue_capacity_packets);
        tr.get("diurnal_amplitude", sc.traffic.diurnal_amplitude);
        tr.get("diurnal_phase", sc.traffic.diurnal_phase);
        tr.finish();
    }
    if (auto* s = r.child("initial_shares")) read_shares(*s, r.sub("initial_shares"), sc.initial_shares);
    r.finish();
}

json slice_json(const SliceConfig& sc) {
    json t{{"latency_ms", sc.targets.latency_ms},
           {"reliability", sc.targets.reliability},
           {"throughput_mbps", sc.targets.throughput_mbps},
           {"power_mw", sc.targets.power_mw ? json(*sc.targets.power_mw) : json(nullptr)}};
    json l{{"gain", sc.link.gain},
           {"packet_bits", sc.link.packet_bits},
           {"service_rate", sc.link.service_rate},
           {"circuit_power_w", sc.link.circuit_power_w}};
    json tr{{"ue_arrival_rate_per_s", sc.traffic.ue_arrival_rate_per_s},
            {"mean_session_s", sc.traffic.mean_session_s},
            {"packet_rate_per_ue_s", sc.traffic.packet_rate_per_ue_s},
            {"queue_capacity_packets", sc.traffic.queue_capacity_packets},
            {"diurnal_amplitude", sc.traffic.diurnal_amplitude},
            {"diurnal_phase", sc.traffic.diurnal_phase}};
    return json{{"targets", t}, {"link", l}, {"traffic", tr}, {"initial_shares", shares_json(sc.initial_shares)}};
}

SpikeEvent read_spike(const json& j, const std::string& path) {
    SpikeEvent e;
    ObjectReader r(j, path);
    std::string slice = "URLLC", mech = "buffer_surge";
    r.get("trigger_tick", e.trigger_tick);
    r.get("target_slice", slice);
    r.get("mechanism", mech);
    r.get("magnitude", e.magnitude);
    r.get("duration_ticks", e.duration_ticks);
    r.finish();
    auto s = parse_slice(slice);
    if (!s) throw ConfigError(path + ": unknown slice '" + slice + "'");
    e.target_slice = *s;
    e.mechanism = parse_mechanism(mech);
    return e;
}

json spike_json(const SpikeEvent& e) {
    return json{{"trigger_tick", e.trigger_tick},
                {"target_slice", std::string(slice_name(e.target_slice))},
                {"mechanism", std::string(mechanism_name(e.mechanism))},
                {"magnitude", e.magnitude},
                {"duration_ticks", e.duration_ticks}};
}

template <class Arr>
void read_per_slice(const json& j, const std::string& path, Arr& out) {
    ObjectReader r(j, path);
    for (int s = 0; s < kNumSlices; ++s) {
        std::string key(slice_name(s));
        r.get(key.c_str(), out[static_cast<std::size_t>(s)]);
    }
    r.finish();
}

template <class Arr>
json per_slice_json(const Arr& a) {
    json j = json::object();
    for (int s = 0; s < kNumSlices; ++s) j[std::string(slice_name(s))] = a[static_cast<std::size_t>(s)];
    return j;
}

}  // namespace

void SpikeEvent::validate() const {
    if (duration_ticks < 1) throw ConfigError("spike: duration_ticks must be >= 1");
    if (trigger_tick < 0) throw ConfigError("spike: trigger_tick must be >= 0");
    if (mechanism == SpikeMechanism::GainDrop) {
        if (!(magnitude > 0.0 && magnitude < 1.0)) throw ConfigError("spike: gain_drop magnitude must be in (0, 1)");
    } else if (!(magnitude > 1.0)) {
        throw ConfigError("spike: surge magnitude must be > 1");
    }
}

double EnvConfig::latency_clamp_ms() const {
    double m = 0.0;
    for (const auto& s : slices) m = std::max(m, s.targets.latency_ms);
    return 10.0 * m;
}

void UtilityWeights::validate() const {
    double sw = 0.0;
    for (double w : slice_weights) {
        if (w < 0.0) throw ConfigError("utility: slice weights must be >= 0");
        sw += w;
    }
    if (!near_one(sw)) throw ConfigError("utility: slice weights must sum to 1");
    for (const auto& a : abg) {
        if (a[0] < 0 || a[1] < 0 || a[2] < 0) throw ConfigError("utility: alpha/beta/gamma must be >= 0");
        if (!near_one(a[0] + a[1] + a[2])) throw ConfigError("utility: alpha+beta+gamma must sum to 1");
    }
    if (lambda_latency < 0 || lambda_reliability < 0 || lambda_throughput < 0 || lambda_power < 0)
        throw ConfigError("utility: penalty rates must be >= 0");
    if (w_xrl < 0) throw ConfigError("utility: w_xrl must be >= 0");
    if (clamp_penalty < 0) throw ConfigError("utility: clamp_penalty must be >= 0");
}

void ExplainConfig::validate() const {
    if (eta[0] < 0 || eta[1] < 0 || eta[2] < 0 || !near_one(eta[0] + eta[1] + eta[2]))
        throw ConfigError("explain: eta must be nonnegative and sum to 1");
    if (!(epsilon >= 0)) throw ConfigError("explain: epsilon must be >= 0");
    if (window < 2) throw ConfigError("explain: window must be >= 2");
    if (!(fd_rel_step > 0)) throw ConfigError("explain: fd_rel_step must be > 0");
    if (top_k < 1) throw ConfigError("explain: top_k must be >= 1");
}

void PolicyConfig::validate() const {
    if (hidden < 1 || history < 1 || key_dim < 1 || slice_embed < 1 || qhat_hidden < 1 || critic_hidden < 1)
        throw ConfigError("policy: layer sizes must be >= 1");
    if (!(confidence_threshold >= 0 && confidence_threshold <= 1))
        throw ConfigError("policy: confidence_threshold must be in [0, 1]");
    if (!(latency_guard_ratio >= 0 && latency_guard_ratio <= 1))
        throw ConfigError("policy: latency_guard_ratio must be in [0, 1]");
    if (!(cf_temperature > 0)) throw ConfigError("policy: cf_temperature must be > 0");
}

void TrainConfig::validate() const {
    if (!(gamma > 0 && gamma <= 1)) throw ConfigError("train: gamma must be in (0, 1]");
    if (!(gae_lambda > 0 && gae_lambda <= 1)) throw ConfigError("train: gae_lambda must be in (0, 1]");
    if (!(clip_eps > 0 && clip_eps <= 0.5)) throw ConfigError("train: clip_eps must be in (0, 0.5]");
    if (!(learning_rate >= 0)) throw ConfigError("train: learning_rate must be >= 0");
    if (epochs < 1 || minibatch < 1 || rollout_length < 0 || iterations < 0 || num_envs < 1)
        throw ConfigError("train: epochs/minibatch/num_envs must be >= 1; rollout_length/iterations >= 0");
    if (alpha_xrl < 0 || beta[0] < 0 || beta[1] < 0 || beta[2] < 0)
        throw ConfigError("train: alpha_xrl and beta must be >= 0");
}

void ControllerConfig::validate() const {
    if (reactive_every < 1 || inter_slice_every < 1 || predictive_every < 1)
        throw ConfigError("controller: phase periods must be positive tick counts");
    if (inter_slice_every % reactive_every != 0 || predictive_every % reactive_every != 0)
        throw ConfigError("controller: reactive period must divide the other periods");
    if (!(predictive_delta >= 0 && predictive_delta <= 0.1)) throw ConfigError("controller: predictive_delta in [0, 0.1]");
    if (!(trade_delta > 0 && trade_delta <= 0.5)) throw ConfigError("controller: trade_delta in (0, 0.5]");
}

void Config::validate() const {
    const auto& e = env;
    if (!(e.tick_ms > 0)) throw ConfigError("env: tick_ms must be > 0");
    if (e.episode_ticks < 1) throw ConfigError("env: episode_ticks must be >= 1");
    if (!(e.budgets.power_w > 0 && e.budgets.prbs > 0 && e.budgets.compute > 0))
        throw ConfigError("env: budgets must be > 0");
    if (!(e.prb_bandwidth_hz > 0 && e.noise_w_per_prb > 0)) throw ConfigError("env: bandwidth and noise must be > 0");
    if (!(e.gain_jitter_db >= 0)) throw ConfigError("env: gain_jitter_db must be >= 0");
    if (!(e.share_floor >= 0 && e.share_floor * kNumSlices <= 1.0)) throw ConfigError("env: share_floor in [0, 1/3]");
    if (e.diurnal_period_ticks < 1 || e.latency_window_ticks < 1 || e.forecast_horizon_ticks < 1)
        throw ConfigError("env: periods and windows must be >= 1");
    for (const auto& row : e.interference_coupling)
        for (double k : row)
            if (k < 0) throw ConfigError("env: interference coupling must be >= 0");
    for (int s = 0; s < kNumSlices; ++s) {
        const auto& sc = e.slice(s);
        std::string who = "env.slices." + std::string(slice_name(s));
        sc.targets.validate(who);
        if (!(sc.link.gain > 0 && sc.link.packet_bits >= 1 && sc.link.service_rate > 0 && sc.link.circuit_power_w > 0))
            throw ConfigError(who + ": link params must be strictly positive (packet_bits >= 1)");
        const auto& t = sc.traffic;
        if (t.ue_arrival_rate_per_s < 0 || !(t.mean_session_s > 0) || t.packet_rate_per_ue_s < 0 ||
            !(t.queue_capacity_packets > 0) || t.diurnal_amplitude < 0 || t.diurnal_amplitude > 1)
            throw ConfigError(who + ": invalid traffic params");
        for (double v : sc.initial_shares)
            if (v < e.share_floor - 1e-12 || v > 1.0) throw ConfigError(who + ": initial shares must be in [floor, 1]");
    }
    for (int r = 0; r < kNumResources; ++r) {
        double sum = 0;
        for (int s = 0; s < kNumSlices; ++s) sum += e.slice(s).initial_shares[static_cast<std::size_t>(r)];
        if (sum > 1.0 + 1e-12) throw ConfigError("env: initial " + std::string(resource_name(r)) + " shares exceed budget");
    }
    for (const auto& sp : e.spikes) sp.validate();
    const auto& rs = e.random_spikes;
    if (rs.episode_probability < 0 || rs.episode_probability > 1 || rs.min_duration_ticks < 1 ||
        rs.max_duration_ticks < rs.min_duration_ticks || !(rs.buffer_magnitude > 1) || !(rs.interference_min > 1) ||
        rs.interference_max < rs.interference_min || rs.earliest_tick < 0)
        throw ConfigError("env.random_spikes: invalid parameters");
    utility.validate();
    explain.validate();
    policy.validate();
    train.validate();
    controller.validate();
    const auto& sc = scenario;
    if (sc.warmup_ticks < 0 || sc.horizon_ticks < 1 || sc.sustain_ticks < 1 || sc.max_resolution_ticks < 0 ||
        sc.spike_duration_ticks < 1 || !(sc.buffer_magnitude > 1) || !(sc.interference_magnitude > 1))
        throw ConfigError("scenario: invalid parameters");
    if (sc.seeds.empty()) throw ConfigError("scenario: seeds must not be empty");
    for (int r = 0; r < kNumResources; ++r) {
        auto ri = static_cast<std::size_t>(r);
        if (sc.urllc_before[ri] + sc.embb_before[ri] + sc.mmtc_before[ri] > 1.0 + 1e-12)
            throw ConfigError("scenario: before-shares exceed budget");
    }
}

Config default_config() {
    Config c;
    auto& e = c.env;
    e.interference_coupling = {{{0.0, 6e-4, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}}};

    auto& u = e.slices[0];
    u.targets = {1.0, 0.99999, 50.0, std::nullopt};
    u.link = {0.5, 32000.0, 10000.0, 0.5};
    u.traffic = {2.0, 5.0, 100.0, 200.0, 0.2, 0.0};
    u.initial_shares = {0.25, 0.30, 0.35};

    auto& b = e.slices[1];
    b.targets = {30.0, 0.99, 1000.0, std::nullopt};
    b.link = {10.0, 2.16e6, 1250.0, 1.0};
    b.traffic = {4.0, 5.0, 1.0, 100.0, 0.3, 1.5707963267948966};
    b.initial_shares = {0.45, 0.50, 0.35};

    auto& m = e.slices[2];
    m.targets = {1000.0, 0.99, 0.001, 1.0};
    m.link = {0.05, 1000.0, 50.0, 0.4};
    m.traffic = {400.0, 10.0, 0.1, 1000.0, 0.1, 3.141592653589793};
    m.initial_shares = {0.20, 0.15, 0.20};

    e.random_spikes.episode_probability = 0.5;
    return c;
}

Config config_from_json(const json& j) {
    Config c = default_config();
    ObjectReader r(j, "config");
    int version = 1;
    r.get("version", version);
    if (version != 1) throw ConfigError("config: unsupported version " + std::to_string(version));
    r.get("seed", c.seed);

    if (auto* ej = r.child("env")) {
        auto& e = c.env;
        ObjectReader er(*ej, "env");
        er.get("tick_ms", e.tick_ms);
        er.get("episode_ticks", e.episode_ticks);
        if (auto* bj = er.child("budgets")) {
            ObjectReader br(*bj, "env.budgets");
            br.get("power_w", e.budgets.power_w);
            br.get("prbs", e.budgets.prbs);
            br.get("compute", e.budgets.compute);
            br.finish();
        }
        er.get("prb_bandwidth_hz", e.prb_bandwidth_hz);
        er.get("noise_w_per_prb", e.noise_w_per_prb);
        er.get("gain_jitter_db", e.gain_jitter_db);
        er.get("share_floor", e.share_floor);
        er.get("diurnal_period_ticks", e.diurnal_period_ticks);
        er.get("ue_weight_sigma", e.ue_weight_sigma);
        er.get("latency_window_ticks", e.latency_window_ticks);
        er.get("forecast_horizon_ticks", e.forecast_horizon_ticks);
        er.get("anomaly_queue_threshold", e.anomaly_queue_threshold);
        if (auto* ij = er.child("interference_coupling")) {
            ObjectReader ir(*ij, "env.interference_coupling");
            for (int v = 0; v < kNumSlices; ++v) {
                std::string key(slice_name(v));
                if (auto* row = ir.child(key.c_str()))
                    read_per_slice(*row, "env.interference_coupling." + key,
                                   e.interference_coupling[static_cast<std::size_t>(v)]);
            }
            ir.finish();
        }
        if (auto* sj = er.child("slices")) {
            ObjectReader sr(*sj, "env.slices");
            for (int s = 0; s < kNumSlices; ++s) {
                std::string key(slice_name(s));
                if (auto* one = sr.child(key.c_str()))
                    read_slice(*one, "env.slices." + key, e.slices[static_cast<std::size_t>(s)]);
            }
            sr.finish();
        }
        if (auto* sp = er.child("spikes")) {
            if (!sp->is_array()) throw ConfigError("env.spikes: expected an array");
            e.spikes.clear();
            for (std::size_t i = 0; i < sp->size(); ++i)
                e.spikes.push_back(read_spike((*sp)[i], "env.spikes[" + std::to_string(i) + "]"));
        }
        if (auto* rj = er.child("random_spikes")) {
            auto& rs = e.random_spikes;
            ObjectReader rr(*rj, "env.random_spikes");
            rr.get("episode_probability", rs.episode_probability);
            rr.get("min_duration_ticks", rs.min_duration_ticks);
            rr.get("max_duration_ticks", rs.max_duration_ticks);
            rr.get("buffer_magnitude", rs.buffer_magnitude);
            rr.get("interference_min", rs.interference_min);
            rr.get("interference_max", rs.interference_max);
            rr.get("earliest_tick", rs.earliest_tick);
            rr.finish();
        }
        er.finish();
    }

    if (auto* uj = r.child("utility")) {
        auto& u = c.utility;
        ObjectReader ur(*uj, "utility");
        if (auto* w = ur.child("slice_weights")) read_per_slice(*w, "utility.slice_weights", u.slice_weights);
        if (auto* w = ur.child("alpha_beta_gamma")) read_per_slice(*w, "utility.alpha_beta_gamma", u.abg);
        ur.get("lambda_latency", u.lambda_latency);
        ur.get("lambda_reliability", u.lambda_reliability);
        ur.get("lambda_throughput", u.lambda_throughput);
        ur.get("lambda_power", u.lambda_power);
        ur.get("w_xrl", u.w_xrl);
        ur.get("clamp_penalty", u.clamp_penalty);
        ur.finish();
    }
    if (auto* xj = r.child("explain")) {
        auto& x = c.explain;
        ObjectReader xr(*xj, "explain");
        xr.get("eta", x.eta);
        xr.get("epsilon", x.epsilon);
        xr.get("window", x.window);
        xr.get("fd_rel_step", x.fd_rel_step);
        xr.get("top_k", x.top_k);
        xr.get("dominance_ratio", x.dominance_ratio);
        xr.finish();
    }
    if (auto* pj = r.child("policy")) {
        auto& p = c.policy;
        ObjectReader pr(*pj, "policy");
        pr.get("hidden", p.hidden);
        pr.get("history", p.history);
        pr.get("key_dim", p.key_dim);
        pr.get("slice_embed", p.slice_embed);
        pr.get("qhat_hidden", p.qhat_hidden);
        pr.get("critic_hidden", p.critic_hidden);
        pr.get("confidence_threshold", p.confidence_threshold);
        pr.get("latency_guard_ratio", p.latency_guard_ratio);
        pr.get("cf_temperature", p.cf_temperature);
        pr.get("init_scale", p.init_scale);
        pr.get("noop_bias_init", p.noop_bias_init);
        pr.get("init_seed", p.init_seed);
        pr.finish();
    }
    if (auto* tj = r.child("train")) {
        auto& t = c.train;
        ObjectReader tr(*tj, "train");
        tr.get("gamma", t.gamma);
        tr.get("gae_lambda", t.gae_lambda);
        tr.get("clip_eps", t.clip_eps);
        tr.get("learning_rate", t.learning_rate);
        tr.get("epochs", t.epochs);
        tr.get("minibatch", t.minibatch);
        tr.get("alpha_xrl", t.alpha_xrl);
        tr.get("beta", t.beta);
        tr.get("rollout_length", t.rollout_length);
        tr.get("iterations", t.iterations);
        tr.get("num_envs", t.num_envs);
        tr.get("value_coef", t.value_coef);
        tr.get("qhat_coef", t.qhat_coef);
        tr.get("entropy_coef", t.entropy_coef);
        tr.get("max_grad_norm", t.max_grad_norm);
        tr.get("max_pairs_per_minibatch", t.max_pairs_per_minibatch);
        tr.get("seed", t.seed);
        tr.finish();
    }
    if (auto* cj = r.child("controller")) {
        auto& k = c.controller;
        ObjectReader cr(*cj, "controller");
        cr.get("reactive_every", k.reactive_every);
        cr.get("inter_slice_every", k.inter_slice_every);
        cr.get("predictive_every", k.predictive_every);
        cr.get("predictive_threshold", k.predictive_threshold);
        cr.get("predictive_delta", k.predictive_delta);
        cr.get("trade_delta", k.trade_delta);
        cr.get("enable_inter_slice", k.enable_inter_slice);
        cr.get("enable_predictive", k.enable_predictive);
        cr.finish();
    }
    if (auto* sj = r.child("scenario")) {
        auto& s = c.scenario;
        ObjectReader sr(*sj, "scenario");
        sr.get("warmup_ticks", s.warmup_ticks);
        sr.get("horizon_ticks", s.horizon_ticks);
        sr.get("sustain_ticks", s.sustain_ticks);
        sr.get("max_resolution_ticks", s.max_resolution_ticks);
        if (auto* b = sr.child("before_shares")) {
            ObjectReader br(*b, "scenario.before_shares");
            if (auto* x = br.child("URLLC")) read_shares(*x, "scenario.before_shares.URLLC", s.urllc_before);
            if (auto* x = br.child("eMBB")) read_shares(*x, "scenario.before_shares.eMBB", s.embb_before);
            if (auto* x = br.child("mMTC")) read_shares(*x, "scenario.before_shares.mMTC", s.mmtc_before);
            br.finish();
        }
        sr.get("buffer_magnitude", s.buffer_magnitude);
        sr.get("interference_magnitude", s.interference_magnitude);
        sr.get("spike_duration_ticks", s.spike_duration_ticks);
        sr.get("manual_troubleshooting_min", s.manual_troubleshooting_min);
        sr.get("reported_resolution_min", s.reported_resolution_min);
        sr.get("seeds", s.seeds);
        sr.finish();
    }
    r.finish();
    c.validate();
    return c;
}

json config_to_json(const Config& c) {
    const auto& e = c.env;
    json slices = json::object();
    json coupling = json::object();
    for (int s = 0; s < kNumSlices; ++s) {
        slices[std::string(slice_name(s))] = slice_json(e.slice(s));
        coupling[std::string(slice_name(s))] = per_slice_json(e.interference_coupling[static_cast<std::size_t>(s)]);
    }
    json spikes = json::array();
    for (const auto& sp : e.spikes) spikes.push_back(spike_json(sp));
    const auto& rs = e.random_spikes;
    json env{{"tick_ms", e.tick_ms},
             {"episode_ticks", e.episode_ticks},
             {"budgets", {{"power_w", e.budgets.power_w}, {"prbs", e.budgets.prbs}, {"compute", e.budgets.compute}}},
             {"prb_bandwidth_hz", e.prb_bandwidth_hz},
             {"noise_w_per_prb", e.noise_w_per_prb},
             {"gain_jitter_db", e.gain_jitter_db},
             {"share_floor", e.share_floor},
             {"diurnal_period_ticks", e.diurnal_period_ticks},
             {"ue_weight_sigma", e.ue_weight_sigma},
             {"latency_window_ticks", e.latency_window_ticks},
             {"forecast_horizon_ticks", e.forecast_horizon_ticks},
             {"anomaly_queue_threshold", e.anomaly_queue_threshold},
             {"interference_coupling", coupling},
             {"slices", slices},
             {"spikes", spikes},
             {"random_spikes",
              {{"episode_probability", rs.episode_probability},
               {"min_duration_ticks", rs.min_duration_ticks},
               {"max_duration_ticks", rs.max_duration_ticks},
               {"buffer_magnitude", rs.buffer_magnitude},
               {"interference_min", rs.interference_min},
               {"interference_max", rs.interference_max},
               {"earliest_tick", rs.earliest_tick}}}};
    const auto& u = c.utility;
    json util{{"slice_weights", per_slice_json(u.slice_weights)},
              {"alpha_beta_gamma", per_slice_json(u.abg)},
              {"lambda_latency", u.lambda_latency},
              {"lambda_reliability", u.lambda_reliability},
              {"lambda_throughput", u.lambda_throughput},
              {"lambda_power", u.lambda_power},
              {"w_xrl", u.w_xrl},
              {"clamp_penalty", u.clamp_penalty}};
    const auto& x = c.explain;
    json expl{{"eta", x.eta},           {"epsilon", x.epsilon}, {"window", x.window},
              {"fd_rel_step", x.fd_rel_step}, {"top_k", x.top_k},   {"dominance_ratio", x.dominance_ratio}};
    const auto& p = c.policy;
    json pol{{"hidden", p.hidden},
             {"history", p.history},
             {"key_dim", p.key_dim},
             {"slice_embed", p.slice_embed},
             {"qhat_hidden", p.qhat_hidden},
             {"critic_hidden", p.critic_hidden},
             {"confidence_threshold", p.confidence_threshold},
             {"latency_guard_ratio", p.latency_guard_ratio},
             {"cf_temperature", p.cf_temperature},
             {"init_scale", p.init_scale},
             {"noop_bias_init", p.noop_bias_init},
             {"init_seed", p.init_seed}};
    const auto& t = c.train;
    json tr{{"gamma", t.gamma},
            {"gae_lambda", t.gae_lambda},
            {"clip_eps", t.clip_eps},
            {"learning_rate", t.learning_rate},
            {"epochs", t.epochs},
            {"minibatch", t.minibatch},
            {"alpha_xrl", t.alpha_xrl},
            {"beta", t.beta},
            {"rollout_length", t.rollout_length},
            {"iterations", t.iterations},
            {"num_envs", t.num_envs},
            {"value_coef", t.value_coef},
            {"qhat_coef", t.qhat_coef},
            {"entropy_coef", t.entropy_coef},
            {"max_grad_norm", t.max_grad_norm},
            {"max_pairs_per_minibatch", t.max_pairs_per_minibatch},
            {"seed", t.seed}};
    const auto& k = c.controller;
    json ctl{{"reactive_every", k.reactive_every},
             {"inter_slice_every", k.inter_slice_every},
             {"predictive_every", k.predictive_every},
             {"predictive_threshold", k.predictive_threshold},
             {"predictive_delta", k.predictive_delta},
             {"trade_delta", k.trade_delta},
             {"enable_inter_slice", k.enable_inter_slice},
             {"enable_predictive", k.enable_predictive}};
    const auto& s = c.scenario;
    json scn{{"warmup_ticks", s.warmup_ticks},
             {"horizon_ticks", s.horizon_ticks},
             {"sustain_ticks", s.sustain_ticks},
             {"max_resolution_ticks", s.max_resolution_ticks},
             {"before_shares",
              {{"URLLC", shares_json(s.urllc_before)},
               {"eMBB", shares_json(s.embb_before)},
               {"mMTC", shares_json(s.mmtc_before)}}},
             {"buffer_magnitude", s.buffer_magnitude},
             {"interference_magnitude", s.interference_magnitude},
             {"spike_duration_ticks", s.spike_duration_ticks},
             {"manual_troubleshooting_min", s.manual_troubleshooting_min},
             {"reported_resolution_min", s.reported_resolution_min},
             {"seeds", s.seeds}};
    return json{{"version", 1}, {"seed", c.seed}, {"env", env},        {"utility", util},
                {"explain", expl}, {"policy", pol}, {"train", tr}, {"controller", ctl}, {"scenario", scn}};
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t config_hash(const Config& c) { return fnv1a64(config_to_json(c).dump()); }

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace slicesim
