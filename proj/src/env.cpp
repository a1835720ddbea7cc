#include "slicesim/env.hpp"

#include "slicesim/utility.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace slicesim::env {

namespace {
constexpr double kBudgetTolerance = 1e-9;
constexpr double kForecastAlpha = 0.3;
constexpr double kForecastBeta = 0.1;
constexpr double kAnomalyQueueJump = 0.2;
}  // namespace

void LatencyWindow::push(double served_packets, bool met) {
    entries_.emplace_back(served_packets, met);
    served_ += served_packets;
    if (met) met_ += served_packets;
    while (static_cast<long>(entries_.size()) > length_) {
        const auto& [p, m] = entries_.front();
        served_ -= p;
        if (m) met_ -= p;
        entries_.pop_front();
    }
}

double LatencyWindow::fraction() const {
    if (served_ <= 1e-12) {
        // no traffic served in the window: fall back to the tick verdicts
        if (entries_.empty()) return 1.0;
        long met = std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.second; });
        return double(met) / double(entries_.size());
    }
    return std::clamp(met_ / served_, 0.0, 1.0);
}

std::string FeasibilityReport::violated_budgets() const {
    std::string out;
    for (int r = 0; r < 3; ++r) {
        if (budget_ok[static_cast<std::size_t>(r)]) continue;
        if (!out.empty()) out += ",";
        out += "C" + std::to_string(r + 1);
    }
    return out;
}

FeasibilityReport check_constraints(const Allocation& alloc, const std::array<QosAchieved, kNumSlices>& achieved,
                                    const std::array<QosTargets, kNumSlices>& targets, const Budgets& budgets,
                                    const std::array<LatencyWindow, kNumSlices>* windows) {
    FeasibilityReport rep;
    for (int r = 0; r < 3; ++r) {
        auto ri = static_cast<std::size_t>(r);
        const double used = alloc.total(r);
        const double b = budgets[r];
        bool nonneg = true;
        for (const auto& s : alloc.slices) {
            const auto& v = r == 0 ? s.power_w : (r == 1 ? s.prbs : s.compute);
            for (double x : v) nonneg = nonneg && x >= 0.0;
        }
        rep.slack[ri] = b - used;
        rep.slack_fraction[ri] = rep.slack[ri] / b;
        rep.budget_ok[ri] = nonneg && used <= b * (1.0 + kBudgetTolerance);
    }
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        const auto& a = achieved[si];
        const auto& t = targets[si];
        if (windows) {
            rep.c4_fraction[si] = (*windows)[si].fraction();
        } else {
            rep.c4_fraction[si] = a.latency_ms <= t.latency_ms ? 1.0 : 0.0;
        }
        rep.c4_ok[si] = rep.c4_fraction[si] >= t.reliability;
        rep.c5_ok[si] = a.throughput_mbps >= t.throughput_mbps;
    }
    return rep;
}

SliceEnv::SliceEnv(EnvConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    for (auto& w : windows_) w = LatencyWindow(cfg_.latency_window_ticks);
    reset(seed);
}

double SliceEnv::arrival_rate(int slice, long tick) const {
    const auto& t = cfg_.slice(slice).traffic;
    const double phase = 2.0 * std::numbers::pi * double(tick % cfg_.diurnal_period_ticks) / double(cfg_.diurnal_period_ticks);
    return t.ue_arrival_rate_per_s * (1.0 + t.diurnal_amplitude * std::sin(phase + t.diurnal_phase));
}

void SliceEnv::admit_ue(int slice) {
    std::lognormal_distribution<double> w(0.0, cfg_.ue_weight_sigma);
    auto& v = rt_[static_cast<std::size_t>(slice)].ue_weights;
    const double x = w(rng_);
    v.insert(std::upper_bound(v.begin(), v.end(), x), x);
}

void SliceEnv::reset(std::uint64_t seed) {
    rng_.seed(derive_seed(seed, 0));
    tick_ = 0;

    spikes_ = cfg_.spikes;
    const auto& rs = cfg_.random_spikes;
    Rng spike_rng(derive_seed(seed, 1));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (rs.episode_probability > 0.0 && u01(spike_rng) < rs.episode_probability) {
        std::uniform_int_distribution<long> dur(rs.min_duration_ticks, rs.max_duration_ticks);
        const long d = dur(spike_rng);
        const long latest = std::max(rs.earliest_tick, cfg_.episode_ticks - d);
        std::uniform_int_distribution<long> start(rs.earliest_tick, latest);
        const long t0 = start(spike_rng);
        std::uniform_real_distribution<double> mag(rs.interference_min, rs.interference_max);
        const double im = mag(spike_rng);
        spikes_.push_back({t0, SliceId::URLLC, SpikeMechanism::BufferSurge, rs.buffer_magnitude, d});
        spikes_.push_back({t0, SliceId::URLLC, SpikeMechanism::InterferenceSurge, im, d});
    }

    for (int s = 0; s < kNumSlices; ++s) {
        auto& r = rt_[static_cast<std::size_t>(s)];
        const auto& t = cfg_.slice(s).traffic;
        r = SliceRuntime{};
        const long n0 = sample_arrivals(arrival_rate(s, 0) * t.mean_session_s, rng_);
        r.ue_weights.reserve(static_cast<std::size_t>(n0 * 2 + 8));
        for (long i = 0; i < n0; ++i) admit_ue(s);
        r.forecast_level = double(n0) * t.packet_rate_per_ue_s * cfg_.tick_s();
        windows_[static_cast<std::size_t>(s)] = LatencyWindow(cfg_.latency_window_ticks);
        for (int k = 0; k < kNumResources; ++k)
            shares_[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)] = cfg_.slice(s).initial_shares[static_cast<std::size_t>(k)];
    }

    std::array<double, kNumSlices> interference{};
    last_qos_ = compute_qos(make_allocation(shares_), Multipliers{}, {1.0, 1.0, 1.0}, interference);
    std::array<double, kNumSlices> expected{};
    for (int s = 0; s < kNumSlices; ++s) expected[static_cast<std::size_t>(s)] = rt_[static_cast<std::size_t>(s)].forecast_level;
    refresh_observation(expected);
}

void SliceEnv::set_spikes(std::vector<SpikeEvent> spikes) {
    for (const auto& s : spikes) s.validate();
    spikes_ = std::move(spikes);
}

bool SliceEnv::spike_active(int slice) const {
    for (const auto& e : spikes_)
        if (index(e.target_slice) == slice && e.active_at(tick_)) return true;
    return false;
}

void SliceEnv::set_shares(const ShareMatrix& s) {
    for (int r = 0; r < kNumResources; ++r) {
        double sum = 0.0;
        for (int n = 0; n < kNumSlices; ++n) {
            const double v = s[static_cast<std::size_t>(n)][static_cast<std::size_t>(r)];
            if (v < 0.0 || v > 1.0) throw std::invalid_argument("set_shares: share outside [0, 1]");
            sum += v;
        }
        if (sum > 1.0 + kBudgetTolerance) throw std::invalid_argument("set_shares: shares exceed budget");
    }
    shares_ = s;
    for (int n = 0; n < kNumSlices; ++n) raw_.slices[static_cast<std::size_t>(n)].shares = shares_[static_cast<std::size_t>(n)];
    state_ = encode_state(raw_, cfg_);
}

Allocation SliceEnv::make_allocation(const ShareMatrix& shares) const {
    Allocation a;
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        const auto& w = rt_[si].ue_weights;
        auto& out = a.slices[si];
        const double tot_p = shares[si][0] * cfg_.budgets.power_w;
        const double tot_b = shares[si][1] * cfg_.budgets.prbs;
        const double tot_c = shares[si][2] * cfg_.budgets.compute;
        if (w.empty()) {
            // idle slice: the reservation is held as one aggregate entry
            out.power_w = {tot_p};
            out.prbs = {tot_b};
            out.compute = {tot_c};
            continue;
        }
        const double n = double(w.size());
        const double sum_w = std::accumulate(w.begin(), w.end(), 0.0);
        out.power_w.resize(w.size());
        out.prbs.resize(w.size());
        out.compute.resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double frac = 0.5 / n + 0.5 * w[i] / sum_w;
            out.power_w[i] = tot_p * frac;
            out.prbs[i] = tot_b * frac;
            out.compute[i] = tot_c * frac;
        }
    }
    return a;
}

SliceEnv::Multipliers SliceEnv::multipliers(long tick) const {
    Multipliers m;
    for (const auto& e : spikes_) {
        if (!e.active_at(tick)) continue;
        auto s = static_cast<std::size_t>(index(e.target_slice));
        m.active[s] = true;
        switch (e.mechanism) {
            case SpikeMechanism::BufferSurge: m.arrivals[s] *= e.magnitude; break;
            case SpikeMechanism::InterferenceSurge: m.interference[s] *= e.magnitude; break;
            case SpikeMechanism::GainDrop: m.gain[s] *= e.magnitude; break;
        }
    }
    return m;
}

std::array<QosAchieved, kNumSlices> SliceEnv::compute_qos(const Allocation& alloc, const Multipliers& m,
                                                          const std::array<double, kNumSlices>& jitter,
                                                          std::array<double, kNumSlices>& interference) const {
    std::array<double, kNumSlices> p{};
    for (int s = 0; s < kNumSlices; ++s) p[static_cast<std::size_t>(s)] = alloc.slice_total(s, 0);
    std::array<QosAchieved, kNumSlices> out{};
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        const auto& link = cfg_.slice(s).link;
        double i_w = 0.0;
        for (int k = 0; k < kNumSlices; ++k)
            if (k != s) i_w += cfg_.interference_coupling[si][static_cast<std::size_t>(k)] * p[static_cast<std::size_t>(k)];
        i_w *= m.interference[si];
        interference[si] = i_w;
        const double b = alloc.slice_total(s, 1);
        const double c = alloc.slice_total(s, 2);
        const double g = link.gain * jitter[si] * m.gain[si];
        auto& q = out[si];
        q.sinr = sinr(b, p[si], g, cfg_.noise_w_per_prb, i_w);
        q.throughput_mbps = achieved_throughput_mbps(b, p[si], g, cfg_.noise_w_per_prb, cfg_.prb_bandwidth_hz, i_w);
        q.latency_ms = achieved_latency_ms(link.packet_bits, q.throughput_mbps * 1e6, c, link.service_rate);
        q.reliability = achieved_reliability(q.sinr, link.packet_bits);
        const double devices = std::max<double>(1.0, double(rt_[si].ue_weights.size()));
        q.power_used_mw = (p[si] + link.circuit_power_w) / devices * 1e3;
    }
    return out;
}

StepResult SliceEnv::step(const Allocation& alloc, StepMode mode) {
    std::array<QosTargets, kNumSlices> targets{};
    for (int s = 0; s < kNumSlices; ++s) targets[static_cast<std::size_t>(s)] = cfg_.slice(s).targets;

    {
        auto pre = check_constraints(alloc, last_qos_, targets, cfg_.budgets);
        if (!pre.budgets_feasible())
            throw ConstraintViolation("allocation violates " + pre.violated_budgets(), pre);
    }

    const bool stochastic = mode == StepMode::Stochastic;
    const Multipliers m = multipliers(tick_);
    std::array<double, kNumSlices> jitter{1.0, 1.0, 1.0};
    if (stochastic && cfg_.gain_jitter_db > 0.0) {
        std::normal_distribution<double> n(0.0, cfg_.gain_jitter_db);
        for (auto& j : jitter) j = std::pow(10.0, n(rng_) / 10.0);
    }

    StepResult res;
    auto& info = res.info;
    info.tick = tick_;
    res.qos = compute_qos(alloc, m, jitter, info.interference_w);

    std::array<double, kNumSlices> arrivals{};
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        auto& r = rt_[si];
        const auto& sc = cfg_.slice(s);
        const double ues = double(r.ue_weights.size());
        const double expected = ues * sc.traffic.packet_rate_per_ue_s * cfg_.tick_s() * m.arrivals[si];
        arrivals[si] = stochastic ? double(sample_arrivals(expected, rng_)) : expected;
        const double capacity = res.qos[si].throughput_mbps * 1e6 * cfg_.tick_s() / sc.link.packet_bits;
        const double backlog = r.queue_packets + arrivals[si];
        const double served = std::min(backlog, capacity);
        double q = backlog - served;
        const double cap = sc.traffic.queue_capacity_packets;
        info.dropped[si] = std::max(0.0, q - cap);
        q = std::min(q, cap);
        r.prev_occupancy = r.queue_packets / cap;
        r.queue_packets = q;
        info.arrivals[si] = arrivals[si];
        info.served[si] = served;
        windows_[si].push(served, res.qos[si].latency_ms <= sc.targets.latency_ms);
        info.spike_active[si] = m.active[si];
    }

    info.feasibility = check_constraints(alloc, res.qos, targets, cfg_.budgets, &windows_);
    info.slack = info.feasibility.slack;
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        const auto& sa = alloc.slices[si];
        if (rt_[si].ue_weights.empty()) {
            info.gini[si] = {0.0, 0.0, 0.0};
        } else {
            info.gini[si] = {utility::gini(sa.power_w), utility::gini(sa.prbs), utility::gini(sa.compute)};
        }
    }

    if (stochastic) {
        for (int s = 0; s < kNumSlices; ++s) {
            auto si = static_cast<std::size_t>(s);
            auto& w = rt_[si].ue_weights;
            const auto& t = cfg_.slice(s).traffic;
            if (!w.empty()) {
                std::binomial_distribution<long> dep(static_cast<long>(w.size()), std::min(1.0, cfg_.tick_s() / t.mean_session_s));
                long k = dep(rng_);
                for (; k > 0 && !w.empty(); --k) {
                    std::uniform_int_distribution<std::size_t> pick(0, w.size() - 1);
                    w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick(rng_)));
                }
            }
            const long joins = sample_arrivals(arrival_rate(s, tick_) * cfg_.tick_s(), rng_);
            for (long i = 0; i < joins; ++i) admit_ue(s);
        }
    }

    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        auto& r = rt_[si];
        const double prev_level = r.forecast_level;
        r.forecast_level = kForecastAlpha * arrivals[si] + (1.0 - kForecastAlpha) * (r.forecast_level + r.forecast_trend);
        r.forecast_trend = kForecastBeta * (r.forecast_level - prev_level) + (1.0 - kForecastBeta) * r.forecast_trend;
        for (int k = 0; k < kNumResources; ++k)
            shares_[si][static_cast<std::size_t>(k)] = alloc.slice_total(s, k) / cfg_.budgets[k];
        info.ues[si] = static_cast<long>(r.ue_weights.size());
    }

    last_qos_ = res.qos;
    ++tick_;
    refresh_observation(arrivals);
    for (int s = 0; s < kNumSlices; ++s) info.anomaly[static_cast<std::size_t>(s)] = raw_.slices[static_cast<std::size_t>(s)].anomaly;
    res.state = state_;
    return res;
}

void SliceEnv::refresh_observation(const std::array<double, kNumSlices>& arrivals) {
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        const auto& sc = cfg_.slice(s);
        const auto& r = rt_[si];
        const auto& q = last_qos_[si];
        auto& o = raw_.slices[si];
        const double cap_bits = std::max(q.throughput_mbps * 1e6 * cfg_.tick_s(), 1e-9);
        o.queue_occupancy = r.queue_packets / sc.traffic.queue_capacity_packets;
        o.offered_load = arrivals[si] * sc.link.packet_bits / cap_bits;
        o.sinr = q.sinr;
        o.shares = shares_[si];
        const double forecast = std::max(0.0, r.forecast_level + double(cfg_.forecast_horizon_ticks) * r.forecast_trend);
        o.predicted_load = forecast * sc.link.packet_bits / cap_bits;
        o.latency_ms = q.latency_ms;
        o.throughput_mbps = q.throughput_mbps;
        o.reliability = q.reliability;
        o.anomaly = q.latency_ms > sc.targets.latency_ms || q.reliability < sc.targets.reliability ||
                    o.queue_occupancy > cfg_.anomaly_queue_threshold ||
                    o.queue_occupancy - r.prev_occupancy > kAnomalyQueueJump;
    }
    raw_.time_phase = 2.0 * std::numbers::pi * double(tick_ % cfg_.diurnal_period_ticks) / double(cfg_.diurnal_period_ticks);
    state_ = encode_state(raw_, cfg_);
}

std::array<SliceState, kNumSlices> SliceEnv::slice_states() const {
    std::array<SliceState, kNumSlices> out{};
    for (int s = 0; s < kNumSlices; ++s) {
        auto si = static_cast<std::size_t>(s);
        out[si].slice_id = static_cast<SliceId>(s);
        out[si].active_ues = static_cast<long>(rt_[si].ue_weights.size());
        out[si].arrival_rate = arrival_rate(s, tick_);
        out[si].queue_occupancy = raw_.slices[si].queue_occupancy;
        out[si].mean_snr = last_qos_[si].sinr;
        out[si].shares = shares_[si];
    }
    return out;
}

}  // namespace slicesim::env
