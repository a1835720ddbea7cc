#include "slicesim/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

namespace slicesim::explain {

using nlohmann::json;

void validate_attention(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) {
        if (!(v >= 0.0)) throw std::invalid_argument("attention weights must be nonnegative");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("attention weights must sum to 1");
}

double sparsity(std::span<const double> a) {
    if (a.size() < 2) throw std::invalid_argument("sparsity: dimension must be at least 2");
    double h = 0.0;
    for (double v : a)
        if (v > 0.0) h -= v * std::log(v);
    return std::clamp(1.0 - h / std::log(double(a.size())), 0.0, 1.0);
}

double normalized_distance(const StateVector& a, const StateVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / double(a.size()));
}

std::vector<std::pair<int, int>> epsilon_similar_pairs(const std::vector<StateVector>& states, double eps) {
    if (eps < 0.0) throw std::invalid_argument("epsilon_similar_pairs: eps must be nonnegative");
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < states.size(); ++i)
        for (std::size_t j = i + 1; j < states.size(); ++j)
            if (normalized_distance(states[i], states[j]) <= eps) out.emplace_back(int(i), int(j));
    return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: size mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

Metric consistency(const std::vector<std::pair<StateVector, StateVector>>& attention_pairs) {
    if (attention_pairs.empty()) return {1.0, true};
    double s = 0.0;
    for (const auto& [a, b] : attention_pairs) s += cosine(a, b);
    return {s / double(attention_pairs.size()), false};
}

Metric pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: size mismatch");
    const std::set<double> distinct(y.begin(), y.end());
    if (distinct.size() < 3) return {0.0, true};
    const double n = double(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

std::vector<double> finite_difference_gradient(const UtilityFn& u, std::span<const double> s, double rel_step) {
    std::vector<double> x(s.begin(), s.end());
    std::vector<double> g(s.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = rel_step * (1.0 + std::abs(s[i]));
        x[i] = s[i] + h;
        const double up = u(x);
        x[i] = s[i] - h;
        const double dn = u(x);
        x[i] = s[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

Metric faithfulness_from_gradient(std::span<const double> a, std::span<const double> gradient) {
    std::vector<double> mag(gradient.size());
    for (std::size_t i = 0; i < gradient.size(); ++i) mag[i] = std::abs(gradient[i]);
    return pearson(a, mag);
}

Metric faithfulness(std::span<const double> a, std::span<const double> s, const UtilityFn& u, double rel_step) {
    return faithfulness_from_gradient(a, finite_difference_gradient(u, s, rel_step));
}

double explainability_utility(double e_sparse, double e_cons, double e_faith, const std::array<double, 3>& eta) {
    return eta[0] * e_sparse + eta[1] * e_cons + eta[2] * e_faith;
}

Metric ConsistencyWindow::score(const StateVector& state, const StateVector& attention, double eps) const {
    double s = 0.0;
    long n = 0;
    for (const auto& [st, att] : entries_) {
        if (normalized_distance(state, st) <= eps) {
            s += cosine(attention, att);
            ++n;
        }
    }
    if (n == 0) return {1.0, true};
    return {s / double(n), false};
}

void ConsistencyWindow::push(const StateVector& state, const StateVector& attention) {
    entries_.emplace_back(state, attention);
    while (entries_.size() > capacity_) entries_.pop_front();
}

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

json ExplanationRecord::to_json() const {
    json tf = json::array();
    for (const auto& f : top_features) tf.push_back({{"index", f.index}, {"feature", f.name}, {"weight", f.weight}});
    json cf = json::array();
    for (const auto& c : counterfactual)
        cf.push_back({{"catalog", c.catalog}, {"action", c.label}, {"weight", c.weight}, {"score", c.score}});
    return {{"tick", tick},
            {"agent", std::string(slice_name(agent))},
            {"top_features", tf},
            {"cross_slice", {{"source", cross_source >= 0 ? std::string(slice_name(cross_source)) : ""},
                             {"target", cross_target >= 0 ? std::string(slice_name(cross_target)) : ""},
                             {"weight", cross_weight}}},
            {"temporal_pattern", temporal_pattern},
            {"counterfactual", cf},
            {"confidence", confidence},
            {"dominant", dominant},
            {"summary", summary},
            {"attention_hash", attention_hash}};
}

ExplanationRecord ExplanationRecord::from_json(const json& j) {
    ExplanationRecord r;
    r.tick = j.at("tick").get<long>();
    auto agent = parse_slice(j.at("agent").get<std::string>());
    if (!agent) throw std::invalid_argument("explanation: unknown agent");
    r.agent = index(*agent);
    for (const auto& f : j.at("top_features"))
        r.top_features.push_back({f.at("index").get<int>(), f.at("feature").get<std::string>(), f.at("weight").get<double>()});
    const auto& cs = j.at("cross_slice");
    auto src = parse_slice(cs.at("source").get<std::string>());
    auto dst = parse_slice(cs.at("target").get<std::string>());
    r.cross_source = src ? index(*src) : -1;
    r.cross_target = dst ? index(*dst) : -1;
    r.cross_weight = cs.at("weight").get<double>();
    r.temporal_pattern = j.at("temporal_pattern").get<std::string>();
    for (const auto& c : j.at("counterfactual"))
        r.counterfactual.push_back({c.at("catalog").get<int>(), c.at("action").get<std::string>(),
                                    c.at("weight").get<double>(), c.at("score").get<double>()});
    r.confidence = j.at("confidence").get<double>();
    r.dominant = j.at("dominant").get<bool>();
    r.summary = j.at("summary").get<std::string>();
    r.attention_hash = j.at("attention_hash").get<std::string>();
    return r;
}

ExplanationRecord render_explanation(const AttentionBundle& b, const env::InfoRecord& context, const ExplainConfig& cfg,
                                     double confidence_threshold) {
    ExplanationRecord r;
    r.tick = context.tick;
    r.agent = b.agent;
    r.confidence = b.confidence;

    std::vector<int> order(kStateDim);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return b.semantic[static_cast<std::size_t>(x)] > b.semantic[static_cast<std::size_t>(y)];
    });
    const int k = std::min(cfg.top_k, kStateDim);
    for (int i = 0; i < k; ++i) {
        const int f = order[static_cast<std::size_t>(i)];
        r.top_features.push_back({f, feature_name(f), b.semantic[static_cast<std::size_t>(f)]});
    }
    const double top = b.semantic[static_cast<std::size_t>(order[0])];
    r.dominant = top > cfg.dominance_ratio / double(kStateDim);

    for (int i = 0; i < kNumSlices; ++i)
        for (int j = 0; j < kNumSlices; ++j) {
            if (i == j) continue;
            const double w = b.cross[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (w > r.cross_weight) {
                r.cross_weight = w;
                r.cross_target = i;
                r.cross_source = j;
            }
        }

    if (b.temporal.empty()) {
        r.temporal_pattern = "flat";
    } else {
        const auto it = std::max_element(b.temporal.begin(), b.temporal.end());
        const auto slot = std::distance(b.temporal.begin(), it);
        const auto w = static_cast<std::ptrdiff_t>(b.temporal.size());
        if (*it < 1.5 / double(w)) r.temporal_pattern = "flat";
        else if (slot >= w - 2) r.temporal_pattern = "recent";
        else r.temporal_pattern = "recurring";
    }

    for (int c = 0; c < kCandidates; ++c) {
        const int cat = b.candidates[static_cast<std::size_t>(c)];
        if (cat < 0) continue;
        r.counterfactual.push_back({cat, catalog_label(cat), b.counterfactual[static_cast<std::size_t>(c)],
                                    b.candidate_scores[static_cast<std::size_t>(c)]});
    }
    std::stable_sort(r.counterfactual.begin(), r.counterfactual.end(),
                     [](const auto& x, const auto& y) { return x.weight > y.weight; });

    std::string s = std::string(slice_name(b.agent)) + ": ";
    if (r.dominant) {
        s += "primary cause " + feature_phrase(order[0]) + " (" + fmt2(top) + ")";
        if (k > 1 && b.semantic[static_cast<std::size_t>(order[1])] > cfg.dominance_ratio / double(kStateDim))
            s += ", then " + feature_phrase(order[1]) + " (" + fmt2(b.semantic[static_cast<std::size_t>(order[1])]) + ")";
    } else {
        s += "no dominant cause";
    }
    if (r.cross_source >= 0 && r.cross_weight > 0.5)
        s += "; " + std::string(slice_name(r.cross_source)) + " -> " + std::string(slice_name(r.cross_target)) +
             " coupling (" + fmt2(r.cross_weight) + ")";
    if (!r.counterfactual.empty()) {
        s += "; preferred " + r.counterfactual.front().label;
        if (r.counterfactual.size() > 1) {
            s += ", rejecting ";
            for (std::size_t i = 1; i < r.counterfactual.size(); ++i) {
                if (i > 1) s += ", ";
                s += r.counterfactual[i].label + " (" + fmt2(r.counterfactual[i].weight) + ")";
            }
        }
    }
    s += "; confidence " + fmt2(b.confidence) + (b.confidence < confidence_threshold ? " (low)" : "");
    bool anomaly = false;
    for (bool a : context.anomaly) anomaly = anomaly || a;
    if (anomaly) s += "; anomaly active";
    r.summary = s;
    return r;
}

}  // namespace slicesim::explain
