#include "slicesim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace slicesim::policy {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using nlohmann::json;

namespace {
constexpr double kBudgetTol = 1e-9;
constexpr int kSemanticSlots = kStateDim;
}  // namespace

int ParamStore::add(std::string name, int rows, int cols) {
    if (find(name) >= 0) throw std::invalid_argument("ParamStore: duplicate tensor " + name);
    blocks_.push_back({std::move(name), rows, cols, values_.size()});
    values_.resize(values_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
    grads_.resize(values_.size(), 0.0);
    return static_cast<int>(blocks_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        if (blocks_[i].name == name) return static_cast<int>(i);
    return -1;
}

Var ParamStore::bind(Tape& t, int i, bool trainable) const {
    const auto& b = blocks_[static_cast<std::size_t>(i)];
    return t.param(values_.data() + b.offset, trainable ? grads_.data() + b.offset : nullptr, b.rows, b.cols);
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

bool latency_guarded(const StateVector& x, int slice, double guard_ratio) {
    if (!(guard_ratio > 0)) return false;
    const double threshold = std::max(-3.0, 3.0 * std::log2(guard_ratio));
    return x[static_cast<std::size_t>(feature_index(slice, kLatencyRatio))] > threshold;
}

ActionMask mask_actions(const ShareMatrix& shares, int slice, double floor, bool low_confidence, bool latency_guard) {
    ActionMask m{};
    for (int r = 0; r < kNumResources; ++r) {
        auto ri = static_cast<std::size_t>(r);
        double total = 0.0;
        for (int n = 0; n < kNumSlices; ++n) total += shares[static_cast<std::size_t>(n)][ri];
        const double own = shares[static_cast<std::size_t>(slice)][ri];
        for (int k = 0; k < kDeltas; ++k) {
            const double d = kDeltaValues[static_cast<std::size_t>(k)];
            bool ok = true;
            if (d < 0.0) ok = own + d >= floor - 1e-12;
            if (d > 0.0) ok = own + d <= 1.0 + kBudgetTol && total + d <= 1.0 + kBudgetTol;
            if (low_confidence && std::abs(d) > 0.075) ok = false;
            if (latency_guard && d < 0.0 && r != static_cast<int>(Resource::Compute)) ok = false;
            m[ri][static_cast<std::size_t>(k)] = ok || k == kNoopDelta;
        }
    }
    return m;
}

Projection project(const ShareMatrix& shares, const JointAction& action, double floor) {
    Projection p;
    p.shares = shares;
    for (int r = 0; r < kNumResources; ++r) {
        auto ri = static_cast<std::size_t>(r);
        bool clamped = false;
        double pos_inc = 0.0, total = 0.0;
        for (int n = 0; n < kNumSlices; ++n) {
            auto ni = static_cast<std::size_t>(n);
            const int k = action[ni][ri];
            if (k < 0 || k >= kDeltas) throw std::out_of_range("project: delta index");
            const double raw = shares[ni][ri] + kDeltaValues[static_cast<std::size_t>(k)];
            const double v = std::clamp(raw, std::min(floor, shares[ni][ri]), 1.0);
            if (v != raw) clamped = true;
            p.shares[ni][ri] = v;
            if (v > shares[ni][ri]) pos_inc += v - shares[ni][ri];
            total += v;
        }
        if (total > 1.0 + kBudgetTol) {
            clamped = true;
            const double excess = total - 1.0;
            if (pos_inc > 0.0) {
                const double keep = std::max(0.0, 1.0 - excess / pos_inc);
                for (int n = 0; n < kNumSlices; ++n) {
                    auto ni = static_cast<std::size_t>(n);
                    if (p.shares[ni][ri] > shares[ni][ri])
                        p.shares[ni][ri] = shares[ni][ri] + (p.shares[ni][ri] - shares[ni][ri]) * keep;
                }
            }
            double t2 = 0.0;
            for (int n = 0; n < kNumSlices; ++n) t2 += p.shares[static_cast<std::size_t>(n)][ri];
            if (t2 > 1.0) {
                for (int n = 0; n < kNumSlices; ++n) p.shares[static_cast<std::size_t>(n)][ri] /= t2;
            }
        }
        if (clamped) ++p.clamp_events;
    }
    return p;
}

Var semantic_attention(Tape& t, Var s, Var w, Var b) { return t.softmax_rows(t.add(t.matmul(s, w), b)); }

Var temporal_attention(Tape& t, Var query, const std::vector<Var>& keys) {
    if (keys.empty()) throw std::invalid_argument("temporal_attention: empty history");
    const double inv = 1.0 / std::sqrt(double(t.value(query).cols));
    std::vector<Var> cols;
    cols.reserve(keys.size());
    for (Var k : keys) cols.push_back(t.sum_rows(t.mul(query, k)));
    return t.softmax_rows(t.scale(t.hconcat(cols), inv));
}

Var cross_slice_attention(Tape& t, const std::array<Var, kNumSlices>& emb, Var wq, Var wk) {
    std::array<Var, kNumSlices> q{}, k{};
    for (int i = 0; i < kNumSlices; ++i) {
        q[static_cast<std::size_t>(i)] = t.matmul(emb[static_cast<std::size_t>(i)], wq);
        k[static_cast<std::size_t>(i)] = t.matmul(emb[static_cast<std::size_t>(i)], wk);
    }
    const double inv = 1.0 / std::sqrt(double(t.value(q[0]).cols));
    std::vector<Var> rows;
    for (int i = 0; i < kNumSlices; ++i) {
        std::vector<Var> logits;
        for (int j = 0; j < kNumSlices; ++j)
            logits.push_back(t.sum_rows(t.mul(q[static_cast<std::size_t>(i)], k[static_cast<std::size_t>(j)])));
        rows.push_back(t.softmax_rows(t.scale(t.hconcat(logits), inv)));
    }
    return t.hconcat(rows);
}

Var confidence_attention(Tape& t, Var semantic) {
    const double logd = std::log(double(t.value(semantic).cols));
    Var h = t.sum_rows(t.mul(semantic, t.log(semantic)));  // -H
    return t.add_scalar(t.scale(h, 1.0 / logd), 1.0);
}

Var counterfactual_attention(Tape& t, Var scores, const Matrix& available, double tau) {
    const Matrix& s = t.value(scores);
    if (available.rows != s.rows || available.cols != s.cols)
        throw std::invalid_argument("counterfactual_attention: mask shape");
    Matrix mul(s.rows, s.cols), add(s.rows, s.cols);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool ok = available.data[i] != 0.0;
        mul.data[i] = ok ? 1.0 : 0.0;
        add.data[i] = ok ? 0.0 : ad::kMaskedLogit;
    }
    Var z = t.add(t.mul(t.scale(scores, 1.0 / tau), t.constant(std::move(mul))), t.constant(std::move(add)));
    return t.exp(t.log_softmax_rows(z));
}

Var meta_fuse(Tape& t, const FuseInputs& in, const FuseProjections& p) {
    auto col = [&](int k) { return t.slice_cols(in.meta, k, 1); };
    Var conf2 = t.hconcat({in.confidence, t.add_scalar(t.neg(in.confidence), 1.0)});
    Var f = t.mul(in.semantic, col(kSemanticHead));
    auto term = [&](Var head, Var logits, int k) {
        f = t.add(f, t.mul(t.matmul(head, t.softmax_rows(logits)), col(k)));
    };
    term(in.temporal, p.temporal, kTemporalHead);
    term(t.scale(in.cross, 1.0 / kNumSlices), p.cross, kCrossHead);
    term(conf2, p.confidence, kConfidenceHead);
    term(in.counterfactual, p.counterfactual, kCounterfactualHead);
    term(in.meta, p.meta, kMetaHead);
    return t.div(f, t.sum_rows(f));
}

Policy::Policy(const PolicyConfig& cfg, double share_floor, double gamma) : cfg_(cfg), floor_(share_floor), gamma_(gamma) {
    cfg_.validate();
    const int d = kStateDim, hd = cfg_.hidden, W = cfg_.history, kd = cfg_.key_dim, e = cfg_.slice_embed;
    for (int a = 0; a < kNumSlices; ++a) {
        const std::string p = "actor." + std::string(slice_name(a)) + ".";
        auto& ap = agents_[static_cast<std::size_t>(a)];
        ap.sem_w = params_.add(p + "semantic.W", d, d);
        ap.sem_b = params_.add(p + "semantic.b", 1, d);
        ap.tmp_wq = params_.add(p + "temporal.Wq", d, kd);
        ap.tmp_wk = params_.add(p + "temporal.Wk", d, kd);
        ap.crs_we = params_.add(p + "cross.We", kSliceFeatures, e);
        ap.crs_be = params_.add(p + "cross.be", 1, e);
        ap.crs_wq = params_.add(p + "cross.Wq", e, e);
        ap.crs_wk = params_.add(p + "cross.Wk", e, e);
        ap.meta_w = params_.add(p + "meta.W", d, kHeads);
        ap.meta_b = params_.add(p + "meta.b", 1, kHeads);
        ap.proj_tmp = params_.add(p + "proj.temporal", W, d);
        ap.proj_crs = params_.add(p + "proj.cross", kNumSlices * kNumSlices, d);
        ap.proj_conf = params_.add(p + "proj.confidence", 2, d);
        ap.proj_cf = params_.add(p + "proj.counterfactual", kCandidates, d);
        ap.proj_meta = params_.add(p + "proj.meta", kHeads, d);
        ap.w1 = params_.add(p + "trunk.W1", 2 * d, hd);
        ap.b1 = params_.add(p + "trunk.b1", 1, hd);
        ap.w2 = params_.add(p + "trunk.W2", hd, hd);
        ap.b2 = params_.add(p + "trunk.b2", 1, hd);
        ap.w3 = params_.add(p + "trunk.W3", hd, kAgentLogits);
        ap.b3 = params_.add(p + "trunk.b3", 1, kAgentLogits);
    }
    const int ch = cfg_.critic_hidden;
    critic_.w1 = params_.add("critic.W1", d, ch);
    critic_.b1 = params_.add("critic.b1", 1, ch);
    critic_.w2 = params_.add("critic.W2", ch, ch);
    critic_.b2 = params_.add("critic.b2", 1, ch);
    critic_.w3 = params_.add("critic.W3", ch, 1);
    critic_.b3 = params_.add("critic.b3", 1, 1);
    const int qh = cfg_.qhat_hidden;
    qhat_.w1 = params_.add("qhat.W1", d + kActionEncodingDim, qh);
    qhat_.b1 = params_.add("qhat.b1", 1, qh);
    qhat_.w2 = params_.add("qhat.W2", qh, 1);
    qhat_.b2 = params_.add("qhat.b2", 1, 1);
    init_parameters();
}

void Policy::init_parameters() {
    env::Rng rng(env::derive_seed(cfg_.init_seed, 77));
    for (std::size_t i = 0; i < params_.blocks().size(); ++i) {
        const auto& b = params_.block(static_cast<int>(i));
        double* v = params_.value(static_cast<int>(i));
        const std::size_t n = static_cast<std::size_t>(b.rows) * b.cols;
        const bool bias = b.rows == 1;
        const bool projection = b.name.find(".proj.") != std::string::npos;
        if (bias || projection) {
            std::fill(v, v + n, 0.0);
            continue;
        }
        double limit = cfg_.init_scale * std::sqrt(6.0 / double(b.rows + b.cols));
        if (b.name.find("trunk.W3") != std::string::npos) limit *= 0.1;
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t k = 0; k < n; ++k) v[k] = u(rng);
    }
    for (const auto& ap : agents_) {
        double* b3 = params_.value(ap.b3);
        for (int r = 0; r < kNumResources; ++r) b3[r * kDeltas + kNoopDelta] = cfg_.noop_bias_init;
    }
}

Var Policy::qhat(Tape& t, const Matrix& input, bool trainable) const {
    Var x = t.constant(input);
    Var h = t.tanh(t.add(t.matmul(x, params_.bind(t, qhat_.w1, trainable)), params_.bind(t, qhat_.b1, trainable)));
    return t.add(t.matmul(h, params_.bind(t, qhat_.w2, trainable)), params_.bind(t, qhat_.b2, trainable));
}

Var Policy::critic(Tape& t, Var s) const {
    Var h1 = t.tanh(t.add(t.matmul(s, params_.bind(t, critic_.w1)), params_.bind(t, critic_.b1)));
    Var h2 = t.tanh(t.add(t.matmul(h1, params_.bind(t, critic_.w2)), params_.bind(t, critic_.b2)));
    return t.add(t.matmul(h2, params_.bind(t, critic_.w3)), params_.bind(t, critic_.b3));
}

Graph Policy::build(Tape& t, const BatchInput& in, const std::vector<AgentMasks>* masks, bool qhat_grad) const {
    const int B = static_cast<int>(in.rows());
    const int d = kStateDim;
    const int W = cfg_.history;
    if (B == 0) throw std::invalid_argument("Policy::build: empty batch");
    if (in.history.size() != in.states.size() || in.shares.size() != in.states.size())
        throw std::invalid_argument("Policy::build: inconsistent batch");
    if (masks && masks->size() != in.states.size()) throw std::invalid_argument("Policy::build: mask count");

    Matrix S(B, d);
    for (int b = 0; b < B; ++b) std::copy(in.states[static_cast<std::size_t>(b)].begin(), in.states[static_cast<std::size_t>(b)].end(), S.row(b).begin());
    Var s = t.constant(S);
    std::vector<Var> hist;
    for (int j = 0; j < W; ++j) {
        Matrix H(B, d);
        for (int b = 0; b < B; ++b) {
            const auto& h = in.history[static_cast<std::size_t>(b)];
            if (static_cast<int>(h.size()) != W) throw std::invalid_argument("Policy::build: history length must equal W");
            std::copy(h[static_cast<std::size_t>(j)].begin(), h[static_cast<std::size_t>(j)].end(), H.row(b).begin());
        }
        hist.push_back(t.constant(std::move(H)));
    }
    std::array<Var, kNumSlices> blocks{};
    for (int n = 0; n < kNumSlices; ++n) blocks[static_cast<std::size_t>(n)] = t.slice_cols(s, n * kSliceFeatures, kSliceFeatures);

    Graph g;
    g.masks.resize(static_cast<std::size_t>(B));
    g.candidates.resize(static_cast<std::size_t>(B));
    g.candidate_scores.resize(static_cast<std::size_t>(B));

    // Counterfactual scoring: every catalog entry for every row, then no-op + top feasible.
    Matrix qin(B * kCatalogSize, d + kActionEncodingDim);
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < kCatalogSize; ++k) {
            auto row = qin.row(b * kCatalogSize + k);
            std::copy(S.row(b).begin(), S.row(b).end(), row.begin());
            const auto enc = encode_catalog(k);
            std::copy(enc.begin(), enc.end(), row.begin() + d);
        }
    Var qall = qhat(t, qin, qhat_grad);
    const Matrix& qv = t.value(qall);
    Matrix avail(B, kCandidates);
    std::array<std::vector<int>, kCandidates> slot_rows;
    for (int b = 0; b < B; ++b) {
        std::vector<int> feas;
        for (int k = 1; k < kCatalogSize; ++k)
            if (catalog_feasible(in.shares[static_cast<std::size_t>(b)], k, floor_)) feas.push_back(k);
        std::stable_sort(feas.begin(), feas.end(),
                         [&](int x, int y) { return qv(b * kCatalogSize + x, 0) > qv(b * kCatalogSize + y, 0); });
        auto& cand = g.candidates[static_cast<std::size_t>(b)];
        auto& sc = g.candidate_scores[static_cast<std::size_t>(b)];
        for (int c = 0; c < kCandidates; ++c) {
            int cat = -1;
            if (c == 0) cat = 0;
            else if (c - 1 < static_cast<int>(feas.size())) cat = feas[static_cast<std::size_t>(c - 1)];
            cand[static_cast<std::size_t>(c)] = cat;
            avail(b, c) = cat >= 0 ? 1.0 : 0.0;
            const int qrow = b * kCatalogSize + std::max(cat, 0);
            sc[static_cast<std::size_t>(c)] = cat >= 0 ? qv(qrow, 0) : 0.0;
            slot_rows[static_cast<std::size_t>(c)].push_back(qrow);
        }
    }
    std::vector<Var> slot_scores;
    for (int c = 0; c < kCandidates; ++c) slot_scores.push_back(t.gather_rows(qall, slot_rows[static_cast<std::size_t>(c)]));
    Var cf_scores = t.hconcat(slot_scores);
    Var cf = counterfactual_attention(t, cf_scores, avail, cfg_.cf_temperature);

    for (int a = 0; a < kNumSlices; ++a) {
        const auto& ap = agents_[static_cast<std::size_t>(a)];
        auto P = [&](int id) { return params_.bind(t, id); };
        AgentGraph& ag = g.agents[static_cast<std::size_t>(a)];
        ag.semantic = semantic_attention(t, s, P(ap.sem_w), P(ap.sem_b));

        Var q = t.matmul(s, P(ap.tmp_wq));
        Var wk = P(ap.tmp_wk);
        std::vector<Var> keys;
        for (Var h : hist) keys.push_back(t.matmul(h, wk));
        ag.temporal = temporal_attention(t, q, keys);

        Var we = P(ap.crs_we), be = P(ap.crs_be);
        std::array<Var, kNumSlices> emb{};
        for (int n = 0; n < kNumSlices; ++n)
            emb[static_cast<std::size_t>(n)] = t.tanh(t.add(t.matmul(blocks[static_cast<std::size_t>(n)], we), be));
        ag.cross = cross_slice_attention(t, emb, P(ap.crs_wq), P(ap.crs_wk));
        ag.confidence = confidence_attention(t, ag.semantic);
        ag.counterfactual = cf;
        ag.meta = t.softmax_rows(t.add(t.matmul(s, P(ap.meta_w)), P(ap.meta_b)));

        FuseProjections proj{P(ap.proj_tmp), P(ap.proj_crs), P(ap.proj_conf), P(ap.proj_cf), P(ap.proj_meta)};
        ag.fused = meta_fuse(t, {ag.semantic, ag.temporal, ag.cross, ag.confidence, ag.counterfactual, ag.meta}, proj);

        Var gate = t.mul(s, t.scale(ag.fused, double(kSemanticSlots)));
        Var x = t.hconcat({s, gate});
        Var h1 = t.tanh(t.add(t.matmul(x, P(ap.w1)), P(ap.b1)));
        Var h2 = t.tanh(t.add(t.matmul(h1, P(ap.w2)), P(ap.b2)));
        Var logits = t.add(t.matmul(h2, P(ap.w3)), P(ap.b3));

        const Matrix& conf = t.value(ag.confidence);
        Matrix mmul(B, kAgentLogits), madd(B, kAgentLogits);
        for (int b = 0; b < B; ++b) {
            ActionMask m;
            if (masks) {
                m = (*masks)[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)];
            } else {
                const auto bi = static_cast<std::size_t>(b);
                m = mask_actions(in.shares[bi], a, floor_, conf(b, 0) < cfg_.confidence_threshold,
                                 latency_guarded(in.states[bi], a, cfg_.latency_guard_ratio));
            }
            g.masks[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = m;
            for (int r = 0; r < kNumResources; ++r)
                for (int k = 0; k < kDeltas; ++k) {
                    const bool ok = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
                    mmul(b, r * kDeltas + k) = ok ? 1.0 : 0.0;
                    madd(b, r * kDeltas + k) = ok ? 0.0 : ad::kMaskedLogit;
                }
        }
        Var ml = t.add(t.mul(logits, t.constant(std::move(mmul))), t.constant(std::move(madd)));
        std::vector<Var> factors;
        for (int r = 0; r < kNumResources; ++r) factors.push_back(t.log_softmax_rows(t.slice_cols(ml, r * kDeltas, kDeltas)));
        ag.logp = t.hconcat(factors);
    }
    g.value_net = critic(t, s);
    return g;
}

std::vector<Decision> Policy::act(const BatchInput& in, const std::vector<env::Rng*>& rngs, bool greedy) {
    Tape t;
    Graph g = build(t, in);
    const int B = static_cast<int>(in.rows());
    forward_calls_ += B;
    if (!greedy && static_cast<int>(rngs.size()) != B) throw std::invalid_argument("Policy::act: one rng per row");
    std::vector<Decision> out(static_cast<std::size_t>(B));
    const Matrix& V = t.value(g.value_net);
    check_finite(V.data, "critic value");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int a = 0; a < kNumSlices; ++a) {
        const auto& ag = g.agents[static_cast<std::size_t>(a)];
        const Matrix& lp = t.value(ag.logp);
        const Matrix& fused = t.value(ag.fused);
        check_finite(fused.data, "fused attention");
        for (int b = 0; b < B; ++b) {
            auto& dcs = out[static_cast<std::size_t>(b)];
            double total = 0.0;
            for (int r = 0; r < kNumResources; ++r) {
                int choice = kNoopDelta;
                if (greedy) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int k = 0; k < kDeltas; ++k)
                        if (lp(b, r * kDeltas + k) > best) {
                            best = lp(b, r * kDeltas + k);
                            choice = k;
                        }
                } else {
                    const double x = u01(*rngs[static_cast<std::size_t>(b)]);
                    double c = 0.0;
                    choice = -1;
                    int last = kNoopDelta;
                    for (int k = 0; k < kDeltas; ++k) {
                        if (lp(b, r * kDeltas + k) <= ad::kMaskedLogit) continue;
                        last = k;
                        c += std::exp(lp(b, r * kDeltas + k));
                        if (x < c) {
                            choice = k;
                            break;
                        }
                    }
                    if (choice < 0) choice = last;
                }
                dcs.action[static_cast<std::size_t>(a)][static_cast<std::size_t>(r)] = choice;
                total += lp(b, r * kDeltas + choice);
            }
            dcs.logp[static_cast<std::size_t>(a)] = total;
            dcs.masks[static_cast<std::size_t>(a)] = g.masks[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)];

            AttentionBundle& bd = dcs.bundles[static_cast<std::size_t>(a)];
            bd.agent = a;
            const auto rowcopy = [&](Var v, auto& dst) {
                const Matrix& m = t.value(v);
                std::copy(m.row(b).begin(), m.row(b).end(), dst.begin());
            };
            rowcopy(ag.semantic, bd.semantic);
            bd.temporal.assign(static_cast<std::size_t>(cfg_.history), 0.0);
            rowcopy(ag.temporal, bd.temporal);
            const Matrix& cr = t.value(ag.cross);
            for (int i = 0; i < kNumSlices; ++i)
                for (int j = 0; j < kNumSlices; ++j)
                    bd.cross[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = cr(b, i * kNumSlices + j);
            bd.confidence = t.value(ag.confidence)(b, 0);
            rowcopy(ag.counterfactual, bd.counterfactual);
            bd.candidates = g.candidates[static_cast<std::size_t>(b)];
            bd.candidate_scores = g.candidate_scores[static_cast<std::size_t>(b)];
            rowcopy(ag.meta, bd.meta);
            rowcopy(ag.fused, bd.fused);
        }
    }
    for (int b = 0; b < B; ++b) {
        out[static_cast<std::size_t>(b)].value_net = V(b, 0);
        out[static_cast<std::size_t>(b)].value = V(b, 0) / (1.0 - gamma_);
    }
    return out;
}

std::vector<StateVector> Policy::critic_input_gradient(const std::vector<StateVector>& states) const {
    const int d = kStateDim, h = cfg_.critic_hidden;
    const double* W1 = params_.value(critic_.w1);
    const double* b1 = params_.value(critic_.b1);
    const double* W2 = params_.value(critic_.w2);
    const double* b2 = params_.value(critic_.b2);
    const double* W3 = params_.value(critic_.w3);
    std::vector<StateVector> out(states.size());
    std::vector<double> h1(static_cast<std::size_t>(h)), h2(static_cast<std::size_t>(h)), g2(static_cast<std::size_t>(h)),
        g1(static_cast<std::size_t>(h));
    for (std::size_t n = 0; n < states.size(); ++n) {
        const auto& s = states[n];
        for (int j = 0; j < h; ++j) {
            double z = b1[j];
            for (int i = 0; i < d; ++i) z += s[static_cast<std::size_t>(i)] * W1[i * h + j];
            h1[static_cast<std::size_t>(j)] = std::tanh(z);
        }
        for (int j = 0; j < h; ++j) {
            double z = b2[j];
            for (int i = 0; i < h; ++i) z += h1[static_cast<std::size_t>(i)] * W2[i * h + j];
            h2[static_cast<std::size_t>(j)] = std::tanh(z);
        }
        for (int j = 0; j < h; ++j) g2[static_cast<std::size_t>(j)] = W3[j] * (1.0 - h2[static_cast<std::size_t>(j)] * h2[static_cast<std::size_t>(j)]);
        for (int i = 0; i < h; ++i) {
            double acc = 0.0;
            for (int j = 0; j < h; ++j) acc += W2[i * h + j] * g2[static_cast<std::size_t>(j)];
            g1[static_cast<std::size_t>(i)] = acc * (1.0 - h1[static_cast<std::size_t>(i)] * h1[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int j = 0; j < h; ++j) acc += W1[i * h + j] * g1[static_cast<std::size_t>(j)];
            out[n][static_cast<std::size_t>(i)] = acc;
        }
    }
    return out;
}

void Policy::check_finite(std::span<const double> values, const std::string& what) const {
    for (double v : values) {
        if (std::isfinite(v)) continue;
        auto path = std::filesystem::temp_directory_path() / "slicesim_nan_snapshot.json";
        try {
            save(path);
        } catch (...) {
            path.clear();
        }
        throw NumericalError("non-finite " + what + "; parameter snapshot: " + path.string(), path);
    }
}

json Policy::to_json() const {
    json tensors = json::array();
    for (std::size_t i = 0; i < params_.blocks().size(); ++i) {
        const auto& b = params_.block(static_cast<int>(i));
        const double* v = params_.value(static_cast<int>(i));
        tensors.push_back({{"name", b.name},
                           {"shape", {b.rows, b.cols}},
                           {"data", std::vector<double>(v, v + static_cast<std::ptrdiff_t>(b.rows) * b.cols)}});
    }
    Config c;
    c.policy = cfg_;
    return {{"format", "slicesim-policy"},
            {"version", 1},
            {"policy", config_to_json(c).at("policy")},
            {"share_floor", floor_},
            {"gamma", gamma_},
            {"tensors", tensors}};
}

Policy Policy::from_json(const json& j) {
    if (j.value("format", "") != "slicesim-policy") throw ConfigError("checkpoint: unknown format");
    if (j.value("version", 0) != 1) throw ConfigError("checkpoint: unsupported version");
    Config c = config_from_json(json{{"policy", j.at("policy")}});
    Policy p(c.policy, j.at("share_floor").get<double>(), j.at("gamma").get<double>());
    const auto& tensors = j.at("tensors");
    if (tensors.size() != p.params_.blocks().size()) throw ConfigError("checkpoint: tensor count mismatch");
    for (const auto& tj : tensors) {
        const auto name = tj.at("name").get<std::string>();
        const int id = p.params_.find(name);
        if (id < 0) throw ConfigError("checkpoint: unknown tensor " + name);
        const auto& b = p.params_.block(id);
        const auto shape = tj.at("shape").get<std::vector<int>>();
        if (shape.size() != 2 || shape[0] != b.rows || shape[1] != b.cols) throw ConfigError("checkpoint: shape mismatch for " + name);
        const auto data = tj.at("data").get<std::vector<double>>();
        if (data.size() != static_cast<std::size_t>(b.rows) * b.cols) throw ConfigError("checkpoint: data size for " + name);
        std::copy(data.begin(), data.end(), p.params_.value(id));
    }
    return p;
}

void Policy::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
    f << to_json().dump();
    if (!f) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Policy Policy::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open checkpoint " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("checkpoint " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace slicesim::policy
