#include "slicesim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace slicesim::trainer {

using ad::Matrix;
using ad::Tape;
using ad::Var;

double reward(const utility::UtilityBreakdown& u, double e, double w_xrl) { return u.u_total + w_xrl * e; }

RewardParts reward_parts(const utility::UtilityBreakdown& u, double e, int clamp_events, const UtilityWeights& w) {
    return {u.u_total, w.w_xrl * e, -w.clamp_penalty * double(clamp_events)};
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
              double bootstrap, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || dones.size() != n) throw std::invalid_argument("gae: length mismatch");
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double next_adv = 0.0;
    double next_value = bootstrap;
    for (std::size_t k = n; k-- > 0;) {
        const double nonterminal = dones[k] ? 0.0 : 1.0;
        const double delta = rewards[k] + gamma * next_value * nonterminal - values[k];
        next_adv = delta + gamma * lambda * nonterminal * next_adv;
        out.advantages[k] = next_adv;
        out.returns[k] = next_adv + values[k];
        next_value = values[k];
    }
    return out;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
    if (!(ratio > 0.0)) throw std::invalid_argument("clipped_surrogate: ratio must be > 0");
    return -std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

AttentionLosses attention_losses(const std::vector<StateVector>& attentions, const std::vector<std::pair<int, int>>& pairs,
                                 const std::vector<StateVector>& states, const explain::UtilityFn& utility_fn,
                                 double rel_step) {
    if (attentions.empty() || attentions.size() != states.size()) throw std::invalid_argument("attention_losses: batch");
    AttentionLosses l;
    double sp = 0.0, fa = 0.0;
    for (std::size_t i = 0; i < attentions.size(); ++i) {
        sp += 1.0 - explain::sparsity(attentions[i]);
        fa += (1.0 - explain::faithfulness(attentions[i], states[i], utility_fn, rel_step).value) / 2.0;
    }
    l.sparse = sp / double(attentions.size());
    l.faith = fa / double(attentions.size());
    std::vector<std::pair<StateVector, StateVector>> ap;
    for (auto [i, j] : pairs) ap.emplace_back(attentions[static_cast<std::size_t>(i)], attentions[static_cast<std::size_t>(j)]);
    const auto c = explain::consistency(ap);
    l.cons = 1.0 - c.value;
    l.cons_empty = c.flagged;
    return l;
}

double total_loss(const LossTerms& l, const TrainConfig& c) {
    const double att = c.beta[0] * l.attention.sparse + c.beta[1] * l.attention.cons + c.beta[2] * l.attention.faith;
    return l.ppo + c.value_coef * l.value + c.qhat_coef * l.qhat - c.entropy_coef * l.entropy + c.alpha_xrl * att;
}

EpisodeContext::EpisodeContext(const Config& cfg, std::uint64_t seed)
    : cfg_(cfg), env_(cfg.env, seed), umodel_(cfg.env, cfg.utility) {
    for (auto& w : windows_) w = explain::ConsistencyWindow(static_cast<std::size_t>(cfg_.explain.window));
    history_.push_back(env_.state().x);
}

void EpisodeContext::reset(std::uint64_t seed) {
    env_.reset(seed);
    history_.clear();
    history_.push_back(env_.state().x);
    for (auto& w : windows_) w.clear();
}

void EpisodeContext::set_env(const env::SliceEnv& e) {
    env_ = e;
    history_.clear();
    history_.push_back(env_.state().x);
}

void EpisodeContext::append_input(policy::BatchInput& in) const {
    const int W = cfg_.policy.history;
    in.states.push_back(env_.state().x);
    std::vector<StateVector> h(static_cast<std::size_t>(W), StateVector{});
    const int have = std::min<int>(W, static_cast<int>(history_.size()));
    for (int k = 0; k < have; ++k)
        h[static_cast<std::size_t>(W - have + k)] = history_[history_.size() - static_cast<std::size_t>(have) + static_cast<std::size_t>(k)];
    in.history.push_back(std::move(h));
    in.shares.push_back(env_.shares());
}

policy::BatchInput EpisodeContext::input() const {
    policy::BatchInput in;
    append_input(in);
    return in;
}

explain::ExplainScore score_bundles(const std::array<AttentionBundle, kNumSlices>& bundles, const StateVector& s,
                                    const std::vector<double>& grad,
                                    std::array<explain::ConsistencyWindow, kNumSlices>& windows, const Config& cfg,
                                    std::array<explain::ExplainScore, kNumSlices>* per_agent) {
    explain::ExplainScore mean;
    mean.e_cons = 0.0;
    for (int a = 0; a < kNumSlices; ++a) {
        const auto& f = bundles[static_cast<std::size_t>(a)].fused;
        explain::ExplainScore sc;
        sc.e_sparse = explain::sparsity(f);
        const auto c = windows[static_cast<std::size_t>(a)].score(s, f, cfg.explain.epsilon);
        sc.e_cons = c.value;
        sc.cons_flagged = c.flagged;
        const auto fa = explain::faithfulness_from_gradient(f, grad);
        sc.e_faith = fa.value;
        sc.faith_flagged = fa.flagged;
        sc.e = explain::explainability_utility(sc.e_sparse, sc.e_cons, sc.e_faith, cfg.explain.eta);
        windows[static_cast<std::size_t>(a)].push(s, f);
        if (per_agent) (*per_agent)[static_cast<std::size_t>(a)] = sc;
        mean.e_sparse += sc.e_sparse / kNumSlices;
        mean.e_cons += sc.e_cons / kNumSlices;
        mean.e_faith += sc.e_faith / kNumSlices;
        mean.e += sc.e / kNumSlices;
        mean.cons_flagged = mean.cons_flagged || sc.cons_flagged;
        mean.faith_flagged = mean.faith_flagged || sc.faith_flagged;
    }
    return mean;
}

TickResult EpisodeContext::apply(const ShareMatrix& new_shares, int clamp_events,
                                 const std::array<AttentionBundle, kNumSlices>* bundles, env::StepMode mode) {
    TickResult r;
    const StateVector s = env_.state().x;
    if (bundles) {
        const auto grad = explain::finite_difference_gradient(
            [this](std::span<const double> x) { return umodel_(x); }, s, cfg_.explain.fd_rel_step);
        r.explain = score_bundles(*bundles, s, grad, windows_, cfg_, &r.agent_explain);
    }
    r.alloc = env_.make_allocation(new_shares);
    r.step = env_.step(r.alloc, mode);
    r.util = utility::evaluate(r.alloc, r.step.qos, cfg_.env, cfg_.utility);
    r.clamp_events = clamp_events;
    r.reward = reward_parts(r.util, bundles ? r.explain.e : 0.0, clamp_events, cfg_.utility);
    history_.push_back(r.step.state.x);
    while (static_cast<int>(history_.size()) > cfg_.policy.history) history_.pop_front();
    return r;
}

policy::JointAction random_action(const ShareMatrix& shares, double floor, env::Rng& rng) {
    policy::JointAction a{};
    for (int s = 0; s < kNumSlices; ++s) {
        const auto m = policy::mask_actions(shares, s, floor, false);
        for (int r = 0; r < kNumResources; ++r) {
            std::vector<int> ok;
            for (int k = 0; k < kDeltas; ++k)
                if (m[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)]) ok.push_back(k);
            std::uniform_int_distribution<std::size_t> u(0, ok.size() - 1);
            a[static_cast<std::size_t>(s)][static_cast<std::size_t>(r)] = ok[u(rng)];
        }
    }
    return a;
}

std::vector<RolloutWorker> make_workers(const Config& cfg, int n, std::uint64_t seed) {
    std::vector<RolloutWorker> ws;
    ws.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint64_t base = env::derive_seed(seed, 1000 + static_cast<std::uint64_t>(i));
        ws.push_back(RolloutWorker{EpisodeContext(cfg, env::derive_seed(base, 0)), env::Rng(env::derive_seed(base, 999)), base, 0});
    }
    return ws;
}

namespace {

Var value_on_tape(Tape& t, const policy::Policy& pol, const std::vector<StateVector>& states) {
    Matrix S(static_cast<int>(states.size()), kStateDim);
    for (std::size_t b = 0; b < states.size(); ++b) std::copy(states[b].begin(), states[b].end(), S.row(static_cast<int>(b)).begin());
    return pol.critic(t, t.constant(std::move(S)));
}

}  // namespace

Batch collect_rollouts(policy::Policy& pol, std::vector<RolloutWorker>& workers, int length, const Config& cfg) {
    Batch batch;
    const int n = static_cast<int>(workers.size());
    if (length <= 0 || n == 0) {
        batch.env_begin.assign(static_cast<std::size_t>(n) + 1, 0);
        batch.bootstrap_value_net.assign(static_cast<std::size_t>(n), 0.0);
        return batch;
    }
    std::vector<int> quota(static_cast<std::size_t>(n), length / n);
    for (int i = 0; i < length % n; ++i) ++quota[static_cast<std::size_t>(i)];
    std::vector<std::vector<Transition>> per(static_cast<std::size_t>(n));
    const int steps = *std::max_element(quota.begin(), quota.end());
    for (int t = 0; t < steps; ++t) {
        std::vector<int> active;
        policy::BatchInput in;
        std::vector<env::Rng*> rngs;
        for (int i = 0; i < n; ++i) {
            if (t >= quota[static_cast<std::size_t>(i)]) continue;
            active.push_back(i);
            workers[static_cast<std::size_t>(i)].ctx.append_input(in);
            rngs.push_back(&workers[static_cast<std::size_t>(i)].rng);
        }
        auto decisions = pol.act(in, rngs, false);
        for (std::size_t k = 0; k < active.size(); ++k) {
            auto& w = workers[static_cast<std::size_t>(active[k])];
            auto& d = decisions[k];
            Transition tr;
            tr.state = in.states[k];
            tr.history = in.history[k];
            tr.shares = in.shares[k];
            tr.action = d.action;
            tr.masks = d.masks;
            tr.logp = d.logp;
            tr.value_net = d.value_net;
            const auto proj = policy::project(tr.shares, d.action, cfg.env.share_floor);
            tr.action_encoding = encode_share_change(tr.shares, proj.shares);
            TickResult res = w.ctx.apply(proj.shares, proj.clamp_events, &d.bundles);
            tr.reward = res.reward;
            tr.reward_total = res.reward.total();
            tr.u_total = res.util.u_total;
            tr.e = res.explain.e;
            tr.clamp_events = proj.clamp_events;
            for (int s = 0; s < kNumSlices; ++s) tr.violated[static_cast<std::size_t>(s)] = res.util.slices[static_cast<std::size_t>(s)].u_qos < 1.0;
            if (w.ctx.env().episode_done()) {
                tr.done = true;
                w.ctx.reset(env::derive_seed(w.base_seed, static_cast<std::uint64_t>(++w.episode)));
            }
            per[static_cast<std::size_t>(active[k])].push_back(std::move(tr));
        }
    }
    std::vector<StateVector> last;
    for (auto& w : workers) last.push_back(w.ctx.env().state().x);
    Tape t;
    Var v = value_on_tape(t, pol, last);
    for (int i = 0; i < n; ++i) {
        batch.env_begin.push_back(batch.transitions.size());
        for (auto& tr : per[static_cast<std::size_t>(i)]) batch.transitions.push_back(std::move(tr));
        batch.bootstrap_value_net.push_back(t.value(v)(i, 0));
    }
    batch.env_begin.push_back(batch.transitions.size());
    return batch;
}

namespace {

Matrix column(const std::vector<double>& v) {
    Matrix m(static_cast<int>(v.size()), 1);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

}  // namespace

LossGraph build_loss(Tape& t, const policy::Policy& pol, const Minibatch& mb, const TrainConfig& tc, const ExplainConfig& ec,
                     bool qhat_grad) {
    const auto& tr = mb.batch->transitions;
    const int B = static_cast<int>(mb.idx.size());
    if (B == 0) throw std::invalid_argument("build_loss: empty minibatch");
    policy::BatchInput in;
    std::vector<policy::AgentMasks> masks;
    for (int i : mb.idx) {
        const auto& x = tr[static_cast<std::size_t>(i)];
        in.states.push_back(x.state);
        in.history.push_back(x.history);
        in.shares.push_back(x.shares);
        masks.push_back(x.masks);
    }
    policy::Graph g = pol.build(t, in, &masks, qhat_grad);
    Var adv = t.constant(column(mb.advantages));
    Var ret = t.constant(column(mb.returns));

    LossGraph out;
    Var ppo = t.scalar(0.0), ent = t.scalar(0.0);
    double kl = 0.0, clipped = 0.0;
    for (int a = 0; a < kNumSlices; ++a) {
        const auto& ag = g.agents[static_cast<std::size_t>(a)];
        Matrix onehot(B, kAgentLogits);
        std::vector<double> old(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b) {
            const auto& x = tr[static_cast<std::size_t>(mb.idx[static_cast<std::size_t>(b)])];
            for (int r = 0; r < kNumResources; ++r)
                onehot(b, r * kDeltas + x.action[static_cast<std::size_t>(a)][static_cast<std::size_t>(r)]) = 1.0;
            old[static_cast<std::size_t>(b)] = x.logp[static_cast<std::size_t>(a)];
        }
        Var lp = t.sum_rows(t.mul(ag.logp, t.constant(std::move(onehot))));
        Var ratio = t.exp(t.sub(lp, t.constant(column(old))));
        Var s1 = t.mul(ratio, adv);
        Var s2 = t.mul(t.clamp(ratio, 1.0 - tc.clip_eps, 1.0 + tc.clip_eps), adv);
        ppo = t.add(ppo, t.neg(t.mean(t.minimum(s1, s2))));
        Var p = t.exp(ag.logp);
        ent = t.add(ent, t.mean(t.neg(t.sum_rows(t.mul(p, ag.logp)))));
        const Matrix& rv = t.value(ratio);
        const Matrix& lv = t.value(lp);
        for (int b = 0; b < B; ++b) {
            kl += (old[static_cast<std::size_t>(b)] - lv(b, 0)) / (double(B) * kNumSlices);
            if (std::abs(rv(b, 0) - 1.0) > tc.clip_eps) clipped += 1.0 / (double(B) * kNumSlices);
        }
    }
    Var vloss = t.mean(t.square(t.sub(g.value_net, ret)));

    Matrix qin(B, kStateDim + kActionEncodingDim);
    for (int b = 0; b < B; ++b) {
        const auto& x = tr[static_cast<std::size_t>(mb.idx[static_cast<std::size_t>(b)])];
        auto row = qin.row(b);
        std::copy(x.state.begin(), x.state.end(), row.begin());
        std::copy(x.action_encoding.begin(), x.action_encoding.end(), row.begin() + kStateDim);
    }
    Var qloss = t.mean(t.square(t.sub(pol.qhat(t, qin, true), ret)));

    // Attention regularizers, averaged over agents.
    auto pairs = explain::epsilon_similar_pairs(in.states, ec.epsilon);
    if (static_cast<int>(pairs.size()) > tc.max_pairs_per_minibatch) pairs.resize(static_cast<std::size_t>(tc.max_pairs_per_minibatch));
    std::vector<StateVector> target = mb.faith_target;
    if (target.empty()) target = pol.critic_input_gradient(in.states);
    Matrix G(B, kStateDim);
    for (int b = 0; b < B; ++b) {
        double m = 0.0;
        for (double v : target[static_cast<std::size_t>(b)]) m += std::abs(v) / kStateDim;
        for (int i = 0; i < kStateDim; ++i) G(b, i) = std::abs(target[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]) - m;
    }
    Matrix gnorm2(B, 1);
    for (int b = 0; b < B; ++b) {
        double s = 0.0;
        for (double v : G.row(b)) s += v * v;
        gnorm2(b, 0) = s;
    }
    Var gc = t.constant(std::move(G));
    Var gn = t.constant(std::move(gnorm2));
    std::vector<int> pi, pj;
    for (auto [i, j] : pairs) {
        pi.push_back(i);
        pj.push_back(j);
    }
    Var ls = t.scalar(0.0), lc = t.scalar(0.0), lf = t.scalar(0.0);
    const double logd = std::log(double(kStateDim));
    for (int a = 0; a < kNumSlices; ++a) {
        Var f = g.agents[static_cast<std::size_t>(a)].fused;
        ls = t.add(ls, t.scale(t.mean(t.sum_rows(t.mul(f, t.log(f)))), -1.0 / (logd * kNumSlices)));
        if (!pairs.empty()) {
            Var fa = t.gather_rows(f, pi), fb = t.gather_rows(f, pj);
            Var cosv = t.div(t.sum_rows(t.mul(fa, fb)),
                             t.sqrt(t.mul(t.sum_rows(t.square(fa)), t.sum_rows(t.square(fb)))));
            lc = t.add(lc, t.scale(t.add_scalar(t.neg(t.mean(cosv)), 1.0), 1.0 / kNumSlices));
        }
        Var fcen = t.sub(f, t.mean_rows(f));
        Var num = t.sum_rows(t.mul(fcen, gc));
        Var den = t.sqrt(t.add_scalar(t.mul(t.sum_rows(t.square(fcen)), gn), 1e-30));
        Var corr = t.mean(t.div(num, den));
        lf = t.add(lf, t.scale(t.add_scalar(t.neg(corr), 1.0), 0.5 / kNumSlices));
    }

    Var total = t.add(ppo, t.scale(vloss, tc.value_coef));
    total = t.add(total, t.scale(qloss, tc.qhat_coef));
    total = t.sub(total, t.scale(ent, tc.entropy_coef));
    if (tc.alpha_xrl != 0.0) {
        Var att = t.add(t.add(t.scale(ls, tc.beta[0]), t.scale(lc, tc.beta[1])), t.scale(lf, tc.beta[2]));
        total = t.add(total, t.scale(att, tc.alpha_xrl));
    }
    out.total = total;
    out.terms.ppo = t.item(ppo);
    out.terms.value = t.item(vloss);
    out.terms.qhat = t.item(qloss);
    out.terms.entropy = t.item(ent);
    out.terms.attention.sparse = t.item(ls);
    out.terms.attention.cons = t.item(lc);
    out.terms.attention.cons_empty = pairs.empty();
    out.terms.attention.faith = t.item(lf);
    out.approx_kl = kl;
    out.clip_fraction = clipped;
    return out;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i] * grads[i];
        params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

double clip_grad_norm(std::vector<double>& g, double max_norm) {
    double s = 0.0;
    for (double v : g) s += v * v;
    const double n = std::sqrt(s);
    if (max_norm > 0.0 && n > max_norm) {
        const double k = max_norm / n;
        for (double& v : g) v *= k;
    }
    return n;
}

UpdateMetrics update(policy::Policy& pol, Adam& opt, const Batch& batch, const TrainConfig& tc, const ExplainConfig& ec,
                     env::Rng& rng) {
    UpdateMetrics m;
    if (batch.size() == 0) throw std::invalid_argument("update: empty batch");
    const double gamma = pol.gamma();
    std::vector<double> adv(batch.size()), ret(batch.size());
    for (std::size_t e = 0; e + 1 < batch.env_begin.size(); ++e) {
        const std::size_t a = batch.env_begin[e], b = batch.env_begin[e + 1];
        if (a == b) continue;
        std::vector<double> r, v;
        auto dn = std::make_unique<bool[]>(b - a);
        for (std::size_t i = a; i < b; ++i) {
            r.push_back(batch.transitions[i].reward_total);
            v.push_back(batch.transitions[i].value_net / (1.0 - gamma));
            dn[i - a] = batch.transitions[i].done;
        }
        const auto g = gae(r, v, std::span<const bool>(dn.get(), b - a), batch.bootstrap_value_net[e] / (1.0 - gamma), gamma,
                           tc.gae_lambda);
        for (std::size_t i = a; i < b; ++i) {
            adv[i] = g.advantages[i - a];
            ret[i] = g.returns[i - a] * (1.0 - gamma);
        }
    }

    std::vector<int> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    const int mbsize = std::max(1, std::min<int>(tc.minibatch, static_cast<int>(batch.size())));
    double n_steps = 0.0;
    for (int ep = 0; ep < tc.epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(mbsize)) {
            Minibatch mb;
            mb.batch = &batch;
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(mbsize));
            mb.idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
            double mean = 0.0, sq = 0.0;
            for (int i : mb.idx) mean += adv[static_cast<std::size_t>(i)] / double(mb.idx.size());
            for (int i : mb.idx) sq += (adv[static_cast<std::size_t>(i)] - mean) * (adv[static_cast<std::size_t>(i)] - mean);
            const double sd = mb.idx.size() > 1 ? std::sqrt(sq / double(mb.idx.size() - 1)) : 1.0;
            for (int i : mb.idx) {
                mb.advantages.push_back((adv[static_cast<std::size_t>(i)] - mean) / (sd + 1e-8));
                mb.returns.push_back(ret[static_cast<std::size_t>(i)]);
            }
            Tape t;
            pol.params().zero_grad();
            LossGraph lg = build_loss(t, pol, mb, tc, ec);
            const double total = t.item(lg.total);
            if (!std::isfinite(total)) pol.check_finite(std::span<const double>(&total, 1), "training loss");
            t.backward(lg.total);
            auto& grads = pol.params().grads();
            const double gn = clip_grad_norm(grads, tc.max_grad_norm);
            opt.step(pol.params().values(), grads);
            m.terms.ppo += lg.terms.ppo;
            m.terms.value += lg.terms.value;
            m.terms.qhat += lg.terms.qhat;
            m.terms.entropy += lg.terms.entropy;
            m.terms.attention.sparse += lg.terms.attention.sparse;
            m.terms.attention.cons += lg.terms.attention.cons;
            m.terms.attention.faith += lg.terms.attention.faith;
            m.total += total;
            m.approx_kl += lg.approx_kl;
            m.clip_fraction += lg.clip_fraction;
            m.grad_norm += gn;
            n_steps += 1.0;
        }
    }
    if (n_steps > 0) {
        for (double* v : {&m.terms.ppo, &m.terms.value, &m.terms.qhat, &m.terms.entropy, &m.terms.attention.sparse,
                          &m.terms.attention.cons, &m.terms.attention.faith, &m.total, &m.approx_kl, &m.clip_fraction,
                          &m.grad_norm})
            *v /= n_steps;
    }
    m.steps = static_cast<int>(n_steps);
    return m;
}

void write_metrics_header(std::ostream& os) {
    os << "iteration,mean_reward,mean_u_total,mean_e,loss_total,loss_ppo,loss_value,loss_qhat,entropy,"
          "loss_sparse,loss_cons,loss_faith,approx_kl,clip_fraction,grad_norm,violation_urllc,violation_embb,"
          "violation_mmtc\n";
}

void write_metrics_row(std::ostream& os, const IterationMetrics& m) {
    const auto& u = m.update;
    os << m.iteration << std::setprecision(10) << ',' << m.mean_reward << ',' << m.mean_u_total << ',' << m.mean_e << ','
       << u.total << ',' << u.terms.ppo << ',' << u.terms.value << ',' << u.terms.qhat << ',' << u.terms.entropy << ','
       << u.terms.attention.sparse << ',' << u.terms.attention.cons << ',' << u.terms.attention.faith << ',' << u.approx_kl
       << ',' << u.clip_fraction << ',' << u.grad_norm << ',' << m.violation_rate[0] << ',' << m.violation_rate[1] << ','
       << m.violation_rate[2] << '\n';
}

policy::Policy train(const Config& cfg, const TrainOptions& opts) {
    cfg.validate();
    const auto& tc = cfg.train;
    policy::Policy pol(cfg.policy, cfg.env.share_floor, tc.gamma);
    auto workers = make_workers(cfg, tc.num_envs, tc.seed);
    Adam opt(pol.params().size(), tc.learning_rate);
    env::Rng rng(env::derive_seed(tc.seed, 4242));
    std::ofstream csv;
    if (opts.metrics_csv) {
        csv.open(*opts.metrics_csv);
        if (!csv) throw std::runtime_error("cannot write " + opts.metrics_csv->string());
        write_metrics_header(csv);
    }
    for (int it = 0; it < tc.iterations; ++it) {
        Batch batch = collect_rollouts(pol, workers, tc.rollout_length, cfg);
        IterationMetrics im;
        im.iteration = it;
        for (const auto& tr : batch.transitions) {
            im.mean_reward += tr.reward_total / double(batch.size());
            im.mean_u_total += tr.u_total / double(batch.size());
            im.mean_e += tr.e / double(batch.size());
            for (int s = 0; s < kNumSlices; ++s)
                if (tr.violated[static_cast<std::size_t>(s)]) im.violation_rate[static_cast<std::size_t>(s)] += 1.0 / double(batch.size());
        }
        im.update = update(pol, opt, batch, tc, cfg.explain, rng);
        if (csv) {
            write_metrics_row(csv, im);
            csv.flush();
        }
        if (opts.on_iteration) opts.on_iteration(im);
    }
    return pol;
}

std::vector<TickResult> evaluation_rollout(policy::Policy& pol, const Config& cfg, std::uint64_t seed, long horizon,
                                           bool greedy, std::uint64_t action_seed) {
    EpisodeContext ctx(cfg, seed);
    env::Rng rng(action_seed);
    std::vector<env::Rng*> rngs{&rng};
    std::vector<TickResult> out;
    for (long t = 0; t < horizon && !ctx.env().episode_done(); ++t) {
        const auto in = ctx.input();
        auto d = pol.act(in, rngs, greedy);
        const auto proj = policy::project(in.shares[0], d[0].action, cfg.env.share_floor);
        out.push_back(ctx.apply(proj.shares, proj.clamp_events, &d[0].bundles));
    }
    return out;
}

Config ablation_config(Config cfg) {
    cfg.train.alpha_xrl = 0.0;
    cfg.utility.w_xrl = 0.0;
    return cfg;
}

}  // namespace slicesim::trainer
