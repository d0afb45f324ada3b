#pragma once

#include <memory>
#include <queue>
#include <random>
#include <vector>

#include "cbft/config.hpp"
#include "cbft/node.hpp"
#include "cbft/trace.hpp"
#include "cbft/workload.hpp"

namespace cbft {

// Deterministic in-process cluster: virtual clock, event heap, seeded delay
// sampling. Same seed and config give byte-identical traces and reports.
class SimCluster : public NodeObserver {
public:
    struct Fluctuation {
        double from_ms = 0;
        double to_ms = 0;
        double delay_lo_ms = 0;  // one-way delay drawn uniformly from [lo, hi]
        double delay_hi_ms = 0;
    };

    explicit SimCluster(const BenchConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        n_ = cfg_.replica_count();
        if (cfg_.effective_crypto() == "secp256k1")
            crypto_ = Secp256k1Crypto::from_seed(n_, cfg_.seed);
        else
            crypto_ = std::make_shared<NullCrypto>();

        net_rng_.seed(cfg_.seed ^ 0xc0ffee5ull);
        slow_extra_.assign(n_, 0.0);
        current_views_.assign(n_, 1);
        commit_counts_.assign(n_, 0);

        for (uint32_t i = 0; i < n_; ++i) {
            NodeOptions no;
            no.id = i;
            no.n = n_;
            no.protocol = cfg_.protocol_enum();
            no.timeout_ms = cfg_.timeout;
            no.bsize = cfg_.bsize;
            no.memsize = cfg_.memsize;
            no.master = cfg_.master;
            no.leader_policy = cfg_.leader_policy_enum();
            no.seed = cfg_.seed;
            no.responsive = cfg_.responsive;
            no.cpu_ms = cfg_.cpu;
            no.crypto = crypto_;
            if (cfg_.is_byzantine(i)) {
                no.attack.kind = cfg_.strategy_enum();
                for (uint64_t v : cfg_.attack_views) no.attack.only_views.insert(v);
            }
            nodes_.push_back(std::make_unique<Node>(no, this));
        }
        trace_.observer = observer_;
    }

    // Extra wiring for scripted experiments; call before run().
    void add_fluctuation(const Fluctuation& f) { fluctuations_.push_back(f); }
    void schedule_crash(double at_ms, ReplicaId id) { push_control(at_ms, id, 0, 0); }
    void schedule_slow(double at_ms, ReplicaId id, double extra_ms) {
        push_control(at_ms, id, 1, extra_ms);
    }
    void set_record_commit_log(bool on) { record_commit_log_ = on; }

    void load_workload() {
        auto sched = generate_workload(cfg_.lambda, cfg_.psize, cfg_.concurrency, cfg_.runtime, n_,
                                       cfg_.seed ^ 0xabcdefull);
        for (auto& s : sched) {
            TxRecord rec;
            rec.key = s.tx.key();
            rec.origin = s.target;
            rec.submit_ms = s.at_ms;
            trace_.txs.emplace(rec.key, rec);
            ++trace_.submitted;
            push_submit(s.at_ms + sample_delay(n_, s.at_ms, 0), s.target, s.tx);
        }
    }

    void start() {
        double t0 = 0.0;
        for (uint32_t i = 0; i < n_; ++i) apply_effects(i, nodes_[i]->start(t0), t0);
        started_ = true;
    }

    // Runs until every honest replica has entered a view past `target` plus a
    // small grace so in-flight commits resolve, or until the hard time cap.
    void run_views(View target, double hard_cap_ms = 0) {
        if (!started_) start();
        View stop_at = target + protocol_commit_depth(cfg_.protocol_enum()) + 2;
        if (hard_cap_ms <= 0) hard_cap_ms = 1e18;
        uint64_t check = 0;
        while (!heap_.empty()) {
            if (heap_.top().time > hard_cap_ms) break;
            step_one();
            if (++check % 64 == 0 && min_honest_view() > stop_at) break;
        }
        trace_.end_ms = now_;
    }

    void run_until_ms(double t_end) {
        if (!started_) start();
        while (!heap_.empty() && heap_.top().time <= t_end) step_one();
        now_ = std::max(now_, t_end);
        trace_.end_ms = now_;
    }

    // NodeObserver: trace recording.
    void on_proposal_made(ReplicaId id, const BlockPtr& b, ProposalCause cause, double now) override {
        BlockRecord rec;
        rec.hash = b->id;
        rec.view = b->view;
        rec.proposer = id;
        rec.parent = b->parent;
        rec.justify_view = b->justify.view;
        rec.n_txs = static_cast<uint32_t>(b->payload.size());
        rec.proposed_ms = now;
        trace_.blocks.emplace(b->id, rec);
        auto& vr = trace_.view_rec(b->view);
        vr.proposal_made = true;
        vr.leader = id;
        vr.cause = cause_name(cause);
        if (cause != ProposalCause::Timer && cause != ProposalCause::Start)
            last_cert_triggered_proposal_ms_ = now;
    }

    void on_fork_proposed(ReplicaId, const BlockPtr& b, double) override {
        auto it = trace_.blocks.find(b->id);
        if (it != trace_.blocks.end()) it->second.fork_attack = true;
    }

    void on_proposal_seen(ReplicaId id, const BlockPtr& b, double) override {
        if (id != observer_) return;
        trace_.view_rec(b->view).proposal_seen = true;
    }

    void on_certified(ReplicaId id, const QuorumCertificate& qc, View at_view, double) override {
        if (id != observer_) return;
        auto it = trace_.blocks.find(qc.block);
        if (it != trace_.blocks.end() && !it->second.certified_view)
            it->second.certified_view = at_view;
    }

    void on_commit(ReplicaId id, const BlockPtr& b, View at_view, double now) override {
        if (id != observer_) return;
        auto it = trace_.blocks.find(b->id);
        if (it != trace_.blocks.end() && !it->second.committed_view) {
            it->second.committed_view = at_view;
            it->second.committed_ms = now;
            trace_.commit_order.push_back(b->id);
        }
    }

    void on_view_entered(ReplicaId id, View v, bool, double now) override {
        current_views_[id] = v;
        if (id == observer_) {
            auto& vr = trace_.view_rec(v);
            if (vr.entered_ms == 0) vr.entered_ms = now;
            vr.leader = nodes_[id]->leader_of(v);
        }
    }

    void on_timeout_sent(ReplicaId id, View v, double) override {
        if (id == observer_) trace_.view_rec(v).timeout = true;
    }

    // Results.
    RunTrace& trace() { return trace_; }
    const RunTrace& trace() const { return trace_; }
    Node& node(ReplicaId id) { return *nodes_[id]; }
    const Node& node(ReplicaId id) const { return *nodes_[id]; }
    uint32_t size() const { return n_; }
    double now_ms() const { return now_; }
    const BenchConfig& config() const { return cfg_; }

    bool is_honest(ReplicaId id) const { return !cfg_.is_byzantine(id); }

    struct CommitEvent {
        double at_ms;
        ReplicaId replica;
        View at_view;
        BlockHash block;
    };
    const std::vector<CommitEvent>& commit_log() const { return commit_log_; }
    double last_cert_triggered_proposal_ms() const { return last_cert_triggered_proposal_ms_; }

    // Committed chains at every honest replica must be prefix-ordered; this
    // is the safety oracle used across the adversarial suites.
    bool honest_chains_prefix_consistent() const {
        for (uint32_t a = 0; a < n_; ++a) {
            if (!is_honest(a)) continue;
            for (uint32_t b = a + 1; b < n_; ++b) {
                if (!is_honest(b)) continue;
                const auto& ca = nodes_[a]->forest().committed_chain();
                const auto& cb = nodes_[b]->forest().committed_chain();
                size_t m = std::min(ca.size(), cb.size());
                for (size_t i = 0; i < m; ++i) {
                    if (ca[i]->id != cb[i]->id) return false;
                }
            }
        }
        return true;
    }

    Report report() const {
        View nominal = cfg_.views > 0 ? cfg_.views : max_entered_view();
        MetricWindow w = default_window(nominal, protocol_commit_depth(cfg_.protocol_enum()));
        return summarize(trace_, cfg_, w);
    }

    View max_entered_view() const {
        View m = 0;
        for (uint32_t i = 0; i < n_; ++i)
            if (is_honest(i) && current_views_[i] > m) m = current_views_[i];
        return m;
    }

    View min_honest_view() const {
        View m = ~0ull;
        for (uint32_t i = 0; i < n_; ++i) {
            if (!is_honest(i) || nodes_[i]->crashed()) continue;
            if (current_views_[i] < m) m = current_views_[i];
        }
        return m == ~0ull ? 0 : m;
    }

    uint64_t total_commits(ReplicaId id) const { return commit_counts_[id]; }

private:
    struct SimEvent {
        double time = 0;
        uint64_t seq = 0;
        ReplicaId dst = 0;
        uint8_t kind = 0;  // 0 msg, 1 timer, 2 submit, 3 control
        Message msg;
        TimerKind tkind = TimerKind::ViewTimeout;
        View tview = 0;
        Transaction tx;
        uint8_t ctrl = 0;
        double ctrl_arg = 0;
    };
    struct Later {
        bool operator()(const SimEvent& a, const SimEvent& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.seq > b.seq;
        }
    };

    void push_event(SimEvent ev) {
        ev.seq = seq_++;
        heap_.push(std::move(ev));
    }

    void push_msg(double t, ReplicaId dst, Message msg) {
        SimEvent ev;
        ev.time = t;
        ev.dst = dst;
        ev.kind = 0;
        ev.msg = std::move(msg);
        push_event(std::move(ev));
    }

    void push_submit(double t, ReplicaId dst, Transaction tx) {
        SimEvent ev;
        ev.time = t;
        ev.dst = dst;
        ev.kind = 2;
        ev.tx = std::move(tx);
        push_event(std::move(ev));
    }

    void push_control(double t, ReplicaId dst, uint8_t ctrl, double arg) {
        SimEvent ev;
        ev.time = t;
        ev.dst = dst;
        ev.kind = 3;
        ev.ctrl = ctrl;
        ev.ctrl_arg = arg;
        push_event(std::move(ev));
    }

    // One-way delay for a message leaving `src` at `now`.
    double sample_delay(ReplicaId src, double now, size_t bytes) {
        double d = 0;
        bool fluct = false;
        for (const auto& f : fluctuations_) {
            if (now >= f.from_ms && now < f.to_ms) {
                std::uniform_real_distribution<double> u(f.delay_lo_ms, f.delay_hi_ms);
                d = u(net_rng_);
                fluct = true;
                break;
            }
        }
        if (!fluct) {
            if (cfg_.net_std > 0) {
                std::normal_distribution<double> nd(cfg_.net_mean, cfg_.net_std);
                d = std::max(0.0, nd(net_rng_));
            } else {
                d = cfg_.net_mean;
            }
        }
        d += cfg_.delay;
        if (src < slow_extra_.size()) d += slow_extra_[src];
        if (cfg_.bandwidth > 0 && bytes > 0)
            d += 2.0 * static_cast<double>(bytes) / cfg_.bandwidth * 1000.0;
        return d;
    }

    void apply_effects(ReplicaId src, const Effects& fx, double now) {
        for (const auto& ob : fx.out) {
            size_t bytes = cfg_.bandwidth > 0 ? ob.msg.encode().size() : 0;
            if (ob.broadcast) {
                for (uint32_t dst = 0; dst < n_; ++dst) {
                    if (dst == src) continue;
                    push_msg(now + ob.cpu_ms + sample_delay(src, now, bytes), dst, ob.msg);
                }
            } else {
                push_msg(now + ob.cpu_ms + sample_delay(src, now, bytes), ob.dst, ob.msg);
            }
        }
        for (const auto& tr : fx.timers) {
            SimEvent ev;
            ev.time = now + tr.delay_ms;
            ev.dst = src;
            ev.kind = 1;
            ev.tkind = tr.kind;
            ev.tview = tr.view;
            push_event(std::move(ev));
        }
        for (const auto& cn : fx.commits) handle_commit(src, cn, now);
        for (const auto& tx : fx.rejected_txs) {
            auto it = trace_.txs.find(tx.key());
            if (it != trace_.txs.end() && !it->second.ack_ms) {
                it->second.rejected = true;
                ++trace_.rejected;
            }
        }
    }

    void handle_commit(ReplicaId src, const CommitNotice& cn, double now) {
        ++commit_counts_[src];
        if (record_commit_log_) commit_log_.push_back({now, src, cn.at_view, cn.block->id});
        if (cn.block->proposer == src) {
            // The proposer is where these transactions entered; it owes the
            // client an acknowledgement.
            for (const auto& tx : cn.block->payload) {
                auto it = trace_.txs.find(tx.key());
                if (it != trace_.txs.end() && !it->second.ack_ms) {
                    it->second.ack_ms = now + sample_delay(src, now, 0);
                    it->second.commit_view = cn.at_view;
                }
            }
        }
    }

    void step_one() {
        SimEvent ev = heap_.top();
        heap_.pop();
        now_ = ev.time;
        switch (ev.kind) {
            case 0:
                apply_effects(ev.dst, nodes_[ev.dst]->on_message(now_, ev.msg), now_);
                break;
            case 1:
                apply_effects(ev.dst, nodes_[ev.dst]->on_timer(now_, ev.tkind, ev.tview), now_);
                break;
            case 2:
                apply_effects(ev.dst, nodes_[ev.dst]->on_submit(now_, ev.tx), now_);
                break;
            case 3:
                if (ev.ctrl == 0)
                    nodes_[ev.dst]->crash();
                else
                    slow_extra_[ev.dst] = ev.ctrl_arg;
                break;
        }
    }

    BenchConfig cfg_;
    uint32_t n_ = 0;
    ReplicaId observer_ = 0;
    std::shared_ptr<CryptoProvider> crypto_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
    std::mt19937_64 net_rng_;
    std::vector<double> slow_extra_;
    std::vector<Fluctuation> fluctuations_;
    std::vector<View> current_views_;
    std::vector<uint64_t> commit_counts_;
    std::vector<CommitEvent> commit_log_;
    RunTrace trace_;
    double now_ = 0;
    uint64_t seq_ = 0;
    bool started_ = false;
    bool record_commit_log_ = false;
    double last_cert_triggered_proposal_ms_ = -1;
};

}  // namespace cbft
