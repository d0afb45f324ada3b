#pragma once

#include <cassert>
#include <memory>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cbft/byzantine.hpp"
#include "cbft/forest.hpp"
#include "cbft/mempool.hpp"
#include "cbft/message.hpp"
#include "cbft/pacemaker.hpp"
#include "cbft/quorum.hpp"
#include "cbft/safety.hpp"

namespace cbft {

enum class TimerKind { ViewTimeout, ProposeWait };

enum class ProposalCause { Start, Qc, Tc, Timer, Wait };

inline const char* cause_name(ProposalCause c) {
    switch (c) {
        case ProposalCause::Start: return "start";
        case ProposalCause::Qc: return "qc";
        case ProposalCause::Tc: return "tc";
        case ProposalCause::Timer: return "timer";
        case ProposalCause::Wait: return "wait";
    }
    return "?";
}

struct NodeOptions {
    ReplicaId id = 0;
    uint32_t n = 4;
    Protocol protocol = Protocol::HotStuff;
    double timeout_ms = 100.0;
    size_t bsize = 400;
    size_t memsize = 1000;
    ReplicaId master = 0;
    LeaderPolicy leader_policy = LeaderPolicy::RoundRobin;
    uint64_t seed = 0;
    // When false, a leader entering a view through a TC waits for the rest of
    // the timeout messages (or the full timeout) before proposing. The
    // three-chain protocol is always responsive.
    bool responsive = true;
    double cpu_ms = 0.0;  // virtual cost per crypto operation, charged on sends
    AttackConfig attack;
    std::shared_ptr<CryptoProvider> crypto;
};

struct TimerRequest {
    TimerKind kind;
    View view;
    double delay_ms;
};

struct Outbound {
    ReplicaId dst = 0;
    bool broadcast = false;
    Message msg;
    double cpu_ms = 0.0;
};

struct CommitNotice {
    BlockPtr block;
    View at_view;
};

struct Effects {
    std::vector<Outbound> out;
    std::vector<TimerRequest> timers;
    std::vector<CommitNotice> commits;
    std::vector<Transaction> rejected_txs;  // mempool back-pressure
};

// Observer hooks for traces and experiment assertions; all optional.
class NodeObserver {
public:
    virtual ~NodeObserver() = default;
    virtual void on_proposal_made(ReplicaId, const BlockPtr&, ProposalCause, double) {}
    virtual void on_proposal_seen(ReplicaId, const BlockPtr&, double) {}
    virtual void on_certified(ReplicaId, const QuorumCertificate&, View, double) {}
    virtual void on_commit(ReplicaId, const BlockPtr&, View, double) {}
    virtual void on_timeout_sent(ReplicaId, View, double) {}
    virtual void on_view_entered(ReplicaId, View, bool via_tc, double) {}
    virtual void on_fork_proposed(ReplicaId, const BlockPtr&, double) {}
    virtual void on_equivocation(ReplicaId, View) {}
    virtual void on_rejected_message(ReplicaId, const char*) {}
};

struct NodeCounters {
    uint64_t committed_blocks = 0;
    uint64_t committed_txs = 0;
    uint64_t rejected_msgs = 0;
    uint64_t recycled_txs = 0;
    uint64_t equivocations = 0;
    uint64_t sync_requests = 0;
};

// One replica: a single-threaded state machine over consensus events.
// Callers (deterministic simulation or the socket loop) feed events in and
// apply the returned effects; no internal concurrency.
class Node {
public:
    Node(const NodeOptions& opt, NodeObserver* observer = nullptr)
        : opt_(opt),
          observer_(observer),
          forest_(),
          mempool_(opt.memsize),
          ledger_(opt.n),
          pacemaker_(LeaderSchedule(opt.n, opt.master, opt.leader_policy, opt.seed), opt.timeout_ms),
          safety_(make_safety_rules(opt.protocol, forest_)) {
        assert(opt_.crypto);
        public_hqc_ = genesis_qc();
        responsive_ = opt_.responsive || opt_.protocol == Protocol::HotStuff;
        echo_ = opt_.protocol == Protocol::Streamlet;
    }

    Effects start(double now) {
        Effects fx;
        arm_view_timer(fx);
        if (leader_of(pacemaker_.current_view()) == opt_.id)
            propose(now, ProposalCause::Start, fx);
        return fx;
    }

    Effects on_message(double now, const Message& msg) {
        Effects fx;
        if (crashed_) return fx;
        switch (msg.type()) {
            case Message::Type::Proposal:
                handle_proposal(now, msg.sender, std::get<BlockPtr>(msg.body), fx, /*echoable=*/true);
                break;
            case Message::Type::Vote:
                handle_vote(now, msg, fx);
                break;
            case Message::Type::Timeout:
                handle_timeout_msg(now, msg, fx);
                break;
            case Message::Type::TC:
                handle_tc(now, std::get<TimeoutCertificate>(msg.body), msg.sender, fx, true);
                break;
            case Message::Type::SyncReq: {
                BlockPtr b = forest_.get(std::get<SyncRequest>(msg.body).block);
                if (b) send(fx, msg.sender, Message{opt_.id, SyncResponse{b}}, 0.0);
                break;
            }
            case Message::Type::SyncResp:
                handle_proposal(now, msg.sender, std::get<SyncResponse>(msg.body).block, fx,
                                /*echoable=*/false);
                break;
        }
        return fx;
    }

    Effects on_timer(double now, TimerKind kind, View view) {
        Effects fx;
        if (crashed_) return fx;
        if (kind == TimerKind::ViewTimeout) {
            if (!pacemaker_.on_timer_expiry(view)) return fx;  // stale timer: view moved on
            TimeoutMsg tm;
            tm.view = view;
            tm.signer = opt_.id;
            tm.sig = opt_.crypto->sign(opt_.id, timeout_preimage(view));
            tm.high_qc = safety_->state().high_qc;
            if (observer_) observer_->on_timeout_sent(opt_.id, view, now);
            timeout_senders_[view].insert(opt_.id);
            Message m{opt_.id, tm};
            mark_seen(m);
            broadcast(fx, std::move(m), opt_.cpu_ms);
            // Count our own timeout; re-arm so we re-broadcast at most once
            // per timeout period while the view is stuck.
            if (auto tc = ledger_.process_timeout(tm)) handle_tc(now, *tc, opt_.id, fx, false);
            fx.timers.push_back({TimerKind::ViewTimeout, pacemaker_.current_view(), opt_.timeout_ms});
        } else {  // ProposeWait
            if (pacemaker_.current_view() == view && leader_of(view) == opt_.id &&
                last_proposed_view_ < view) {
                propose(now, ProposalCause::Wait, fx);
            }
        }
        return fx;
    }

    Effects on_submit(double now, const Transaction& tx) {
        Effects fx;
        if (crashed_) return fx;
        (void)now;
        if (mempool_.push_back(tx) == PushResult::Full) fx.rejected_txs.push_back(tx);
        return fx;
    }

    // Admin.
    void crash() { crashed_ = true; }
    bool crashed() const { return crashed_; }

    // Inspection.
    const BlockForest& forest() const { return forest_; }
    const SafetyRules& safety() const { return *safety_; }
    const Pacemaker& pacemaker() const { return pacemaker_; }
    const Mempool& mempool() const { return mempool_; }
    Mempool& mempool() { return mempool_; }
    const NodeCounters& counters() const { return counters_; }
    const NodeOptions& options() const { return opt_; }
    ReplicaId leader_of(View v) const { return pacemaker_.leader_of(v); }

private:
    void send(Effects& fx, ReplicaId dst, Message msg, double cpu) {
        fx.out.push_back({dst, false, std::move(msg), cpu});
    }

    void broadcast(Effects& fx, Message msg, double cpu) {
        fx.out.push_back({0, true, std::move(msg), cpu});
    }

    void arm_view_timer(Effects& fx) {
        fx.timers.push_back({TimerKind::ViewTimeout, pacemaker_.current_view(), opt_.timeout_ms});
    }

    static View message_view(const Message& msg) {
        switch (msg.type()) {
            case Message::Type::Proposal: return std::get<BlockPtr>(msg.body)->view;
            case Message::Type::Vote: return std::get<Vote>(msg.body).view;
            case Message::Type::Timeout: return std::get<TimeoutMsg>(msg.body).view;
            case Message::Type::TC: return std::get<TimeoutCertificate>(msg.body).view;
            default: return 0;
        }
    }

    // Content-addressed dedup for echoing, keyed by view so old entries can
    // be dropped. Returns true the first time a given content is seen.
    bool mark_seen(const Message& msg) {
        Message copy = msg;
        copy.sender = 0;
        Digest d = sha256(copy.encode());
        return echo_seen_[message_view(msg)].insert(d).second;
    }

    void echo(Effects& fx, const Message& msg) {
        Message copy = msg;
        copy.sender = opt_.id;
        broadcast(fx, std::move(copy), 0.0);
    }

    void update_public_hqc(const QuorumCertificate& qc) {
        if (qc.view > public_hqc_.view) public_hqc_ = qc;
    }

    void handle_proposal(double now, ReplicaId from, const BlockPtr& block, Effects& fx,
                         bool echoable) {
        if (!block || !block->check_sig(*opt_.crypto) ||
            !verify_qc(block->justify, opt_.n, *opt_.crypto)) {
            ++counters_.rejected_msgs;
            if (observer_) observer_->on_rejected_message(opt_.id, "bad proposal");
            return;
        }
        if (block->view != 0 && block->proposer != leader_of(block->view)) {
            ++counters_.rejected_msgs;
            if (observer_) observer_->on_rejected_message(opt_.id, "wrong leader");
            return;
        }
        if (echo_ && echoable) {
            Message m{from, block};
            if (mark_seen(m)) echo(fx, m);
        }

        // Vote only for the first proposal seen in a view; a second distinct
        // one is recorded as equivocation and ignored.
        auto [it, fresh] = first_proposal_.try_emplace(block->view, block->id);
        if (!fresh && it->second != block->id) {
            ++counters_.equivocations;
            if (observer_) observer_->on_equivocation(opt_.id, block->view);
            return;
        }

        update_public_hqc(block->justify);

        switch (forest_.add_block(block)) {
            case AddBlockResult::Pending: {
                ++counters_.sync_requests;
                send(fx, from, Message{opt_.id, SyncRequest{block->parent}}, 0.0);
                return;
            }
            case AddBlockResult::Duplicate:
            case AddBlockResult::BelowPrune:
                return;
            case AddBlockResult::Invalid:
                ++counters_.rejected_msgs;
                if (observer_) observer_->on_rejected_message(opt_.id, "view<=parent");
                return;
            case AddBlockResult::Accepted:
                break;
        }

        // The new vertex may have reconnected buffered children; every block
        // that just linked goes through the full proposal path in order.
        for (const auto& connected : forest_.drain_newly_accepted())
            process_connected(now, connected, fx);
    }

    void process_connected(double now, const BlockPtr& block, Effects& fx) {
        if (observer_) observer_->on_proposal_seen(opt_.id, block, now);
        // State updates ride on the embedded certificate first: it certifies
        // the parent and may advance the view.
        process_qc(now, block->justify, fx);

        VoteDecision d = safety_->should_vote(*block);
        if (d.vote) {
            safety_->record_vote(block->view);
            Vote v;
            v.view = block->view;
            v.block = block->id;
            v.voter = opt_.id;
            v.sig = opt_.crypto->sign(opt_.id, vote_preimage(v.view, v.block));
            if (d.broadcast) {
                Message m{opt_.id, v};
                mark_seen(m);
                broadcast(fx, std::move(m), opt_.cpu_ms);
                ingest_vote(now, v, fx);
            } else {
                ReplicaId dst = leader_of(block->view + 1);
                if (dst == opt_.id) {
                    ingest_vote(now, v, fx);
                } else {
                    send(fx, dst, Message{opt_.id, v}, opt_.cpu_ms);
                }
            }
            // Having voted, step into the next view and wait for its leader.
            if (auto adv = pacemaker_.on_voted(block->view)) entered_view(now, *adv, fx);
        }

        // A QC we were sitting on may reference this block.
        auto pit = deferred_qcs_.find(block->id);
        if (pit != deferred_qcs_.end()) {
            QuorumCertificate qc = pit->second;
            deferred_qcs_.erase(pit);
            process_qc(now, qc, fx);
        }
    }

    void handle_vote(double now, const Message& msg, Effects& fx) {
        const Vote& v = std::get<Vote>(msg.body);
        if (echo_ && !mark_seen(msg)) return;  // duplicate via echo
        if (v.voter >= opt_.n ||
            !opt_.crypto->verify(v.voter, vote_preimage(v.view, v.block), v.sig)) {
            ++counters_.rejected_msgs;
            if (observer_) observer_->on_rejected_message(opt_.id, "bad vote");
            return;
        }
        if (echo_) echo(fx, msg);
        ingest_vote(now, v, fx);
    }

    void ingest_vote(double now, const Vote& v, Effects& fx) {
        if (auto qc = ledger_.process_vote(v)) process_qc(now, *qc, fx);
    }

    void handle_timeout_msg(double now, const Message& msg, Effects& fx) {
        const TimeoutMsg& tm = std::get<TimeoutMsg>(msg.body);
        if (echo_ && !mark_seen(msg)) return;
        if (tm.signer >= opt_.n ||
            !opt_.crypto->verify(tm.signer, timeout_preimage(tm.view), tm.sig) ||
            !verify_qc(tm.high_qc, opt_.n, *opt_.crypto)) {
            ++counters_.rejected_msgs;
            if (observer_) observer_->on_rejected_message(opt_.id, "bad timeout");
            return;
        }
        if (echo_) echo(fx, msg);
        update_public_hqc(tm.high_qc);
        timeout_senders_[tm.view].insert(tm.signer);

        // A leader held back in wait mode proposes once the whole membership
        // has reported in.
        if (wait_pending_view_ != 0 && pacemaker_.current_view() == wait_pending_view_ &&
            tm.view + 1 == wait_pending_view_ && timeout_senders_[tm.view].size() == opt_.n &&
            last_proposed_view_ < wait_pending_view_) {
            propose(now, ProposalCause::Wait, fx);
        }

        if (auto tc = ledger_.process_timeout(tm)) handle_tc(now, *tc, msg.sender, fx, false);
    }

    void handle_tc(double now, const TimeoutCertificate& tc, ReplicaId from, Effects& fx,
                   bool from_network) {
        if (from_network) {
            if (!verify_tc(tc, opt_.n, *opt_.crypto)) {
                ++counters_.rejected_msgs;
                if (observer_) observer_->on_rejected_message(opt_.id, "bad tc");
                return;
            }
            if (echo_) {
                Message m{from, tc};
                if (mark_seen(m)) echo(fx, m);
            }
        }
        update_public_hqc(tc.high_qc);

        auto adv = pacemaker_.on_certificate(tc.view, true);
        if (adv) entered_view(now, *adv, fx);
        apply_safety_outcome(now, safety_->on_tc(tc), fx);

        View pv = tc.view + 1;
        if (adv && leader_of(pv) != opt_.id) {
            // Hand the certificate to whoever drives the new view.
            send(fx, leader_of(pv), Message{opt_.id, tc}, 0.0);
        }
        if (pacemaker_.current_view() != pv || leader_of(pv) != opt_.id ||
            last_proposed_view_ >= pv)
            return;
        if (responsive_) {
            propose(now, ProposalCause::Tc, fx);
        } else {
            wait_pending_view_ = pv;
            if (timeout_senders_[tc.view].size() == opt_.n) {
                propose(now, ProposalCause::Wait, fx);
            } else {
                fx.timers.push_back({TimerKind::ProposeWait, pv, opt_.timeout_ms});
            }
        }
    }

    void process_qc(double now, const QuorumCertificate& qc, Effects& fx) {
        if (qc.is_genesis()) return;
        if (!forest_.contains(qc.block)) {
            // Defer until the block shows up; ask around for it.
            if (deferred_qcs_.emplace(qc.block, qc).second) {
                ++counters_.sync_requests;
                broadcast(fx, Message{opt_.id, SyncRequest{qc.block}}, 0.0);
            }
            return;
        }
        if (observer_ && qc.view > highest_certified_seen_) {
            highest_certified_seen_ = qc.view;
            observer_->on_certified(opt_.id, qc, pacemaker_.current_view(), now);
        }
        auto adv = pacemaker_.on_certificate(qc.view, false);
        if (adv) entered_view(now, *adv, fx);
        apply_safety_outcome(now, safety_->on_qc(qc), fx);
        // This certificate is the justification for our proposal whenever it
        // belongs to the view right behind the one we lead. The view may have
        // been entered earlier by our own vote, so do not rely on `adv`.
        View pv = qc.view + 1;
        if (pacemaker_.current_view() == pv && leader_of(pv) == opt_.id &&
            last_proposed_view_ < pv)
            propose(now, ProposalCause::Qc, fx);
    }

    void entered_view(double now, const Pacemaker::Advance& adv, Effects& fx) {
        if (observer_) observer_->on_view_entered(opt_.id, adv.new_view, adv.via_tc, now);
        arm_view_timer(fx);
        if (adv.new_view >= 2) ledger_.gc_below(adv.new_view - 1);
        gc_view_keyed(timeout_senders_, adv.new_view, 2);
        gc_view_keyed(first_proposal_, adv.new_view, 64);
        gc_view_keyed(echo_seen_, adv.new_view, 8);
        if (wait_pending_view_ != 0 && wait_pending_view_ < adv.new_view) wait_pending_view_ = 0;
    }

    template <typename Map>
    static void gc_view_keyed(Map& m, View current, View keep) {
        if (current <= keep) return;
        for (auto it = m.begin(); it != m.end();) {
            if (it->first + keep < current)
                it = m.erase(it);
            else
                ++it;
        }
    }

    void apply_safety_outcome(double now, QcOutcome outcome, Effects& fx) {
        if (outcome.committed.empty()) return;
        View at_view = pacemaker_.current_view();
        for (const auto& b : outcome.committed) {
            ++counters_.committed_blocks;
            counters_.committed_txs += b->payload.size();
            mempool_.mark_committed(b->payload);
            if (observer_) observer_->on_commit(opt_.id, b, at_view, now);
            fx.commits.push_back({b, at_view});
        }
        // Pruning keeps the competitors the voting rules may still need while
        // bounding memory; anything cut loose that we proposed goes back into
        // our queue.
        uint64_t committed_height = forest_.committed_height();
        uint64_t margin = 2ull * safety_->commit_depth();
        if (committed_height > margin) {
            auto discarded = forest_.prune_up_to(committed_height - margin);
            for (const auto& b : discarded) {
                if (b->proposer == opt_.id && !b->payload.empty()) {
                    counters_.recycled_txs += mempool_.recycle_front(b->payload);
                }
            }
        }
    }

    void propose(double now, ProposalCause cause, Effects& fx) {
        View view = pacemaker_.current_view();
        if (last_proposed_view_ >= view) return;

        std::optional<ProposalBasis> basis;
        bool forked = false;
        if (opt_.attack.active_in(view)) {
            if (opt_.attack.kind == AttackKind::Silence) return;  // withhold entirely
            basis = forking_basis(opt_.protocol, forest_, public_hqc_, safety_->state().high_qc);
            forked = basis.has_value();
        }
        if (!basis) basis = safety_->proposal_basis(view);
        if (!basis) return;  // not synced yet; the view will time out

        last_proposed_view_ = view;
        wait_pending_view_ = 0;

        auto block = std::make_shared<Block>();
        block->view = view;
        block->proposer = opt_.id;
        block->parent = basis->parent;
        block->justify = basis->justify;
        block->payload = mempool_.next_payload(opt_.bsize);
        block->seal(*opt_.crypto);
        BlockPtr bp = block;

        update_public_hqc(bp->justify);
        first_proposal_.try_emplace(view, bp->id);
        AddBlockResult r = forest_.add_block(bp);
        (void)r;
        assert(r == AddBlockResult::Accepted);

        if (observer_) {
            observer_->on_proposal_made(opt_.id, bp, cause, now);
            if (forked) observer_->on_fork_proposed(opt_.id, bp, now);
        }
        // Proposals triggered by a fresh certificate also carry the cost of
        // assembling it.
        double cpu = cause == ProposalCause::Qc ? 2 * opt_.cpu_ms : opt_.cpu_ms;
        Message m{opt_.id, bp};
        if (echo_) mark_seen(m);
        broadcast(fx, std::move(m), cpu);
        for (const auto& connected : forest_.drain_newly_accepted())
            process_connected(now, connected, fx);
    }

    NodeOptions opt_;
    NodeObserver* observer_;
    BlockForest forest_;
    Mempool mempool_;
    VoteLedger ledger_;
    Pacemaker pacemaker_;
    std::unique_ptr<SafetyRules> safety_;
    QuorumCertificate public_hqc_;  // highest QC visible to everyone
    NodeCounters counters_;

    std::unordered_map<View, BlockHash> first_proposal_;
    std::unordered_map<BlockHash, QuorumCertificate, BlockHashHasher> deferred_qcs_;
    std::unordered_map<View, std::set<ReplicaId>> timeout_senders_;
    std::unordered_map<View, std::unordered_set<Digest, DigestHasher>> echo_seen_;
    View last_proposed_view_ = 0;
    View wait_pending_view_ = 0;
    View highest_certified_seen_ = 0;
    bool crashed_ = false;
    bool responsive_ = true;
    bool echo_ = false;
};

}  // namespace cbft
