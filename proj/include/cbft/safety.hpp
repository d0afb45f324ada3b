#pragma once

#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "cbft/forest.hpp"
#include "cbft/types.hpp"

namespace cbft {

enum class Protocol { HotStuff, TwoChainHotStuff, Streamlet };

inline const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::HotStuff: return "hotstuff";
        case Protocol::TwoChainHotStuff: return "2chs";
        case Protocol::Streamlet: return "streamlet";
    }
    return "?";
}

inline std::optional<Protocol> protocol_from_name(const std::string& s) {
    if (s == "hotstuff" || s == "hs") return Protocol::HotStuff;
    if (s == "2chs" || s == "twochain" || s == "two-chain") return Protocol::TwoChainHotStuff;
    if (s == "streamlet" || s == "sl") return Protocol::Streamlet;
    return std::nullopt;
}

struct SafetyState {
    View lv_view = 0;              // last voted view
    BlockHash locked;              // lBlock
    View locked_view = 0;
    QuorumCertificate high_qc;     // hQC
};

struct ProposalBasis {
    BlockHash parent;
    QuorumCertificate justify;
};

struct VoteDecision {
    bool vote = false;
    bool broadcast = false;        // otherwise send to next view's leader
    bool defer = false;            // parent unknown, retry once synced
};

struct QcOutcome {
    std::vector<BlockPtr> committed;  // newly committed, oldest first
    bool high_qc_updated = false;
};

// The four protocol rules behind one interface. A new protocol plugs in by
// implementing proposal_basis / should_vote / on_qc / on_tc against the
// shared forest; everything else in the stack is protocol-agnostic.
class SafetyRules {
public:
    explicit SafetyRules(BlockForest& forest) : forest_(forest) {
        st_.high_qc = genesis_qc();
        st_.locked = genesis_block()->id;
        st_.locked_view = 0;
    }
    virtual ~SafetyRules() = default;

    virtual Protocol protocol() const = 0;
    virtual uint32_t commit_depth() const = 0;
    virtual std::optional<ProposalBasis> proposal_basis(View view) const = 0;
    virtual VoteDecision should_vote(const Block& block) const = 0;
    virtual QcOutcome on_qc(const QuorumCertificate& qc) = 0;

    // Adopt the freshest QC carried by the timeout quorum.
    virtual QcOutcome on_tc(const TimeoutCertificate& tc) {
        if (tc.high_qc.view > st_.high_qc.view) return on_qc(tc.high_qc);
        return {};
    }

    // Called right after a vote is emitted.
    virtual void record_vote(View view) {
        if (view > st_.lv_view) st_.lv_view = view;
    }

    const SafetyState& state() const { return st_; }

protected:
    SafetyState st_;
    BlockForest& forest_;
};

// HotStuff-style chained rules, parameterized by commit depth: 3 gives the
// three-chain protocol, 2 the two-chain variant. The lock tracks the head of
// the highest (depth-1)-chain: the certified block itself at depth 2, its
// parent at depth 3.
class ChainedRules final : public SafetyRules {
public:
    ChainedRules(BlockForest& forest, uint32_t depth) : SafetyRules(forest), depth_(depth) {}

    Protocol protocol() const override {
        return depth_ == 3 ? Protocol::HotStuff : Protocol::TwoChainHotStuff;
    }
    uint32_t commit_depth() const override { return depth_; }

    std::optional<ProposalBasis> proposal_basis(View) const override {
        if (!forest_.contains(st_.high_qc.block)) return std::nullopt;  // not yet synced
        return ProposalBasis{st_.high_qc.block, st_.high_qc};
    }

    // Vote iff the view is fresh and the block extends the lock, or its
    // parent is certified at a higher view than the lock (the unlock clause
    // that keeps the protocol live across forks).
    VoteDecision should_vote(const Block& block) const override {
        VoteDecision d;
        if (block.view <= st_.lv_view) return d;
        BlockPtr parent = forest_.get(block.parent);
        if (!parent) {
            d.defer = true;
            return d;
        }
        bool extends_lock = forest_.extends(block.id, st_.locked) == ExtendsResult::Yes;
        if (extends_lock || parent->view > st_.locked_view) d.vote = true;
        return d;
    }

    QcOutcome on_qc(const QuorumCertificate& qc) override {
        QcOutcome out;
        BlockPtr certified = forest_.get(qc.block);
        if (!certified) return out;  // runtime defers until the block arrives

        if (qc.view > st_.high_qc.view) {
            st_.high_qc = qc;
            out.high_qc_updated = true;
        }

        // Lock update.
        BlockPtr lock_target = depth_ == 2 ? certified : forest_.get(certified->parent);
        if (lock_target && lock_target->view > st_.locked_view) {
            st_.locked = lock_target->id;
            st_.locked_view = lock_target->view;
        }

        // Commit rule: a chain of `depth_` blocks in consecutive views whose
        // tail just got certified commits its head and all its ancestors.
        BlockPtr head = certified;
        bool consecutive = true;
        for (uint32_t i = 1; i < depth_; ++i) {
            BlockPtr p = forest_.get(head->parent);
            if (!p || p->view + 1 != head->view) {
                consecutive = false;
                break;
            }
            head = p;
        }
        if (consecutive && !forest_.is_committed(head->id)) {
            out.committed = forest_.mark_committed(head->id);
        }
        return out;
    }

private:
    uint32_t depth_;
};

// Streamlet: proposals and votes must extend a longest notarized chain, votes
// are broadcast, and a block commits when it is the middle of three notarized
// blocks in consecutive views.
class StreamletRules final : public SafetyRules {
public:
    explicit StreamletRules(BlockForest& forest) : SafetyRules(forest) {
        Notarized g{genesis_qc(), 1};
        notarized_.emplace(genesis_block()->id, g);
        tips_.insert(genesis_block()->id);
        max_len_ = 1;
    }

    Protocol protocol() const override { return Protocol::Streamlet; }
    uint32_t commit_depth() const override { return 2; }

    std::optional<ProposalBasis> proposal_basis(View) const override {
        // Longest notarized chain; ties broken by smallest tip hash so every
        // honest leader picks the same branch.
        const BlockHash* best = nullptr;
        for (const auto& tip : tips_) {
            if (notarized_.at(tip).len != max_len_) continue;
            if (!best || tip < *best) best = &tip;
        }
        if (!best) return std::nullopt;
        return ProposalBasis{*best, notarized_.at(*best).qc};
    }

    VoteDecision should_vote(const Block& block) const override {
        VoteDecision d;
        d.broadcast = true;
        if (voted_views_.count(block.view)) return d;
        auto it = notarized_.find(block.parent);
        if (it == notarized_.end()) {
            // Parent not notarized here yet; its QC rides in the proposal, so
            // defer rather than reject outright.
            d.defer = !forest_.contains(block.parent);
            return d;
        }
        if (it->second.len == max_len_) d.vote = true;
        return d;
    }

    void record_vote(View view) override {
        SafetyRules::record_vote(view);
        voted_views_.insert(view);
    }

    QcOutcome on_qc(const QuorumCertificate& qc) override {
        QcOutcome out;
        if (qc.view > st_.high_qc.view) {
            st_.high_qc = qc;
            out.high_qc_updated = true;
        }
        notarize(qc, out);
        return out;
    }

private:
    struct Notarized {
        QuorumCertificate qc;
        uint64_t len;  // notarized-chain length, genesis = 1
    };

    void notarize(const QuorumCertificate& qc, QcOutcome& out) {
        if (notarized_.count(qc.block)) return;
        BlockPtr block = forest_.get(qc.block);
        if (!block) return;  // deferred by the runtime
        auto pit = notarized_.find(block->parent);
        if (pit == notarized_.end()) {
            pending_.push_back(qc);  // parent's QC is still in flight
            return;
        }

        uint64_t len = pit->second.len + 1;
        notarized_.emplace(qc.block, Notarized{qc, len});
        tips_.erase(block->parent);
        tips_.insert(qc.block);
        if (len > max_len_) max_len_ = len;

        // Three notarized blocks in consecutive views commit the first two
        // (the middle block's chain) and all their ancestors.
        BlockPtr parent = forest_.get(block->parent);
        if (parent && parent->view + 1 == block->view) {
            BlockPtr grand = forest_.get(parent->parent);
            if (grand && grand->view + 1 == parent->view && !forest_.is_committed(parent->id)) {
                auto newly = forest_.mark_committed(parent->id);
                out.committed.insert(out.committed.end(), newly.begin(), newly.end());
            }
        }

        // Anything stuck behind this block can now notarize.
        for (size_t i = 0; i < pending_.size();) {
            if (pending_[i].block != qc.block && forest_.get(pending_[i].block) &&
                forest_.get(pending_[i].block)->parent == qc.block) {
                QuorumCertificate next = pending_[i];
                pending_.erase(pending_.begin() + i);
                notarize(next, out);
                i = 0;
            } else {
                ++i;
            }
        }
    }

    std::unordered_map<BlockHash, Notarized, BlockHashHasher> notarized_;
    std::unordered_set<BlockHash, BlockHashHasher> tips_;
    std::unordered_set<View> voted_views_;
    std::vector<QuorumCertificate> pending_;
    uint64_t max_len_ = 1;
};

inline std::unique_ptr<SafetyRules> make_safety_rules(Protocol p, BlockForest& forest) {
    switch (p) {
        case Protocol::HotStuff: return std::make_unique<ChainedRules>(forest, 3);
        case Protocol::TwoChainHotStuff: return std::make_unique<ChainedRules>(forest, 2);
        case Protocol::Streamlet: return std::make_unique<StreamletRules>(forest);
    }
    return nullptr;
}

inline uint32_t protocol_commit_depth(Protocol p) {
    return p == Protocol::HotStuff ? 3 : 2;
}

}  // namespace cbft
