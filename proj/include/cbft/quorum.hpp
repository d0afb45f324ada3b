#pragma once

#include <map>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "cbft/types.hpp"

namespace cbft {

// Accumulates votes into QCs and timeout messages into TCs. One vote per
// voter per (view, block) is counted; a certificate is emitted exactly once,
// the first time the distinct-signer count reaches 2f+1. Votes for blocks we
// have not seen yet are retained: with broadcast voting they can precede the
// proposal.
class VoteLedger {
public:
    explicit VoteLedger(uint32_t n) : n_(n), quorum_(quorum_size(n)) {}

    std::optional<QuorumCertificate> process_vote(const Vote& vote) {
        VoteKey key{vote.view, vote.block};
        auto& entry = votes_[key];
        if (entry.emitted) return std::nullopt;
        if (!entry.by_voter.emplace(vote.voter, vote.sig).second) return std::nullopt;  // dup voter
        if (entry.by_voter.size() < quorum_) return std::nullopt;

        entry.emitted = true;
        QuorumCertificate qc;
        qc.view = vote.view;
        qc.block = vote.block;
        for (const auto& [voter, sig] : entry.by_voter) {
            qc.signers.push_back(voter);
            qc.sigs.push_back(sig);
        }
        return qc;
    }

    std::optional<TimeoutCertificate> process_timeout(const TimeoutMsg& msg) {
        auto& entry = timeouts_[msg.view];
        if (entry.emitted) return std::nullopt;
        if (!entry.by_signer.emplace(msg.signer, msg.sig).second) return std::nullopt;
        if (entry.high_qc.view < msg.high_qc.view) entry.high_qc = msg.high_qc;
        if (entry.by_signer.size() < quorum_) return std::nullopt;

        entry.emitted = true;
        TimeoutCertificate tc;
        tc.view = msg.view;
        for (const auto& [signer, sig] : entry.by_signer) {
            tc.signers.push_back(signer);
            tc.sigs.push_back(sig);
        }
        tc.high_qc = entry.high_qc;
        return tc;
    }

    // Entries strictly below `view` can no longer produce a useful
    // certificate; drop them to bound memory.
    void gc_below(View view) {
        for (auto it = votes_.begin(); it != votes_.end();) {
            if (it->first.view < view)
                it = votes_.erase(it);
            else
                ++it;
        }
        for (auto it = timeouts_.begin(); it != timeouts_.end();) {
            if (it->first < view)
                it = timeouts_.erase(it);
            else
                ++it;
        }
    }

    size_t pending_vote_keys() const { return votes_.size(); }

private:
    struct VoteKey {
        View view;
        BlockHash block;
        bool operator==(const VoteKey&) const = default;
    };
    struct VoteKeyHasher {
        size_t operator()(const VoteKey& k) const {
            return BlockHashHasher{}(k.block) ^ (k.view * 0x9e3779b97f4a7c15ull);
        }
    };
    struct VoteEntry {
        std::map<ReplicaId, Signature> by_voter;  // ordered: QC signers come out sorted
        bool emitted = false;
    };
    struct TimeoutEntry {
        std::map<ReplicaId, Signature> by_signer;
        QuorumCertificate high_qc;
        bool emitted = false;
    };

    uint32_t n_;
    uint32_t quorum_;
    std::unordered_map<VoteKey, VoteEntry, VoteKeyHasher> votes_;
    std::unordered_map<View, TimeoutEntry> timeouts_;
};

}  // namespace cbft
