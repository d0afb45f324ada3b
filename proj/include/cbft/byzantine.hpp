#pragma once

#include <optional>
#include <unordered_set>

#include "cbft/forest.hpp"
#include "cbft/safety.hpp"

namespace cbft {

enum class AttackKind { None, Silence, Forking };

inline std::optional<AttackKind> attack_from_name(const std::string& s) {
    if (s == "silence") return AttackKind::Silence;
    if (s == "forking") return AttackKind::Forking;
    if (s == "none" || s.empty()) return AttackKind::None;
    return std::nullopt;
}

// Leader-side attack strategies. Attackers follow the protocol everywhere
// except the proposing rule in their own leader views, and every message they
// emit still passes honest-side verification.
struct AttackConfig {
    AttackKind kind = AttackKind::None;
    // Restrict the attack to specific views (scripted experiments); empty
    // means every leader view.
    std::unordered_set<View> only_views;

    bool active_in(View v) const {
        if (kind == AttackKind::None) return false;
        return only_views.empty() || only_views.count(v) > 0;
    }
};

// Picks the fork target for a forking proposal: the deepest ancestor of the
// publicly known certified tip that honest replicas will still vote for.
// That is exactly the honest lock: the certified block itself under the
// two-chain rules, its parent under three-chain. Returns the basis for the
// fork, or nothing when no admissible fork exists (the attacker then falls
// back to an honest proposal).
inline std::optional<ProposalBasis> forking_basis(Protocol protocol,
                                                  const BlockForest& forest,
                                                  const QuorumCertificate& public_hqc,
                                                  const QuorumCertificate& own_hqc) {
    if (protocol == Protocol::Streamlet) return std::nullopt;  // honest voters reject any fork

    BlockPtr public_tip = forest.get(public_hqc.block);
    if (!public_tip || public_tip->view == 0) return std::nullopt;

    ProposalBasis basis;
    if (protocol == Protocol::TwoChainHotStuff) {
        basis.parent = public_hqc.block;
        basis.justify = public_hqc;
    } else {
        // Honest lock = parent of the public certified tip; its QC is the
        // justify carried inside that tip.
        basis.parent = public_tip->parent;
        basis.justify = public_tip->justify;
        if (!forest.contains(basis.parent)) return std::nullopt;
    }
    // Proposing on our own certified tip would just be the honest proposal.
    if (basis.parent == own_hqc.block) return std::nullopt;
    return basis;
}

}  // namespace cbft
