#pragma once

#include <cstdint>
#include <optional>

#include "cbft/types.hpp"

namespace cbft {

enum class LeaderPolicy { RoundRobin, SeededRandom };

// Deterministic leader schedule shared by all replicas. A nonzero static
// master pins every view on one replica.
class LeaderSchedule {
public:
    LeaderSchedule(uint32_t n, ReplicaId master, LeaderPolicy policy, uint64_t seed)
        : n_(n), master_(master), policy_(policy), seed_(seed) {}

    ReplicaId leader_of(View view) const {
        if (master_ != 0) return master_;
        if (policy_ == LeaderPolicy::RoundRobin) return static_cast<ReplicaId>(view % n_);
        // splitmix64 on (seed, view): identical sequence on every replica.
        uint64_t x = seed_ ^ (view * 0x9e3779b97f4a7c15ull);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return static_cast<ReplicaId>(x % n_);
    }

private:
    uint32_t n_;
    ReplicaId master_;
    LeaderPolicy policy_;
    uint64_t seed_;
};

// View synchronization state machine. Owns no timers itself: the runtime
// arms a timer whenever a view is entered and feeds expiries back in.
class Pacemaker {
public:
    struct Advance {
        View new_view;
        bool via_tc;  // TC-driven advances are forwarded to the new leader
    };

    Pacemaker(LeaderSchedule schedule, double timeout_ms)
        : schedule_(schedule), timeout_ms_(timeout_ms) {}

    View current_view() const { return view_; }
    double timeout_ms() const { return timeout_ms_; }
    ReplicaId leader_of(View v) const { return schedule_.leader_of(v); }

    // A certificate for view v moves us to v+1 (certificates formed in the
    // past are stale and ignored).
    std::optional<Advance> on_certificate(View cert_view, bool is_tc) {
        if (cert_view < view_) return std::nullopt;
        view_ = cert_view + 1;
        if (highest_seen_ < cert_view) highest_seen_ = cert_view;
        return Advance{view_, is_tc};
    }

    // Casting a vote in view v is an optimistic step into v+1: the voter has
    // done its part and now waits for the next leader. Without this a silent
    // leader would cost two timeout periods instead of one.
    std::optional<Advance> on_voted(View voted_view) {
        if (voted_view < view_) return std::nullopt;
        view_ = voted_view + 1;
        return Advance{view_, false};
    }

    // True when the expiry belongs to the live view; the caller then
    // broadcasts a timeout message and re-arms.
    bool on_timer_expiry(View timer_view) const { return timer_view == view_; }

    View highest_seen() const { return highest_seen_; }

private:
    LeaderSchedule schedule_;
    double timeout_ms_;
    View view_ = 1;
    View highest_seen_ = 0;
};

}  // namespace cbft
