#pragma once

#include <deque>
#include <list>
#include <mutex>
#include <unordered_map>
#include <unordered_set>

#include "cbft/types.hpp"

namespace cbft {

enum class PushResult { Accepted, Full, Duplicate };

// Per-replica transaction queue. New transactions enter at the back;
// transactions recovered from forked blocks re-enter at the front so they
// keep their place in line. Linearizable: client ingress and the consensus
// loop touch it concurrently in socket mode.
class Mempool {
public:
    explicit Mempool(size_t capacity) : capacity_(capacity), committed_cap_(10 * capacity) {}

    PushResult push_back(const Transaction& tx) {
        std::lock_guard lk(mu_);
        uint64_t k = tx.key();
        if (present_.count(k) || committed_filter_.count(k)) return PushResult::Duplicate;
        if (queue_.size() >= capacity_) return PushResult::Full;
        queue_.push_back(tx);
        present_.insert(k);
        return PushResult::Accepted;
    }

    // Reinserts not-yet-committed transactions at the front, preserving their
    // original order. Returns how many were actually reinserted.
    size_t recycle_front(const std::vector<Transaction>& txs) {
        std::lock_guard lk(mu_);
        size_t count = 0;
        for (auto it = txs.rbegin(); it != txs.rend(); ++it) {
            uint64_t k = it->key();
            if (committed_filter_.count(k) || present_.count(k)) continue;
            queue_.push_front(*it);
            present_.insert(k);
            ++count;
        }
        return count;
    }

    // Removes and returns up to `bsize` front transactions; whatever is
    // available if the pool is smaller. Empty result means an empty block.
    std::vector<Transaction> next_payload(size_t bsize) {
        std::lock_guard lk(mu_);
        size_t n = std::min(bsize, queue_.size());
        std::vector<Transaction> out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i) {
            out.push_back(std::move(queue_.front()));
            present_.erase(out.back().key());
            queue_.pop_front();
        }
        return out;
    }

    // Records commits for at-most-once accounting; drops any queued copy.
    void mark_committed(const std::vector<Transaction>& txs) {
        std::lock_guard lk(mu_);
        for (const auto& tx : txs) {
            uint64_t k = tx.key();
            remember_committed(k);
            if (present_.erase(k)) {
                for (auto it = queue_.begin(); it != queue_.end(); ++it) {
                    if (it->key() == k) {
                        queue_.erase(it);
                        break;
                    }
                }
            }
        }
    }

    bool is_committed(uint64_t key) const {
        std::lock_guard lk(mu_);
        return committed_filter_.count(key) > 0;
    }

    size_t size() const {
        std::lock_guard lk(mu_);
        return queue_.size();
    }

private:
    // Bounded LRU so the committed-id filter cannot grow without limit.
    void remember_committed(uint64_t k) {
        if (committed_filter_.emplace(k).second) {
            committed_order_.push_back(k);
            if (committed_order_.size() > committed_cap_) {
                committed_filter_.erase(committed_order_.front());
                committed_order_.pop_front();
            }
        }
    }

    mutable std::mutex mu_;
    std::deque<Transaction> queue_;
    std::unordered_set<uint64_t> present_;
    std::unordered_set<uint64_t> committed_filter_;
    std::deque<uint64_t> committed_order_;
    size_t capacity_;
    size_t committed_cap_;
};

}  // namespace cbft
