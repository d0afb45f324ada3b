#pragma once

#include <cstdint>
#include <deque>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cbft/types.hpp"

namespace cbft {

enum class AddBlockResult {
    Accepted,
    Pending,     // parent unknown, buffered
    Duplicate,
    BelowPrune,
    Invalid,     // view <= parent view: equivocation or corruption
};

enum class ExtendsResult { Yes, No, UnknownBlock };

// Height-indexed multi-tree of blocks. Heights are structural
// (parent height + 1) and independent of views, which may skip.
// Committed blocks move to an archive on pruning and stay queryable.
class BlockForest {
public:
    struct Vertex {
        BlockPtr block;
        uint64_t height = 0;
        bool committed = false;
        std::vector<BlockHash> children;
    };

    explicit BlockForest(size_t pending_cap = 1024) : pending_cap_(pending_cap) {
        auto g = genesis_block();
        Vertex v;
        v.block = g;
        v.height = 0;
        v.committed = true;
        vertices_.emplace(g->id, std::move(v));
        committed_chain_.push_back(g);
        committed_tip_ = g->id;
        committed_height_ = 0;
    }

    AddBlockResult add_block(BlockPtr block) {
        const BlockHash& h = block->id;
        if (vertices_.count(h) || archived_.count(h)) return AddBlockResult::Duplicate;
        if (pending_.count(h)) return AddBlockResult::Pending;

        auto pit = vertices_.find(block->parent);
        if (pit == vertices_.end()) {
            auto ait = archived_.find(block->parent);
            if (ait != archived_.end()) {
                // Parent already archived: anything below the committed tip is dead.
                return AddBlockResult::BelowPrune;
            }
            if (block->justify.view + 1 <= pruned_view_barrier_) return AddBlockResult::BelowPrune;
            buffer_pending(std::move(block));
            return AddBlockResult::Pending;
        }

        if (block->view <= pit->second.block->view) return AddBlockResult::Invalid;
        if (pit->second.height + 1 <= pruning_height_) return AddBlockResult::BelowPrune;

        link(block, pit->second.height + 1);
        return AddBlockResult::Accepted;
    }

    ExtendsResult extends(const BlockHash& descendant, const BlockHash& ancestor) const {
        const Vertex* d = find(descendant);
        if (!d) return ExtendsResult::UnknownBlock;
        if (!find(ancestor)) return ExtendsResult::UnknownBlock;
        uint64_t target_height = find(ancestor)->height;
        const Vertex* cur = d;
        while (cur && cur->height > target_height) {
            BlockHash parent = cur->block->parent;  // copy: cur may alias the archive scratch
            cur = find(parent);
        }
        if (!cur) return ExtendsResult::No;
        return cur->block->id == ancestor ? ExtendsResult::Yes : ExtendsResult::No;
    }

    // Discards every vertex at or below `height` that is not committed;
    // committed ones move to the archive. Detached children stay queryable.
    std::vector<BlockPtr> prune_up_to(uint64_t height) {
        std::vector<BlockPtr> discarded;
        if (height < pruning_height_) return discarded;
        pruning_height_ = height;

        std::vector<BlockHash> doomed;
        for (auto& [h, v] : vertices_) {
            if (v.height == 0) continue;  // genesis stays as the archive root
            if (v.height > height) continue;
            doomed.push_back(h);
        }
        for (const auto& h : doomed) {
            auto it = vertices_.find(h);
            if (it == vertices_.end()) continue;
            if (it->second.committed) {
                archived_.emplace(h, ArchivedBlock{it->second.block, it->second.height});
                if (it->second.block->view + 1 > pruned_view_barrier_)
                    pruned_view_barrier_ = it->second.block->view + 1;
            } else {
                discarded.push_back(it->second.block);
            }
            vertices_.erase(it);
        }
        // Pending blocks that can never connect any more are dropped too.
        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->second->justify.view + 1 <= pruned_view_barrier_) {
                discarded.push_back(it->second);
                pending_order_erase(it->first);
                it = pending_.erase(it);
            } else {
                ++it;
            }
        }
        return discarded;
    }

    // Marks a block committed; walks down to the last committed ancestor so
    // the chain never gains gaps. Returns blocks newly committed, oldest first.
    std::vector<BlockPtr> mark_committed(const BlockHash& h) {
        std::vector<BlockPtr> newly;
        Vertex* v = find_mut(h);
        while (v && !v->committed) {
            v->committed = true;
            newly.push_back(v->block);
            v = find_mut(v->block->parent);
        }
        for (auto it = newly.rbegin(); it != newly.rend(); ++it) {
            committed_chain_.push_back(*it);
            committed_tip_ = (*it)->id;
            ++committed_height_;
        }
        std::vector<BlockPtr> out(newly.rbegin(), newly.rend());
        return out;
    }

    // Genesis through committed tip, parent-linked.
    const std::vector<BlockPtr>& committed_chain() const { return committed_chain_; }
    const BlockHash& committed_tip() const { return committed_tip_; }
    uint64_t committed_height() const { return committed_height_; }
    uint64_t pruning_height() const { return pruning_height_; }

    BlockPtr get(const BlockHash& h) const {
        const Vertex* v = find(h);
        return v ? v->block : nullptr;
    }

    bool contains(const BlockHash& h) const { return find(h) != nullptr; }
    bool is_committed(const BlockHash& h) const {
        const Vertex* v = find(h);
        return v && v->committed;
    }

    std::optional<uint64_t> height_of(const BlockHash& h) const {
        const Vertex* v = find(h);
        if (!v) return std::nullopt;
        return v->height;
    }

    BlockPtr parent_of(const BlockHash& h) const {
        const Vertex* v = find(h);
        if (!v) return nullptr;
        return get(v->block->parent);
    }

    size_t live_size() const { return vertices_.size(); }
    size_t pending_size() const { return pending_.size(); }

    template <typename Fn>
    void for_each_live(Fn&& fn) const {
        for (const auto& [h, v] : vertices_) fn(v);
    }

private:
    struct ArchivedBlock {
        BlockPtr block;
        uint64_t height;
    };

    const Vertex* find(const BlockHash& h) const {
        auto it = vertices_.find(h);
        if (it != vertices_.end()) return &it->second;
        auto ait = archived_.find(h);
        if (ait != archived_.end()) {
            // Materialize a read-only view of archived vertices on demand.
            scratch_.block = ait->second.block;
            scratch_.height = ait->second.height;
            scratch_.committed = true;
            scratch_.children.clear();
            return &scratch_;
        }
        return nullptr;
    }

    Vertex* find_mut(const BlockHash& h) {
        auto it = vertices_.find(h);
        return it == vertices_.end() ? nullptr : &it->second;
    }

    void link(BlockPtr block, uint64_t height) {
        Vertex v;
        v.block = block;
        v.height = height;
        BlockHash h = block->id;
        vertices_.emplace(h, std::move(v));
        vertices_[block->parent].children.push_back(h);
        accepted_hook(block);
        relink_pending(h, height);
    }

    void relink_pending(const BlockHash& parent, uint64_t parent_height) {
        std::vector<BlockPtr> ready;
        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->second->parent == parent) {
                ready.push_back(it->second);
                pending_order_erase(it->first);
                it = pending_.erase(it);
            } else {
                ++it;
            }
        }
        for (auto& b : ready) {
            if (b->view <= find(parent)->block->view) continue;  // drop invalid stragglers
            link(b, parent_height + 1);
        }
    }

    void buffer_pending(BlockPtr block) {
        if (pending_.size() >= pending_cap_ && !pending_order_.empty()) {
            pending_.erase(pending_order_.front());  // oldest-first eviction; re-fetchable via sync
            pending_order_.pop_front();
        }
        pending_order_.push_back(block->id);
        pending_.emplace(block->id, std::move(block));
    }

    void pending_order_erase(const BlockHash& h) {
        for (auto it = pending_order_.begin(); it != pending_order_.end(); ++it) {
            if (*it == h) {
                pending_order_.erase(it);
                return;
            }
        }
    }

    void accepted_hook(const BlockPtr& b) { newly_accepted_.push_back(b); }

public:
    // Blocks linked since the last drain, including pending blocks that just
    // connected. The runtime uses this to re-run voting on deferred proposals.
    std::vector<BlockPtr> drain_newly_accepted() {
        auto out = std::move(newly_accepted_);
        newly_accepted_.clear();
        return out;
    }

private:
    std::unordered_map<BlockHash, Vertex, BlockHashHasher> vertices_;
    std::unordered_map<BlockHash, ArchivedBlock, BlockHashHasher> archived_;
    std::unordered_map<BlockHash, BlockPtr, BlockHashHasher> pending_;
    std::deque<BlockHash> pending_order_;
    std::vector<BlockPtr> committed_chain_;
    std::vector<BlockPtr> newly_accepted_;
    BlockHash committed_tip_;
    uint64_t committed_height_ = 0;
    uint64_t pruning_height_ = 0;
    View pruned_view_barrier_ = 0;  // justify views at or below this can never link
    size_t pending_cap_;
    mutable Vertex scratch_;
};

// Append-only log of committed blocks in canonical encoding, replayable
// for audit or cross-replica consistency checks.
class ArchiveLog {
public:
    void append(const Block& b) {
        ByteWriter w;
        b.encode(w);
        ByteWriter framed;
        framed.blob(w.bytes());
        const Bytes& f = framed.bytes();
        data_.insert(data_.end(), f.begin(), f.end());
        ++count_;
    }

    const Bytes& data() const { return data_; }
    size_t count() const { return count_; }

    static std::vector<Block> replay(BytesView data) {
        std::vector<Block> out;
        ByteReader r(data);
        while (r.ok() && r.remaining() > 0) {
            Bytes frame = r.blob();
            if (!r.ok()) break;
            ByteReader br(frame);
            auto b = Block::decode(br);
            if (!b || !br.done()) break;
            out.push_back(std::move(*b));
        }
        return out;
    }

private:
    Bytes data_;
    size_t count_ = 0;
};

}  // namespace cbft
