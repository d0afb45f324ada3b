#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "cbft/bytes.hpp"
#include "cbft/crypto.hpp"

namespace cbft {

using ReplicaId = uint32_t;
using View = uint64_t;

struct BlockHash {
    Digest bytes{};

    bool operator==(const BlockHash&) const = default;
    auto operator<=>(const BlockHash&) const = default;
    bool is_zero() const {
        for (uint8_t b : bytes)
            if (b) return false;
        return true;
    }
    std::string hex() const { return to_hex(BytesView(bytes.data(), bytes.size())); }
};

struct BlockHashHasher {
    size_t operator()(const BlockHash& h) const {
        size_t v;
        std::memcpy(&v, h.bytes.data(), sizeof(v));
        return v;
    }
};

inline uint32_t fault_bound(uint32_t n) { return (n - 1) / 3; }
inline uint32_t quorum_size(uint32_t n) { return 2 * fault_bound(n) + 1; }

struct Transaction {
    uint64_t id = 0;        // unique per client
    uint32_t client = 0;
    uint64_t submit_us = 0; // client-side timestamp, microseconds
    Bytes payload;

    void encode(ByteWriter& w) const {
        w.u64(id);
        w.u32(client);
        w.u64(submit_us);
        w.blob(payload);
    }

    static std::optional<Transaction> decode(ByteReader& r, size_t max_payload = 1u << 22) {
        Transaction t;
        t.id = r.u64();
        t.client = r.u32();
        t.submit_us = r.u64();
        t.payload = r.blob(max_payload);
        if (!r.ok()) return std::nullopt;
        return t;
    }

    // (client, id) identifies a transaction across the cluster.
    uint64_t key() const { return (uint64_t(client) << 40) ^ id; }
};

struct QuorumCertificate {
    View view = 0;
    BlockHash block;
    std::vector<ReplicaId> signers;   // sorted ascending
    std::vector<Signature> sigs;      // aligned with signers

    bool is_genesis() const { return view == 0 && signers.empty(); }

    void encode(ByteWriter& w) const {
        w.u64(view);
        w.raw(BytesView(block.bytes.data(), block.bytes.size()));
        w.u32(static_cast<uint32_t>(signers.size()));
        for (size_t i = 0; i < signers.size(); ++i) {
            w.u32(signers[i]);
            w.blob(sigs[i].bytes);
        }
    }

    static std::optional<QuorumCertificate> decode(ByteReader& r) {
        QuorumCertificate qc;
        qc.view = r.u64();
        if (!r.fixed(qc.block.bytes.data(), 32)) return std::nullopt;
        uint32_t n = r.u32();
        if (n > 4096 || !r.ok()) return std::nullopt;
        qc.signers.reserve(n);
        qc.sigs.reserve(n);
        for (uint32_t i = 0; i < n; ++i) {
            qc.signers.push_back(r.u32());
            qc.sigs.push_back(Signature{r.blob(256)});
        }
        if (!r.ok()) return std::nullopt;
        return qc;
    }

    bool operator==(const QuorumCertificate& o) const { return view == o.view && block == o.block; }
};

// Preimage a vote signature covers: (view, block).
inline Bytes vote_preimage(View view, const BlockHash& block) {
    ByteWriter w;
    w.u8('V');
    w.u64(view);
    w.raw(BytesView(block.bytes.data(), block.bytes.size()));
    return w.take();
}

inline Bytes timeout_preimage(View view) {
    ByteWriter w;
    w.u8('T');
    w.u64(view);
    return w.take();
}

struct Vote {
    View view = 0;
    BlockHash block;
    ReplicaId voter = 0;
    Signature sig;

    void encode(ByteWriter& w) const {
        w.u64(view);
        w.raw(BytesView(block.bytes.data(), block.bytes.size()));
        w.u32(voter);
        w.blob(sig.bytes);
    }

    static std::optional<Vote> decode(ByteReader& r) {
        Vote v;
        v.view = r.u64();
        if (!r.fixed(v.block.bytes.data(), 32)) return std::nullopt;
        v.voter = r.u32();
        v.sig.bytes = r.blob(256);
        if (!r.ok()) return std::nullopt;
        return v;
    }
};

struct TimeoutMsg {
    View view = 0;
    ReplicaId signer = 0;
    Signature sig;
    QuorumCertificate high_qc;  // sender's highest QC, for the next leader

    void encode(ByteWriter& w) const {
        w.u64(view);
        w.u32(signer);
        w.blob(sig.bytes);
        high_qc.encode(w);
    }

    static std::optional<TimeoutMsg> decode(ByteReader& r) {
        TimeoutMsg t;
        t.view = r.u64();
        t.signer = r.u32();
        t.sig.bytes = r.blob(256);
        auto qc = QuorumCertificate::decode(r);
        if (!qc || !r.ok()) return std::nullopt;
        t.high_qc = std::move(*qc);
        return t;
    }
};

struct TimeoutCertificate {
    View view = 0;
    std::vector<ReplicaId> signers;
    std::vector<Signature> sigs;
    QuorumCertificate high_qc;  // max-view QC among the aggregated timeouts

    void encode(ByteWriter& w) const {
        w.u64(view);
        w.u32(static_cast<uint32_t>(signers.size()));
        for (size_t i = 0; i < signers.size(); ++i) {
            w.u32(signers[i]);
            w.blob(sigs[i].bytes);
        }
        high_qc.encode(w);
    }

    static std::optional<TimeoutCertificate> decode(ByteReader& r) {
        TimeoutCertificate tc;
        tc.view = r.u64();
        uint32_t n = r.u32();
        if (n > 4096 || !r.ok()) return std::nullopt;
        for (uint32_t i = 0; i < n; ++i) {
            tc.signers.push_back(r.u32());
            tc.sigs.push_back(Signature{r.blob(256)});
        }
        auto qc = QuorumCertificate::decode(r);
        if (!qc || !r.ok()) return std::nullopt;
        tc.high_qc = std::move(*qc);
        return tc;
    }
};

struct Block {
    BlockHash id;          // content hash, set by seal()
    View view = 0;
    ReplicaId proposer = 0;
    BlockHash parent;
    QuorumCertificate justify;  // certifies the parent
    std::vector<Transaction> payload;
    Signature sig;

    // Digest over everything except id and sig.
    void encode_preimage(ByteWriter& w) const {
        w.u8('B');
        w.u64(view);
        w.u32(proposer);
        w.raw(BytesView(parent.bytes.data(), parent.bytes.size()));
        justify.encode(w);
        w.u32(static_cast<uint32_t>(payload.size()));
        for (const auto& tx : payload) tx.encode(w);
    }

    void encode(ByteWriter& w) const {
        encode_preimage(w);
        w.blob(sig.bytes);
    }

    static std::optional<Block> decode(ByteReader& r) {
        Block b;
        if (r.u8() != 'B') return std::nullopt;
        b.view = r.u64();
        b.proposer = r.u32();
        if (!r.fixed(b.parent.bytes.data(), 32)) return std::nullopt;
        auto qc = QuorumCertificate::decode(r);
        if (!qc) return std::nullopt;
        b.justify = std::move(*qc);
        uint32_t n = r.u32();
        if (n > 1u << 20 || !r.ok()) return std::nullopt;
        b.payload.reserve(n);
        for (uint32_t i = 0; i < n; ++i) {
            auto tx = Transaction::decode(r);
            if (!tx) return std::nullopt;
            b.payload.push_back(std::move(*tx));
        }
        b.sig.bytes = r.blob(256);
        if (!r.ok()) return std::nullopt;
        b.id = compute_hash(b);
        return b;
    }

    static BlockHash compute_hash(const Block& b) {
        ByteWriter w;
        b.encode_preimage(w);
        return BlockHash{sha256(w.bytes())};
    }

    void seal(const CryptoProvider& crypto) {
        id = compute_hash(*this);
        sig = crypto.sign(proposer, BytesView(id.bytes.data(), id.bytes.size()));
    }

    bool check_sig(const CryptoProvider& crypto) const {
        return crypto.verify(proposer, BytesView(id.bytes.data(), id.bytes.size()), sig);
    }
};

using BlockPtr = std::shared_ptr<const Block>;

inline BlockHash hash_block(const Block& b) { return Block::compute_hash(b); }

// Well-known view-0 block every replica starts from. Its justify is an empty
// QC over the zero hash; children justify it with an empty QC over its id.
inline BlockPtr genesis_block() {
    static const BlockPtr g = [] {
        auto b = std::make_shared<Block>();
        b->view = 0;
        b->proposer = 0;
        b->parent = BlockHash{};  // nil
        b->justify = QuorumCertificate{};
        b->id = Block::compute_hash(*b);
        return BlockPtr(b);
    }();
    return g;
}

inline QuorumCertificate genesis_qc() {
    QuorumCertificate qc;
    qc.view = 0;
    qc.block = genesis_block()->id;
    return qc;
}

// A QC is well formed iff it has 2f+1 distinct signers with valid signatures.
// The empty genesis QC is valid by convention.
inline bool verify_qc(const QuorumCertificate& qc, uint32_t n, const CryptoProvider& crypto) {
    if (qc.is_genesis()) return qc.block == genesis_block()->id || qc.block.is_zero();
    if (qc.signers.size() != qc.sigs.size()) return false;
    if (qc.signers.size() < quorum_size(n)) return false;
    Bytes pre = vote_preimage(qc.view, qc.block);
    for (size_t i = 0; i < qc.signers.size(); ++i) {
        if (i > 0 && qc.signers[i] <= qc.signers[i - 1]) return false;  // sorted, distinct
        if (qc.signers[i] >= n) return false;
        if (!crypto.verify(qc.signers[i], pre, qc.sigs[i])) return false;
    }
    return true;
}

inline bool verify_tc(const TimeoutCertificate& tc, uint32_t n, const CryptoProvider& crypto) {
    if (tc.signers.size() != tc.sigs.size()) return false;
    if (tc.signers.size() < quorum_size(n)) return false;
    Bytes pre = timeout_preimage(tc.view);
    for (size_t i = 0; i < tc.signers.size(); ++i) {
        if (i > 0 && tc.signers[i] <= tc.signers[i - 1]) return false;
        if (tc.signers[i] >= n) return false;
        if (!crypto.verify(tc.signers[i], pre, tc.sigs[i])) return false;
    }
    return verify_qc(tc.high_qc, n, crypto);
}

}  // namespace cbft
