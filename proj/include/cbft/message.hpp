#pragma once

#include <memory>
#include <optional>
#include <variant>

#include "cbft/types.hpp"

namespace cbft {

struct SyncRequest {
    BlockHash block;
};

struct SyncResponse {
    BlockPtr block;
};

// Everything replicas exchange. Wire format: u32 frame length, 1-byte type
// tag, u32 sender, body in canonical encoding.
struct Message {
    enum class Type : uint8_t {
        Proposal = 1,
        Vote = 2,
        Timeout = 3,
        TC = 4,
        SyncReq = 5,
        SyncResp = 6,
    };

    ReplicaId sender = 0;
    std::variant<BlockPtr, Vote, TimeoutMsg, TimeoutCertificate, SyncRequest, SyncResponse> body;

    Type type() const {
        switch (body.index()) {
            case 0: return Type::Proposal;
            case 1: return Type::Vote;
            case 2: return Type::Timeout;
            case 3: return Type::TC;
            case 4: return Type::SyncReq;
            default: return Type::SyncResp;
        }
    }

    Bytes encode() const {
        ByteWriter w;
        w.u8(static_cast<uint8_t>(type()));
        w.u32(sender);
        switch (type()) {
            case Type::Proposal:
                std::get<BlockPtr>(body)->encode(w);
                break;
            case Type::Vote:
                std::get<Vote>(body).encode(w);
                break;
            case Type::Timeout:
                std::get<TimeoutMsg>(body).encode(w);
                break;
            case Type::TC:
                std::get<TimeoutCertificate>(body).encode(w);
                break;
            case Type::SyncReq: {
                const auto& h = std::get<SyncRequest>(body).block;
                w.raw(BytesView(h.bytes.data(), h.bytes.size()));
                break;
            }
            case Type::SyncResp:
                std::get<SyncResponse>(body).block->encode(w);
                break;
        }
        return w.take();
    }

    static std::optional<Message> decode(BytesView data) {
        ByteReader r(data);
        uint8_t tag = r.u8();
        Message m;
        m.sender = r.u32();
        if (!r.ok()) return std::nullopt;
        switch (static_cast<Type>(tag)) {
            case Type::Proposal: {
                auto b = Block::decode(r);
                if (!b || !r.done()) return std::nullopt;
                m.body = std::make_shared<const Block>(std::move(*b));
                return m;
            }
            case Type::Vote: {
                auto v = Vote::decode(r);
                if (!v || !r.done()) return std::nullopt;
                m.body = std::move(*v);
                return m;
            }
            case Type::Timeout: {
                auto t = TimeoutMsg::decode(r);
                if (!t || !r.done()) return std::nullopt;
                m.body = std::move(*t);
                return m;
            }
            case Type::TC: {
                auto t = TimeoutCertificate::decode(r);
                if (!t || !r.done()) return std::nullopt;
                m.body = std::move(*t);
                return m;
            }
            case Type::SyncReq: {
                SyncRequest s;
                if (!r.fixed(s.block.bytes.data(), 32) || !r.done()) return std::nullopt;
                m.body = s;
                return m;
            }
            case Type::SyncResp: {
                auto b = Block::decode(r);
                if (!b || !r.done()) return std::nullopt;
                m.body = SyncResponse{std::make_shared<const Block>(std::move(*b))};
                return m;
            }
            default:
                return std::nullopt;
        }
    }

    // Dedup key for echo suppression.
    Digest digest() const { return sha256(encode()); }
};

}  // namespace cbft
