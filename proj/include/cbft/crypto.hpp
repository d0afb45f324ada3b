#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <vector>

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/ec.h>
#include <openssl/evp.h>
#include <openssl/param_build.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include "cbft/bytes.hpp"

namespace cbft {

using Digest = std::array<uint8_t, 32>;

inline Digest sha256(BytesView data) {
    Digest d;
    SHA256(data.data(), data.size(), d.data());
    return d;
}

struct DigestHasher {
    size_t operator()(const Digest& d) const {
        size_t v;
        std::memcpy(&v, d.data(), sizeof(v));
        return v;
    }
};

struct Signature {
    Bytes bytes;
    bool operator==(const Signature&) const = default;
};

// Signing backend shared by all replicas of a cluster. Implementations must
// never throw on malformed signatures; verification just returns false.
class CryptoProvider {
public:
    virtual ~CryptoProvider() = default;
    virtual Signature sign(uint32_t signer, BytesView msg) const = 0;
    virtual bool verify(uint32_t signer, BytesView msg, const Signature& sig) const = 0;
    virtual double cost_hint_ms() const { return 0.0; }
};

// Identity-style signatures for deterministic simulation: the "signature" is
// a keyed digest any party can recompute. Fast and reproducible, zero security.
class NullCrypto final : public CryptoProvider {
public:
    Signature sign(uint32_t signer, BytesView msg) const override {
        ByteWriter w;
        w.u8(0x4e);
        w.u32(signer);
        Digest d = sha256(msg);
        w.raw(BytesView(d.data(), 16));
        return Signature{w.take()};
    }

    bool verify(uint32_t signer, BytesView msg, const Signature& sig) const override {
        if (sig.bytes.size() != 21) return false;
        return sign(signer, msg).bytes == sig.bytes;
    }
};

namespace detail {

struct EvpKeyDeleter {
    void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
using EvpKey = std::unique_ptr<EVP_PKEY, EvpKeyDeleter>;

inline EvpKey secp256k1_keypair_from_scalar(const Bytes& scalar) {
    BIGNUM* priv = BN_bin2bn(scalar.data(), static_cast<int>(scalar.size()), nullptr);
    if (!priv) throw std::runtime_error("BN_bin2bn failed");

    EC_GROUP* group = EC_GROUP_new_by_curve_name(NID_secp256k1);
    EC_POINT* pub = EC_POINT_new(group);
    BN_CTX* ctx = BN_CTX_new();
    Bytes pub_oct;
    EvpKey out;
    if (EC_POINT_mul(group, pub, priv, nullptr, nullptr, ctx) == 1) {
        size_t len = EC_POINT_point2oct(group, pub, POINT_CONVERSION_UNCOMPRESSED, nullptr, 0, ctx);
        pub_oct.resize(len);
        EC_POINT_point2oct(group, pub, POINT_CONVERSION_UNCOMPRESSED, pub_oct.data(), len, ctx);

        OSSL_PARAM_BLD* bld = OSSL_PARAM_BLD_new();
        OSSL_PARAM_BLD_push_utf8_string(bld, OSSL_PKEY_PARAM_GROUP_NAME, "secp256k1", 0);
        OSSL_PARAM_BLD_push_BN(bld, OSSL_PKEY_PARAM_PRIV_KEY, priv);
        OSSL_PARAM_BLD_push_octet_string(bld, OSSL_PKEY_PARAM_PUB_KEY, pub_oct.data(), pub_oct.size());
        OSSL_PARAM* params = OSSL_PARAM_BLD_to_param(bld);

        EVP_PKEY_CTX* kctx = EVP_PKEY_CTX_new_from_name(nullptr, "EC", nullptr);
        EVP_PKEY* key = nullptr;
        if (EVP_PKEY_fromdata_init(kctx) == 1 &&
            EVP_PKEY_fromdata(kctx, &key, EVP_PKEY_KEYPAIR, params) == 1) {
            out.reset(key);
        }
        EVP_PKEY_CTX_free(kctx);
        OSSL_PARAM_free(params);
        OSSL_PARAM_BLD_free(bld);
    }
    BN_CTX_free(ctx);
    EC_POINT_free(pub);
    EC_GROUP_free(group);
    BN_free(priv);
    if (!out) throw std::runtime_error("secp256k1 key construction failed");
    return out;
}

}  // namespace detail

// ECDSA over secp256k1 via OpenSSL. Keys for the whole membership are derived
// from a cluster secret in the config, so every process reconstructs the same
// static key set without a PKI.
class Secp256k1Crypto final : public CryptoProvider {
public:
    static std::shared_ptr<Secp256k1Crypto> from_seed(uint32_t n, uint64_t seed) {
        auto c = std::make_shared<Secp256k1Crypto>();
        c->keys_.reserve(n);
        for (uint32_t i = 0; i < n; ++i) {
            // Scalar = SHA256(seed || id); negligible bias vs. the curve order.
            ByteWriter w;
            w.u64(seed);
            w.u32(i);
            Digest d = sha256(w.bytes());
            c->keys_.push_back(detail::secp256k1_keypair_from_scalar(Bytes(d.begin(), d.end())));
        }
        return c;
    }

    static std::shared_ptr<Secp256k1Crypto> random_cluster(uint32_t n) {
        auto c = std::make_shared<Secp256k1Crypto>();
        c->keys_.reserve(n);
        for (uint32_t i = 0; i < n; ++i) {
            Bytes scalar(32);
            RAND_bytes(scalar.data(), 32);
            scalar[0] &= 0x7f;  // stay well below the curve order
            c->keys_.push_back(detail::secp256k1_keypair_from_scalar(scalar));
        }
        return c;
    }

    Signature sign(uint32_t signer, BytesView msg) const override {
        if (signer >= keys_.size()) throw std::out_of_range("unknown signer");
        EVP_MD_CTX* md = EVP_MD_CTX_new();
        Signature sig;
        size_t len = 0;
        if (EVP_DigestSignInit(md, nullptr, EVP_sha256(), nullptr, keys_[signer].get()) == 1 &&
            EVP_DigestSign(md, nullptr, &len, msg.data(), msg.size()) == 1) {
            sig.bytes.resize(len);
            if (EVP_DigestSign(md, sig.bytes.data(), &len, msg.data(), msg.size()) == 1) {
                sig.bytes.resize(len);
            } else {
                sig.bytes.clear();
            }
        }
        EVP_MD_CTX_free(md);
        if (sig.bytes.empty()) throw std::runtime_error("ECDSA signing failed");
        return sig;
    }

    bool verify(uint32_t signer, BytesView msg, const Signature& sig) const override {
        if (signer >= keys_.size() || sig.bytes.empty()) return false;
        EVP_MD_CTX* md = EVP_MD_CTX_new();
        bool ok = EVP_DigestVerifyInit(md, nullptr, EVP_sha256(), nullptr, keys_[signer].get()) == 1 &&
                  EVP_DigestVerify(md, sig.bytes.data(), sig.bytes.size(), msg.data(), msg.size()) == 1;
        EVP_MD_CTX_free(md);
        return ok;
    }

    double cost_hint_ms() const override { return 0.08; }

private:
    std::vector<detail::EvpKey> keys_;
};

}  // namespace cbft
