#pragma once

#include <array>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <sodium.h>

#include "symphony/errors.hpp"
#include "symphony/util.hpp"

namespace symphony::crypto {

// Ed25519 signatures via libsodium; the one signature scheme used repo-wide.
// Agent identity is the lowercase hex SHA-256 of the public key.

inline constexpr std::size_t kPublicKeyBytes = crypto_sign_PUBLICKEYBYTES;   // 32
inline constexpr std::size_t kSecretKeyBytes = crypto_sign_SECRETKEYBYTES;   // 64
inline constexpr std::size_t kSignatureBytes = crypto_sign_BYTES;            // 64
inline constexpr std::size_t kSeedBytes = crypto_sign_SEEDBYTES;             // 32

inline void init() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw KeyMaterialError("libsodium initialization failed");
    });
}

using Bytes = std::vector<unsigned char>;

struct KeyPair {
    Bytes public_key;  // 32 bytes
    Bytes secret_key;  // 64 bytes
};

inline KeyPair generate_keypair() {
    init();
    KeyPair kp;
    kp.public_key.resize(kPublicKeyBytes);
    kp.secret_key.resize(kSecretKeyBytes);
    crypto_sign_keypair(kp.public_key.data(), kp.secret_key.data());
    return kp;
}

// Deterministic keypair from a 32-byte seed; fixtures use this for stable ids.
inline KeyPair keypair_from_seed(const Bytes& seed) {
    init();
    if (seed.size() != kSeedBytes) {
        throw KeyMaterialError("seed must be exactly 32 bytes");
    }
    KeyPair kp;
    kp.public_key.resize(kPublicKeyBytes);
    kp.secret_key.resize(kSecretKeyBytes);
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
    return kp;
}

inline KeyPair keypair_from_seed_hex(std::string_view seed_hex) {
    return keypair_from_seed(util::from_hex(seed_hex));
}

inline Bytes sha256(std::string_view data) {
    init();
    Bytes out(crypto_hash_sha256_BYTES);
    crypto_hash_sha256(out.data(),
                       reinterpret_cast<const unsigned char*>(data.data()), data.size());
    return out;
}

inline Bytes sign_detached(std::string_view message, const Bytes& secret_key) {
    init();
    if (secret_key.size() != kSecretKeyBytes) {
        throw KeyMaterialError("malformed secret key (expected 64 bytes)");
    }
    Bytes sig(kSignatureBytes);
    crypto_sign_detached(sig.data(), nullptr,
                         reinterpret_cast<const unsigned char*>(message.data()),
                         message.size(), secret_key.data());
    return sig;
}

inline bool verify_detached(std::string_view message, const Bytes& signature,
                            const Bytes& public_key) {
    init();
    if (public_key.size() != kPublicKeyBytes) {
        throw KeyMaterialError("malformed public key (expected 32 bytes)");
    }
    if (signature.size() != kSignatureBytes) return false;
    return crypto_sign_verify_detached(
               signature.data(),
               reinterpret_cast<const unsigned char*>(message.data()), message.size(),
               public_key.data()) == 0;
}

// 64 lowercase hex chars derived from the public key.
inline std::string derive_agent_id(const Bytes& public_key) {
    if (public_key.size() != kPublicKeyBytes) {
        throw KeyMaterialError("malformed public key (expected 32 bytes)");
    }
    return util::to_hex(sha256(std::string_view(
        reinterpret_cast<const char*>(public_key.data()), public_key.size())));
}

} // namespace symphony::crypto
