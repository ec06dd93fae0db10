#pragma once

// Seeded generators shared by the property tests and the acceptance suite.
// Everything here is driven by an explicit std::mt19937_64 so failures are
// reproducible from the seed printed by the harness.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "symphony/crypto.hpp"
#include "symphony/protocol.hpp"

namespace testgen {

using Rng = std::mt19937_64;

inline double unit_real(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline int int_in(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline std::string random_text(Rng& rng, std::size_t max_len = 40) {
    static constexpr char alphabet[] =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,?$\\{}\"'";
    std::size_t len = 1 + rng() % max_len;
    std::string out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(alphabet[rng() % (sizeof(alphabet) - 1)]);
    }
    return out;
}

inline std::vector<double> unit_vector_fixed(std::size_t dim = 8) {
    return std::vector<double>(dim, 0.5);
}

// Unit-interval vector with at least one strictly positive component.
inline std::vector<double> unit_vector(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    bool any = false;
    for (auto& x : v) {
        x = unit_real(rng);
        if (x > 0.0) any = true;
    }
    if (!any) v[rng() % dim] = 0.5;
    return v;
}

// A pool of deterministic keypairs; Ed25519 generation is cheap but reusing
// keys keeps the 10k-case suites fast.
class KeyPool {
public:
    explicit KeyPool(std::size_t size, std::uint64_t seed = 7) {
        Rng rng(seed);
        for (std::size_t i = 0; i < size; ++i) {
            symphony::crypto::Bytes key_seed(symphony::crypto::kSeedBytes);
            for (auto& b : key_seed) b = static_cast<unsigned char>(rng());
            pairs_.push_back(symphony::crypto::keypair_from_seed(key_seed));
        }
    }

    const symphony::crypto::KeyPair& at(std::size_t i) const { return pairs_[i % pairs_.size()]; }
    std::size_t size() const { return pairs_.size(); }

private:
    std::vector<symphony::crypto::KeyPair> pairs_;
};

// Random valid signed envelope of any of the four categories.
inline symphony::protocol::Envelope random_envelope(Rng& rng, const KeyPool& keys,
                                                    std::size_t dim = 8) {
    using namespace symphony::protocol;
    const auto& kp = keys.at(rng() % keys.size());
    Envelope e;
    e.sender = agent_id_from_public_key(kp.public_key);
    e.task_id = "task-" + std::to_string(rng() % 100000);
    e.chain_id = int_in(rng, -1, 5);
    e.subtask_index = int_in(rng, 0, 8);
    e.sent_at = rng() % (1ull << 45);
    switch (rng() % 4) {
        case 0: {
            BeaconBody b;
            b.requirement_vector = unit_vector(rng, dim);
            b.subtask_text = random_text(rng);
            b.respond_by = rng() % (1ull << 45);
            e.body = std::move(b);
            break;
        }
        case 1: {
            BeaconResponseBody b;
            b.score = unit_real(rng);
            b.responder_load = static_cast<std::uint32_t>(rng() % 16);
            b.responded_at = rng() % (1ull << 45);
            e.body = std::move(b);
            break;
        }
        case 2: {
            TaskBody b;
            b.subtask_text = random_text(rng);
            b.background = random_text(rng, 80);
            std::size_t completed = rng() % 4;
            for (std::size_t i = 0; i < completed; ++i) {
                b.prior_results.emplace_back(random_text(rng), random_text(rng, 12));
            }
            for (std::size_t i = 0; i < rng() % 3; ++i) {
                b.remaining_chain.push_back(random_text(rng));
            }
            for (std::size_t i = 0; i < completed + 1; ++i) {
                b.accumulated_scores.push_back(unit_real(rng));
            }
            e.body = std::move(b);
            break;
        }
        default: {
            TaskResultBody b;
            b.final_answer = random_text(rng, 20);
            b.confidence = unit_real(rng);
            e.body = std::move(b);
            break;
        }
    }
    sign(e, kp.secret_key);
    return e;
}

} // namespace testgen
