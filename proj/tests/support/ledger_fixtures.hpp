#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "symphony/ledger.hpp"

#include "support/generators.hpp"

namespace testgen {

using symphony::ledger::AgentRecord;
using symphony::ledger::AgentStatus;
using symphony::ledger::LedgerSnapshot;
using symphony::ledger::Role;
using symphony::ledger::SignedRecord;

inline SignedRecord make_record(const symphony::crypto::KeyPair& kp, std::uint16_t port,
                                std::vector<double> capability,
                                std::set<Role> roles = {Role::Planner, Role::Executor},
                                symphony::util::Millis last_seen = 1000,
                                std::uint64_t contributions = 0) {
    AgentRecord r;
    r.public_key = kp.public_key;
    r.agent_id = symphony::protocol::agent_id_from_public_key(kp.public_key);
    r.host = "127.0.0.1";
    r.port = port;
    r.capability_vector = std::move(capability);
    r.roles = std::move(roles);
    r.status = AgentStatus::Available;
    r.last_seen = last_seen;
    r.contributions = contributions;
    return SignedRecord{r, symphony::ledger::make_registration_proof(r, kp.secret_key)};
}

inline SignedRecord random_record(Rng& rng, const KeyPool& keys, std::size_t dim = 8) {
    const std::set<Role> roles = (rng() % 3 == 0)
                                     ? std::set<Role>{Role::Executor}
                                     : std::set<Role>{Role::Planner, Role::Executor};
    auto sr = make_record(keys.at(rng() % keys.size()),
                          static_cast<std::uint16_t>(1024 + rng() % 30000),
                          unit_vector(rng, dim), roles);
    // mutable fields changed after signing stay valid: the proof covers the
    // identity-stable core only
    sr.record.last_seen = rng() % 100000;
    sr.record.contributions = rng() % 10;
    sr.record.status = (rng() % 4 == 0) ? AgentStatus::Busy : AgentStatus::Available;
    return sr;
}

inline LedgerSnapshot random_snapshot(Rng& rng, const KeyPool& keys, std::size_t max_records = 4,
                                      std::size_t dim = 8) {
    LedgerSnapshot s;
    const std::size_t n = rng() % (max_records + 1);
    for (std::size_t i = 0; i < n; ++i) {
        auto sr = random_record(rng, keys, dim);
        s.records[sr.record.agent_id] = std::move(sr);
    }
    s.version = rng() % 50;
    return s;
}

inline bool same_records(const LedgerSnapshot& a, const LedgerSnapshot& b) {
    return a.records == b.records;
}

} // namespace testgen
