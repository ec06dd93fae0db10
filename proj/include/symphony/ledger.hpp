#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "symphony/canonical.hpp"
#include "symphony/crypto.hpp"
#include "symphony/errors.hpp"
#include "symphony/matching.hpp"
#include "symphony/protocol.hpp"
#include "symphony/util.hpp"

namespace symphony::ledger {

using canonical::Json;
using protocol::AgentId;

enum class Role { Planner, Executor };
enum class AgentStatus { Available, Busy, Offline };

inline constexpr util::Millis kDefaultLivenessTtlMs = 10'000;
inline constexpr util::Millis kDefaultHeartbeatIntervalMs = 3'000;
inline constexpr util::Millis kDefaultSyncIntervalMs = 2'000;

inline std::string_view role_name(Role r) {
    return r == Role::Planner ? "planner" : "executor";
}

inline std::string_view status_name(AgentStatus s) {
    switch (s) {
        case AgentStatus::Available: return "available";
        case AgentStatus::Busy: return "busy";
        case AgentStatus::Offline: return "offline";
    }
    return "?";
}

inline AgentStatus status_from_name(std::string_view s) {
    if (s == "available") return AgentStatus::Available;
    if (s == "busy") return AgentStatus::Busy;
    if (s == "offline") return AgentStatus::Offline;
    throw ValidationError("unknown status '" + std::string(s) + "'");
}

// One ledger entry. "Resource ownership" is carried as the registered
// address plus opaque metadata (model path, GPU allocation); orchestration
// never interprets it.
struct AgentRecord {
    AgentId agent_id;
    crypto::Bytes public_key;
    std::string host;
    std::uint16_t port = 0;
    std::vector<double> capability_vector;
    std::set<Role> roles;
    AgentStatus status = AgentStatus::Available;  // declared; offline is derived
    util::Millis last_seen = 0;
    std::uint64_t contributions = 0;  // completed sub-tasks
    std::string model_path;
    std::string gpu_allocation;

    std::string address() const { return host + ":" + std::to_string(port); }
    bool has_role(Role r) const { return roles.count(r) != 0; }

    auto operator<=>(const AgentRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Serialization. The registration proof signs the identity-stable core;
// last_seen/status/contributions mutate on heartbeat without re-signing.

inline Json roles_to_json(const std::set<Role>& roles) {
    Json arr = Json::array();
    // canonical order: executor before planner (sorted strings)
    if (roles.count(Role::Executor)) arr.push_back("executor");
    if (roles.count(Role::Planner)) arr.push_back("planner");
    return arr;
}

inline std::set<Role> roles_from_json(const Json& arr) {
    if (!arr.is_array()) throw ValidationError("roles must be an array");
    std::set<Role> roles;
    for (const auto& r : arr) {
        const auto s = r.get<std::string>();
        if (s == "planner") roles.insert(Role::Planner);
        else if (s == "executor") roles.insert(Role::Executor);
        else throw ValidationError("unknown role '" + s + "'");
    }
    return roles;
}

namespace detail {

inline Json core_to_json(const AgentRecord& r) {
    Json j;
    j["address"] = Json{{"host", r.host}, {"port", r.port}};
    j["agent_id"] = r.agent_id.value;
    Json vec = Json::array();
    for (double v : r.capability_vector) vec.push_back(canonical::normalize_real(v, "capability"));
    j["capability_vector"] = std::move(vec);
    j["metadata"] = Json{{"gpu_allocation", r.gpu_allocation}, {"model_path", r.model_path}};
    j["public_key"] = util::to_hex(r.public_key);
    j["roles"] = roles_to_json(r.roles);
    return j;
}

} // namespace detail

// Bytes covered by the registration proof.
inline std::string record_core_bytes(const AgentRecord& r) {
    return canonical::dump(detail::core_to_json(r));
}

inline Json record_to_json(const AgentRecord& r) {
    Json j = detail::core_to_json(r);
    j["contributions"] = r.contributions;
    j["last_seen"] = r.last_seen;
    j["status"] = std::string(status_name(r.status));
    return j;
}

inline AgentRecord record_from_json(const Json& j) {
    AgentRecord r;
    r.agent_id = AgentId{j.at("agent_id").get<std::string>()};
    r.public_key = util::from_hex(j.at("public_key").get<std::string>());
    r.host = j.at("address").at("host").get<std::string>();
    const auto port = j.at("address").at("port").get<std::uint64_t>();
    if (port == 0 || port > 65535) throw ValidationError("port out of range");
    r.port = static_cast<std::uint16_t>(port);
    for (const auto& v : j.at("capability_vector")) r.capability_vector.push_back(v.get<double>());
    r.roles = roles_from_json(j.at("roles"));
    r.status = status_from_name(j.at("status").get<std::string>());
    r.last_seen = j.at("last_seen").get<util::Millis>();
    r.contributions = j.at("contributions").get<std::uint64_t>();
    if (j.contains("metadata")) {
        r.model_path = j.at("metadata").value("model_path", "");
        r.gpu_allocation = j.at("metadata").value("gpu_allocation", "");
    }
    return r;
}

struct SignedRecord {
    AgentRecord record;
    std::string proof;  // hex Ed25519 signature over record_core_bytes

    auto operator<=>(const SignedRecord&) const = default;
};

inline std::string make_registration_proof(const AgentRecord& r, const crypto::Bytes& secret_key) {
    return util::to_hex(crypto::sign_detached(record_core_bytes(r), secret_key));
}

inline bool verify_registration_proof(const SignedRecord& sr) {
    if (sr.record.public_key.size() != crypto::kPublicKeyBytes) return false;
    if (!util::is_lower_hex(sr.proof, 128)) return false;
    return crypto::verify_detached(record_core_bytes(sr.record), util::from_hex(sr.proof),
                                   sr.record.public_key);
}

struct LedgerSnapshot {
    std::map<AgentId, SignedRecord> records;
    std::uint64_t version = 0;

    auto operator<=>(const LedgerSnapshot&) const = default;
};

inline Json snapshot_to_json(const LedgerSnapshot& s) {
    Json recs = Json::object();
    for (const auto& [id, sr] : s.records) {
        recs[id.value] = Json{{"proof", sr.proof}, {"record", record_to_json(sr.record)}};
    }
    return Json{{"records", std::move(recs)}, {"version", s.version}};
}

inline LedgerSnapshot snapshot_from_json(const Json& j) {
    LedgerSnapshot s;
    s.version = j.at("version").get<std::uint64_t>();
    for (auto it = j.at("records").begin(); it != j.at("records").end(); ++it) {
        SignedRecord sr;
        sr.proof = it.value().at("proof").get<std::string>();
        sr.record = record_from_json(it.value().at("record"));
        if (sr.record.agent_id.value != it.key()) {
            throw ValidationError("snapshot record keyed under wrong agent id");
        }
        s.records.emplace(sr.record.agent_id, std::move(sr));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Liveness is a pure function of (last_seen, now, TTL).

inline AgentStatus effective_status(const AgentRecord& r, util::Millis now, util::Millis ttl) {
    if (now > r.last_seen && now - r.last_seen > ttl) return AgentStatus::Offline;
    return r.status;
}

inline std::vector<AgentRecord> available_agents(const LedgerSnapshot& snapshot, Role role,
                                                 util::Millis now, util::Millis ttl) {
    std::vector<AgentRecord> out;
    for (const auto& [id, sr] : snapshot.records) {  // map order == id ascending
        if (!sr.record.has_role(role)) continue;
        if (effective_status(sr.record, now, ttl) != AgentStatus::Available) continue;
        out.push_back(sr.record);
    }
    return out;
}

// ---------------------------------------------------------------------------
// State-based merge. Per record: last-writer-wins ordered by (last_seen,
// canonical bytes with contributions zeroed); contributions join by max.
// Zeroing contributions keeps the tiebreak key stable under the max-join,
// which is what makes the merge associative.

namespace detail {

inline std::string lww_tiebreak_bytes(const AgentRecord& r) {
    AgentRecord copy = r;
    copy.contributions = 0;
    return canonical::dump(record_to_json(copy));
}

inline bool lww_wins(const AgentRecord& challenger, const AgentRecord& incumbent) {
    if (challenger.last_seen != incumbent.last_seen) {
        return challenger.last_seen > incumbent.last_seen;
    }
    return lww_tiebreak_bytes(challenger) > lww_tiebreak_bytes(incumbent);
}

} // namespace detail

struct MergeOutcome {
    LedgerSnapshot snapshot;
    bool changed = false;
    std::vector<std::string> warnings;  // skipped records, one line each
};

inline MergeOutcome merge_snapshots(const LedgerSnapshot& local, const LedgerSnapshot& remote,
                                    std::size_t dimension) {
    MergeOutcome out;
    out.snapshot = local;
    for (const auto& [id, remote_sr] : remote.records) {
        if (!verify_registration_proof(remote_sr)) {
            out.warnings.push_back("merge: skipped record with invalid proof for " + id.value);
            continue;
        }
        if (remote_sr.record.agent_id !=
            protocol::agent_id_from_public_key(remote_sr.record.public_key)) {
            out.warnings.push_back("merge: skipped record with mismatched id for " + id.value);
            continue;
        }
        try {
            matching::validate_components(remote_sr.record.capability_vector, dimension,
                                                  "capability vector");
        } catch (const Error& e) {
            out.warnings.push_back("merge: skipped record for " + id.value + ": " + e.what());
            continue;
        }
        auto it = out.snapshot.records.find(id);
        if (it == out.snapshot.records.end()) {
            out.snapshot.records.emplace(id, remote_sr);
            out.changed = true;
            continue;
        }
        SignedRecord& local_sr = it->second;
        const std::uint64_t max_contrib =
            std::max(local_sr.record.contributions, remote_sr.record.contributions);
        if (detail::lww_wins(remote_sr.record, local_sr.record)) {
            SignedRecord winner = remote_sr;
            winner.record.contributions = max_contrib;
            if (winner != local_sr) {
                local_sr = std::move(winner);
                out.changed = true;
            }
        } else if (max_contrib != local_sr.record.contributions) {
            local_sr.record.contributions = max_contrib;
            out.changed = true;
        }
    }
    if (out.changed) out.snapshot.version = local.version + 1;
    return out;
}

// ---------------------------------------------------------------------------
// The per-node ledger: serialized mutations, immutable snapshots out.

struct LedgerConfig {
    std::size_t dimension = protocol::kDefaultDimension;
    util::Millis liveness_ttl_ms = kDefaultLivenessTtlMs;
    std::function<util::Millis()> clock = util::now_ms;
    // Optional append-only event sink (one canonical JSON line per accepted
    // registration/heartbeat); replay reconstructs the snapshot.
    std::function<void(const std::string&)> log_sink;
};

class Ledger {
public:
    explicit Ledger(LedgerConfig config = {}) : config_(std::move(config)) {
        if (!config_.clock) config_.clock = util::now_ms;
    }

    LedgerSnapshot register_agent(const AgentRecord& record, const std::string& proof) {
        SignedRecord sr{record, proof};
        if (!verify_registration_proof(sr)) {
            throw AuthError("registration proof does not verify for " + record.agent_id.value);
        }
        if (record.agent_id != protocol::agent_id_from_public_key(record.public_key)) {
            throw AuthError("agent id is not derived from the public key");
        }
        matching::validate_components(record.capability_vector, config_.dimension,
                                              "capability vector");
        if (record.port == 0) throw ValidationError("port must be nonzero");
        if (record.roles.empty()) throw ValidationError("record declares no roles");

        std::lock_guard lock(mutex_);
        auto it = state_.records.find(record.agent_id);
        if (it != state_.records.end()) {
            sr.record.contributions =
                std::max(sr.record.contributions, it->second.record.contributions);
            it->second = sr;
        } else {
            state_.records.emplace(record.agent_id, sr);
        }
        ++state_.version;
        append_log(Json{{"op", "register"}, {"proof", sr.proof},
                        {"record", record_to_json(sr.record)}});
        return state_;
    }

    void heartbeat(const AgentId& agent_id, util::Millis sent_at) {
        std::lock_guard lock(mutex_);
        auto it = state_.records.find(agent_id);
        if (it == state_.records.end()) {
            throw NotRegistered("heartbeat from unregistered agent " + agent_id.value);
        }
        if (sent_at <= it->second.record.last_seen) return;  // stale; monotone clock per agent
        it->second.record.last_seen = sent_at;
        ++state_.version;
        append_log(Json{{"agent_id", agent_id.value}, {"op", "heartbeat"}, {"sent_at", sent_at}});
    }

    void record_contribution(const AgentId& agent_id) {
        std::lock_guard lock(mutex_);
        auto it = state_.records.find(agent_id);
        if (it == state_.records.end()) {
            throw NotRegistered("contribution for unregistered agent " + agent_id.value);
        }
        ++it->second.record.contributions;
        ++state_.version;
    }

    LedgerSnapshot merge(const LedgerSnapshot& remote,
                         const matching::WarningSink& warn = {}) {
        std::lock_guard lock(mutex_);
        MergeOutcome out = merge_snapshots(state_, remote, config_.dimension);
        for (const auto& w : out.warnings) {
            if (warn) warn(w);
        }
        if (out.changed) {
            for (const auto& [id, sr] : out.snapshot.records) {
                auto it = state_.records.find(id);
                if (it == state_.records.end() || it->second != sr) {
                    append_log(Json{{"op", "register"}, {"proof", sr.proof},
                                    {"record", record_to_json(sr.record)}});
                }
            }
            state_ = std::move(out.snapshot);
        }
        return state_;
    }

    LedgerSnapshot snapshot() const {
        std::lock_guard lock(mutex_);
        return state_;
    }

    std::vector<AgentRecord> available(Role role) const {
        std::lock_guard lock(mutex_);
        return available_agents(state_, role, config_.clock(), config_.liveness_ttl_ms);
    }

    std::optional<AgentRecord> find(const AgentId& id) const {
        std::lock_guard lock(mutex_);
        auto it = state_.records.find(id);
        if (it == state_.records.end()) return std::nullopt;
        return it->second.record;
    }

    AgentStatus status_of(const AgentRecord& r) const {
        return effective_status(r, config_.clock(), config_.liveness_ttl_ms);
    }

    const LedgerConfig& config() const { return config_; }

    // Rebuilds state from an append-only event file written via log_sink.
    void replay(const std::string& path) {
        auto sink = std::move(config_.log_sink);
        config_.log_sink = nullptr;  // do not re-log while replaying
        for (const auto& line : util::split(util::read_file(path), '\n')) {
            if (util::trim(line).empty()) continue;
            Json j = canonical::parse(line);
            const auto op = j.at("op").get<std::string>();
            if (op == "register") {
                SignedRecord sr;
                sr.proof = j.at("proof").get<std::string>();
                sr.record = record_from_json(j.at("record"));
                LedgerSnapshot one;
                one.records.emplace(sr.record.agent_id, sr);
                merge(one);
            } else if (op == "heartbeat") {
                try {
                    heartbeat(AgentId{j.at("agent_id").get<std::string>()},
                              j.at("sent_at").get<util::Millis>());
                } catch (const NotRegistered&) {
                    // tolerated: the register line may have been lost mid-write
                }
            }
        }
        config_.log_sink = std::move(sink);
    }

private:
    void append_log(const Json& j) {
        if (config_.log_sink) config_.log_sink(canonical::dump(j));
    }

    LedgerConfig config_;
    mutable std::mutex mutex_;
    LedgerSnapshot state_;
};

} // namespace symphony::ledger
