#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "symphony/canonical.hpp"
#include "symphony/crypto.hpp"
#include "symphony/errors.hpp"
#include "symphony/util.hpp"

namespace symphony::protocol {

using canonical::Json;

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kDefaultDimension = 8;
inline constexpr std::uint32_t kMaxFrameBytes = 16u * 1024u * 1024u;

// ---------------------------------------------------------------------------
// Identity

// 64 lowercase hex chars; SHA-256 of the node's Ed25519 public key.
struct AgentId {
    std::string value;

    AgentId() = default;
    explicit AgentId(std::string v) : value(std::move(v)) {}

    bool valid() const { return util::is_lower_hex(value, 64); }
    auto operator<=>(const AgentId&) const = default;
};

inline AgentId agent_id_from_public_key(const crypto::Bytes& public_key) {
    return AgentId{crypto::derive_agent_id(public_key)};
}

// ---------------------------------------------------------------------------
// Message bodies. Exactly four categories exist on the wire.

enum class MsgType { Beacon, BeaconResponse, Task, TaskResult };

inline std::string_view msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::Beacon: return "beacon";
        case MsgType::BeaconResponse: return "beacon_response";
        case MsgType::Task: return "task";
        case MsgType::TaskResult: return "task_result";
    }
    return "?";
}

inline std::optional<MsgType> msg_type_from_name(std::string_view s) {
    if (s == "beacon") return MsgType::Beacon;
    if (s == "beacon_response") return MsgType::BeaconResponse;
    if (s == "task") return MsgType::Task;
    if (s == "task_result") return MsgType::TaskResult;
    return std::nullopt;
}

struct BeaconBody {
    std::vector<double> requirement_vector;  // length D, components in [0,1]
    std::string subtask_text;
    util::Millis respond_by = 0;  // response deadline, ms since epoch

    auto operator<=>(const BeaconBody&) const = default;
};

struct BeaconResponseBody {
    double score = 0.0;  // capability match score in [0,1]
    std::uint32_t responder_load = 0;  // queued tasks at the responder
    util::Millis responded_at = 0;

    auto operator<=>(const BeaconResponseBody&) const = default;
};

struct TaskBody {
    std::string subtask_text;
    std::string background;
    // (subtask_text, boxed_answer) pairs for completed sub-tasks, in order.
    std::vector<std::pair<std::string, std::string>> prior_results;
    std::vector<std::string> remaining_chain;
    // One score per completed sub-task plus the current assignment's score,
    // appended on dispatch: size == prior_results.size() + 1.
    std::vector<double> accumulated_scores;

    auto operator<=>(const TaskBody&) const = default;
};

struct TaskResultBody {
    // Empty final_answer reports sub-task failure (see PROTOCOL.md).
    std::string final_answer;
    double confidence = 0.0;  // mean of the accumulated scores, in [0,1]

    auto operator<=>(const TaskResultBody&) const = default;
};

using Body = std::variant<BeaconBody, BeaconResponseBody, TaskBody, TaskResultBody>;

// ---------------------------------------------------------------------------
// Envelope

// (task_id, chain_id, subtask_index) addresses one sub-task slot. chain_id -1
// is the planner-selection round; subtask_index 0 is the chain-level slot.
struct Envelope {
    AgentId sender;
    std::string task_id;
    int chain_id = 0;
    int subtask_index = 0;
    Body body;
    util::Millis sent_at = 0;
    std::string signature;  // 128 hex chars (detached Ed25519), set by sign()

    MsgType msg_type() const { return static_cast<MsgType>(body.index()); }

    auto operator<=>(const Envelope&) const = default;
};

struct DecodeOptions {
    std::size_t dimension = kDefaultDimension;
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void check_unit_interval(double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError(std::string(field) + " outside [0,1]");
    }
}

inline void validate_requirement(const std::vector<double>& vec, std::size_t dimension) {
    if (vec.size() != dimension) {
        throw ValidationError("requirement_vector has dimension " + std::to_string(vec.size()) +
                              ", expected " + std::to_string(dimension));
    }
    bool any_positive = false;
    for (double v : vec) {
        check_unit_interval(v, "requirement_vector component");
        if (v > 0.0) any_positive = true;
    }
    if (!any_positive) throw ValidationError("requirement_vector is all-zero");
}

} // namespace detail

// Full type invariants; thrown errors are ValidationError unless noted.
inline void validate(const Envelope& e, const DecodeOptions& opts = {}) {
    if (!e.sender.valid()) throw ValidationError("sender is not 64 lowercase hex chars");
    if (e.task_id.empty()) throw ValidationError("task_id is empty");
    if (e.chain_id < -1) throw ValidationError("chain_id below -1");
    if (e.subtask_index < 0) throw ValidationError("subtask_index is negative");
    if (!e.signature.empty() && !util::is_lower_hex(e.signature, 128)) {
        throw ValidationError("signature is not 128 lowercase hex chars");
    }
    switch (e.msg_type()) {
        case MsgType::Beacon: {
            const auto& b = std::get<BeaconBody>(e.body);
            detail::validate_requirement(b.requirement_vector, opts.dimension);
            break;
        }
        case MsgType::BeaconResponse: {
            const auto& b = std::get<BeaconResponseBody>(e.body);
            detail::check_unit_interval(b.score, "score");
            break;
        }
        case MsgType::Task: {
            const auto& b = std::get<TaskBody>(e.body);
            if (b.accumulated_scores.size() != b.prior_results.size() + 1) {
                throw ValidationError("accumulated_scores must have prior_results.size() + 1 entries");
            }
            for (double s : b.accumulated_scores) detail::check_unit_interval(s, "accumulated score");
            break;
        }
        case MsgType::TaskResult: {
            const auto& b = std::get<TaskResultBody>(e.body);
            detail::check_unit_interval(b.confidence, "confidence");
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical serialization

namespace detail {

inline Json body_to_json(const Body& body) {
    Json j;
    switch (static_cast<MsgType>(body.index())) {
        case MsgType::Beacon: {
            const auto& b = std::get<BeaconBody>(body);
            Json vec = Json::array();
            for (double v : b.requirement_vector) {
                vec.push_back(canonical::normalize_real(v, "requirement_vector"));
            }
            j["requirement_vector"] = std::move(vec);
            j["respond_by"] = b.respond_by;
            j["subtask_text"] = b.subtask_text;
            break;
        }
        case MsgType::BeaconResponse: {
            const auto& b = std::get<BeaconResponseBody>(body);
            j["responded_at"] = b.responded_at;
            j["responder_load"] = b.responder_load;
            j["score"] = canonical::normalize_real(b.score, "score");
            break;
        }
        case MsgType::Task: {
            const auto& b = std::get<TaskBody>(body);
            Json scores = Json::array();
            for (double s : b.accumulated_scores) {
                scores.push_back(canonical::normalize_real(s, "accumulated_scores"));
            }
            Json prior = Json::array();
            for (const auto& [q, a] : b.prior_results) prior.push_back(Json::array({q, a}));
            j["accumulated_scores"] = std::move(scores);
            j["background"] = b.background;
            j["prior_results"] = std::move(prior);
            j["remaining_chain"] = b.remaining_chain;
            j["subtask_text"] = b.subtask_text;
            break;
        }
        case MsgType::TaskResult: {
            const auto& b = std::get<TaskResultBody>(body);
            j["confidence"] = canonical::normalize_real(b.confidence, "confidence");
            j["final_answer"] = b.final_answer;
            break;
        }
    }
    return j;
}

inline Json envelope_to_json(const Envelope& e, bool with_signature) {
    Json j;
    j["body"] = body_to_json(e.body);
    j["chain_id"] = e.chain_id;
    j["msg_type"] = std::string(msg_type_name(e.msg_type()));
    j["sender"] = e.sender.value;
    j["sent_at"] = e.sent_at;
    if (with_signature) j["signature"] = e.signature;
    j["subtask_index"] = e.subtask_index;
    j["task_id"] = e.task_id;
    j["v"] = kProtocolVersion;
    return j;
}

inline const Json& require_key(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw DecodeError(std::string("missing key '") + key + "'");
    return *it;
}

inline std::string get_string(const Json& j, const char* key) {
    const Json& v = require_key(j, key);
    if (!v.is_string()) throw DecodeError(std::string("key '") + key + "' is not a string");
    return v.get<std::string>();
}

inline double get_real(const Json& j, const char* key) {
    const Json& v = require_key(j, key);
    if (!v.is_number()) throw DecodeError(std::string("key '") + key + "' is not a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) throw DecodeError(std::string("key '") + key + "' is not finite");
    return d;
}

inline std::uint64_t get_u64(const Json& j, const char* key) {
    const Json& v = require_key(j, key);
    if (!v.is_number_unsigned()) {
        throw DecodeError(std::string("key '") + key + "' is not an unsigned integer");
    }
    return v.get<std::uint64_t>();
}

inline int get_int(const Json& j, const char* key) {
    const Json& v = require_key(j, key);
    if (!v.is_number_integer()) throw DecodeError(std::string("key '") + key + "' is not an integer");
    return v.get<int>();
}

inline void reject_extra_keys(const Json& j, std::initializer_list<const char*> allowed,
                              const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) { known = true; break; }
        }
        if (!known) {
            throw DecodeError(std::string("unexpected key '") + it.key() + "' in " + where);
        }
    }
}

inline std::vector<double> get_real_array(const Json& j, const char* key) {
    const Json& v = require_key(j, key);
    if (!v.is_array()) throw DecodeError(std::string("key '") + key + "' is not an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const Json& item : v) {
        if (!item.is_number()) throw DecodeError(std::string("non-numeric entry in '") + key + "'");
        double d = item.get<double>();
        if (!std::isfinite(d)) throw DecodeError(std::string("non-finite entry in '") + key + "'");
        out.push_back(d);
    }
    return out;
}

inline Body body_from_json(MsgType type, const Json& j) {
    if (!j.is_object()) throw DecodeError("body is not an object");
    switch (type) {
        case MsgType::Beacon: {
            reject_extra_keys(j, {"requirement_vector", "respond_by", "subtask_text"}, "beacon body");
            BeaconBody b;
            b.requirement_vector = get_real_array(j, "requirement_vector");
            b.respond_by = get_u64(j, "respond_by");
            b.subtask_text = get_string(j, "subtask_text");
            return b;
        }
        case MsgType::BeaconResponse: {
            reject_extra_keys(j, {"responded_at", "responder_load", "score"}, "beacon_response body");
            BeaconResponseBody b;
            b.responded_at = get_u64(j, "responded_at");
            std::uint64_t load = get_u64(j, "responder_load");
            if (load > 0xffffffffull) throw DecodeError("responder_load out of range");
            b.responder_load = static_cast<std::uint32_t>(load);
            b.score = get_real(j, "score");
            return b;
        }
        case MsgType::Task: {
            reject_extra_keys(j, {"accumulated_scores", "background", "prior_results",
                                  "remaining_chain", "subtask_text"}, "task body");
            TaskBody b;
            b.accumulated_scores = get_real_array(j, "accumulated_scores");
            b.background = get_string(j, "background");
            const Json& prior = require_key(j, "prior_results");
            if (!prior.is_array()) throw DecodeError("prior_results is not an array");
            for (const Json& item : prior) {
                if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string()) {
                    throw DecodeError("prior_results entry is not a [text, answer] pair");
                }
                b.prior_results.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
            }
            const Json& rem = require_key(j, "remaining_chain");
            if (!rem.is_array()) throw DecodeError("remaining_chain is not an array");
            for (const Json& item : rem) {
                if (!item.is_string()) throw DecodeError("remaining_chain entry is not a string");
                b.remaining_chain.push_back(item.get<std::string>());
            }
            b.subtask_text = get_string(j, "subtask_text");
            return b;
        }
        case MsgType::TaskResult: {
            reject_extra_keys(j, {"confidence", "final_answer"}, "task_result body");
            TaskResultBody b;
            b.confidence = get_real(j, "confidence");
            b.final_answer = get_string(j, "final_answer");
            return b;
        }
    }
    throw DecodeError("unreachable message type");
}

} // namespace detail

// The byte region covered by the envelope signature: the canonical JSON of
// the envelope without its "signature" member.
inline std::string signed_bytes(const Envelope& e) {
    return canonical::dump(detail::envelope_to_json(e, /*with_signature=*/false));
}

// Canonical bytes of the full envelope. Deterministic: equal envelopes yield
// identical bytes, and vice versa.
inline std::string encode(const Envelope& e) {
    if (!util::is_lower_hex(e.signature, 128)) {
        throw EncodingError("envelope signature missing or not 128 lowercase hex chars");
    }
    return canonical::dump(detail::envelope_to_json(e, /*with_signature=*/true));
}

inline Envelope decode(std::string_view bytes, const DecodeOptions& opts = {}) {
    Json j = canonical::parse(bytes);
    if (!j.is_object()) throw DecodeError("envelope is not a JSON object");
    detail::reject_extra_keys(j, {"body", "chain_id", "msg_type", "sender", "sent_at",
                                  "signature", "subtask_index", "task_id", "v"}, "envelope");
    int version = detail::get_int(j, "v");
    if (version != kProtocolVersion) {
        throw DecodeError("unsupported protocol version " + std::to_string(version));
    }
    const std::string type_name = detail::get_string(j, "msg_type");
    auto type = msg_type_from_name(type_name);
    if (!type) throw UnknownMessageType("unknown msg_type '" + type_name + "'");

    Envelope e;
    e.sender = AgentId{detail::get_string(j, "sender")};
    e.task_id = detail::get_string(j, "task_id");
    e.chain_id = detail::get_int(j, "chain_id");
    e.subtask_index = detail::get_int(j, "subtask_index");
    e.sent_at = detail::get_u64(j, "sent_at");
    e.signature = detail::get_string(j, "signature");
    e.body = detail::body_from_json(*type, detail::require_key(j, "body"));
    try {
        validate(e, opts);
    } catch (const ValidationError& err) {
        throw DecodeError(std::string("invalid envelope: ") + err.what());
    }
    if (e.signature.empty()) throw DecodeError("invalid envelope: signature is empty");
    return e;
}

// ---------------------------------------------------------------------------
// Signing

inline void sign(Envelope& e, const crypto::Bytes& secret_key) {
    e.signature = util::to_hex(crypto::sign_detached(signed_bytes(e), secret_key));
}

inline bool verify(const Envelope& e, const crypto::Bytes& public_key) {
    if (!util::is_lower_hex(e.signature, 128)) return false;
    return crypto::verify_detached(signed_bytes(e), util::from_hex(e.signature), public_key);
}

// ---------------------------------------------------------------------------
// Wire framing: 4-byte big-endian unsigned length, then that many payload
// bytes. See PROTOCOL.md for the byte layout.

inline std::string frame(std::string_view payload) {
    if (payload.size() > kMaxFrameBytes) throw EncodingError("frame exceeds size limit");
    const auto n = static_cast<std::uint32_t>(payload.size());
    std::string out;
    out.reserve(4 + payload.size());
    out.push_back(static_cast<char>((n >> 24) & 0xff));
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(n & 0xff));
    out.append(payload);
    return out;
}

// Incremental deframer for stream transports; tolerates arbitrary chunking.
class FrameReader {
public:
    // Appends raw bytes and returns every complete payload now available.
    std::vector<std::string> feed(std::string_view bytes) {
        buffer_.append(bytes);
        std::vector<std::string> out;
        while (true) {
            if (buffer_.size() < 4) break;
            const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data());
            const std::uint32_t n = (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
                                    (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
            if (n > kMaxFrameBytes) throw DecodeError("incoming frame exceeds size limit");
            if (buffer_.size() < 4u + n) break;
            out.push_back(buffer_.substr(4, n));
            buffer_.erase(0, 4u + n);
        }
        return out;
    }

    std::size_t pending_bytes() const { return buffer_.size(); }

private:
    std::string buffer_;
};

} // namespace symphony::protocol
