#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "symphony/canonical.hpp"
#include "symphony/crypto.hpp"
#include "symphony/engine.hpp"
#include "symphony/engine_remote.hpp"
#include "symphony/errors.hpp"
#include "symphony/events.hpp"
#include "symphony/execution.hpp"
#include "symphony/ledger.hpp"
#include "symphony/matching.hpp"
#include "symphony/planning.hpp"
#include "symphony/prompts.hpp"
#include "symphony/protocol.hpp"
#include "symphony/transport.hpp"
#include "symphony/util.hpp"
#include "symphony/voting.hpp"

namespace symphony::runtime {

using canonical::Json;
using protocol::AgentId;
using protocol::Envelope;
using protocol::MsgType;

// ---------------------------------------------------------------------------
// Node configuration (canonical JSON on disk; see README for an example).

struct NodeConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    std::uint16_t admin_port = 0;  // 0 disables the REST gateway surface
    std::vector<std::string> peers;
    std::set<ledger::Role> roles = {ledger::Role::Planner, ledger::Role::Executor};
    std::vector<double> capability_vector;
    Json engine = Json{{"type", "scripted"}};
    std::string model_path;       // opaque registration metadata
    std::string gpu_allocation;   // opaque registration metadata
    std::string key_seed_hex;     // 64 hex chars; empty = fresh keypair
    std::string taxonomy_path;
    std::string prompt_background_path;
    std::string prompt_decomposition_path;
    std::string prompt_execution_path;
    std::string ledger_log_path;
    std::string event_log_path;
    std::size_t dimension = protocol::kDefaultDimension;
    std::size_t max_subtasks = planning::kMaxSubtasks;
    int default_chains = planning::kDefaultChains;
    int executor_workers = 4;
    util::Millis heartbeat_interval_ms = ledger::kDefaultHeartbeatIntervalMs;
    util::Millis sync_interval_ms = ledger::kDefaultSyncIntervalMs;
    util::Millis liveness_ttl_ms = ledger::kDefaultLivenessTtlMs;
    util::Millis beacon_timeout_ms = execution::kDefaultBeaconTimeoutMs;
    util::Millis step_deadline_ms = execution::kDefaultStepDeadlineMs;
    util::Millis task_deadline_ms = 120'000;

    std::string address() const { return host + ":" + std::to_string(port); }

    static NodeConfig from_json(const Json& j) {
        NodeConfig c;
        c.host = j.value("host", c.host);
        c.port = static_cast<std::uint16_t>(j.value("port", 0));
        c.admin_port = static_cast<std::uint16_t>(j.value("admin_port", 0));
        if (j.contains("peers")) {
            for (const auto& p : j.at("peers")) c.peers.push_back(p.get<std::string>());
        }
        if (j.contains("roles")) c.roles = ledger::roles_from_json(j.at("roles"));
        if (j.contains("capability_vector")) {
            for (const auto& v : j.at("capability_vector")) {
                c.capability_vector.push_back(v.get<double>());
            }
        }
        if (j.contains("engine")) c.engine = j.at("engine");
        c.model_path = j.value("model_path", "");
        c.gpu_allocation = j.value("gpu_allocation", "");
        c.key_seed_hex = j.value("key_seed", "");
        c.taxonomy_path = j.value("taxonomy", "");
        if (j.contains("prompts")) {
            const Json& p = j.at("prompts");
            c.prompt_background_path = p.value("background", "");
            c.prompt_decomposition_path = p.value("decomposition", "");
            c.prompt_execution_path = p.value("execution", "");
        }
        c.ledger_log_path = j.value("ledger_log", "");
        c.event_log_path = j.value("event_log", "");
        c.dimension = j.value("dimension", protocol::kDefaultDimension);
        c.max_subtasks = j.value("max_subtasks", planning::kMaxSubtasks);
        c.default_chains = j.value("chains", planning::kDefaultChains);
        c.executor_workers = j.value("executor_workers", 4);
        if (j.contains("timeouts")) {
            const Json& t = j.at("timeouts");
            c.heartbeat_interval_ms = t.value("heartbeat_interval_ms", c.heartbeat_interval_ms);
            c.sync_interval_ms = t.value("sync_interval_ms", c.sync_interval_ms);
            c.liveness_ttl_ms = t.value("liveness_ttl_ms", c.liveness_ttl_ms);
            c.beacon_timeout_ms = t.value("beacon_timeout_ms", c.beacon_timeout_ms);
            c.step_deadline_ms = t.value("step_deadline_ms", c.step_deadline_ms);
            c.task_deadline_ms = t.value("task_deadline_ms", c.task_deadline_ms);
        }
        return c;
    }

    Json to_json() const {
        Json j;
        j["host"] = host;
        j["port"] = port;
        j["admin_port"] = admin_port;
        j["peers"] = peers;
        j["roles"] = ledger::roles_to_json(roles);
        j["capability_vector"] = capability_vector;
        j["engine"] = engine;
        j["model_path"] = model_path;
        j["gpu_allocation"] = gpu_allocation;
        j["key_seed"] = key_seed_hex;
        j["taxonomy"] = taxonomy_path;
        j["prompts"] = Json{{"background", prompt_background_path},
                            {"decomposition", prompt_decomposition_path},
                            {"execution", prompt_execution_path}};
        j["ledger_log"] = ledger_log_path;
        j["event_log"] = event_log_path;
        j["dimension"] = dimension;
        j["max_subtasks"] = max_subtasks;
        j["chains"] = default_chains;
        j["executor_workers"] = executor_workers;
        j["timeouts"] = Json{{"heartbeat_interval_ms", heartbeat_interval_ms},
                             {"sync_interval_ms", sync_interval_ms},
                             {"liveness_ttl_ms", liveness_ttl_ms},
                             {"beacon_timeout_ms", beacon_timeout_ms},
                             {"step_deadline_ms", step_deadline_ms},
                             {"task_deadline_ms", task_deadline_ms}};
        return j;
    }

    void validate() const {
        if (port == 0) throw ValidationError("config: port must be in [1, 65535]");
        if (roles.empty()) throw ValidationError("config: roles must be nonempty");
        if (capability_vector.empty()) {
            throw ValidationError("config: capability_vector is required");
        }
        matching::validate_components(capability_vector, dimension, "capability vector");
        if (!engine.is_object() || !engine.contains("type")) {
            throw ValidationError("config: engine.type is required");
        }
    }
};

// Builds the configured engine. Remote engines are probed so a dead endpoint
// fails at startup rather than mid-task.
inline std::unique_ptr<engine::Engine> make_engine(const Json& cfg, bool probe_remote = true) {
    const std::string type = cfg.value("type", "scripted");
    if (type == "scripted") {
        engine::ScriptedBehavior behavior;
        if (cfg.contains("behavior")) {
            behavior = engine::ScriptedBehavior::load(cfg.at("behavior").get<std::string>());
        } else {
            behavior = engine::ScriptedBehavior::from_json(cfg);
        }
        return std::make_unique<engine::ScriptedEngine>(std::move(behavior));
    }
    if (type == "synthetic") {
        return std::make_unique<engine::SyntheticAgentEngine>(
            engine::SyntheticAgentProfile::from_json(cfg));
    }
    if (type == "remote") {
        auto remote_cfg = engine::RemoteEngineConfig::from_json(cfg);
        if (probe_remote) {
            httplib::Client probe(remote_cfg.base_url);
            probe.set_connection_timeout(std::chrono::milliseconds(2000));
            auto res = probe.Get("/");
            if (!res && (res.error() == httplib::Error::Connection ||
                         res.error() == httplib::Error::ConnectionTimeout)) {
                throw StartupError("remote engine unreachable at " + remote_cfg.base_url + " (" +
                                   httplib::to_string(res.error()) + ")");
            }
        }
        return std::make_unique<engine::RemoteEngine>(std::move(remote_cfg));
    }
    throw ValidationError("config: unknown engine type '" + type + "'");
}

// Test-harness injection points; production paths fall back to the config.
struct NodeDeps {
    std::shared_ptr<net::Transport> transport;       // default: TcpTransport
    std::shared_ptr<events::EventLog> event_log;     // default: per-node log
    engine::Engine* engine = nullptr;                // default: make_engine(config.engine)
    std::optional<matching::Taxonomy> taxonomy;      // default: config path or shipped table
};

struct ChainDiagnostic {
    int chain_id = 0;
    bool survived = false;
    std::string detail;
};

struct SubmitOutcome {
    voting::Verdict verdict;
    std::string task_id;
    std::vector<ChainDiagnostic> chains;
};

// ---------------------------------------------------------------------------
// Node: gateway + worker in one process. Binds the transport, registers
// itself in the ledger, heartbeats, runs anti-entropy sync, dispatches the
// four message categories, and coordinates chains it planned.

class Node {
public:
    Node(NodeConfig config, NodeDeps deps = {}) : config_(std::move(config)) {
        config_.validate();
        keys_ = config_.key_seed_hex.empty()
                    ? crypto::generate_keypair()
                    : crypto::keypair_from_seed_hex(config_.key_seed_hex);
        id_ = protocol::agent_id_from_public_key(keys_.public_key);

        taxonomy_ = deps.taxonomy ? std::move(*deps.taxonomy)
                    : config_.taxonomy_path.empty()
                        ? matching::default_taxonomy()
                        : matching::Taxonomy::load(config_.taxonomy_path);
        if (taxonomy_.size() != config_.dimension) {
            throw StartupError("taxonomy dimension " + std::to_string(taxonomy_.size()) +
                               " does not match configured dimension " +
                               std::to_string(config_.dimension));
        }
        tagger_ = std::make_unique<matching::KeywordTagger>(taxonomy_);
        prompts_ = prompts::PromptSet::load(config_.prompt_background_path,
                                            config_.prompt_decomposition_path,
                                            config_.prompt_execution_path);
        capability_ = matching::CapabilityVector::of(config_.capability_vector,
                                                     config_.dimension);

        if (deps.engine) {
            engine_ = deps.engine;
        } else {
            try {
                owned_engine_ = make_engine(config_.engine);
            } catch (const StartupError&) {
                throw;
            } catch (const Error& e) {
                throw StartupError(std::string("engine setup failed: ") + e.what());
            }
            engine_ = owned_engine_.get();
        }

        event_log_ = deps.event_log ? std::move(deps.event_log)
                                    : std::make_shared<events::EventLog>(config_.event_log_path);

        ledger::LedgerConfig lcfg;
        lcfg.dimension = config_.dimension;
        lcfg.liveness_ttl_ms = config_.liveness_ttl_ms;
        if (!config_.ledger_log_path.empty()) {
            ledger_log_file_.open(config_.ledger_log_path, std::ios::app);
            lcfg.log_sink = [this](const std::string& line) {
                std::lock_guard lock(ledger_log_mutex_);
                ledger_log_file_ << line << "\n";
                ledger_log_file_.flush();
            };
        }
        ledger_ = std::make_unique<ledger::Ledger>(lcfg);

        transport_ = deps.transport ? std::move(deps.transport)
                                    : std::make_shared<net::TcpTransport>();
        transport_->bind(config_.address(),
                         [this](const std::string& payload) { on_frame(payload); });

        register_self();
        broadcast_sync();

        heartbeat_thread_ = std::jthread([this](std::stop_token st) { heartbeat_loop(st); });
        sync_thread_ = std::jthread([this](std::stop_token st) { sync_loop(st); });
        for (int i = 0; i < std::max(1, config_.executor_workers); ++i) {
            executor_pool_.emplace_back([this] { executor_loop(); });
        }
        if (config_.admin_port != 0) start_admin();
    }

    ~Node() { shutdown(); }

    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    const AgentId& id() const { return id_; }
    std::string address() const { return config_.address(); }
    ledger::Ledger& agent_ledger() { return *ledger_; }
    events::EventLog& event_log() { return *event_log_; }
    const NodeConfig& config() const { return config_; }

    Json status_json() const {
        auto snap = ledger_->snapshot();
        return Json{{"address", address()},
                    {"agent_id", id_.value},
                    {"engine", engine_->id()},
                    {"ledger_records", snap.records.size()},
                    {"ledger_version", snap.version},
                    {"roles", ledger::roles_to_json(config_.roles)}};
    }

    // -----------------------------------------------------------------------
    // User query entry point: planner selection, chain-level dispatch to the
    // chosen planners, then the weighted vote over returned chain results.
    SubmitOutcome submit(const planning::TaskDescription& task, int chains = 0) {
        if (closed_) throw StartupError("node is shut down");
        planning::validate(task);
        if (chains <= 0) chains = config_.default_chains;
        emit({now_ms(), id_.value, "task_submitted", task.task_id, -1, 0,
              {{"chains", chains}}});
        const auto started = std::chrono::steady_clock::now();

        auto planners = ledger_->available(ledger::Role::Planner);
        if (planners.empty()) {
            throw NoPlanners("no available planners for task " + task.task_id);
        }
        auto planning_req = matching::planning_requirement(taxonomy_);
        execution::SubtaskSlot slot{task.task_id, -1, 0};
        auto responses = collect_beacon_responses(planners, slot, planning_req, task.text,
                                                  config_.beacon_timeout_ms, {});
        if (responses.empty()) {
            responses = collect_beacon_responses(planners, slot, planning_req, task.text,
                                                 config_.beacon_timeout_ms * 2, {});
        }
        if (responses.empty()) {
            throw NoPlanners("no planner responded for task " + task.task_id);
        }
        auto ranked = matching::rank_responders(responses);
        if (ranked.size() > static_cast<std::size_t>(chains)) {
            ranked.resize(static_cast<std::size_t>(chains));
        }

        // register waiters before any send so instant replies cannot race us
        std::vector<execution::SubtaskSlot> chain_slots;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            chain_slots.push_back({task.task_id, static_cast<int>(i), 0});
            register_result_waiter(chain_slots.back());
        }
        std::vector<ChainDiagnostic> diagnostics(ranked.size());
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            const auto& [planner_id, bid] = ranked[i];
            diagnostics[i].chain_id = static_cast<int>(i);
            protocol::TaskBody body;
            body.subtask_text = task.text;
            body.accumulated_scores = {bid.score};
            auto planner_rec = ledger_->find(planner_id);
            if (!planner_rec ||
                !send_envelope(planner_rec->address(),
                               make_envelope(MsgType::Task, task.task_id,
                                             static_cast<int>(i), 0, body))) {
                diagnostics[i].detail = "planner unreachable";
                cancel_result_waiter(chain_slots[i]);
            } else {
                emit({now_ms(), id_.value, "task_sent", task.task_id, static_cast<int>(i), 0,
                      {{"to", planner_id.value}}});
            }
        }

        voting::CandidateSet candidates;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            if (!diagnostics[i].detail.empty()) continue;
            const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                     std::chrono::steady_clock::now() - started)
                                     .count();
            const util::Millis remaining =
                config_.task_deadline_ms > static_cast<util::Millis>(elapsed)
                    ? config_.task_deadline_ms - static_cast<util::Millis>(elapsed)
                    : 0;
            auto result = await_result(chain_slots[i], remaining);
            if (!result) {
                diagnostics[i].detail = "chain timed out";
            } else if (result->final_answer.empty()) {
                diagnostics[i].detail = "chain failed at the coordinator";
            } else {
                diagnostics[i].survived = true;
                execution::ChainResult cr;
                cr.chain_id = static_cast<int>(i);
                cr.final_answer = execution::normalize_answer(result->final_answer);
                cr.confidence = result->confidence;
                candidates.results.push_back(std::move(cr));
            }
        }
        if (candidates.results.empty()) {
            std::string detail;
            for (const auto& d : diagnostics) {
                detail += " chain " + std::to_string(d.chain_id) + ": " +
                          (d.detail.empty() ? "failed" : d.detail) + ";";
            }
            throw NoSurvivingChains("no surviving chains for task " + task.task_id + ":" + detail);
        }
        emit({now_ms(), id_.value, "voting_started", task.task_id, -1, 0,
              {{"candidates", candidates.results.size()}}});
        voting::Verdict verdict = voting::vote(candidates);
        emit({now_ms(), id_.value, "verdict", task.task_id, -1, 0,
              {{"answer", verdict.answer}, {"weight", verdict.total_weight}}});
        return SubmitOutcome{std::move(verdict), task.task_id, std::move(diagnostics)};
    }

    // -----------------------------------------------------------------------
    // Message dispatch (public so tests can drive envelopes directly).
    void dispatch(const Envelope& e) {
        auto sender = ledger_->find(e.sender);
        if (!sender) {
            audit("unknown_sender", e);
            return;
        }
        if (!protocol::verify(e, sender->public_key)) {
            audit("bad_signature", e);
            return;
        }
        if (!dedupe(e)) {
            audit("duplicate_dropped", e);
            return;
        }
        switch (e.msg_type()) {
            case MsgType::Beacon: handle_beacon(e, *sender); break;
            case MsgType::BeaconResponse: handle_beacon_response(e); break;
            case MsgType::Task: handle_task(e, *sender); break;
            case MsgType::TaskResult: handle_task_result(e); break;
        }
    }

    void shutdown() {
        if (closed_.exchange(true)) return;
        if (admin_server_) admin_server_->stop();
        if (admin_thread_.joinable()) admin_thread_.join();
        heartbeat_thread_.request_stop();
        sync_thread_.request_stop();
        wake_.notify_all();
        {
            std::lock_guard lock(pending_mutex_);
            pending_cv_.notify_all();
        }
        {
            std::lock_guard lock(executor_mutex_);
            executor_cv_.notify_all();
        }
        if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
        if (sync_thread_.joinable()) sync_thread_.join();
        {
            std::lock_guard lock(planner_jobs_mutex_);
            for (auto& t : planner_jobs_) {
                if (t.joinable()) t.join();
            }
            planner_jobs_.clear();
        }
        for (auto& t : executor_pool_) {
            if (t.joinable()) t.join();
        }
        executor_pool_.clear();
        transport_->unbind(config_.address());
    }

private:
    friend class TransportChainServices;

    // ---- identity & registration -------------------------------------------

    void register_self() {
        ledger::AgentRecord rec;
        rec.agent_id = id_;
        rec.public_key = keys_.public_key;
        rec.host = config_.host;
        rec.port = config_.port;
        rec.capability_vector = config_.capability_vector;
        rec.roles = config_.roles;
        rec.status = ledger::AgentStatus::Available;
        rec.last_seen = util::now_ms();
        rec.model_path = config_.model_path;
        rec.gpu_allocation = config_.gpu_allocation;
        const auto t0 = std::chrono::steady_clock::now();
        ledger_->register_agent(rec, ledger::make_registration_proof(rec, keys_.secret_key));
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        emit({now_ms(), id_.value, "register_applied", "", 0, 0, {{"ms", ms}}});
    }

    // ---- background loops ---------------------------------------------------

    void heartbeat_loop(std::stop_token st) {
        while (!st.stop_requested()) {
            try {
                ledger_->heartbeat(id_, util::now_ms());
            } catch (const Error&) {
                // own record always exists; defensive against shutdown races
            }
            wait_interval(st, config_.heartbeat_interval_ms);
        }
    }

    void sync_loop(std::stop_token st) {
        while (!st.stop_requested()) {
            wait_interval(st, config_.sync_interval_ms);
            if (st.stop_requested()) break;
            broadcast_sync();
        }
    }

    void wait_interval(std::stop_token st, util::Millis interval) {
        std::unique_lock lock(wake_mutex_);
        wake_.wait_for(lock, std::chrono::milliseconds(interval),
                       [&] { return st.stop_requested() || closed_.load(); });
    }

    void broadcast_sync() {
        auto snap = ledger_->snapshot();
        Json msg{{"kind", "ledger_sync"},
                 {"sender", id_.value},
                 {"snapshot", ledger::snapshot_to_json(snap)}};
        const std::string payload = canonical::dump(msg);
        std::set<std::string> peers(config_.peers.begin(), config_.peers.end());
        for (const auto& [aid, sr] : snap.records) peers.insert(sr.record.address());
        peers.erase(config_.address());
        for (const auto& peer : peers) transport_->send(peer, payload);
    }

    // ---- frame routing ------------------------------------------------------

    void on_frame(const std::string& payload) {
        if (closed_) return;
        Json j = Json::parse(payload, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            emit({now_ms(), id_.value, "audit", "", 0, 0, {{"reason", "malformed_frame"}}});
            return;
        }
        if (j.contains("kind")) {
            if (j.at("kind") == "ledger_sync") {
                try {
                    auto snap = ledger::snapshot_from_json(j.at("snapshot"));
                    ledger_->merge(snap, [this](const std::string& w) {
                        emit({now_ms(), id_.value, "audit", "", 0, 0,
                              {{"reason", "merge_warning"}, {"detail", w}}});
                    });
                } catch (const Error& e) {
                    emit({now_ms(), id_.value, "audit", "", 0, 0,
                          {{"reason", "bad_sync"}, {"detail", e.what()}}});
                }
            } else {
                emit({now_ms(), id_.value, "audit", "", 0, 0, {{"reason", "unknown_kind"}}});
            }
            return;
        }
        try {
            dispatch(protocol::decode(payload, {.dimension = config_.dimension}));
        } catch (const DecodeError& e) {
            emit({now_ms(), id_.value, "audit", "", 0, 0,
                  {{"reason", "decode_error"}, {"detail", e.what()}}});
        }
    }

    // Exactly-once application per (task, chain, step, type, sender). Beacons
    // key on respond_by as well so a legitimate rebroadcast is processed;
    // beacon responses are exempt because the round state already applies
    // them at most once and a retry round must accept fresh bids.
    bool dedupe(const Envelope& e) {
        if (e.msg_type() == MsgType::BeaconResponse) return true;
        std::string key = e.task_id + "|" + std::to_string(e.chain_id) + "|" +
                          std::to_string(e.subtask_index) + "|" +
                          std::string(protocol::msg_type_name(e.msg_type())) + "|" +
                          e.sender.value;
        if (e.msg_type() == MsgType::Beacon) {
            key += "|" + std::to_string(std::get<protocol::BeaconBody>(e.body).respond_by);
        }
        std::lock_guard lock(dedupe_mutex_);
        if (seen_.size() > 200'000) seen_.clear();  // desk-scale bound
        return seen_.insert(std::move(key)).second;
    }

    void audit(const char* reason, const Envelope& e) {
        emit({now_ms(), id_.value, "audit", e.task_id, e.chain_id, e.subtask_index,
              {{"reason", reason}, {"sender", e.sender.value}}});
    }

    // ---- handlers -----------------------------------------------------------

    void handle_beacon(const Envelope& e, const ledger::AgentRecord& sender) {
        const auto& beacon = std::get<protocol::BeaconBody>(e.body);
        if (util::now_ms() > beacon.respond_by) return;  // deadline already passed
        matching::RequirementVector req{beacon.requirement_vector};
        protocol::BeaconResponseBody body;
        body.score = matching::match_score(capability_, req).value;
        body.responder_load = static_cast<std::uint32_t>(executor_load_.load());
        body.responded_at = util::now_ms();
        send_envelope(sender.address(), make_envelope(MsgType::BeaconResponse, e.task_id,
                                                      e.chain_id, e.subtask_index, body));
    }

    void handle_beacon_response(const Envelope& e) {
        const auto& body = std::get<protocol::BeaconResponseBody>(e.body);
        const SlotKey key{e.task_id, e.chain_id, e.subtask_index};
        std::lock_guard lock(pending_mutex_);
        auto it = rounds_.find(key);
        if (it == rounds_.end()) return;  // round closed; late response dropped
        RoundState& round = it->second;
        if (!round.expected.count(e.sender) || round.seen.count(e.sender)) return;
        round.seen.insert(e.sender);
        round.responses.emplace_back(e.sender, body);
        emit({now_ms(), id_.value, "response_recv", e.task_id, e.chain_id, e.subtask_index,
              {{"from", e.sender.value}, {"score", body.score}}});
        pending_cv_.notify_all();
    }

    void handle_task(const Envelope& e, const ledger::AgentRecord& sender) {
        if (e.subtask_index == 0) {
            // chain-level assignment: this node planned the chain and now
            // coordinates its execution
            std::lock_guard lock(planner_jobs_mutex_);
            if (closed_) return;  // shutdown already joined the job list
            planner_jobs_.emplace_back([this, e, sender] { run_planner_job(e, sender); });
            return;
        }
        ++executor_load_;
        {
            std::lock_guard lock(executor_mutex_);
            executor_queue_.push_back({e, sender.address()});
        }
        executor_cv_.notify_one();
    }

    void handle_task_result(const Envelope& e) {
        const auto& body = std::get<protocol::TaskResultBody>(e.body);
        const SlotKey key{e.task_id, e.chain_id, e.subtask_index};
        std::lock_guard lock(pending_mutex_);
        auto it = results_.find(key);
        if (it == results_.end() || it->second.result.has_value()) return;
        it->second.result = body;
        emit({now_ms(), id_.value, "result_recv", e.task_id, e.chain_id, e.subtask_index,
              {{"from", e.sender.value}}});
        pending_cv_.notify_all();
    }

    // ---- planner job: plan then coordinate the chain ------------------------

    void run_planner_job(const Envelope& e, const ledger::AgentRecord& origin) {
        const auto& body = std::get<protocol::TaskBody>(e.body);
        planning::TaskDescription task{e.task_id, body.subtask_text, {}};
        protocol::TaskResultBody reply;
        try {
            auto planning_ms = [&](double ms) {
                emit({now_ms(), id_.value, "engine_call", e.task_id, e.chain_id, 0,
                      {{"ms", ms}, {"stage", "planning"}}});
            };
            std::string background =
                planning::extract_background(task, *engine_, prompts_, e.chain_id, planning_ms);
            planning::ChainOfThought chain =
                planning::decompose(task, background, *engine_, prompts_, e.chain_id,
                                    config_.max_subtasks, planning_ms);
            chain.planner = id_;

            TransportChainServices services(*this);
            execution::ChainConfig cfg;
            cfg.beacon_timeout_ms = config_.beacon_timeout_ms;
            cfg.step_deadline_ms = config_.step_deadline_ms;
            cfg.tagger = tagger_.get();
            execution::ChainResult result =
                execution::run_chain(chain, e.task_id, services, cfg);
            reply.final_answer = result.final_answer;
            reply.confidence = result.confidence;
        } catch (const ChainFailed&) {
            // run_chain already emitted the failed chain_done
            reply.final_answer.clear();
            reply.confidence = 0.0;
        } catch (const Error& err) {
            emit({now_ms(), id_.value, "chain_done", e.task_id, e.chain_id, 0,
                  {{"status", "failed"}, {"reason", err.what()}}});
            reply.final_answer.clear();
            reply.confidence = 0.0;
        }
        send_envelope(origin.address(),
                      make_envelope(MsgType::TaskResult, e.task_id, e.chain_id, 0, reply));
    }

    // ---- executor worker ----------------------------------------------------

    struct ExecutorJob {
        Envelope envelope;
        std::string reply_address;
    };

    void executor_loop() {
        while (true) {
            ExecutorJob job;
            {
                std::unique_lock lock(executor_mutex_);
                executor_cv_.wait(lock, [this] { return closed_ || !executor_queue_.empty(); });
                if (executor_queue_.empty()) return;  // closed and drained
                job = std::move(executor_queue_.front());
                executor_queue_.pop_front();
            }
            run_executor_job(job);
            --executor_load_;
        }
    }

    void run_executor_job(const ExecutorJob& job) {
        const Envelope& e = job.envelope;
        const auto& body = std::get<protocol::TaskBody>(e.body);
        protocol::TaskResultBody reply;
        reply.confidence = execution::mean(body.accumulated_scores);
        try {
            const std::string context =
                execution::build_context(body.background, body.prior_results);
            const std::string numbered =
                "Q" + std::to_string(e.subtask_index) + ": " + body.subtask_text;
            auto outcome = execution::execute_subtask(
                numbered, context, *engine_, prompts_, [&](double ms) {
                    emit({now_ms(), id_.value, "engine_call", e.task_id, e.chain_id,
                          e.subtask_index, {{"ms", ms}}});
                });
            reply.final_answer = outcome.answer;
        } catch (const Error&) {
            reply.final_answer.clear();
        }
        if (!reply.final_answer.empty()) {
            try {
                ledger_->record_contribution(id_);
            } catch (const Error&) {
                // contribution bookkeeping never blocks the reply
            }
        }
        send_envelope(job.reply_address,
                      make_envelope(MsgType::TaskResult, e.task_id, e.chain_id,
                                    e.subtask_index, reply));
    }

    // ---- beacon rounds & task dispatch (coordinator side) -------------------

    struct SlotKey {
        std::string task_id;
        int chain_id;
        int subtask_index;
        auto operator<=>(const SlotKey&) const = default;
    };

    struct RoundState {
        std::set<AgentId> expected;
        std::set<AgentId> seen;
        std::vector<matching::Response> responses;
    };

    struct ResultWait {
        std::optional<protocol::TaskResultBody> result;
    };

    std::vector<matching::Response> collect_beacon_responses(
        const std::vector<ledger::AgentRecord>& recipients, const execution::SubtaskSlot& slot,
        const matching::RequirementVector& requirement, const std::string& subtask_text,
        util::Millis timeout_ms, const std::set<AgentId>& exclude) {
        const SlotKey key{slot.task_id, slot.chain_id, slot.subtask_index};
        // expected is filled optimistically before any send so a bid arriving
        // mid-broadcast is never dropped; failed sends are pruned afterwards
        RoundState fresh;
        for (const auto& rec : recipients) {
            if (!exclude.count(rec.agent_id)) fresh.expected.insert(rec.agent_id);
        }
        {
            std::lock_guard lock(pending_mutex_);
            rounds_[key] = std::move(fresh);
        }
        emit({now_ms(), id_.value, "beacon_sent", slot.task_id, slot.chain_id,
              slot.subtask_index, {{"recipients", recipients.size()}}});

        protocol::BeaconBody beacon;
        beacon.requirement_vector = requirement.components;
        beacon.subtask_text = subtask_text;
        beacon.respond_by = util::now_ms() + timeout_ms;
        Envelope env = make_envelope(MsgType::Beacon, slot.task_id, slot.chain_id,
                                     slot.subtask_index, beacon);
        const std::string payload = protocol::encode(env);

        std::set<AgentId> unreachable;
        for (const auto& rec : recipients) {
            if (exclude.count(rec.agent_id)) continue;
            if (!transport_->send(rec.address(), payload)) unreachable.insert(rec.agent_id);
        }
        std::vector<matching::Response> responses;
        {
            std::unique_lock lock(pending_mutex_);
            for (const auto& id : unreachable) rounds_.at(key).expected.erase(id);
            pending_cv_.notify_all();
            pending_cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] {
                if (closed_) return true;
                const RoundState& r = rounds_.at(key);
                return r.seen.size() >= r.expected.size();
            });
            responses = std::move(rounds_.at(key).responses);
            rounds_.erase(key);
        }
        if (!responses.empty()) {
            auto ranked = matching::rank_responders(responses);
            emit({now_ms(), ranked.front().first.value, "executor_selected", slot.task_id,
                  slot.chain_id, slot.subtask_index, {{"score", ranked.front().second.score}}});
        }
        return responses;
    }

    void register_result_waiter(const execution::SubtaskSlot& slot) {
        std::lock_guard lock(pending_mutex_);
        results_[{slot.task_id, slot.chain_id, slot.subtask_index}] = ResultWait{};
    }

    void cancel_result_waiter(const execution::SubtaskSlot& slot) {
        std::lock_guard lock(pending_mutex_);
        results_.erase({slot.task_id, slot.chain_id, slot.subtask_index});
    }

    std::optional<protocol::TaskResultBody> await_result(const execution::SubtaskSlot& slot,
                                                         util::Millis deadline_ms) {
        const SlotKey key{slot.task_id, slot.chain_id, slot.subtask_index};
        std::unique_lock lock(pending_mutex_);
        pending_cv_.wait_for(lock, std::chrono::milliseconds(deadline_ms), [&] {
            if (closed_) return true;
            auto it = results_.find(key);
            return it == results_.end() || it->second.result.has_value();
        });
        auto it = results_.find(key);
        std::optional<protocol::TaskResultBody> out;
        if (it != results_.end()) {
            out = std::move(it->second.result);
            results_.erase(it);
        }
        return out;
    }

    // Chain services over the wire: the coordinator beacons the available
    // executors from its own ledger snapshot and dispatches signed Tasks.
    class TransportChainServices final : public execution::ChainServices {
    public:
        explicit TransportChainServices(Node& node) : node_(node) {}

        std::vector<matching::Response> beacon_round(const execution::SubtaskSlot& slot,
                                                     const matching::RequirementVector& req,
                                                     const std::string& subtask_text,
                                                     util::Millis timeout_ms,
                                                     const std::set<AgentId>& exclude) override {
            auto executors = node_.ledger_->available(ledger::Role::Executor);
            return node_.collect_beacon_responses(executors, slot, req, subtask_text, timeout_ms,
                                                  exclude);
        }

        std::optional<protocol::TaskResultBody> dispatch_task(const AgentId& executor,
                                                              const execution::SubtaskSlot& slot,
                                                              const protocol::TaskBody& body,
                                                              util::Millis deadline_ms) override {
            auto rec = node_.ledger_->find(executor);
            if (!rec) return std::nullopt;
            node_.register_result_waiter(slot);
            node_.emit({node_.now_ms(), node_.id_.value, "task_sent", slot.task_id,
                        slot.chain_id, slot.subtask_index, {{"to", executor.value}}});
            Envelope env = node_.make_envelope(MsgType::Task, slot.task_id, slot.chain_id,
                                               slot.subtask_index, body);
            if (!node_.send_envelope(rec->address(), env)) {
                node_.cancel_result_waiter(slot);
                return std::nullopt;  // crash before dispatch acknowledgment
            }
            return node_.await_result(slot, deadline_ms);
        }

        void emit(events::Event event) override { node_.emit(std::move(event)); }
        std::int64_t now_ms() override { return node_.now_ms(); }

    private:
        Node& node_;
    };

    // ---- plumbing -----------------------------------------------------------

    template <typename Body>
    Envelope make_envelope(MsgType, const std::string& task_id, int chain_id,
                           int subtask_index, Body body) {
        Envelope e;
        e.sender = id_;
        e.task_id = task_id;
        e.chain_id = chain_id;
        e.subtask_index = subtask_index;
        e.sent_at = util::now_ms();
        e.body = std::move(body);
        protocol::sign(e, keys_.secret_key);
        return e;
    }

    bool send_envelope(const std::string& address, const Envelope& e) {
        return transport_->send(address, protocol::encode(e));
    }

    void emit(events::Event e) { event_log_->append(std::move(e)); }
    std::int64_t now_ms() const { return util::steady_ms(); }

    void start_admin() {
        admin_server_ = std::make_unique<httplib::Server>();
        admin_server_->Get("/status", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(canonical::dump(status_json()), "application/json");
        });
        admin_server_->Get("/ledger", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(canonical::dump(ledger::snapshot_to_json(ledger_->snapshot())),
                            "application/json");
        });
        admin_server_->Post("/register",
                            [this](const httplib::Request& req, httplib::Response& res) {
            try {
                Json j = canonical::parse(req.body);
                auto rec = ledger::record_from_json(j.at("record"));
                auto snap =
                    ledger_->register_agent(rec, j.at("proof").get<std::string>());
                res.set_content(canonical::dump(Json{{"version", snap.version}}),
                                "application/json");
            } catch (const Error& e) {
                res.status = 400;
                res.set_content(canonical::dump(Json{{"error", e.what()}}),
                                "application/json");
            } catch (const Json::exception& e) {
                res.status = 400;
                res.set_content(canonical::dump(Json{{"error", e.what()}}),
                                "application/json");
            }
        });
        admin_server_->Post("/submit",
                            [this](const httplib::Request& req, httplib::Response& res) {
            try {
                Json j = canonical::parse(req.body);
                planning::TaskDescription task;
                task.task_id = j.value("task_id", "task-" + std::to_string(util::now_ms()));
                task.text = j.at("text").get<std::string>();
                if (j.contains("options")) {
                    for (const auto& o : j.at("options")) {
                        task.options.push_back(o.get<std::string>());
                    }
                }
                auto outcome = submit(task, j.value("chains", 0));
                Json chains = Json::array();
                for (const auto& d : outcome.chains) {
                    chains.push_back(Json{{"chain_id", d.chain_id},
                                          {"detail", d.detail},
                                          {"survived", d.survived}});
                }
                res.set_content(canonical::dump(Json{
                                    {"chains", std::move(chains)},
                                    {"task_id", outcome.task_id},
                                    {"verdict", voting::verdict_to_json(outcome.verdict)}}),
                                "application/json");
            } catch (const Error& e) {
                res.status = 400;
                res.set_content(canonical::dump(Json{{"error", e.what()}}),
                                "application/json");
            } catch (const Json::exception& e) {
                res.status = 400;
                res.set_content(canonical::dump(Json{{"error", e.what()}}),
                                "application/json");
            }
        });
        if (!admin_server_->bind_to_port(config_.host, config_.admin_port)) {
            throw StartupError("cannot bind admin port " + std::to_string(config_.admin_port));
        }
        admin_thread_ = std::thread([this] { admin_server_->listen_after_bind(); });
    }

    // ---- members ------------------------------------------------------------

    NodeConfig config_;
    crypto::KeyPair keys_;
    AgentId id_;
    matching::Taxonomy taxonomy_;
    std::unique_ptr<matching::KeywordTagger> tagger_;
    prompts::PromptSet prompts_;
    matching::CapabilityVector capability_{{1.0}};

    std::unique_ptr<engine::Engine> owned_engine_;
    engine::Engine* engine_ = nullptr;

    std::shared_ptr<events::EventLog> event_log_;
    std::unique_ptr<ledger::Ledger> ledger_;
    std::mutex ledger_log_mutex_;
    std::ofstream ledger_log_file_;

    std::shared_ptr<net::Transport> transport_;

    std::atomic<bool> closed_{false};
    std::mutex wake_mutex_;
    std::condition_variable wake_;
    std::jthread heartbeat_thread_;
    std::jthread sync_thread_;

    std::mutex pending_mutex_;
    std::condition_variable pending_cv_;
    std::map<SlotKey, RoundState> rounds_;
    std::map<SlotKey, ResultWait> results_;

    std::mutex dedupe_mutex_;
    std::set<std::string> seen_;

    std::mutex executor_mutex_;
    std::condition_variable executor_cv_;
    std::deque<ExecutorJob> executor_queue_;
    std::vector<std::thread> executor_pool_;
    std::atomic<int> executor_load_{0};

    std::mutex planner_jobs_mutex_;
    std::vector<std::thread> planner_jobs_;

    std::unique_ptr<httplib::Server> admin_server_;
    std::thread admin_thread_;
};

} // namespace symphony::runtime
