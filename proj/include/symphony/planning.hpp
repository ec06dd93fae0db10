#pragma once

#include <future>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symphony/engine.hpp"
#include "symphony/errors.hpp"
#include "symphony/ledger.hpp"
#include "symphony/matching.hpp"
#include "symphony/prompts.hpp"
#include "symphony/util.hpp"

namespace symphony::planning {

using protocol::AgentId;

inline constexpr int kDefaultChains = 3;        // M
inline constexpr std::size_t kMaxSubtasks = 8;  // K_i upper bound
inline constexpr int kRepromptBudget = 1;       // retries per engine step

// The original user task T_0.
struct TaskDescription {
    std::string task_id;
    std::string text;
    std::vector<std::string> options;
};

inline void validate(const TaskDescription& task) {
    if (task.task_id.empty()) throw ValidationError("task_id is empty");
    if (util::trim(task.text).empty()) throw ValidationError("task text is empty");
}

// One planner's decomposition: background plus an ordered list of
// sub-questions, each stored without its "Q<n>: " numbering prefix.
struct ChainOfThought {
    int chain_id = 0;
    std::string background;
    std::vector<std::string> subtasks;
    AgentId planner;
};

inline std::string numbered_subtask(const ChainOfThought& chain, std::size_t k_one_based) {
    return "Q" + std::to_string(k_one_based) + ": " + chain.subtasks[k_one_based - 1];
}

inline void validate(const ChainOfThought& chain, std::size_t max_subtasks = kMaxSubtasks) {
    if (chain.subtasks.empty()) throw ValidationError("chain has no subtasks");
    if (chain.subtasks.size() > max_subtasks) {
        throw ValidationError("chain has " + std::to_string(chain.subtasks.size()) +
                              " subtasks; limit is " + std::to_string(max_subtasks));
    }
    for (const auto& s : chain.subtasks) {
        const std::string t = util::trim(s);
        if (t.empty()) throw ValidationError("chain contains an empty subtask");
        if (t.back() != '?') throw ValidationError("subtask is not phrased as a question: " + t);
    }
}

// ---------------------------------------------------------------------------
// Background extraction: one engine call with the minimal restatement
// prompt; the scripted engine's output comes back verbatim.

inline std::string extract_background(const TaskDescription& task, engine::Engine& eng,
                                      const prompts::PromptSet& prompt_set, int chain_id = -1,
                                      const std::function<void(double)>& on_engine_ms = {}) {
    validate(task);
    const std::string prompt = prompt_set.render_background(task.text);
    for (int attempt = 0; attempt <= kRepromptBudget; ++attempt) {
        try {
            engine::EngineReply reply = eng.generate({.prompt = prompt});
            if (on_engine_ms) on_engine_ms(static_cast<double>(reply.latency_ms));
            if (!util::trim(reply.text).empty()) return reply.text;
        } catch (const EngineUnavailable&) {
            // retried below
        }
    }
    throw PlanningFailed(chain_id, "background extraction produced no output");
}

// ---------------------------------------------------------------------------
// Decomposition: render the decomposition prompt, demand the JSON contract,
// strip the Q<n>: numbering. One reprompt with a fresh sample on violation.

namespace detail {

// Models wrap JSON in prose despite the prompt; recover the outermost braces.
inline std::optional<std::string> json_island(const std::string& text) {
    const auto first = text.find('{');
    const auto last = text.rfind('}');
    if (first == std::string::npos || last == std::string::npos || last < first) {
        return std::nullopt;
    }
    return text.substr(first, last - first + 1);
}

struct ParsedDecomposition {
    std::string original_question;
    std::vector<std::string> subtasks;  // prefix-stripped
};

inline ParsedDecomposition parse_decomposition(const std::string& raw,
                                               std::size_t max_subtasks) {
    const auto island = json_island(raw);
    if (!island) throw ValidationError("no JSON object in decomposition output");
    canonical::Json j = canonical::Json::parse(*island, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ValidationError("decomposition output is not valid JSON");
    }
    if (!j.contains("original_question") || !j["original_question"].is_string()) {
        throw ValidationError("decomposition lacks original_question");
    }
    if (!j.contains("subtasks") || !j["subtasks"].is_array() || j["subtasks"].empty()) {
        throw ValidationError("decomposition lacks a nonempty subtasks array");
    }
    ParsedDecomposition out;
    out.original_question = j["original_question"].get<std::string>();
    int expected = 1;
    for (const auto& item : j["subtasks"]) {
        if (!item.is_string()) throw ValidationError("subtask entry is not a string");
        const std::string s = item.get<std::string>();
        const std::string prefix = "Q" + std::to_string(expected) + ": ";
        if (s.rfind(prefix, 0) != 0) {
            throw ValidationError("subtask " + std::to_string(expected) +
                                  " is not numbered 'Q" + std::to_string(expected) + ": '");
        }
        out.subtasks.push_back(s.substr(prefix.size()));
        ++expected;
    }
    if (out.subtasks.size() > max_subtasks) {
        throw ValidationError("too many subtasks: " + std::to_string(out.subtasks.size()));
    }
    return out;
}

} // namespace detail

inline ChainOfThought decompose(const TaskDescription& task, const std::string& background,
                                engine::Engine& eng, const prompts::PromptSet& prompt_set,
                                int chain_id = 0, std::size_t max_subtasks = kMaxSubtasks,
                                const std::function<void(double)>& on_engine_ms = {}) {
    validate(task);
    const std::string prompt = prompt_set.render_decomposition(task.text);
    std::string last_error;
    for (int attempt = 0; attempt <= kRepromptBudget; ++attempt) {
        std::string raw;
        try {
            engine::EngineReply reply = eng.generate({.prompt = prompt});
            if (on_engine_ms) on_engine_ms(static_cast<double>(reply.latency_ms));
            raw = reply.text;
        } catch (const EngineUnavailable& e) {
            last_error = e.what();
            continue;
        }
        try {
            auto parsed = detail::parse_decomposition(raw, max_subtasks);
            ChainOfThought chain;
            chain.chain_id = chain_id;
            chain.background = background;
            chain.subtasks = std::move(parsed.subtasks);
            validate(chain, max_subtasks);
            return chain;
        } catch (const ValidationError& e) {
            last_error = e.what();
        }
    }
    throw PlanningFailed(chain_id, "decomposition failed after reprompt: " + last_error);
}

// ---------------------------------------------------------------------------
// Fan-out. The backend hides where planners live: the local backend drives
// in-process engines; the node runtime substitutes a transport-backed one.

class PlanningBackend {
public:
    virtual ~PlanningBackend() = default;
    // Planner ids ranked by the selection order (score, speed, load, id).
    virtual std::vector<AgentId> rank_planners(const TaskDescription& task) = 0;
    // Runs one planner end-to-end; nullopt when that chain failed or timed out.
    virtual std::optional<ChainOfThought> plan(const AgentId& planner,
                                               const TaskDescription& task, int chain_id) = 0;
};

inline std::vector<ChainOfThought> plan_fanout(const TaskDescription& task, int chains,
                                               PlanningBackend& backend) {
    validate(task);
    if (chains < 1) throw ValidationError("chain count must be >= 1");
    std::vector<AgentId> planners = backend.rank_planners(task);
    if (planners.empty()) throw NoPlanners("no available planners for task " + task.task_id);
    if (planners.size() > static_cast<std::size_t>(chains)) {
        planners.resize(static_cast<std::size_t>(chains));
    }

    std::vector<std::future<std::optional<ChainOfThought>>> futures;
    futures.reserve(planners.size());
    for (std::size_t i = 0; i < planners.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&, i] {
            return backend.plan(planners[i], task, static_cast<int>(i));
        }));
    }
    std::vector<ChainOfThought> out;
    for (auto& f : futures) {
        if (auto chain = f.get()) out.push_back(std::move(*chain));
    }
    if (out.empty()) {
        throw PlanningFailed(-1, "all planning chains failed for task " + task.task_id);
    }
    return out;
}

// In-process backend: planners are ledger records whose engines live in this
// process. Scores come straight from the registered capability vectors.
class LocalPlanningBackend final : public PlanningBackend {
public:
    LocalPlanningBackend(ledger::LedgerSnapshot snapshot,
                         std::map<AgentId, engine::Engine*> engines,
                         prompts::PromptSet prompt_set, const matching::Taxonomy& taxonomy,
                         util::Millis now, util::Millis ttl = ledger::kDefaultLivenessTtlMs)
        : snapshot_(std::move(snapshot)), engines_(std::move(engines)),
          prompts_(std::move(prompt_set)), taxonomy_(taxonomy), now_(now), ttl_(ttl) {}

    std::vector<AgentId> rank_planners(const TaskDescription&) override {
        const auto requirement = matching::planning_requirement(taxonomy_);
        std::vector<matching::Response> bids;
        for (const auto& rec :
             ledger::available_agents(snapshot_, ledger::Role::Planner, now_, ttl_)) {
            auto cap = matching::CapabilityVector::of(rec.capability_vector, taxonomy_.size());
            protocol::BeaconResponseBody body;
            body.score = matching::match_score(cap, requirement).value;
            body.responded_at = now_;
            bids.emplace_back(rec.agent_id, body);
        }
        std::vector<AgentId> out;
        for (auto& r : matching::rank_responders(std::move(bids))) out.push_back(r.first);
        return out;
    }

    std::optional<ChainOfThought> plan(const AgentId& planner, const TaskDescription& task,
                                       int chain_id) override {
        auto it = engines_.find(planner);
        if (it == engines_.end() || it->second == nullptr) return std::nullopt;
        try {
            std::string background = extract_background(task, *it->second, prompts_, chain_id);
            ChainOfThought chain =
                decompose(task, background, *it->second, prompts_, chain_id);
            chain.planner = planner;
            return chain;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

private:
    ledger::LedgerSnapshot snapshot_;
    std::map<AgentId, engine::Engine*> engines_;
    prompts::PromptSet prompts_;
    const matching::Taxonomy& taxonomy_;
    util::Millis now_;
    util::Millis ttl_;
};

} // namespace symphony::planning
