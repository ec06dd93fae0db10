#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "symphony/engine.hpp"
#include "symphony/errors.hpp"
#include "symphony/events.hpp"
#include "symphony/ledger.hpp"
#include "symphony/matching.hpp"
#include "symphony/planning.hpp"
#include "symphony/prompts.hpp"
#include "symphony/protocol.hpp"
#include "symphony/util.hpp"

namespace symphony::execution {

using planning::ChainOfThought;
using protocol::AgentId;

inline constexpr util::Millis kDefaultBeaconTimeoutMs = 2'000;
inline constexpr util::Millis kDefaultStepDeadlineMs = 30'000;

// ---------------------------------------------------------------------------
// Answers

// Returns the contents of the LAST balanced \boxed{...} group; nested braces
// stay intact.
inline std::string extract_boxed(std::string_view raw) {
    static constexpr std::string_view kMarker = "\\boxed{";
    std::size_t search_end = raw.size();
    while (true) {
        const auto start = raw.rfind(kMarker, search_end == 0 ? 0 : search_end - 1);
        if (start == std::string_view::npos) break;
        std::size_t depth = 1;
        const std::size_t open = start + kMarker.size();
        for (std::size_t i = open; i < raw.size(); ++i) {
            if (raw[i] == '{') {
                ++depth;
            } else if (raw[i] == '}') {
                if (--depth == 0) {
                    return util::trim(raw.substr(open, i - open));
                }
            }
        }
        if (start == 0) break;
        search_end = start;  // unbalanced; try an earlier group
    }
    throw NoBoxedAnswer("no balanced \\boxed{...} group in output");
}

// Equality relation for votes: trim, collapse whitespace, case-fold, strip
// trailing periods; numeric-looking answers canonicalize through a decimal
// parse so "5.0" and "5" agree.
inline std::string normalize_answer(std::string_view raw) {
    std::string s = util::collapse_ws(util::trim(raw));
    s = util::to_lower(s);
    while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
    if (!s.empty()) {
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(value)) {
            if (value == std::floor(value) && std::abs(value) <= 9007199254740992.0) {
                return std::to_string(static_cast<long long>(value));
            }
            return canonical::render_real(value);
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Chain state

struct CompletedStep {
    std::string subtask_text;  // prefix-stripped
    std::string answer;        // boxed contents, un-normalized
    double score = 0.0;        // the executing agent's match score
};

struct ChainState {
    ChainOfThought chain;
    std::vector<CompletedStep> completed;
    std::size_t cursor = 0;  // next sub-task index (0-based)
    util::Millis deadline = 0;
};

// Final answer a_i with its confidence w_i = mean of the per-step scores.
struct ChainResult {
    int chain_id = 0;
    std::string final_answer;  // normalized
    double confidence = 0.0;
    std::vector<double> per_step_scores;
};

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Deterministic context assembly, formatted the way the execution prompt's
// worked examples format it: background, then each completed pair as
// "Q<k>: <question> Answer: $\boxed{<answer>}$", joined by single spaces.
inline std::string build_context(std::string_view background,
                                 const std::vector<std::pair<std::string, std::string>>& completed) {
    std::string out = util::trim(background);
    for (std::size_t i = 0; i < completed.size(); ++i) {
        if (!out.empty()) out += " ";
        out += "Q" + std::to_string(i + 1) + ": " + completed[i].first +
               " Answer: $\\boxed{" + completed[i].second + "}$";
    }
    return out;
}

inline std::string build_context(const ChainState& state) {
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(state.completed.size());
    for (const auto& step : state.completed) pairs.emplace_back(step.subtask_text, step.answer);
    return build_context(state.chain.background, pairs);
}

// ---------------------------------------------------------------------------
// Executor-side sub-task execution: render the execution prompt, call the
// engine, pull out the boxed answer. One reprompt on a missing box or an
// engine failure; then SubtaskFailed.

struct SubtaskOutcome {
    std::string answer;      // boxed contents
    std::string raw_output;  // full engine text
};

inline SubtaskOutcome execute_subtask(const std::string& numbered_subtask,
                                      const std::string& context, engine::Engine& eng,
                                      const prompts::PromptSet& prompt_set,
                                      const std::function<void(double)>& on_engine_ms = {}) {
    const std::string prompt = prompt_set.render_execution(context, numbered_subtask);
    std::string last_error;
    for (int attempt = 0; attempt <= planning::kRepromptBudget; ++attempt) {
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
            return SubtaskOutcome{extract_boxed(raw), raw};
        } catch (const NoBoxedAnswer& e) {
            last_error = e.what();
        }
    }
    throw SubtaskFailed("sub-task produced no boxed answer: " + last_error);
}

// ---------------------------------------------------------------------------
// Coordinator services: how one chain reaches the rest of the swarm. The
// node runtime backs this with the wire protocol; tests use the in-process
// variant below.

struct SubtaskSlot {
    std::string task_id;
    int chain_id = 0;
    int subtask_index = 0;  // 1-based for chain steps; 0 is the chain-level slot
};

class ChainServices {
public:
    virtual ~ChainServices() = default;

    // Broadcasts a Beacon for the slot and collects responses until the
    // timeout or until every recipient answered. Excluded agents are not
    // beaconed (used when retrying around a crashed winner).
    virtual std::vector<matching::Response> beacon_round(
        const SubtaskSlot& slot, const matching::RequirementVector& requirement,
        const std::string& subtask_text, util::Millis timeout_ms,
        const std::set<AgentId>& exclude) = 0;

    // Sends the Task to the chosen executor and awaits its TaskResult.
    // nullopt = unreachable or deadline passed (crash-equivalent).
    virtual std::optional<protocol::TaskResultBody> dispatch_task(
        const AgentId& executor, const SubtaskSlot& slot, const protocol::TaskBody& body,
        util::Millis deadline_ms) = 0;

    virtual void emit(events::Event event) = 0;
    virtual std::int64_t now_ms() = 0;
};

struct ChainConfig {
    util::Millis beacon_timeout_ms = kDefaultBeaconTimeoutMs;
    util::Millis step_deadline_ms = kDefaultStepDeadlineMs;
    matching::RequirementTagger* tagger = nullptr;  // defaults to keyword tagger
    matching::WarningSink warn;
};

namespace detail {

struct RoundPick {
    AgentId executor;
    double score = 0.0;
    std::vector<matching::Response> responses;
};

// One beacon round with the empty-response retry: a second broadcast at a
// doubled timeout before giving up.
inline RoundPick run_beacon_round(ChainServices& services, const SubtaskSlot& slot,
                                  const matching::RequirementVector& requirement,
                                  const std::string& subtask_text, util::Millis timeout_ms,
                                  const std::set<AgentId>& exclude) {
    auto responses = services.beacon_round(slot, requirement, subtask_text, timeout_ms, exclude);
    if (responses.empty()) {
        responses =
            services.beacon_round(slot, requirement, subtask_text, timeout_ms * 2, exclude);
    }
    if (responses.empty()) {
        throw NoResponders("no beacon responses for task " + slot.task_id + " chain " +
                           std::to_string(slot.chain_id) + " step " +
                           std::to_string(slot.subtask_index));
    }
    auto ranked = matching::rank_responders(responses);
    return RoundPick{ranked.front().first, ranked.front().second.score, std::move(responses)};
}

} // namespace detail

// Exposed per the module contract: one beacon round returning the winning
// executor and its score.
inline std::pair<AgentId, matching::MatchScore> beacon_round(
    ChainServices& services, const SubtaskSlot& slot,
    const matching::RequirementVector& requirement, const std::string& subtask_text,
    util::Millis timeout_ms, const std::set<AgentId>& exclude = {}) {
    auto pick = detail::run_beacon_round(services, slot, requirement, subtask_text, timeout_ms,
                                         exclude);
    return {pick.executor, matching::MatchScore{pick.score}};
}

// Drives one chain to completion: per-step beacon round, dispatch with
// context chaining, one retry around a failed executor, confidence = mean of
// the collected match scores.
inline ChainResult run_chain(const ChainOfThought& chain, const std::string& task_id,
                             ChainServices& services, const ChainConfig& config = {}) {
    planning::validate(chain);
    matching::KeywordTagger default_tagger;
    matching::RequirementTagger& tagger =
        config.tagger ? *config.tagger : static_cast<matching::RequirementTagger&>(default_tagger);

    ChainState state;
    state.chain = chain;
    auto fail = [&](const std::string& why) -> ChainFailed {
        services.emit({services.now_ms(), "-", "chain_done", task_id, chain.chain_id, 0,
                       {{"status", "failed"}, {"reason", why}}});
        return ChainFailed(chain.chain_id, "chain " + std::to_string(chain.chain_id) +
                                               " failed: " + why);
    };

    const std::size_t steps = chain.subtasks.size();
    for (std::size_t k = 1; k <= steps; ++k) {
        const std::string& subtask = chain.subtasks[k - 1];
        const SubtaskSlot slot{task_id, chain.chain_id, static_cast<int>(k)};
        matching::RequirementVector requirement =
            matching::requirement_of(subtask, tagger, config.warn);

        detail::RoundPick pick;
        try {
            pick = detail::run_beacon_round(services, slot, requirement, subtask,
                                            config.beacon_timeout_ms, {});
        } catch (const NoResponders& e) {
            throw fail(e.what());
        }

        std::optional<protocol::TaskResultBody> result;
        double step_score = pick.score;
        std::set<AgentId> excluded;
        for (int attempt = 0; attempt < 2; ++attempt) {
            protocol::TaskBody body;
            body.subtask_text = subtask;
            body.background = chain.background;
            for (const auto& done : state.completed) {
                body.prior_results.emplace_back(done.subtask_text, done.answer);
            }
            body.remaining_chain.assign(chain.subtasks.begin() +
                                            static_cast<std::ptrdiff_t>(k),
                                        chain.subtasks.end());
            for (const auto& done : state.completed) {
                body.accumulated_scores.push_back(done.score);
            }
            body.accumulated_scores.push_back(step_score);

            result = services.dispatch_task(pick.executor, slot, body, config.step_deadline_ms);
            if (result) break;

            // executor went dark: one retry after a rebroadcast that skips it
            excluded.insert(pick.executor);
            try {
                pick = detail::run_beacon_round(services, slot, requirement, subtask,
                                                config.beacon_timeout_ms, excluded);
            } catch (const NoResponders& e) {
                throw fail(e.what());
            }
            step_score = pick.score;
        }
        if (!result) {
            throw fail("executor unreachable after retry at step " + std::to_string(k));
        }
        if (result->final_answer.empty()) {
            throw fail("executor reported sub-task failure at step " + std::to_string(k));
        }
        state.completed.push_back(CompletedStep{subtask, result->final_answer, step_score});
        state.cursor = k;
    }

    ChainResult out;
    out.chain_id = chain.chain_id;
    out.final_answer = normalize_answer(state.completed.back().answer);
    for (const auto& s : state.completed) out.per_step_scores.push_back(s.score);
    out.confidence = mean(out.per_step_scores);
    services.emit({services.now_ms(), "-", "chain_done", task_id, chain.chain_id, 0,
                   {{"status", "ok"}, {"answer", out.final_answer},
                    {"confidence", out.confidence}}});
    return out;
}

// ---------------------------------------------------------------------------
// In-process services: agents are (capability, engine) pairs in this
// process. Used by tests and by single-node deployments; the node runtime
// swaps in the transport-backed implementation with identical semantics.

class LocalChainServices final : public ChainServices {
public:
    struct Agent {
        matching::CapabilityVector capability;
        engine::Engine* engine = nullptr;
    };

    LocalChainServices(std::map<AgentId, Agent> agents, prompts::PromptSet prompt_set,
                       events::EventLog* log = nullptr, ledger::Ledger* contributions = nullptr)
        : agents_(std::move(agents)), prompts_(std::move(prompt_set)), log_(log),
          ledger_(contributions) {}

    // Fault injection: a killed agent stops responding to beacons and tasks.
    void kill(const AgentId& id) { dead_.insert(id); }
    void revive(const AgentId& id) { dead_.erase(id); }
    // Crash between selection and dispatch acknowledgment: the first Task
    // sent to this agent is lost and the agent goes dark.
    void kill_on_dispatch(const AgentId& id) { kill_on_dispatch_.insert(id); }

    std::vector<matching::Response> beacon_round(const SubtaskSlot& slot,
                                                 const matching::RequirementVector& requirement,
                                                 const std::string& subtask_text,
                                                 util::Millis timeout_ms,
                                                 const std::set<AgentId>& exclude) override {
        (void)subtask_text;
        (void)timeout_ms;
        emit({now_ms(), "-", "beacon_sent", slot.task_id, slot.chain_id, slot.subtask_index,
              {}});
        std::vector<matching::Response> responses;
        for (const auto& [id, agent] : agents_) {
            if (exclude.count(id) || dead_.count(id)) continue;
            protocol::BeaconResponseBody body;
            body.score = matching::match_score(agent.capability, requirement).value;
            body.responded_at = static_cast<util::Millis>(now_ms());
            body.responder_load = 0;
            responses.emplace_back(id, body);
            emit({now_ms(), id.value, "response_recv", slot.task_id, slot.chain_id,
                  slot.subtask_index, {{"score", body.score}}});
        }
        if (!responses.empty()) {
            auto ranked = matching::rank_responders(responses);
            emit({now_ms(), ranked.front().first.value, "executor_selected", slot.task_id,
                  slot.chain_id, slot.subtask_index, {{"score", ranked.front().second.score}}});
        }
        return responses;
    }

    std::optional<protocol::TaskResultBody> dispatch_task(const AgentId& executor,
                                                          const SubtaskSlot& slot,
                                                          const protocol::TaskBody& body,
                                                          util::Millis deadline_ms) override {
        (void)deadline_ms;
        emit({now_ms(), "-", "task_sent", slot.task_id, slot.chain_id, slot.subtask_index, {}});
        if (kill_on_dispatch_.count(executor)) {
            kill_on_dispatch_.erase(executor);
            dead_.insert(executor);
            return std::nullopt;
        }
        auto it = agents_.find(executor);
        if (it == agents_.end() || dead_.count(executor)) return std::nullopt;
        const std::string context = build_context(body.background, body.prior_results);
        const std::string numbered =
            "Q" + std::to_string(slot.subtask_index) + ": " + body.subtask_text;
        protocol::TaskResultBody result;
        try {
            auto outcome = execute_subtask(numbered, context, *it->second.engine, prompts_,
                                           [&](double ms) {
                                               emit({now_ms(), executor.value, "engine_call",
                                                     slot.task_id, slot.chain_id,
                                                     slot.subtask_index, {{"ms", ms}}});
                                           });
            if (dead_.count(executor)) return std::nullopt;  // crashed mid-execution
            result.final_answer = outcome.answer;
        } catch (const SubtaskFailed&) {
            result.final_answer.clear();  // empty answer reports the failure
        }
        result.confidence = mean(body.accumulated_scores);
        if (!result.final_answer.empty() && ledger_) {
            ledger_->record_contribution(executor);
        }
        emit({now_ms(), executor.value, "result_recv", slot.task_id, slot.chain_id,
              slot.subtask_index, {}});
        return result;
    }

    void emit(events::Event event) override {
        if (log_) log_->append(std::move(event));
    }

    std::int64_t now_ms() override { return util::steady_ms(); }

private:
    std::map<AgentId, Agent> agents_;
    prompts::PromptSet prompts_;
    events::EventLog* log_;
    ledger::Ledger* ledger_;
    std::set<AgentId> dead_;
    std::set<AgentId> kill_on_dispatch_;
};

} // namespace symphony::execution
