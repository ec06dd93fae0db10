#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "symphony/canonical.hpp"
#include "symphony/errors.hpp"
#include "symphony/matching.hpp"
#include "symphony/util.hpp"

namespace symphony::engine {

using canonical::Json;

// Generation defaults: 512-token window, temperature 0.5, nucleus p=0.9.
inline constexpr int kDefaultMaxTokens = 512;
inline constexpr double kDefaultTemperature = 0.5;
inline constexpr double kDefaultTopP = 0.9;

struct EngineRequest {
    std::string prompt;
    int max_tokens = kDefaultMaxTokens;
    double temperature = kDefaultTemperature;
    double top_p = kDefaultTopP;
    std::optional<std::uint64_t> seed = std::nullopt;
};

struct EngineReply {
    std::string text;
    std::int64_t latency_ms = 0;  // measured at the call boundary
    std::string engine_id;
};

inline void validate(const EngineRequest& req) {
    if (req.max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
    if (!(req.temperature >= 0.0)) throw ValidationError("temperature must be nonnegative");
    if (!(req.top_p > 0.0 && req.top_p <= 1.0)) throw ValidationError("top_p must be in (0,1]");
}

// The orchestration/generation boundary. Implementations must tolerate
// concurrent generate() calls.
class Engine {
public:
    virtual ~Engine() = default;
    virtual EngineReply generate(const EngineRequest& req) = 0;
    virtual std::string id() const = 0;
};

// The engine-attributed latency for overhead accounting.
inline std::int64_t measure_latency(const EngineReply& reply) { return reply.latency_ms; }

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Scripted engine: canned replies by prompt-substring match, injected
// latency, and an optional failure schedule. Bit-deterministic.

struct ScriptedBehavior {
    struct Rule {
        std::string pattern;  // substring of the prompt; first match wins
        std::string reply;
    };
    std::vector<Rule> rules;
    std::int64_t injected_latency_ms = 0;
    std::set<std::uint64_t> failure_indices;  // 0-based call indices that fail
    std::string default_reply;

    static ScriptedBehavior from_json(const Json& j) {
        ScriptedBehavior b;
        if (j.contains("rules")) {
            for (const auto& r : j.at("rules")) {
                b.rules.push_back({r.at("pattern").get<std::string>(),
                                   r.at("reply").get<std::string>()});
            }
        }
        b.injected_latency_ms = j.value("injected_latency_ms", std::int64_t{0});
        if (j.contains("failure_indices")) {
            for (const auto& i : j.at("failure_indices")) {
                b.failure_indices.insert(i.get<std::uint64_t>());
            }
        }
        b.default_reply = j.value("default_reply", "");
        return b;
    }

    static ScriptedBehavior load(const std::string& path) {
        return from_json(canonical::parse(util::read_file(path)));
    }
};

class ScriptedEngine final : public Engine {
public:
    explicit ScriptedEngine(ScriptedBehavior behavior, std::string id = "scripted")
        : behavior_(std::move(behavior)), id_(std::move(id)) {}

    EngineReply generate(const EngineRequest& req) override {
        validate(req);
        const auto start = std::chrono::steady_clock::now();
        std::uint64_t index;
        {
            std::lock_guard lock(mutex_);
            index = calls_++;
        }
        if (behavior_.failure_indices.count(index)) {
            throw EngineUnavailable(id_ + ": scripted failure at call " + std::to_string(index));
        }
        if (behavior_.injected_latency_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(behavior_.injected_latency_ms));
        }
        std::string text = behavior_.default_reply;
        for (const auto& rule : behavior_.rules) {
            if (req.prompt.find(rule.pattern) != std::string::npos) {
                text = rule.reply;
                break;
            }
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        return EngineReply{std::move(text), elapsed, id_};
    }

    std::string id() const override { return id_; }

    std::uint64_t calls() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

private:
    ScriptedBehavior behavior_;
    std::string id_;
    mutable std::mutex mutex_;
    std::uint64_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic agent: answers the ground-truth fixture embedded in the prompt
// correctly with probability sigmoid(a * score + b). The driving harness
// embeds markers of the form  %%truth=<answer>%%  and  %%score=<real>%%.

struct SyntheticAgentProfile {
    std::vector<double> true_skill;  // capability vector the agent registers
    double link_scale = 4.0;         // a
    double link_bias = -1.7;         // b
    std::uint64_t seed = 0;

    static SyntheticAgentProfile from_json(const Json& j) {
        SyntheticAgentProfile p;
        if (j.contains("true_skill")) {
            for (const auto& v : j.at("true_skill")) p.true_skill.push_back(v.get<double>());
        }
        p.link_scale = j.value("link_scale", 4.0);
        p.link_bias = j.value("link_bias", -1.7);
        p.seed = j.value("seed", std::uint64_t{0});
        return p;
    }
};

inline std::optional<std::string> find_marker(std::string_view text, std::string_view key) {
    const std::string open = "%%" + std::string(key) + "=";
    auto pos = text.rfind(open);
    if (pos == std::string_view::npos) return std::nullopt;
    auto end = text.find("%%", pos + open.size());
    if (end == std::string_view::npos) return std::nullopt;
    return std::string(text.substr(pos + open.size(), end - pos - open.size()));
}

class SyntheticAgentEngine final : public Engine {
public:
    explicit SyntheticAgentEngine(SyntheticAgentProfile profile, std::string id = "synthetic")
        : profile_(std::move(profile)), id_(std::move(id)), rng_(profile_.seed) {}

    EngineReply generate(const EngineRequest& req) override {
        validate(req);
        const auto start = std::chrono::steady_clock::now();
        const auto truth = find_marker(req.prompt, "truth");
        const auto score_text = find_marker(req.prompt, "score");
        double score = 0.0;
        if (score_text) {
            try {
                score = std::stod(*score_text);
            } catch (...) {
                score = 0.0;
            }
        }
        const double p_correct = logistic(profile_.link_scale * score + profile_.link_bias);
        bool correct;
        std::uint64_t wrong_pick;
        {
            std::lock_guard lock(mutex_);
            correct = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p_correct;
            wrong_pick = rng_() % 4;
        }
        std::string answer;
        if (!truth) {
            answer = "unknown";
        } else if (correct) {
            answer = *truth;
        } else {
            answer = "wrong-" + std::to_string(wrong_pick);
            if (answer == *truth) answer = "wrong-" + std::to_string((wrong_pick + 1) % 4);
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        return EngineReply{"$\\boxed{" + answer + "}$", elapsed, id_};
    }

    std::string id() const override { return id_; }
    const SyntheticAgentProfile& profile() const { return profile_; }

private:
    SyntheticAgentProfile profile_;
    std::string id_;
    std::mutex mutex_;
    std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Engine-assisted requirement tagger (live mode): asks the engine for skill
// tags and maps the recognized names onto taxonomy dimensions.

class EngineAssistedTagger final : public matching::RequirementTagger {
public:
    EngineAssistedTagger(Engine& engine, matching::Taxonomy taxonomy)
        : engine_(engine), taxonomy_(std::move(taxonomy)) {}

    std::vector<double> tag(std::string_view subtask_text) override {
        std::string skills;
        for (const auto& d : taxonomy_.dimensions) {
            if (!skills.empty()) skills += ", ";
            skills += d.skill;
        }
        EngineRequest req;
        req.prompt = "Tag the sub-task with the matching skills from this list: " + skills +
                     ".\nReply with comma-separated skill names only.\n\nSub-task: " +
                     std::string(subtask_text) + "\n\nSkills:";
        EngineReply reply = engine_.generate(req);
        std::vector<double> v(taxonomy_.size(), 0.0);
        for (auto& piece : util::split(reply.text, ',')) {
            for (char& c : piece) {
                if (c == '\n') c = ' ';
            }
            const int idx = taxonomy_.index_of(util::to_lower(util::trim(piece)));
            if (idx >= 0) v[static_cast<std::size_t>(idx)] = 1.0;
        }
        return v;
    }

    const matching::Taxonomy& taxonomy() const override { return taxonomy_; }

private:
    Engine& engine_;
    matching::Taxonomy taxonomy_;
};

} // namespace symphony::engine
