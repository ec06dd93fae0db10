#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "symphony/engine.hpp"

namespace testgen {

// Replies drawn from a fixed sequence regardless of the prompt; the entry
// "<unavailable>" throws EngineUnavailable. Handy for retry-path tests where
// the same prompt must yield different samples.
class SequenceEngine final : public symphony::engine::Engine {
public:
    explicit SequenceEngine(std::vector<std::string> replies, std::string id = "sequence")
        : replies_(std::move(replies)), id_(std::move(id)) {}

    symphony::engine::EngineReply generate(const symphony::engine::EngineRequest& req) override {
        symphony::engine::validate(req);
        std::size_t index;
        {
            std::lock_guard lock(mutex_);
            index = next_ < replies_.size() ? next_ : replies_.size() - 1;
            ++next_;
        }
        if (replies_.empty() || replies_[index] == "<unavailable>") {
            throw symphony::EngineUnavailable(id_ + ": scripted outage");
        }
        return {replies_[index], 0, id_};
    }

    std::string id() const override { return id_; }

    std::size_t calls() const {
        std::lock_guard lock(mutex_);
        return next_;
    }

private:
    std::vector<std::string> replies_;
    std::string id_;
    mutable std::mutex mutex_;
    std::size_t next_ = 0;
};

// Routes every sub-task to a canned boxed answer by substring match.
inline symphony::engine::ScriptedBehavior answers_by_pattern(
    std::vector<std::pair<std::string, std::string>> pattern_to_answer) {
    symphony::engine::ScriptedBehavior b;
    for (auto& [pattern, answer] : pattern_to_answer) {
        b.rules.push_back({pattern, "$\\boxed{" + answer + "}$"});
    }
    return b;
}

// One-hot requirement tagger keyed on exact marker words, for fixtures that
// need precise control over every step's requirement vector.
class MarkerTagger final : public symphony::matching::RequirementTagger {
public:
    MarkerTagger(symphony::matching::Taxonomy taxonomy,
                 std::vector<std::pair<std::string, std::string>> marker_to_skill)
        : taxonomy_(std::move(taxonomy)), markers_(std::move(marker_to_skill)) {}

    std::vector<double> tag(std::string_view text) override {
        std::vector<double> v(taxonomy_.size(), 0.0);
        for (const auto& [marker, skill] : markers_) {
            if (text.find(marker) != std::string_view::npos) {
                const int idx = taxonomy_.index_of(skill);
                if (idx >= 0) v[static_cast<std::size_t>(idx)] = 1.0;
            }
        }
        return v;
    }

    const symphony::matching::Taxonomy& taxonomy() const override { return taxonomy_; }

private:
    symphony::matching::Taxonomy taxonomy_;
    std::vector<std::pair<std::string, std::string>> markers_;
};

} // namespace testgen
