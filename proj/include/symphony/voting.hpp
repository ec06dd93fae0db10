#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "symphony/canonical.hpp"
#include "symphony/errors.hpp"
#include "symphony/execution.hpp"

namespace symphony::voting {

using execution::ChainResult;

// The candidate set: final answers of all surviving chains with their
// confidence weights.
struct CandidateSet {
    std::vector<ChainResult> results;
};

struct Verdict {
    std::string answer;        // normalized winner
    double total_weight = 0.0; // summed weight of the winning group
    std::map<std::string, double> per_answer_weights;
    std::vector<int> contributing_chains;  // ascending chain ids of the winners
};

inline canonical::Json verdict_to_json(const Verdict& v) {
    canonical::Json weights = canonical::Json::object();
    for (const auto& [answer, w] : v.per_answer_weights) weights[answer] = w;
    return canonical::Json{{"answer", v.answer},
                           {"contributing_chains", v.contributing_chains},
                           {"per_answer_weights", std::move(weights)},
                           {"total_weight", v.total_weight}};
}

namespace detail {

struct Group {
    double weight = 0.0;
    double max_confidence = 0.0;
    std::vector<int> chains;
};

// Weighted argmax over normalized answers. Ties break toward the group
// holding the single most confident chain, then the lexicographically
// smaller answer. Candidates are accumulated in a canonical order so the
// result is independent of arrival order down to the last bit.
inline Verdict tally(const CandidateSet& candidates, bool unit_weights) {
    if (candidates.results.empty()) {
        throw NoSurvivingChains("no surviving chains to vote over");
    }
    struct Entry {
        std::string answer;
        double weight;
        double confidence;
        int chain_id;
    };
    std::vector<Entry> entries;
    entries.reserve(candidates.results.size());
    for (const auto& r : candidates.results) {
        if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
            throw ValidationError("chain confidence outside [0,1]");
        }
        entries.push_back(Entry{execution::normalize_answer(r.final_answer),
                                unit_weights ? 1.0 : r.confidence, r.confidence, r.chain_id});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.answer != b.answer) return a.answer < b.answer;
        if (a.chain_id != b.chain_id) return a.chain_id < b.chain_id;
        return a.confidence < b.confidence;
    });

    std::map<std::string, Group> groups;
    for (const auto& e : entries) {
        Group& g = groups[e.answer];
        g.weight += e.weight;
        g.max_confidence = std::max(g.max_confidence, e.confidence);
        g.chains.push_back(e.chain_id);
    }

    const std::string* best = nullptr;
    for (const auto& [answer, g] : groups) {
        if (!best) {
            best = &answer;
            continue;
        }
        const Group& b = groups.at(*best);
        if (g.weight > b.weight ||
            (g.weight == b.weight && g.max_confidence > b.max_confidence)) {
            best = &answer;  // map order already favors the smaller answer on full ties
        }
    }

    Verdict v;
    v.answer = *best;
    v.total_weight = groups.at(*best).weight;
    v.contributing_chains = groups.at(*best).chains;
    std::sort(v.contributing_chains.begin(), v.contributing_chains.end());
    for (const auto& [answer, g] : groups) v.per_answer_weights[answer] = g.weight;
    return v;
}

} // namespace detail

// Confidence-weighted majority vote.
inline Verdict vote(const CandidateSet& candidates) {
    return detail::tally(candidates, /*unit_weights=*/false);
}

// Baseline/ablation mode: plain majority with unit weights.
inline Verdict vote_unweighted(const CandidateSet& candidates) {
    return detail::tally(candidates, /*unit_weights=*/true);
}

} // namespace symphony::voting
