#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "symphony/canonical.hpp"
#include "symphony/errors.hpp"
#include "symphony/protocol.hpp"
#include "symphony/util.hpp"

namespace symphony::matching {

// ---------------------------------------------------------------------------
// Skill vectors. Both sides of the match live on the same fixed taxonomy:
// one named skill per dimension, components in [0,1], norm > 0.

inline void validate_components(const std::vector<double>& v, std::size_t dimension,
                                const char* what) {
    if (v.size() != dimension) {
        throw ValidationError(std::string(what) + " has dimension " + std::to_string(v.size()) +
                              ", expected " + std::to_string(dimension));
    }
    double norm_sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
            throw ValidationError(std::string(what) + " component outside [0,1]");
        }
        norm_sq += x * x;
    }
    if (norm_sq == 0.0) throw DegenerateVector(std::string(what) + " has zero norm");
}

struct CapabilityVector {
    std::vector<double> components;

    static CapabilityVector of(std::vector<double> v, std::size_t dimension) {
        validate_components(v, dimension, "capability vector");
        return CapabilityVector{std::move(v)};
    }
};

struct RequirementVector {
    std::vector<double> components;

    static RequirementVector of(std::vector<double> v, std::size_t dimension) {
        validate_components(v, dimension, "requirement vector");
        return RequirementVector{std::move(v)};
    }
};

struct MatchScore {
    double value = 0.0;  // in [0,1]
};

// Cosine similarity with negative values clamped to zero, so the score stays
// in [0,1] even for adversarial inputs. Symmetric and scale-invariant.
inline MatchScore match_score(const CapabilityVector& c, const RequirementVector& r) {
    if (c.components.size() != r.components.size()) {
        throw ValidationError("capability/requirement dimension mismatch");
    }
    double dot = 0.0, nc = 0.0, nr = 0.0;
    for (std::size_t i = 0; i < c.components.size(); ++i) {
        dot += c.components[i] * r.components[i];
        nc += c.components[i] * c.components[i];
        nr += r.components[i] * r.components[i];
    }
    if (nc == 0.0 || nr == 0.0) throw DegenerateVector("zero-norm vector in match_score");
    double cosine = dot / (std::sqrt(nc) * std::sqrt(nr));
    return MatchScore{std::clamp(cosine, 0.0, 1.0)};
}

// ---------------------------------------------------------------------------
// Executor selection over collected beacon responses.

using Response = std::pair<protocol::AgentId, protocol::BeaconResponseBody>;

// Total order used everywhere a bid wins: higher score, then earlier
// response, then lighter load, then lexicographically smaller id. The
// response-speed component follows the selection rule the ledger case study
// uses for planners.
inline bool outranks(const Response& a, const Response& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    if (a.second.responded_at != b.second.responded_at) {
        return a.second.responded_at < b.second.responded_at;
    }
    if (a.second.responder_load != b.second.responder_load) {
        return a.second.responder_load < b.second.responder_load;
    }
    return a.first < b.first;
}

inline std::vector<Response> rank_responders(std::vector<Response> responses) {
    std::sort(responses.begin(), responses.end(),
              [](const Response& a, const Response& b) { return outranks(a, b); });
    return responses;
}

inline protocol::AgentId select_executor(const std::vector<Response>& responses) {
    if (responses.empty()) throw NoResponders("no beacon responses to select from");
    const Response* best = &responses.front();
    for (const auto& r : responses) {
        if (!(r.second.score >= 0.0 && r.second.score <= 1.0)) {
            throw ValidationError("beacon response score outside [0,1]");
        }
        if (outranks(r, *best)) best = &r;
    }
    return best->first;
}

// ---------------------------------------------------------------------------
// Requirement derivation. The default tagger is a deterministic keyword
// table over the taxonomy; a pluggable interface lets live deployments swap
// in an engine-assisted tagger.

struct Taxonomy {
    struct Dimension {
        std::string skill;
        std::vector<std::string> keywords;
    };
    std::vector<Dimension> dimensions;

    std::size_t size() const { return dimensions.size(); }

    int index_of(std::string_view skill) const {
        for (std::size_t i = 0; i < dimensions.size(); ++i) {
            if (dimensions[i].skill == skill) return static_cast<int>(i);
        }
        return -1;
    }

    static Taxonomy from_json(const canonical::Json& j) {
        Taxonomy t;
        if (!j.is_object() || !j.contains("dimensions") || !j["dimensions"].is_array()) {
            throw ValidationError("taxonomy file must hold a 'dimensions' array");
        }
        for (const auto& d : j["dimensions"]) {
            Dimension dim;
            dim.skill = d.at("skill").get<std::string>();
            for (const auto& k : d.at("keywords")) dim.keywords.push_back(k.get<std::string>());
            t.dimensions.push_back(std::move(dim));
        }
        if (t.dimensions.empty()) throw ValidationError("taxonomy has no dimensions");
        return t;
    }

    static Taxonomy load(const std::string& path) {
        return from_json(canonical::parse(util::read_file(path)));
    }
};

// The shipped 8-skill taxonomy (data/taxonomy.json carries the same table).
inline const Taxonomy& default_taxonomy() {
    static const Taxonomy t = {{
        {"arithmetic", {"arithmetic", "product", "sum", "multiply", "divide", "subtract",
                        "how many", "percent", "fraction", "remainder", "numerical value"}},
        {"algebra", {"algebra", "equation", "quadratic", "polynomial", "root", "variable",
                     "coefficient", "solve for", "expression"}},
        {"logic", {"logic", "logical", "cause", "causation", "necessary", "sufficient",
                   "imply", "deduce", "contradiction", "if and only if"}},
        {"reading-comprehension", {"passage", "according to the text", "stated", "paragraph",
                                   "author", "narrator", "reading"}},
        {"planning", {"plan", "planning", "decompose", "strategy", "schedule",
                      "sequence of steps"}},
        {"world-knowledge", {"capital of", "country", "history", "geography", "typical",
                             "famous", "world", "common knowledge"}},
        {"formatting", {"format", "formatted", "json", "table", "list the", "boxed"}},
        {"code", {"code", "python", "function", "program", "algorithm", "implement",
                  "debug", "compile"}},
    }};
    return t;
}

class RequirementTagger {
public:
    virtual ~RequirementTagger() = default;
    // Raw per-dimension relevance in [0,1]; an all-zero result is legal and
    // handled by the caller's uniform fallback.
    virtual std::vector<double> tag(std::string_view subtask_text) = 0;
    virtual const Taxonomy& taxonomy() const = 0;
};

class KeywordTagger final : public RequirementTagger {
public:
    explicit KeywordTagger(Taxonomy taxonomy) : taxonomy_(std::move(taxonomy)) {}
    KeywordTagger() : taxonomy_(default_taxonomy()) {}

    std::vector<double> tag(std::string_view subtask_text) override {
        const std::string text = util::to_lower(subtask_text);
        std::vector<double> v(taxonomy_.size(), 0.0);
        for (std::size_t i = 0; i < taxonomy_.size(); ++i) {
            for (const auto& kw : taxonomy_.dimensions[i].keywords) {
                if (text.find(util::to_lower(kw)) != std::string::npos) {
                    v[i] = 1.0;
                    break;
                }
            }
        }
        return v;
    }

    const Taxonomy& taxonomy() const override { return taxonomy_; }

private:
    Taxonomy taxonomy_;
};

using WarningSink = std::function<void(const std::string&)>;

// Derives r(t) for a sub-task. A tagger that recognizes nothing falls back
// to the uniform vector (1/sqrt(D) per component) and surfaces a warning.
inline RequirementVector requirement_of(std::string_view subtask_text, RequirementTagger& tagger,
                                        const WarningSink& warn = {}) {
    if (util::trim(subtask_text).empty()) {
        throw ValidationError("subtask text is empty");
    }
    const std::size_t dim = tagger.taxonomy().size();
    std::vector<double> v = tagger.tag(subtask_text);
    if (v.size() != dim) throw ValidationError("tagger returned wrong dimension");
    const bool all_zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    if (all_zero) {
        std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(dim)));
        if (warn) warn("no taxonomy signal in sub-task; using uniform requirement");
    }
    return RequirementVector::of(std::move(v), dim);
}

// Requirement used when soliciting planners: all weight on the planning skill.
inline RequirementVector planning_requirement(const Taxonomy& taxonomy) {
    std::vector<double> v(taxonomy.size(), 0.0);
    int idx = taxonomy.index_of("planning");
    v[idx >= 0 ? static_cast<std::size_t>(idx) : 0] = 1.0;
    return RequirementVector::of(std::move(v), taxonomy.size());
}

} // namespace symphony::matching
