#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "symphony/engine.hpp"
#include "symphony/errors.hpp"
#include "symphony/execution.hpp"
#include "symphony/matching.hpp"
#include "symphony/voting.hpp"

namespace symphony::bench {

// Synthetic-agent benchmark: heterogeneous specialist agents answer chained
// sub-tasks with correctness following the logistic link on their match
// score. Selection and voting go through the production code paths
// (match_score / select_executor / vote), so the ablations measure the real
// mechanisms rather than a re-implementation.

enum class SelectionMode { Score, Random };

struct BenchConfig {
    int tasks = 500;
    int chains = 3;      // 1 for the single-chain baseline
    int steps = 3;       // sub-tasks per chain
    int agents = 8;
    std::size_t dimension = 8;
    SelectionMode mode = SelectionMode::Score;
    double link_scale = 4.0;  // a in sigmoid(a * score + b)
    double link_bias = -1.7;  // b
    std::uint64_t seed = 0;
};

struct SyntheticTask {
    std::string truth;
    std::vector<int> step_dims;  // dominant skill dimension per step
};

inline canonical::Json task_to_json(const SyntheticTask& t) {
    return canonical::Json{{"step_dims", t.step_dims}, {"truth", t.truth}};
}

inline SyntheticTask task_from_json(const canonical::Json& j) {
    SyntheticTask t;
    t.truth = j.at("truth").get<std::string>();
    for (const auto& d : j.at("step_dims")) t.step_dims.push_back(d.get<int>());
    return t;
}

inline std::vector<SyntheticTask> generate_corpus(int tasks, int steps, std::size_t dimension,
                                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<SyntheticTask> corpus;
    corpus.reserve(static_cast<std::size_t>(tasks));
    for (int t = 0; t < tasks; ++t) {
        SyntheticTask task;
        task.truth = "truth-" + std::to_string(t);
        for (int k = 0; k < steps; ++k) {
            task.step_dims.push_back(
                static_cast<int>(rng() % static_cast<std::uint64_t>(dimension)));
        }
        corpus.push_back(std::move(task));
    }
    return corpus;
}

struct BenchResult {
    int tasks = 0;
    int correct = 0;
    double accuracy = 0.0;
};

namespace detail {

// Specialist capability: strong on the home skill, weak elsewhere.
inline std::vector<double> specialist_capability(int agent, std::size_t dimension) {
    std::vector<double> c(dimension, 0.15);
    c[static_cast<std::size_t>(agent) % dimension] = 0.9;
    return c;
}

inline std::vector<double> step_requirement(int dim, std::size_t dimension) {
    std::vector<double> r(dimension, 0.05);
    r[static_cast<std::size_t>(dim)] = 1.0;
    return r;
}

} // namespace detail

inline BenchResult run(const BenchConfig& cfg, const std::vector<SyntheticTask>& corpus) {
    if (cfg.chains < 1 || cfg.steps < 1 || cfg.agents < 1) {
        throw ValidationError("bench: chains, steps, and agents must be positive");
    }
    std::mt19937_64 rng(cfg.seed ^ 0x5d3f'9a1cULL);

    std::vector<matching::CapabilityVector> capabilities;
    std::vector<std::unique_ptr<engine::SyntheticAgentEngine>> engines;
    for (int j = 0; j < cfg.agents; ++j) {
        capabilities.push_back(matching::CapabilityVector::of(
            detail::specialist_capability(j, cfg.dimension), cfg.dimension));
        engine::SyntheticAgentProfile profile;
        profile.true_skill = capabilities.back().components;
        profile.link_scale = cfg.link_scale;
        profile.link_bias = cfg.link_bias;
        profile.seed = cfg.seed * 1000 + static_cast<std::uint64_t>(j);
        engines.push_back(std::make_unique<engine::SyntheticAgentEngine>(
            profile, "synthetic-" + std::to_string(j)));
    }

    BenchResult out;
    out.tasks = static_cast<int>(corpus.size());
    for (const auto& task : corpus) {
        voting::CandidateSet candidates;
        const std::string want = execution::normalize_answer(task.truth);
        for (int chain = 0; chain < cfg.chains; ++chain) {
            std::vector<double> scores;
            std::string answer = task.truth;
            bool failed = false;
            for (std::size_t k = 0; k < task.step_dims.size(); ++k) {
                auto req = matching::RequirementVector::of(
                    detail::step_requirement(task.step_dims[k], cfg.dimension), cfg.dimension);

                int executor;
                if (cfg.mode == SelectionMode::Score) {
                    std::vector<matching::Response> bids;
                    for (int j = 0; j < cfg.agents; ++j) {
                        protocol::BeaconResponseBody body;
                        body.score = matching::match_score(capabilities[static_cast<std::size_t>(j)],
                                                           req).value;
                        // agent index doubles as the id for the tie-break
                        bids.emplace_back(
                            protocol::AgentId{std::string(63, '0') +
                                              static_cast<char>('a' + j)},
                            body);
                    }
                    auto winner = matching::select_executor(bids);
                    executor = winner.value.back() - 'a';
                } else {
                    executor = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.agents));
                }
                const double score =
                    matching::match_score(capabilities[static_cast<std::size_t>(executor)], req)
                        .value;
                scores.push_back(score);

                engine::EngineRequest req_prompt;
                req_prompt.prompt = "step " + std::to_string(k) + " %%truth=" + task.truth +
                                    "%% %%score=" + canonical::render_real(score) + "%%";
                auto reply = engines[static_cast<std::size_t>(executor)]->generate(req_prompt);
                std::string boxed;
                try {
                    boxed = execution::extract_boxed(reply.text);
                } catch (const NoBoxedAnswer&) {
                    failed = true;
                    break;
                }
                if (boxed != task.truth && answer == task.truth) {
                    answer = boxed;  // first wrong step poisons the chain
                }
            }
            if (failed) continue;  // failed chains stay out of the vote
            execution::ChainResult cr;
            cr.chain_id = chain;
            cr.final_answer = execution::normalize_answer(answer);
            cr.confidence = execution::mean(scores);
            cr.per_step_scores = std::move(scores);
            candidates.results.push_back(std::move(cr));
        }
        if (candidates.results.empty()) continue;
        if (voting::vote(candidates).answer == want) ++out.correct;
    }
    out.accuracy = out.tasks > 0 ? static_cast<double>(out.correct) / out.tasks : 0.0;
    return out;
}

inline BenchResult run(const BenchConfig& cfg) {
    return run(cfg, generate_corpus(cfg.tasks, cfg.steps, cfg.dimension, cfg.seed));
}

// One selection-ablation row: score-based vs random allocation on the same
// corpus and seed.
struct AblationRow {
    std::uint64_t seed = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    double gap() const { return lhs - rhs; }
};

inline AblationRow selection_ablation(BenchConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    auto corpus = generate_corpus(cfg.tasks, cfg.steps, cfg.dimension, seed);
    cfg.mode = SelectionMode::Score;
    const double score_acc = run(cfg, corpus).accuracy;
    cfg.mode = SelectionMode::Random;
    const double random_acc = run(cfg, corpus).accuracy;
    return {seed, score_acc, random_acc};
}

inline AblationRow voting_ablation(BenchConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.mode = SelectionMode::Score;
    auto corpus = generate_corpus(cfg.tasks, cfg.steps, cfg.dimension, seed);
    cfg.chains = 3;
    const double multi = run(cfg, corpus).accuracy;
    cfg.chains = 1;
    const double single = run(cfg, corpus).accuracy;
    return {seed, multi, single};
}

} // namespace symphony::bench
