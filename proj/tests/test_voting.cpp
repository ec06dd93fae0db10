#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "symphony/voting.hpp"

#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace symphony;
using namespace symphony::voting;
using execution::ChainResult;

namespace {

ChainResult cr(int chain_id, std::string answer, double confidence) {
    ChainResult r;
    r.chain_id = chain_id;
    r.final_answer = std::move(answer);
    r.confidence = confidence;
    return r;
}

CandidateSet random_candidates(testgen::Rng& rng, int max_chains = 10, int max_answers = 6) {
    static const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
    CandidateSet set;
    const int n = testgen::int_in(rng, 1, max_chains);
    const int answers = testgen::int_in(rng, 1, max_answers);
    for (int i = 0; i < n; ++i) {
        // quantized confidences provoke exact ties in both tie-break stages
        const double conf = testgen::int_in(rng, 0, 10) / 10.0;
        set.results.push_back(
            cr(i, pool[static_cast<std::size_t>(testgen::int_in(rng, 0, answers - 1))], conf));
    }
    return set;
}

oracle::VoteOutcome run_oracle(const CandidateSet& set, bool unit_weights) {
    std::vector<oracle::VoteCandidate> cs;
    for (const auto& r : set.results) {
        cs.push_back({r.chain_id, execution::normalize_answer(r.final_answer),
                      unit_weights ? 1.0 : r.confidence, r.confidence});
    }
    return oracle::brute_force_vote(cs);
}

} // namespace

TEST_CASE("weighted vote on the case-study candidate set") {
    CandidateSet set{{cr(0, "No", 1.0), cr(1, "No", 0.9), cr(2, "Yes", 0.92)}};
    auto v = vote(set);
    CHECK(v.answer == "no");
    CHECK(v.total_weight == Catch::Approx(1.9).margin(1e-9));
    CHECK(v.per_answer_weights.at("no") == Catch::Approx(1.9).margin(1e-9));
    CHECK(v.per_answer_weights.at("yes") == Catch::Approx(0.92).margin(1e-9));
    CHECK(v.contributing_chains == std::vector<int>{0, 1});
}

TEST_CASE("a single candidate wins outright") {
    auto v = vote(CandidateSet{{cr(0, "X", 0.5)}});
    CHECK(v.answer == "x");
    CHECK(v.total_weight == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("full tie falls through to the lexicographically smaller answer") {
    // equal weights, equal group max confidences -> lexicographic
    auto v = vote(CandidateSet{{cr(0, "B", 0.6), cr(1, "A", 0.6)}});
    CHECK(v.answer == "a");

    // tie on weight but one group holds the more confident chain
    auto v2 = vote(CandidateSet{{cr(0, "B", 0.8), cr(1, "A", 0.5), cr(2, "A", 0.3)}});
    CHECK(v2.answer == "b");
}

TEST_CASE("empty candidate set raises NoSurvivingChains") {
    CHECK_THROWS_AS(vote(CandidateSet{}), NoSurvivingChains);
    CHECK_THROWS_AS(vote_unweighted(CandidateSet{}), NoSurvivingChains);
}

TEST_CASE("unweighted vote counts heads") {
    CandidateSet set{{cr(0, "No", 0.1), cr(1, "No", 0.2), cr(2, "Yes", 0.99)}};
    auto v = vote_unweighted(set);
    CHECK(v.answer == "no");
    CHECK(v.total_weight == Catch::Approx(2.0).margin(1e-12));
    // weighted mode would flip this set? no: 0.3 < 0.99, so weighted picks yes
    CHECK(vote(set).answer == "yes");
}

TEST_CASE("unweighted ties break on confidence then answer") {
    CandidateSet set{{cr(0, "b", 0.9), cr(1, "a", 0.4), cr(2, "c", 0.4)}};
    auto v = vote_unweighted(set);
    CHECK(v.answer == "b");
}

TEST_CASE("unweighted equals weighted when confidences are equal") {
    testgen::Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        auto set = random_candidates(rng);
        const double c = testgen::int_in(rng, 1, 10) / 10.0;
        for (auto& r : set.results) r.confidence = c;
        CHECK(vote(set).answer == vote_unweighted(set).answer);
    }
}

TEST_CASE("vote matches the brute-force oracle") {
    testgen::Rng rng(42);
    for (int trial = 0; trial < 2000; ++trial) {
        auto set = random_candidates(rng);
        auto got = vote(set);
        auto want = run_oracle(set, false);
        REQUIRE(got.answer == want.answer);
        REQUIRE(got.total_weight == Catch::Approx(want.weight).margin(1e-9));

        auto got_u = vote_unweighted(set);
        auto want_u = run_oracle(set, true);
        REQUIRE(got_u.answer == want_u.answer);
    }
}

TEST_CASE("weight conservation") {
    testgen::Rng rng(43);
    for (int trial = 0; trial < 500; ++trial) {
        auto set = random_candidates(rng);
        auto v = vote(set);
        double total_in = 0.0;
        for (const auto& r : set.results) total_in += r.confidence;
        double total_out = 0.0;
        for (const auto& [ans, w] : v.per_answer_weights) total_out += w;
        REQUIRE(total_out == Catch::Approx(total_in).margin(1e-9));
    }
}

TEST_CASE("permutation invariance") {
    testgen::Rng rng(44);
    for (int trial = 0; trial < 300; ++trial) {
        auto set = random_candidates(rng);
        auto base = vote(set);
        auto shuffled = set;
        std::shuffle(shuffled.results.begin(), shuffled.results.end(), rng);
        auto again = vote(shuffled);
        REQUIRE(base.answer == again.answer);
        REQUIRE(base.total_weight == again.total_weight);  // bit-identical
        REQUIRE(base.per_answer_weights == again.per_answer_weights);
    }
}

TEST_CASE("raising a winning member's weight never changes the winner") {
    testgen::Rng rng(45);
    for (int trial = 0; trial < 300; ++trial) {
        auto set = random_candidates(rng);
        auto base = vote(set);
        auto boosted = set;
        bool changed = false;
        for (auto& r : boosted.results) {
            if (execution::normalize_answer(r.final_answer) == base.answer &&
                r.confidence < 1.0) {
                r.confidence = std::min(1.0, r.confidence + 0.1);
                changed = true;
                break;
            }
        }
        if (!changed) continue;
        REQUIRE(vote(boosted).answer == base.answer);
    }
}

TEST_CASE("scaling every weight by the same positive constant keeps the winner") {
    testgen::Rng rng(46);
    for (int trial = 0; trial < 300; ++trial) {
        auto set = random_candidates(rng);
        double max_conf = 0.0;
        for (const auto& r : set.results) max_conf = std::max(max_conf, r.confidence);
        if (max_conf == 0.0) continue;
        const double alpha = 0.25;  // keeps scaled confidences in [0,1]
        auto scaled = set;
        for (auto& r : scaled.results) r.confidence *= alpha;
        REQUIRE(vote(scaled).answer == vote(set).answer);
    }
}

TEST_CASE("answers group through normalization") {
    CandidateSet set{{cr(0, " No. ", 0.6), cr(1, "no", 0.5), cr(2, "YES", 0.9)}};
    auto v = vote(set);
    CHECK(v.answer == "no");
    CHECK(v.total_weight == Catch::Approx(1.1).margin(1e-12));
    CHECK(v.per_answer_weights.size() == 2);
}

TEST_CASE("verdict serializes to canonical JSON") {
    auto v = vote(CandidateSet{{cr(0, "No", 1.0), cr(1, "Yes", 0.92)}});
    auto j = verdict_to_json(v);
    CHECK(j.at("answer") == "no");
    CHECK(j.at("per_answer_weights").size() == 2);
    CHECK(j.at("contributing_chains") == canonical::Json::array({0}));
}
