#include <catch2/catch_amalgamated.hpp>

#include "symphony/planning.hpp"

#include "support/engines.hpp"
#include "support/generators.hpp"
#include "support/ledger_fixtures.hpp"

using namespace symphony;
using namespace symphony::planning;

namespace {

const char* kExample1Json = R"({
  "original_question": "One root of the equation $5x^2+kx=4$ is 2. What is the other?",
  "subtasks": [
    "Q1: What is the equation rewritten in standard quadratic form?",
    "Q2: What is the product of the roots of this quadratic equation?",
    "Q3: Given one root is 2, what is the other root?"
  ]
})";

TaskDescription amc_task() {
    return {"task-amc", "One root of the equation $5x^2+kx=4$ is 2. What is the other?", {}};
}

} // namespace

TEST_CASE("background extraction passes the scripted value through verbatim") {
    testgen::SequenceEngine engine({"If $23=x^4+\\frac{1}{x^4}$."});
    auto bg = extract_background({"t1", "If 23 = x^4 + 1/x^4, find x^2 + 1/x^2.", {}}, engine,
                                 prompts::PromptSet::builtin());
    CHECK(bg == "If $23=x^4+\\frac{1}{x^4}$.");
    CHECK(bg.find("23=x^4") != std::string::npos);  // the given equation survives
}

TEST_CASE("empty background output retries once, then PlanningFailed") {
    testgen::SequenceEngine engine({"", "  \n "});
    CHECK_THROWS_AS(extract_background(amc_task(), engine, prompts::PromptSet::builtin(), 2),
                    PlanningFailed);
    CHECK(engine.calls() == 2);

    testgen::SequenceEngine recovered({"", "facts"});
    CHECK(extract_background(amc_task(), recovered, prompts::PromptSet::builtin()) == "facts");
}

TEST_CASE("decompose parses the example JSON contract") {
    testgen::SequenceEngine engine({kExample1Json});
    auto chain = decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin(), 4);
    CHECK(chain.chain_id == 4);
    CHECK(chain.background == "bg");
    REQUIRE(chain.subtasks.size() == 3);
    CHECK(chain.subtasks[0] == "What is the equation rewritten in standard quadratic form?");
    CHECK(chain.subtasks[1] == "What is the product of the roots of this quadratic equation?");
    CHECK(chain.subtasks[2] == "Given one root is 2, what is the other root?");
}

TEST_CASE("JSON wrapped in prose is recovered from the outermost braces") {
    testgen::SequenceEngine engine(
        {"Sure! Here is the decomposition you asked for:\n" + std::string(kExample1Json) +
         "\nLet me know if you need anything else."});
    auto chain = decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin());
    CHECK(chain.subtasks.size() == 3);
}

TEST_CASE("empty subtasks array is a schema violation, reprompted then fatal") {
    testgen::SequenceEngine engine({R"({"original_question": "q", "subtasks": []})",
                                    R"({"original_question": "q", "subtasks": []})"});
    CHECK_THROWS_AS(decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin(), 7),
                    PlanningFailed);
    CHECK(engine.calls() == 2);
    try {
        testgen::SequenceEngine e2({R"({"subtasks": []})"});
        decompose(amc_task(), "bg", e2, prompts::PromptSet::builtin(), 7);
        FAIL("expected PlanningFailed");
    } catch (const PlanningFailed& e) {
        CHECK(e.chain_id() == 7);
    }
}

TEST_CASE("a bad first sample recovers on the reprompt") {
    testgen::SequenceEngine engine({"not json at all", kExample1Json});
    auto chain = decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin());
    CHECK(chain.subtasks.size() == 3);
    CHECK(engine.calls() == 2);
}

TEST_CASE("subtask numbering must be consecutive from one") {
    testgen::SequenceEngine engine(
        {R"({"original_question": "q", "subtasks": ["Q1: a?", "Q3: b?"]})",
         R"({"original_question": "q", "subtasks": ["Q2: a?"]})"});
    CHECK_THROWS_AS(decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin()),
                    PlanningFailed);
}

TEST_CASE("subtasks must read as questions") {
    testgen::SequenceEngine engine(
        {R"({"original_question": "q", "subtasks": ["Q1: compute the value."]})",
         R"({"original_question": "q", "subtasks": ["Q1: compute the value."]})"});
    CHECK_THROWS_AS(decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin()),
                    PlanningFailed);
}

TEST_CASE("oversized decompositions are rejected") {
    canonical::Json subtasks = canonical::Json::array();
    for (int i = 1; i <= 9; ++i) subtasks.push_back("Q" + std::to_string(i) + ": step?");
    canonical::Json j{{"original_question", "q"}, {"subtasks", subtasks}};
    testgen::SequenceEngine engine({j.dump(), j.dump()});
    CHECK_THROWS_AS(decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin()),
                    PlanningFailed);
}

TEST_CASE("prefix stripping is lossless") {
    testgen::Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> original;
        canonical::Json subtasks = canonical::Json::array();
        const int n = testgen::int_in(rng, 1, 8);
        for (int i = 1; i <= n; ++i) {
            std::string text = testgen::random_text(rng, 30);
            for (char& c : text) {
                if (c == '?' || c == '{' || c == '}' || c == '\\' || c == '"') c = 'x';
            }
            text = "is " + text + "?";
            original.push_back("Q" + std::to_string(i) + ": " + text);
            subtasks.push_back(original.back());
        }
        canonical::Json j{{"original_question", "q"}, {"subtasks", subtasks}};
        testgen::SequenceEngine engine({j.dump()});
        auto chain = decompose(amc_task(), "bg", engine, prompts::PromptSet::builtin());
        REQUIRE(chain.subtasks.size() == original.size());
        for (std::size_t k = 1; k <= chain.subtasks.size(); ++k) {
            REQUIRE(numbered_subtask(chain, k) == original[k - 1]);
        }
    }
}

namespace {

// Fixture: N planner records with distinct scores against the planning
// requirement, each wired to its own scripted engine.
struct FanoutFixture {
    testgen::KeyPool keys{12};
    std::vector<std::unique_ptr<testgen::SequenceEngine>> engines;
    std::map<protocol::AgentId, engine::Engine*> engine_map;
    ledger::LedgerSnapshot snapshot;
    std::vector<protocol::AgentId> ids_by_strength;  // strongest first

    explicit FanoutFixture(int planners, int broken_planner = -1) {
        const int planning_dim = matching::default_taxonomy().index_of("planning");
        for (int i = 0; i < planners; ++i) {
            // planner i capability: planning component decays with i, so the
            // ranking is known by construction
            std::vector<double> cap(8, 0.05);
            cap[static_cast<std::size_t>(planning_dim)] = 1.0 - 0.05 * i;
            auto sr = testgen::make_record(keys.at(static_cast<std::size_t>(i)),
                                           static_cast<std::uint16_t>(9000 + i), cap,
                                           {ledger::Role::Planner}, /*last_seen=*/1000);
            snapshot.records[sr.record.agent_id] = sr;
            ids_by_strength.push_back(sr.record.agent_id);

            canonical::Json j{{"original_question", "q"},
                              {"subtasks", {"Q1: step one of planner " + std::to_string(i) + "?"}}};
            std::vector<std::string> replies;
            if (i == broken_planner) {
                replies = {"<unavailable>", "<unavailable>", "<unavailable>", "<unavailable>"};
            } else {
                replies = {"background " + std::to_string(i), j.dump()};
            }
            engines.push_back(std::make_unique<testgen::SequenceEngine>(std::move(replies)));
            engine_map[sr.record.agent_id] = engines.back().get();
        }
    }

    planning::LocalPlanningBackend backend() {
        return planning::LocalPlanningBackend(snapshot, engine_map, prompts::PromptSet::builtin(),
                                              matching::default_taxonomy(), /*now=*/1000);
    }
};

} // namespace

TEST_CASE("fanout selects the top-scoring planners") {
    FanoutFixture fx(8);
    auto backend = fx.backend();
    auto chains = plan_fanout({"t", "question?", {}}, 3, backend);
    REQUIRE(chains.size() == 3);
    std::set<int> ids;
    for (const auto& c : chains) ids.insert(c.chain_id);
    CHECK(ids == std::set<int>{0, 1, 2});
    // the three strongest planners got the chains
    std::set<protocol::AgentId> got;
    for (const auto& c : chains) got.insert(c.planner);
    std::set<protocol::AgentId> want(fx.ids_by_strength.begin(), fx.ids_by_strength.begin() + 3);
    CHECK(got == want);
}

TEST_CASE("fanout degrades to the available planner count") {
    FanoutFixture fx(1);
    auto backend = fx.backend();
    auto chains = plan_fanout({"t", "question?", {}}, 3, backend);
    CHECK(chains.size() == 1);
}

TEST_CASE("a failing planner drops its chain, the rest survive") {
    FanoutFixture fx(3, /*broken_planner=*/1);
    auto backend = fx.backend();
    auto chains = plan_fanout({"t", "question?", {}}, 3, backend);
    CHECK(chains.size() == 2);
    for (const auto& c : chains) {
        CHECK(c.planner != fx.ids_by_strength[1]);
    }
}

TEST_CASE("zero planners raises NoPlanners") {
    FanoutFixture fx(0);
    auto backend = fx.backend();
    CHECK_THROWS_AS(plan_fanout({"t", "question?", {}}, 3, backend), NoPlanners);
}

TEST_CASE("all chains failing raises PlanningFailed") {
    FanoutFixture fx(2, /*broken_planner=*/0);
    // break the second planner too
    testgen::SequenceEngine broken({"<unavailable>"});
    for (auto& [id, eng] : fx.engine_map) eng = &broken;
    auto backend = fx.backend();
    CHECK_THROWS_AS(plan_fanout({"t", "question?", {}}, 2, backend), PlanningFailed);
}

TEST_CASE("chains are independent values") {
    FanoutFixture fx(3);
    auto backend = fx.backend();
    auto chains = plan_fanout({"t", "question?", {}}, 3, backend);
    auto copy = chains;
    copy.erase(copy.begin());
    REQUIRE(chains.size() == 3);
    CHECK(chains[1].subtasks == copy[0].subtasks);
    CHECK(chains[2].subtasks == copy[1].subtasks);
}

TEST_CASE("task descriptions are validated") {
    FanoutFixture fx(1);
    auto backend = fx.backend();
    CHECK_THROWS_AS(plan_fanout({"", "q?", {}}, 1, backend), ValidationError);
    CHECK_THROWS_AS(plan_fanout({"t", "  ", {}}, 1, backend), ValidationError);
    CHECK_THROWS_AS(plan_fanout({"t", "q?", {}}, 0, backend), ValidationError);
}
