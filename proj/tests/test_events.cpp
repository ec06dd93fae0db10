#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "symphony/events.hpp"

using namespace symphony;
using namespace symphony::events;

namespace {

// Hand-built log for one task: a planner-selection round, one chain of two
// steps with 100 ms engine calls, then the vote.
std::vector<Event> one_task_log() {
    std::vector<Event> log;
    auto push = [&](std::int64_t ts, const char* event, int chain, int step, Json extra = {}) {
        log.push_back({ts, "n", event, "t1", chain, step,
                       extra.is_null() ? Json::object() : std::move(extra)});
    };
    push(1000, "task_submitted", -1, 0);
    push(1000, "beacon_sent", -1, 0);
    push(1004, "executor_selected", -1, 0);
    push(1005, "task_sent", 0, 0);                                  // chain-level dispatch
    push(1006, "engine_call", 0, 0, {{"ms", 40.0}, {"stage", "planning"}});
    push(1010, "beacon_sent", 0, 1);
    push(1013, "executor_selected", 0, 1);
    push(1014, "task_sent", 0, 1);
    push(1116, "engine_call", 0, 1, {{"ms", 100.0}});
    push(1117, "result_recv", 0, 1);                                // dispatch overhead 3
    push(1118, "beacon_sent", 0, 2);
    push(1120, "executor_selected", 0, 2);
    push(1121, "task_sent", 0, 2);
    push(1224, "engine_call", 0, 2, {{"ms", 100.0}});
    push(1226, "result_recv", 0, 2);                                // dispatch overhead 5
    push(1227, "chain_done", 0, 0, {{"status", "ok"}});
    push(1227, "result_recv", 0, 0);
    push(1228, "voting_started", -1, 0);
    push(1230, "verdict", -1, 0);
    return log;
}

} // namespace

TEST_CASE("overhead report separates engine time from orchestration phases") {
    auto report = overhead_report(one_task_log());
    REQUIRE(report.tasks.size() == 1);
    const auto& t = report.tasks[0];
    CHECK(t.task_id == "t1");
    CHECK(t.wall_ms == 230.0);
    CHECK(t.engine_ms == 240.0);  // 40 planning + 2 x 100 execution
    CHECK(t.phases.beacon_ms == 9.0);    // 4 + 3 + 2
    CHECK(t.phases.dispatch_ms == 8.0);  // 3 + 5
    CHECK(t.phases.voting_ms == 2.0);
    CHECK(t.phases.registration_ms == 0.0);
    // additivity oracle: the phase rows sum to the orchestration total
    CHECK(t.orchestration_ms == Catch::Approx(t.phases.sum()).margin(1e-9));
    CHECK(t.total_ms == Catch::Approx(t.engine_ms + t.orchestration_ms).margin(1e-9));
    CHECK(t.ratio == Catch::Approx(19.0 / 259.0).margin(1e-9));
}

TEST_CASE("missing chain_done events raise ReportError") {
    auto log = one_task_log();
    log.erase(std::remove_if(log.begin(), log.end(),
                             [](const Event& e) { return e.event == "chain_done"; }),
              log.end());
    try {
        overhead_report(log);
        FAIL("expected ReportError");
    } catch (const ReportError& e) {
        CHECK(std::string(e.what()).find("chain_done[0]") != std::string::npos);
    }
}

TEST_CASE("zero engine time reports a ratio of one") {
    auto log = one_task_log();
    log.erase(std::remove_if(log.begin(), log.end(),
                             [](const Event& e) { return e.event == "engine_call"; }),
              log.end());
    auto report = overhead_report(log);
    CHECK(report.tasks[0].engine_ms == 0.0);
    CHECK(report.tasks[0].ratio == 1.0);
}

TEST_CASE("events round-trip through the JSONL file format") {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "symphony_events_test.jsonl";
    std::remove(path.string().c_str());
    {
        EventLog log(path.string());
        for (const auto& e : one_task_log()) log.append(e);
    }
    auto events = EventLog::read_file(path.string());
    REQUIRE(events.size() == one_task_log().size());
    CHECK(events[0].event == "task_submitted");
    CHECK(events[4].extra.at("ms") == 40.0);
    auto report = overhead_report(events);
    CHECK(report.tasks[0].engine_ms == 240.0);
    std::remove(path.string().c_str());
}

TEST_CASE("multiple tasks report independently in submission order") {
    auto log = one_task_log();
    for (auto e : one_task_log()) {
        e.task_id = "t2";
        e.ts_ms += 10000;
        log.push_back(e);
    }
    auto report = overhead_report(log);
    REQUIRE(report.tasks.size() == 2);
    CHECK(report.tasks[0].task_id == "t1");
    CHECK(report.tasks[1].task_id == "t2");
    CHECK(report.tasks[0].ratio == Catch::Approx(report.tasks[1].ratio).margin(1e-12));
}
