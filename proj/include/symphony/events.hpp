#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symphony/canonical.hpp"
#include "symphony/errors.hpp"
#include "symphony/util.hpp"

namespace symphony::events {

using canonical::Json;

// One structured event; serialized as a single canonical JSON line. The
// event log is the data source for the orchestration-overhead report, so
// timestamps come from a monotonic clock.
struct Event {
    std::int64_t ts_ms = 0;
    std::string node;   // emitting agent id (or "-" for harness events)
    std::string event;  // beacon_sent, response_recv, executor_selected, ...
    std::string task_id;
    int chain_id = 0;
    int subtask_index = 0;
    Json extra = Json::object();
};

inline Json event_to_json(const Event& e) {
    Json j;
    j["chain_id"] = e.chain_id;
    j["event"] = e.event;
    j["extra"] = e.extra.is_null() ? Json::object() : e.extra;
    j["node"] = e.node;
    j["subtask_index"] = e.subtask_index;
    j["task_id"] = e.task_id;
    j["ts_ms"] = e.ts_ms;
    return j;
}

inline Event event_from_json(const Json& j) {
    Event e;
    e.ts_ms = j.at("ts_ms").get<std::int64_t>();
    e.node = j.at("node").get<std::string>();
    e.event = j.at("event").get<std::string>();
    e.task_id = j.at("task_id").get<std::string>();
    e.chain_id = j.at("chain_id").get<int>();
    e.subtask_index = j.at("subtask_index").get<int>();
    e.extra = j.value("extra", Json::object());
    return e;
}

// Thread-safe append-only sink. An in-process cluster shares one log so the
// report sees every node's events; a file mirror is optional.
class EventLog {
public:
    EventLog() = default;
    explicit EventLog(std::string path) : path_(std::move(path)) {
        if (!path_.empty()) file_.open(path_, std::ios::app);
    }

    void append(Event e) {
        std::lock_guard lock(mutex_);
        if (file_.is_open()) {
            file_ << canonical::dump(event_to_json(e)) << "\n";
            file_.flush();
        }
        entries_.push_back(std::move(e));
    }

    std::vector<Event> entries() const {
        std::lock_guard lock(mutex_);
        return entries_;
    }

    static std::vector<Event> read_file(const std::string& path) {
        std::vector<Event> out;
        for (const auto& line : util::split(util::read_file(path), '\n')) {
            if (util::trim(line).empty()) continue;
            out.push_back(event_from_json(canonical::parse(line)));
        }
        return out;
    }

private:
    mutable std::mutex mutex_;
    std::vector<Event> entries_;
    std::string path_;
    std::ofstream file_;
};

// ---------------------------------------------------------------------------
// Overhead accounting. Per task:
//   engine_ms        sum of engine-attributed latencies (planning + steps)
//   beacon_ms        sum over rounds of (executor_selected - beacon_sent)
//   dispatch_ms      sum over leaf slots of (result_recv - task_sent) minus
//                    that slot's engine time (transport, queueing, framing)
//   voting_ms        verdict - voting start
//   registration_ms  registration work inside the task window
// orchestration = registration + beacon + dispatch + voting, and the
// reported total = engine + orchestration. Chain-level dispatch spans nest
// every per-step span, so they are excluded from dispatch accounting.

struct PhaseBreakdown {
    double registration_ms = 0.0;
    double beacon_ms = 0.0;
    double dispatch_ms = 0.0;
    double voting_ms = 0.0;

    double sum() const { return registration_ms + beacon_ms + dispatch_ms + voting_ms; }
};

struct TaskOverhead {
    std::string task_id;
    double wall_ms = 0.0;    // submit -> verdict span
    double engine_ms = 0.0;
    PhaseBreakdown phases;
    double orchestration_ms = 0.0;
    double total_ms = 0.0;   // engine + orchestration
    double ratio = 0.0;      // orchestration / total
};

struct OverheadBreakdown {
    std::vector<TaskOverhead> tasks;
};

inline Json overhead_to_json(const OverheadBreakdown& b) {
    Json arr = Json::array();
    for (const auto& t : b.tasks) {
        arr.push_back(Json{{"beacon_ms", t.phases.beacon_ms},
                           {"dispatch_ms", t.phases.dispatch_ms},
                           {"engine_ms", t.engine_ms},
                           {"orchestration_ms", t.orchestration_ms},
                           {"ratio", t.ratio},
                           {"registration_ms", t.phases.registration_ms},
                           {"task_id", t.task_id},
                           {"total_ms", t.total_ms},
                           {"voting_ms", t.phases.voting_ms},
                           {"wall_ms", t.wall_ms}});
    }
    return Json{{"tasks", std::move(arr)}};
}

inline OverheadBreakdown overhead_report(const std::vector<Event>& events) {
    struct Slot {
        std::optional<std::int64_t> beacon_sent;
        std::optional<std::int64_t> selected;
        std::optional<std::int64_t> task_sent;
        std::optional<std::int64_t> result_recv;
        double engine_ms = 0.0;
        double beacon_accum = 0.0;
    };
    struct TaskAccum {
        std::optional<std::int64_t> submitted;
        std::optional<std::int64_t> vote_start;
        std::optional<std::int64_t> verdict;
        std::map<std::pair<int, int>, Slot> slots;
        std::vector<int> chains_dispatched;
        std::vector<int> chains_done;
        double planner_engine_ms = 0.0;
        double registration_ms = 0.0;
    };

    std::map<std::string, TaskAccum> tasks;
    std::vector<std::string> order;
    for (const Event& e : events) {
        if (e.task_id.empty()) continue;
        if (!tasks.count(e.task_id)) order.push_back(e.task_id);
        TaskAccum& t = tasks[e.task_id];
        Slot& slot = t.slots[{e.chain_id, e.subtask_index}];
        if (e.event == "task_submitted") {
            t.submitted = e.ts_ms;
        } else if (e.event == "beacon_sent") {
            slot.beacon_sent = e.ts_ms;
        } else if (e.event == "executor_selected") {
            slot.selected = e.ts_ms;
            if (slot.beacon_sent && e.ts_ms >= *slot.beacon_sent) {
                // accumulate per attempt; a retry reuses the slot
                slot.beacon_accum += static_cast<double>(e.ts_ms - *slot.beacon_sent);
                slot.beacon_sent.reset();
            }
        } else if (e.event == "task_sent") {
            slot.task_sent = e.ts_ms;
            if (e.subtask_index == 0 && e.chain_id >= 0) {
                t.chains_dispatched.push_back(e.chain_id);
            }
        } else if (e.event == "result_recv") {
            slot.result_recv = e.ts_ms;
        } else if (e.event == "engine_call") {
            const double ms = e.extra.value("ms", 0.0);
            if (e.extra.value("stage", "") == "planning") {
                t.planner_engine_ms += ms;
            } else {
                slot.engine_ms += ms;
            }
        } else if (e.event == "voting_started") {
            t.vote_start = e.ts_ms;
        } else if (e.event == "verdict") {
            t.verdict = e.ts_ms;
        } else if (e.event == "chain_done") {
            t.chains_done.push_back(e.chain_id);
        } else if (e.event == "register_applied") {
            t.registration_ms += e.extra.value("ms", 0.0);
        }
    }

    OverheadBreakdown out;
    for (const auto& task_id : order) {
        const TaskAccum& t = tasks.at(task_id);
        std::vector<std::string> missing;
        if (!t.submitted) missing.push_back("task_submitted");
        if (!t.verdict) missing.push_back("verdict");
        for (int chain : t.chains_dispatched) {
            if (std::find(t.chains_done.begin(), t.chains_done.end(), chain) ==
                t.chains_done.end()) {
                missing.push_back("chain_done[" + std::to_string(chain) + "]");
            }
        }
        if (!missing.empty()) {
            std::string what = "incomplete event log for task " + task_id + "; missing:";
            for (const auto& m : missing) what += " " + m;
            throw ReportError(what);
        }

        TaskOverhead to;
        to.task_id = task_id;
        to.wall_ms = static_cast<double>(*t.verdict - *t.submitted);
        to.engine_ms = t.planner_engine_ms;
        to.phases.registration_ms = t.registration_ms;
        for (const auto& [key, slot] : t.slots) {
            to.phases.beacon_ms += slot.beacon_accum;
            to.engine_ms += slot.engine_ms;
            const bool leaf = key.second > 0;
            if (leaf && slot.task_sent && slot.result_recv) {
                const double span = static_cast<double>(*slot.result_recv - *slot.task_sent);
                to.phases.dispatch_ms += std::max(0.0, span - slot.engine_ms);
            }
        }
        if (t.vote_start && t.verdict) {
            to.phases.voting_ms = static_cast<double>(*t.verdict - *t.vote_start);
        }
        to.orchestration_ms = to.phases.sum();
        to.total_ms = to.engine_ms + to.orchestration_ms;
        to.ratio = to.total_ms > 0.0 ? to.orchestration_ms / to.total_ms : 0.0;
        out.tasks.push_back(std::move(to));
    }
    return out;
}

} // namespace symphony::events
