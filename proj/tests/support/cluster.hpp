#pragma once

// In-process cluster harness: N nodes over the in-memory transport, one
// shared event log, deterministic seeded identities. Engines are owned here
// and injected so fixtures can script every agent independently.

#include <memory>
#include <string>
#include <vector>

#include "symphony/node.hpp"

namespace testgen {

using symphony::runtime::Node;
using symphony::runtime::NodeConfig;
using symphony::runtime::NodeDeps;

inline std::string seed_hex(unsigned index) {
    std::string s(64, '0');
    const std::string tail = std::to_string(index);
    s.replace(s.size() - tail.size(), tail.size(), tail);
    return s;
}

class Cluster {
public:
    Cluster()
        : hub_(std::make_shared<symphony::net::MemoryHub>()),
          log_(std::make_shared<symphony::events::EventLog>()) {}

    ~Cluster() { shutdown_all(); }

    // Fast timers suitable for tests; capability/roles/engine set per node.
    NodeConfig base_config(std::uint16_t port) const {
        NodeConfig cfg;
        cfg.host = "127.0.0.1";
        cfg.port = port;
        cfg.heartbeat_interval_ms = 50;
        cfg.sync_interval_ms = 25;
        cfg.liveness_ttl_ms = 10'000;
        cfg.beacon_timeout_ms = 400;
        cfg.step_deadline_ms = 2'000;
        cfg.task_deadline_ms = 20'000;
        return cfg;
    }

    Node& add(NodeConfig cfg, symphony::engine::Engine* engine) {
        if (cfg.key_seed_hex.empty()) {
            cfg.key_seed_hex = seed_hex(static_cast<unsigned>(nodes_.size() + 1));
        }
        NodeDeps deps;
        deps.transport = std::make_shared<symphony::net::MemoryTransport>(hub_);
        deps.event_log = log_;
        deps.engine = engine;
        nodes_.push_back(std::make_unique<Node>(std::move(cfg), std::move(deps)));
        return *nodes_.back();
    }

    Node& node(std::size_t i) { return *nodes_.at(i); }
    std::size_t size() const { return nodes_.size(); }
    symphony::events::EventLog& log() { return *log_; }

    // Seeds every node with every other node's address and waits for full
    // ledger convergence (or the deadline).
    bool wait_converged(std::size_t expected_records, int deadline_ms = 5000) {
        const auto until = std::chrono::steady_clock::now() +
                           std::chrono::milliseconds(deadline_ms);
        while (std::chrono::steady_clock::now() < until) {
            bool all = true;
            for (auto& n : nodes_) {
                if (!n) continue;
                if (n->agent_ledger().snapshot().records.size() != expected_records) {
                    all = false;
                    break;
                }
            }
            if (all) return true;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        return false;
    }

    void kill(std::size_t i) {
        if (nodes_.at(i)) {
            nodes_[i]->shutdown();
            nodes_[i].reset();
        }
    }

    void shutdown_all() {
        for (auto& n : nodes_) {
            if (n) n->shutdown();
        }
        nodes_.clear();
    }

private:
    std::shared_ptr<symphony::net::MemoryHub> hub_;
    std::shared_ptr<symphony::events::EventLog> log_;
    std::vector<std::unique_ptr<Node>> nodes_;
};

} // namespace testgen
