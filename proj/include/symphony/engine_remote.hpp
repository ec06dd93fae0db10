#pragma once

// Remote engine client, separated from engine.hpp so translation units that
// never talk to a live endpoint do not pay for the HTTP stack.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>

#include <httplib.h>

#include "symphony/canonical.hpp"
#include "symphony/engine.hpp"
#include "symphony/errors.hpp"

namespace symphony::engine {

// OpenAI-compatible chat-completions wire contract, so the runtime can sit
// in front of vLLM-style servers without embedding an inference stack.
struct RemoteEngineConfig {
    std::string base_url = "http://127.0.0.1:8000";  // scheme://host:port
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::string auth_token_env;  // env var holding the bearer token, if any
    std::int64_t timeout_ms = 30'000;
    int max_inflight = 8;

    static RemoteEngineConfig from_json(const Json& j) {
        RemoteEngineConfig c;
        c.base_url = j.value("base_url", c.base_url);
        c.path = j.value("path", c.path);
        c.model = j.value("model", c.model);
        c.auth_token_env = j.value("auth_token_env", c.auth_token_env);
        c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
        c.max_inflight = j.value("max_inflight", c.max_inflight);
        return c;
    }
};

class RemoteEngine final : public Engine {
public:
    explicit RemoteEngine(RemoteEngineConfig config)
        : config_(std::move(config)),
          inflight_(std::max(1, config_.max_inflight)) {}

    EngineReply generate(const EngineRequest& req) override {
        validate(req);
        inflight_.acquire();
        struct Release {
            std::counting_semaphore<>& sem;
            ~Release() { sem.release(); }
        } release{inflight_};

        const auto start = std::chrono::steady_clock::now();
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
        client.set_write_timeout(std::chrono::milliseconds(config_.timeout_ms));

        httplib::Headers headers;
        if (!config_.auth_token_env.empty()) {
            if (const char* token = std::getenv(config_.auth_token_env.c_str())) {
                headers.emplace("Authorization", std::string("Bearer ") + token);
            }
        }

        Json body;
        body["max_tokens"] = req.max_tokens;
        body["messages"] = Json::array({Json{{"content", req.prompt}, {"role", "user"}}});
        body["model"] = config_.model;
        body["temperature"] = req.temperature;
        body["top_p"] = req.top_p;
        if (req.seed) body["seed"] = *req.seed;

        auto res = client.Post(config_.path, headers, canonical::dump(body), "application/json");
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        if (!res) {
            throw EngineUnavailable("remote engine unreachable (" +
                                    httplib::to_string(res.error()) + ") at " + config_.base_url);
        }
        if (res->status < 200 || res->status >= 300) {
            throw EngineUnavailable("remote engine returned HTTP " + std::to_string(res->status) +
                                    ": " + res->body.substr(0, 200));
        }
        Json parsed = canonical::parse(res->body);
        std::string text;
        try {
            const Json& choice = parsed.at("choices").at(0);
            if (choice.contains("message")) {
                text = choice.at("message").at("content").get<std::string>();
            } else {
                text = choice.at("text").get<std::string>();
            }
        } catch (const Json::exception& e) {
            throw EngineUnavailable(std::string("remote engine reply malformed: ") + e.what());
        }
        return EngineReply{std::move(text), elapsed, id()};
    }

    std::string id() const override { return "remote:" + config_.model; }

private:
    RemoteEngineConfig config_;
    std::counting_semaphore<> inflight_;
};

} // namespace symphony::engine
