#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "conagents/core.hpp"

namespace conagents {

enum class Speaker { User, Assistant };

struct ChatMessage {
    Speaker speaker = Speaker::User;
    std::string content;
};

struct ChatRequest {
    std::string system;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
};

void validate(const ChatRequest& request);

struct Completion {
    std::string text;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
};

// Who is asking. task_id lets a scripted backend keep per-task queues so
// concurrent suites stay deterministic.
struct CallContext {
    AgentRole role = AgentRole::Grounding;
    std::string task_id;
};

class Backend {
public:
    virtual ~Backend() = default;

    // Throws Error{Transport|ScriptExhausted|Auth}.
    virtual Completion complete(const CallContext& ctx, const ChatRequest& request) = 0;
};

// One backend per agent role. The three may alias the same instance.
struct Backends {
    std::shared_ptr<Backend> grounding;
    std::shared_ptr<Backend> execution;
    std::shared_ptr<Backend> review;

    static Backends shared(std::shared_ptr<Backend> backend);
    Backend& for_role(AgentRole role) const;
};

// Canned completions per role, consumed strictly in order.
//
// File format: a JSON object mapping role names ("GROUNDING", "EXECUTION",
// "REVIEW") to arrays of strings. An optional "tasks" key maps task ids to
// objects of the same shape; calls made on behalf of a task listed there
// pop from that task's queues instead of the shared ones.
class ScriptedBackend final : public Backend {
public:
    using Queues = std::map<AgentRole, std::deque<std::string>>;

    ScriptedBackend() = default;
    explicit ScriptedBackend(Queues shared, std::map<std::string, Queues> per_task = {});

    static std::shared_ptr<ScriptedBackend> from_json(const json& script);
    static std::shared_ptr<ScriptedBackend> load(const std::filesystem::path& path);

    Completion complete(const CallContext& ctx, const ChatRequest& request) override;

    std::size_t calls() const;
    std::size_t remaining(AgentRole role, const std::string& task_id = {}) const;

private:
    mutable std::mutex mu_;
    Queues shared_;
    std::map<std::string, Queues> per_task_;
    std::size_t calls_ = 0;
};

struct LiveBackendOptions {
    std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
    std::string model;
    std::string api_key_env = "CONAGENTS_API_KEY";
    int transport_retries = 2;
    std::chrono::milliseconds initial_backoff{250};
    std::chrono::seconds timeout{120};
    std::uint64_t seed = 0;
};

// HTTP chat-completion client. Safe to call concurrently.
class LiveBackend final : public Backend {
public:
    explicit LiveBackend(LiveBackendOptions options);

    Completion complete(const CallContext& ctx, const ChatRequest& request) override;

    const LiveBackendOptions& options() const noexcept { return options_; }

    // Request body sent for `request` (exposed for tests).
    json build_body(const ChatRequest& request) const;

    // Extracts content and usage from a response body; throws Transport on
    // a body that lacks them.
    static Completion parse_response(const std::string& body);

private:
    std::chrono::milliseconds backoff_for(int attempt);

    LiveBackendOptions options_;
    std::string scheme_host_port_;
    std::string path_;
    std::mutex rng_mu_;
    std::mt19937_64 rng_;
};

}  // namespace conagents
