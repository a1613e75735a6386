#include "conagents/backend.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace conagents {

namespace {

std::string line_col(const std::string& text, std::size_t byte_pos) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < byte_pos && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

ScriptedBackend::Queues parse_queues(const json& obj, const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorKind::Parse, where + ": expected an object");
    ScriptedBackend::Queues queues;
    for (const auto& [key, value] : obj.items()) {
        if (key == "tasks" && where == "script") continue;
        AgentRole role;
        try {
            role = parse_agent_role(key);
        } catch (const Error&) {
            throw Error(ErrorKind::Parse, where + ": unknown role '" + key + "'");
        }
        if (role == AgentRole::Environment) {
            throw Error(ErrorKind::Parse, where + ": ENVIRONMENT has no completions");
        }
        if (!value.is_array()) {
            throw Error(ErrorKind::Parse, where + "." + key + ": expected an array of strings");
        }
        auto& q = queues[role];
        std::size_t index = 0;
        for (const auto& entry : value) {
            if (!entry.is_string()) {
                throw Error(ErrorKind::Parse, where + "." + key + "[" + std::to_string(index) +
                                                  "]: record " + std::to_string(index) +
                                                  " is not a string");
            }
            q.push_back(entry.get<std::string>());
            ++index;
        }
    }
    return queues;
}

std::int64_t prompt_tokens(const ChatRequest& request) {
    auto n = static_cast<std::int64_t>(text::count_tokens(request.system));
    for (const auto& m : request.messages) n += static_cast<std::int64_t>(text::count_tokens(m.content));
    return n;
}

}  // namespace

void validate(const ChatRequest& request) {
    if (request.messages.empty()) {
        throw Error(ErrorKind::InvalidArgument, "chat request has no messages");
    }
}

Backends Backends::shared(std::shared_ptr<Backend> backend) {
    return Backends{backend, backend, backend};
}

Backend& Backends::for_role(AgentRole role) const {
    const std::shared_ptr<Backend>* slot = nullptr;
    switch (role) {
        case AgentRole::Grounding: slot = &grounding; break;
        case AgentRole::Execution: slot = &execution; break;
        case AgentRole::Review: slot = &review; break;
        case AgentRole::Environment: break;
    }
    if (slot == nullptr || !*slot) {
        throw Error(ErrorKind::InvalidArgument,
                    "no backend configured for role " + std::string(to_string(role)));
    }
    return **slot;
}

ScriptedBackend::ScriptedBackend(Queues shared, std::map<std::string, Queues> per_task)
    : shared_(std::move(shared)), per_task_(std::move(per_task)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& script) {
    auto shared = parse_queues(script, "script");
    std::map<std::string, Queues> per_task;
    if (script.contains("tasks")) {
        const auto& tasks = script.at("tasks");
        if (!tasks.is_object()) throw Error(ErrorKind::Parse, "script.tasks: expected an object");
        for (const auto& [task_id, queues] : tasks.items()) {
            per_task.emplace(task_id, parse_queues(queues, "script.tasks." + task_id));
        }
    }
    return std::make_shared<ScriptedBackend>(std::move(shared), std::move(per_task));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open script " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    json doc;
    try {
        doc = json::parse(content);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, path.string() + ": " + line_col(content, e.byte > 0 ? e.byte - 1 : 0) +
                                          ": " + e.what());
    }
    try {
        return from_json(doc);
    } catch (const Error& e) {
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

Completion ScriptedBackend::complete(const CallContext& ctx, const ChatRequest& request) {
    validate(request);
    std::string text;
    {
        std::lock_guard lock(mu_);
        auto task_it = per_task_.find(ctx.task_id);
        Queues& queues = task_it != per_task_.end() ? task_it->second : shared_;
        auto& q = queues[ctx.role];
        if (q.empty()) {
            throw Error(ErrorKind::ScriptExhausted,
                        "script exhausted for role " + std::string(to_string(ctx.role)) +
                            (ctx.task_id.empty() ? "" : " (task " + ctx.task_id + ")"));
        }
        text = std::move(q.front());
        q.pop_front();
        ++calls_;
    }
    Completion c;
    c.tokens_in = prompt_tokens(request);
    c.tokens_out = static_cast<std::int64_t>(text::count_tokens(text));
    c.text = std::move(text);
    return c;
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::size_t ScriptedBackend::remaining(AgentRole role, const std::string& task_id) const {
    std::lock_guard lock(mu_);
    const Queues* queues = &shared_;
    if (auto it = per_task_.find(task_id); it != per_task_.end()) queues = &it->second;
    auto it = queues->find(role);
    return it == queues->end() ? 0 : it->second.size();
}

LiveBackend::LiveBackend(LiveBackendOptions options)
    : options_(std::move(options)), rng_(options_.seed) {
    const auto& url = options_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::InvalidArgument, "endpoint must be an http(s) URL: " + url);
    }
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw Error(ErrorKind::InvalidArgument, "unsupported endpoint scheme: " + scheme);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (options_.model.empty()) throw Error(ErrorKind::InvalidArgument, "model name is required");
}

json LiveBackend::build_body(const ChatRequest& request) const {
    json messages = json::array();
    if (!request.system.empty()) {
        messages.push_back({{"role", "system"}, {"content", request.system}});
    }
    for (const auto& m : request.messages) {
        messages.push_back(
            {{"role", m.speaker == Speaker::User ? "user" : "assistant"}, {"content", m.content}});
    }
    return json{{"model", options_.model},
                {"messages", std::move(messages)},
                {"temperature", request.temperature}};
}

Completion LiveBackend::parse_response(const std::string& body) {
    const auto doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw Error(ErrorKind::Transport, "chat service returned a non-JSON body");
    }
    Completion c;
    try {
        c.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        if (doc.contains("usage")) {
            const auto& usage = doc.at("usage");
            c.tokens_in = usage.value("prompt_tokens", std::int64_t{0});
            c.tokens_out = usage.value("completion_tokens", std::int64_t{0});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Transport, std::string("malformed chat response: ") + e.what());
    }
    if (c.tokens_in < 0 || c.tokens_out < 0) {
        throw Error(ErrorKind::Transport, "chat service reported negative token usage");
    }
    return c;
}

std::chrono::milliseconds LiveBackend::backoff_for(int attempt) {
    std::uniform_real_distribution<double> jitter(1.0, 1.25);
    double factor;
    {
        std::lock_guard lock(rng_mu_);
        factor = jitter(rng_);
    }
    const auto base = options_.initial_backoff.count() * (std::int64_t{1} << attempt);
    return std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(base) * factor));
}

Completion LiveBackend::complete(const CallContext&, const ChatRequest& request) {
    validate(request);
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw Error(ErrorKind::Auth, "environment variable " + options_.api_key_env + " is not set");
    }

    const std::string body = build_body(request).dump(-1, ' ', false, json::error_handler_t::replace);
    std::string last_error;
    for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(backoff_for(attempt - 1));

        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(options_.timeout);
        client.set_read_timeout(options_.timeout);
        client.set_write_timeout(options_.timeout);
        const httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw Error(ErrorKind::Auth, "chat service rejected credential (HTTP " +
                                             std::to_string(res->status) + ")");
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status >= 400) {
            throw Error(ErrorKind::Transport,
                        "chat service returned HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        return parse_response(res->body);
    }
    throw Error(ErrorKind::Transport, "chat service unavailable after " +
                                          std::to_string(options_.transport_retries + 1) +
                                          " attempts: " + last_error);
}

}  // namespace conagents
