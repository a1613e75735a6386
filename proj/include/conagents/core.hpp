#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "conagents/error.hpp"

namespace conagents {

using json = nlohmann::json;

enum class AgentRole { Grounding, Execution, Review, Environment };

enum class Phase { Planning, PlanReview, Execution, ExecReview, Routing, ToolCall, Finish };

enum class PlanKind { UseTool, Finish };

enum class ExecStatus { Ok, Error };

enum class FeedbackTarget { Grounding, Execution };

enum class Verdict { Approve, Revise };

enum class ProtocolKind { Automatic, Adaptive };

// Why a tool call failed. Only Ok results carry None.
enum class ErrorClass {
    None,
    UnknownTool,
    MissingRequired,
    TypeMismatch,
    NotCallable,
    Malformed,
    Fault,
    NoMatchingRule,
    ToolError,
    SelectorMiss,
};

std::string_view to_string(AgentRole v);
std::string_view to_string(Phase v);
std::string_view to_string(PlanKind v);
std::string_view to_string(ExecStatus v);
std::string_view to_string(FeedbackTarget v);
std::string_view to_string(Verdict v);
std::string_view to_string(ProtocolKind v);
std::string_view to_string(ErrorClass v);

// Parsers throw Error{Parse} on unknown names. Names are the upper-case
// forms produced by to_string ("GROUNDING", "PLAN_REVIEW", ...).
AgentRole parse_agent_role(std::string_view s);
Phase parse_phase(std::string_view s);
ExecStatus parse_exec_status(std::string_view s);
ErrorClass parse_error_class(std::string_view s);

struct Task {
    std::string id;
    std::string description;
    std::vector<std::string> candidate_tools;
    std::vector<std::string> gold_tools;
    std::map<std::string, std::string> metadata;

    bool operator==(const Task&) const = default;
};

// Throws Error{Validation} if the task breaks its invariants.
void validate(const Task& task);

// Throws on duplicate ids as well as per-task violations.
void validate_suite(const std::vector<Task>& tasks);

struct PlanStep {
    PlanKind kind = PlanKind::UseTool;
    std::string tool;
    std::string intent;
    std::string answer;
    std::string raw;

    static PlanStep use_tool(std::string tool, std::string intent, std::string raw = {});
    static PlanStep finish(std::string answer, std::string raw = {});

    bool operator==(const PlanStep&) const = default;
};

struct ExecResult {
    ExecStatus status = ExecStatus::Ok;
    json payload;
    std::string error_message;
    std::string tool;
    ErrorClass error_class = ErrorClass::None;
    std::chrono::microseconds elapsed{0};

    static ExecResult ok(std::string tool, json payload);
    static ExecResult error(std::string tool, ErrorClass cls, std::string message);

    bool is_ok() const noexcept { return status == ExecStatus::Ok; }

    // Compares everything except elapsed, which is wall-clock noise.
    bool same_content(const ExecResult& other) const;
};

json to_json(const ExecResult& r);
ExecResult exec_result_from_json(const json& j);

struct Feedback {
    FeedbackTarget target = FeedbackTarget::Grounding;
    Verdict verdict = Verdict::Revise;
    std::string text;
    std::string raw;

    bool approved() const noexcept { return verdict == Verdict::Approve; }
    bool operator==(const Feedback&) const = default;
};

struct HistoryEntry {
    PlanStep plan;
    ExecResult result;
};

// Task-solving history: the (plan, result) pairs of completed steps.
class History {
public:
    const std::vector<HistoryEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    bool same_content(const History& other) const;

private:
    friend History history_append(const History&, PlanStep, ExecResult);
    std::vector<HistoryEntry> entries_;
};

struct ProtocolConfig {
    int alpha = 3;
    int beta = 3;
    int max_steps = 10;
    ProtocolKind protocol = ProtocolKind::Automatic;
    std::size_t payload_cap = 1024;
    std::size_t error_cap = 2048;
    int transport_retries = 2;
};

void validate(const ProtocolConfig& config);

// Returns a new history with one more entry. FINISH plans are rejected.
History history_append(const History& history, PlanStep plan, ExecResult result);

std::string render_history(const History& history, const ProtocolConfig& config);

struct TrajectoryEvent {
    std::string task_id;
    int step = 1;
    Phase phase = Phase::Planning;
    int turn = 1;
    AgentRole agent = AgentRole::Grounding;
    std::string payload;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::string timestamp;

    bool is_model_call() const noexcept { return agent != AgentRole::Environment; }
};

// Throws Error{Validation} for events that break the per-event invariants
// (step/turn >= 1, non-negative tokens, TOOL_CALL carried by ENVIRONMENT
// with zero tokens).
void validate(const TrajectoryEvent& event);

json to_json(const TrajectoryEvent& e);
TrajectoryEvent trajectory_event_from_json(const json& j);

json to_json(const Task& t);
Task task_from_json(const json& j);

// UTC wall clock in ISO-8601 with millisecond precision.
std::string now_timestamp();

namespace text {

inline constexpr std::string_view kTruncationSuffix = "…[truncated]";

// Number of whitespace-delimited chunks.
std::size_t count_tokens(std::string_view s);

// Number of UTF-8 code points (invalid bytes count as one each).
std::size_t char_count(std::string_view s);

// Keeps the first `cap` code points and appends kTruncationSuffix when
// anything was cut.
std::string truncate_chars(std::string_view s, std::size_t cap);

std::string trim(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

}  // namespace text

}  // namespace conagents
