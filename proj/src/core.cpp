#include "conagents/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <ctime>
#include <set>
#include <sstream>
#include <utility>

namespace conagents {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table,
                std::string_view what) {
    for (const auto& [value, name] : table) {
        if (name == s) return value;
    }
    throw Error(ErrorKind::Parse, "unknown " + std::string(what) + ": '" + std::string(s) + "'");
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum v, const std::array<std::pair<Enum, std::string_view>, N>& table) {
    for (const auto& [value, name] : table) {
        if (value == v) return name;
    }
    return "?";
}

constexpr std::array<std::pair<AgentRole, std::string_view>, 4> kRoles{{
    {AgentRole::Grounding, "GROUNDING"},
    {AgentRole::Execution, "EXECUTION"},
    {AgentRole::Review, "REVIEW"},
    {AgentRole::Environment, "ENVIRONMENT"},
}};

constexpr std::array<std::pair<Phase, std::string_view>, 7> kPhases{{
    {Phase::Planning, "PLANNING"},
    {Phase::PlanReview, "PLAN_REVIEW"},
    {Phase::Execution, "EXECUTION"},
    {Phase::ExecReview, "EXEC_REVIEW"},
    {Phase::Routing, "ROUTING"},
    {Phase::ToolCall, "TOOL_CALL"},
    {Phase::Finish, "FINISH"},
}};

constexpr std::array<std::pair<ExecStatus, std::string_view>, 2> kStatuses{{
    {ExecStatus::Ok, "OK"},
    {ExecStatus::Error, "ERROR"},
}};

constexpr std::array<std::pair<ErrorClass, std::string_view>, 10> kErrorClasses{{
    {ErrorClass::None, "NONE"},
    {ErrorClass::UnknownTool, "UNKNOWN_TOOL"},
    {ErrorClass::MissingRequired, "MISSING_REQUIRED"},
    {ErrorClass::TypeMismatch, "TYPE_MISMATCH"},
    {ErrorClass::NotCallable, "NOT_CALLABLE"},
    {ErrorClass::Malformed, "MALFORMED"},
    {ErrorClass::Fault, "FAULT"},
    {ErrorClass::NoMatchingRule, "NO_MATCHING_RULE"},
    {ErrorClass::ToolError, "TOOL_ERROR"},
    {ErrorClass::SelectorMiss, "SELECTOR_MISS"},
}};

bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Byte length of the code point starting at s[i]; malformed sequences
// advance by one byte.
std::size_t code_point_length(std::string_view s, std::size_t i) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) {
        len = 4;
    } else if (lead >= 0xE0) {
        len = lead < 0xF0 ? 3 : 1;
    } else if (lead >= 0xC0) {
        len = 2;
    }
    if (i + len > s.size()) return 1;
    for (std::size_t k = 1; k < len; ++k) {
        if (!is_utf8_continuation(static_cast<unsigned char>(s[i + k]))) return 1;
    }
    return len;
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "INVALID_ARGUMENT";
        case ErrorKind::Parse: return "PARSE";
        case ErrorKind::Validation: return "VALIDATION";
        case ErrorKind::Io: return "IO";
        case ErrorKind::Transport: return "TRANSPORT";
        case ErrorKind::ScriptExhausted: return "SCRIPT_EXHAUSTED";
        case ErrorKind::Auth: return "AUTH";
    }
    return "?";
}

std::string_view to_string(AgentRole v) { return name_of(v, kRoles); }
std::string_view to_string(Phase v) { return name_of(v, kPhases); }
std::string_view to_string(ExecStatus v) { return name_of(v, kStatuses); }
std::string_view to_string(ErrorClass v) { return name_of(v, kErrorClasses); }

std::string_view to_string(PlanKind v) { return v == PlanKind::UseTool ? "USE_TOOL" : "FINISH"; }

std::string_view to_string(FeedbackTarget v) {
    return v == FeedbackTarget::Grounding ? "GROUNDING" : "EXECUTION";
}

std::string_view to_string(Verdict v) { return v == Verdict::Approve ? "APPROVE" : "REVISE"; }

std::string_view to_string(ProtocolKind v) {
    return v == ProtocolKind::Automatic ? "AUTOMATIC" : "ADAPTIVE";
}

AgentRole parse_agent_role(std::string_view s) { return parse_enum(s, kRoles, "agent role"); }
Phase parse_phase(std::string_view s) { return parse_enum(s, kPhases, "phase"); }
ExecStatus parse_exec_status(std::string_view s) { return parse_enum(s, kStatuses, "status"); }
ErrorClass parse_error_class(std::string_view s) {
    return parse_enum(s, kErrorClasses, "error class");
}

void validate(const Task& task) {
    if (task.id.empty()) throw Error(ErrorKind::Validation, "task id must be non-empty");
    if (task.candidate_tools.empty()) {
        throw Error(ErrorKind::Validation, "task " + task.id + ": candidate_tools is empty");
    }
    const std::set<std::string> candidates(task.candidate_tools.begin(), task.candidate_tools.end());
    for (const auto& gold : task.gold_tools) {
        if (!candidates.contains(gold)) {
            throw Error(ErrorKind::Validation,
                        "task " + task.id + ": gold tool '" + gold + "' is not a candidate");
        }
    }
}

void validate_suite(const std::vector<Task>& tasks) {
    std::set<std::string> seen;
    for (const auto& task : tasks) {
        validate(task);
        if (!seen.insert(task.id).second) {
            throw Error(ErrorKind::Validation, "duplicate task id: " + task.id);
        }
    }
}

PlanStep PlanStep::use_tool(std::string tool, std::string intent, std::string raw) {
    PlanStep p;
    p.kind = PlanKind::UseTool;
    p.tool = std::move(tool);
    p.intent = std::move(intent);
    p.raw = std::move(raw);
    return p;
}

PlanStep PlanStep::finish(std::string answer, std::string raw) {
    PlanStep p;
    p.kind = PlanKind::Finish;
    p.answer = std::move(answer);
    p.raw = std::move(raw);
    return p;
}

ExecResult ExecResult::ok(std::string tool, json payload) {
    ExecResult r;
    r.status = ExecStatus::Ok;
    r.tool = std::move(tool);
    r.payload = std::move(payload);
    return r;
}

ExecResult ExecResult::error(std::string tool, ErrorClass cls, std::string message) {
    ExecResult r;
    r.status = ExecStatus::Error;
    r.tool = std::move(tool);
    r.error_class = cls;
    r.error_message = message.empty() ? std::string("unspecified error") : std::move(message);
    return r;
}

bool ExecResult::same_content(const ExecResult& other) const {
    return status == other.status && payload == other.payload &&
           error_message == other.error_message && tool == other.tool &&
           error_class == other.error_class;
}

json to_json(const ExecResult& r) {
    json j{{"status", to_string(r.status)}, {"tool", r.tool}};
    if (r.is_ok()) {
        j["payload"] = r.payload;
    } else {
        j["error_message"] = r.error_message;
        j["error_class"] = to_string(r.error_class);
    }
    return j;
}

ExecResult exec_result_from_json(const json& j) {
    const auto status = parse_exec_status(j.at("status").get<std::string>());
    auto tool = j.at("tool").get<std::string>();
    if (status == ExecStatus::Ok) return ExecResult::ok(std::move(tool), j.at("payload"));
    return ExecResult::error(std::move(tool),
                             parse_error_class(j.value("error_class", std::string("TOOL_ERROR"))),
                             j.at("error_message").get<std::string>());
}

bool History::same_content(const History& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!(entries_[i].plan == other.entries_[i].plan)) return false;
        if (!entries_[i].result.same_content(other.entries_[i].result)) return false;
    }
    return true;
}

void validate(const ProtocolConfig& config) {
    if (config.alpha < 1) throw Error(ErrorKind::InvalidArgument, "alpha must be >= 1");
    if (config.beta < 1) throw Error(ErrorKind::InvalidArgument, "beta must be >= 1");
    if (config.max_steps < 1) throw Error(ErrorKind::InvalidArgument, "max_steps must be >= 1");
    if (config.payload_cap == 0 || config.error_cap == 0) {
        throw Error(ErrorKind::InvalidArgument, "payload_cap and error_cap must be > 0");
    }
    if (config.transport_retries < 0) {
        throw Error(ErrorKind::InvalidArgument, "transport_retries must be >= 0");
    }
}

History history_append(const History& history, PlanStep plan, ExecResult result) {
    if (plan.kind != PlanKind::UseTool) {
        throw Error(ErrorKind::InvalidArgument, "finish not appendable");
    }
    History next = history;
    next.entries_.push_back({std::move(plan), std::move(result)});
    return next;
}

std::string render_history(const History& history, const ProtocolConfig& config) {
    if (history.empty()) return "no prior steps";
    std::ostringstream out;
    std::size_t index = 1;
    for (const auto& [plan, result] : history.entries()) {
        if (index > 1) out << '\n';
        out << "Step " << index << ": tool=" << plan.tool << " status=" << to_string(result.status)
            << '\n';
        out << "  plan: " << plan.intent << '\n';
        if (result.is_ok()) {
            out << "  result: " << text::truncate_chars(result.payload.dump(), config.payload_cap);
        } else {
            out << "  error: " << text::truncate_chars(result.error_message, config.error_cap);
        }
        ++index;
    }
    return out.str();
}

void validate(const TrajectoryEvent& event) {
    if (event.task_id.empty()) throw Error(ErrorKind::Validation, "event task_id is empty");
    if (event.step < 1) throw Error(ErrorKind::Validation, "event step must be >= 1");
    if (event.turn < 1) throw Error(ErrorKind::Validation, "event turn must be >= 1");
    if (event.tokens_in < 0 || event.tokens_out < 0) {
        throw Error(ErrorKind::Validation, "event token counts must be non-negative");
    }
    if (event.phase == Phase::ToolCall &&
        (event.agent != AgentRole::Environment || event.tokens_in != 0 || event.tokens_out != 0)) {
        throw Error(ErrorKind::Validation, "TOOL_CALL events belong to ENVIRONMENT with zero tokens");
    }
}

json to_json(const TrajectoryEvent& e) {
    return json{{"task_id", e.task_id},       {"step", e.step},
                {"phase", to_string(e.phase)}, {"turn", e.turn},
                {"agent", to_string(e.agent)}, {"payload", e.payload},
                {"tokens_in", e.tokens_in},    {"tokens_out", e.tokens_out},
                {"timestamp", e.timestamp}};
}

TrajectoryEvent trajectory_event_from_json(const json& j) {
    TrajectoryEvent e;
    e.task_id = j.at("task_id").get<std::string>();
    e.step = j.at("step").get<int>();
    e.phase = parse_phase(j.at("phase").get<std::string>());
    e.turn = j.at("turn").get<int>();
    e.agent = parse_agent_role(j.at("agent").get<std::string>());
    e.payload = j.at("payload").get<std::string>();
    e.tokens_in = j.at("tokens_in").get<std::int64_t>();
    e.tokens_out = j.at("tokens_out").get<std::int64_t>();
    e.timestamp = j.value("timestamp", std::string{});
    validate(e);
    return e;
}

json to_json(const Task& t) {
    return json{{"id", t.id},
                {"description", t.description},
                {"candidate_tools", t.candidate_tools},
                {"gold_tools", t.gold_tools},
                {"metadata", t.metadata}};
}

Task task_from_json(const json& j) {
    Task t;
    t.id = j.at("id").get<std::string>();
    t.description = j.value("description", std::string{});
    t.candidate_tools = j.at("candidate_tools").get<std::vector<std::string>>();
    t.gold_tools = j.value("gold_tools", std::vector<std::string>{});
    t.metadata = j.value("metadata", std::map<std::string, std::string>{});
    return t;
}

std::string now_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto millis =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() %
        1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%.*s.%03dZ", static_cast<int>(n), buf,
                  static_cast<int>(millis));
    return out;
}

namespace text {

std::size_t count_tokens(std::string_view s) {
    std::size_t count = 0;
    bool in_token = false;
    for (const char c : s) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_token) ++count;
        in_token = !space;
    }
    return count;
}

std::size_t char_count(std::string_view s) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size(); i += code_point_length(s, i)) ++count;
    return count;
}

std::string truncate_chars(std::string_view s, std::size_t cap) {
    std::size_t i = 0;
    std::size_t kept = 0;
    while (i < s.size() && kept < cap) {
        i += code_point_length(s, i);
        ++kept;
    }
    if (i >= s.size()) return std::string(s);
    std::string out(s.substr(0, i));
    out += kTruncationSuffix;
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(s.substr(start));
            break;
        }
        auto line = s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

}  // namespace text

}  // namespace conagents
