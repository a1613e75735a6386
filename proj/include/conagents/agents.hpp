#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "conagents/backend.hpp"
#include "conagents/core.hpp"
#include "conagents/tools.hpp"

namespace conagents {

enum class Fault { Planning, Execution };

std::string_view to_string(Fault f);

struct Routing {
    Fault fault = Fault::Execution;
    std::string rationale;
    std::string raw;
};

// Agent output together with what it cost. precheck=true means the output
// was produced deterministically without a model call (zero tokens).
template <typename T>
struct AgentTurn {
    T value;
    std::string raw;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    bool precheck = false;
    // Set when the model output did not match the expected grammar.
    std::optional<std::string> parse_error;
};

using PlanRevision = std::pair<PlanStep, Feedback>;
using ExecRevision = std::pair<ToolInvocation, Feedback>;

// Fixed feedback for plans that name a tool outside the candidate set.
inline constexpr std::string_view kOnlySelectGivenTools = "only select tools from given list";
inline constexpr std::string_view kUnparseableRouting =
    "unparseable routing; defaulting to execution";

namespace prompts {

inline constexpr std::string_view kVersion = "conagents-prompts/1";

// Role instructions (the chat "system" message).
std::string_view system_prompt(AgentRole role);

// Substitutes {name} placeholders. Unknown placeholders are left verbatim;
// substituted values are not rescanned.
std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& values);

std::string render_task(const Task& task);
// One line per tool: "- name: first line of description".
std::string render_toolset(const std::vector<ToolDoc>& toolset);
std::string render_documentation(const ToolDoc& doc);
std::string render_invocation(const ToolInvocation& inv);
std::string render_result(const ExecResult& result, const ProtocolConfig& config);
std::string render_plan_revisions(const std::vector<PlanRevision>& revisions);
std::string render_exec_revisions(const std::vector<ExecRevision>& revisions,
                                  const ProtocolConfig& config);

std::string grounding_prompt(const Task& task, const std::vector<ToolDoc>& toolset,
                             const History& history, const std::vector<PlanRevision>& revisions,
                             const ProtocolConfig& config);
std::string execution_prompt(const PlanStep& plan, const ToolDoc& doc,
                             const std::vector<ExecRevision>& revisions,
                             const ProtocolConfig& config);
std::string plan_review_prompt(const Task& task, const std::vector<ToolDoc>& toolset,
                               const PlanStep& plan);
std::string exec_review_prompt(const Task& task, const ToolDoc& doc, const ToolInvocation& inv,
                               const ExecResult& result, const ProtocolConfig& config);
std::string routing_prompt(const Task& task, const PlanStep& plan, const ToolInvocation& inv,
                           const ExecResult& result, const ProtocolConfig& config);

}  // namespace prompts

// Output grammars. All parsers are total: any input yields a value or a
// defect, never an exception.
namespace parse {

// `USE <tool>: <intent>` or `FINISH: <answer>`; the first matching line wins.
std::optional<PlanStep> plan(std::string_view output);

// Contents of the first ``` fenced block, or nullopt.
std::optional<std::string> first_fenced_block(std::string_view output);

// All fenced blocks in order.
std::vector<std::string> fenced_blocks(std::string_view output);

// Fenced JSON {"tool": ..., "arguments": {...}, "selectors": [...]}. On
// failure the invocation carries parse_error.
ToolInvocation invocation(std::string_view output);

// Fenced JSON {"verdict": "APPROVE"|"REVISE", "feedback": "..."}.
// Unparseable text degrades to REVISE carrying the raw text.
Feedback review(std::string_view output, FeedbackTarget target, bool* parsed = nullptr);

// Fenced JSON {"fault": "PLANNING_FAULT"|"EXECUTION_FAULT", "rationale": "..."}.
// Unparseable text degrades to EXECUTION_FAULT.
Routing routing(std::string_view output, bool* parsed = nullptr);

}  // namespace parse

// Agents are stateless; every call takes its full context.
AgentTurn<std::optional<PlanStep>> ground(const Backends& backends, const Task& task,
                                          const std::vector<ToolDoc>& toolset,
                                          const History& history,
                                          const std::vector<PlanRevision>& revisions,
                                          const ProtocolConfig& config);

AgentTurn<ToolInvocation> execute_plan(const Backends& backends, const Task& task,
                                       const PlanStep& plan, const ToolDoc& doc,
                                       const std::vector<ExecRevision>& revisions,
                                       const ProtocolConfig& config);

AgentTurn<Feedback> review_planning(const Backends& backends, const Task& task,
                                    const std::vector<ToolDoc>& toolset, const PlanStep& plan);

AgentTurn<Feedback> review_execution(const Backends& backends, const Task& task,
                                     const ToolDoc& doc, const ToolInvocation& inv,
                                     const ExecResult& result, const ProtocolConfig& config);

AgentTurn<Routing> route_error(const Backends& backends, const Task& task, const PlanStep& plan,
                               const ToolInvocation& inv, const ExecResult& result,
                               const ProtocolConfig& config);

// Feedback raw text used when a deterministic check stands in for the
// review agent; also what gets logged as the event payload.
std::string precheck_review_payload(std::string_view feedback);

}  // namespace conagents
