#pragma once

#include <optional>
#include <string>
#include <vector>

#include "conagents/agents.hpp"
#include "conagents/backend.hpp"
#include "conagents/core.hpp"
#include "conagents/toolsim.hpp"
#include "conagents/trajectory.hpp"

namespace conagents {

enum class AbortReason { None, MaxSteps, BackendError };

std::string_view to_string(AbortReason r);
AbortReason parse_abort_reason(std::string_view s);

struct RunOutcome {
    std::string task_id;
    bool finished = false;
    std::optional<std::string> answer;
    // Tools whose invocation returned OK, in completion order.
    std::vector<std::string> executed_ok_tools;
    int steps_used = 0;
    std::vector<TrajectoryEvent> trajectory;
    AbortReason abort_reason = AbortReason::None;
    History history;
    // Backend error text when abort_reason is BackendError.
    std::string error;
};

// Planning-review then execution-review loops per step, bounded by alpha and
// beta. At most max_steps * (2*alpha + 2*beta) model calls.
//
// The registry should already be scoped to the task (ToolRegistry::fork_for)
// when runs execute concurrently. Events also go to `sink` when given.
RunOutcome run_automatic(const Task& task, ToolRegistry& registry, const Backends& backends,
                         const ProtocolConfig& config, TrajectorySink* sink = nullptr);

// Grounding and execution alternate without review; the review agent is
// consulted only after a failed tool call, to route the error to the
// grounding agent (replan) or the execution agent (rewrite the call, with the
// routing rationale as feedback). Per step: at most alpha planning repairs,
// beta execution repairs and 2 + 2*max(alpha, beta) model calls.
RunOutcome run_adaptive(const Task& task, ToolRegistry& registry, const Backends& backends,
                        const ProtocolConfig& config, TrajectorySink* sink = nullptr);

// Dispatches on config.protocol.
RunOutcome run_protocol(const Task& task, ToolRegistry& registry, const Backends& backends,
                        const ProtocolConfig& config, TrajectorySink* sink = nullptr);

// Upper bound on model calls for one run under `config`.
long max_model_calls(const ProtocolConfig& config);

// Documentation for `tool`, or a stub noting the tool is unavailable.
ToolDoc documentation_for(const ToolRegistry& registry, const std::string& tool);

// Payload of TOOL_CALL events.
json tool_call_payload(const ToolInvocation& invocation, const ExecResult& result);
ExecResult result_from_tool_call_payload(const std::string& payload);

// Rebuilds an outcome from one task's events (in log order). Throws
// Error{Parse} on events that cannot come from a protocol run.
RunOutcome reconstruct_outcome(const std::string& task_id,
                               const std::vector<TrajectoryEvent>& events);

// Groups a mixed log by task id, preserving per-task event order.
std::vector<RunOutcome> reconstruct_outcomes(const std::vector<TrajectoryEvent>& events);

}  // namespace conagents
