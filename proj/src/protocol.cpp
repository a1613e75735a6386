#include "conagents/protocol.hpp"

#include <algorithm>
#include <map>

namespace conagents {

namespace {

constexpr std::string_view kUnparseablePlan =
    "unparseable plan; reply with `USE <tool>: <intent>` or `FINISH: <answer>`";

bool is_backend_failure(const Error& e) {
    return e.kind() == ErrorKind::Transport || e.kind() == ErrorKind::ScriptExhausted ||
           e.kind() == ErrorKind::Auth;
}

// Per-run event bookkeeping: assigns gapless turn numbers per (step, phase).
class Recorder {
public:
    Recorder(std::string task_id, TrajectorySink* sink) : task_id_(std::move(task_id)), sink_(sink) {}

    void emit(int step, Phase phase, AgentRole agent, std::string payload, std::int64_t tokens_in = 0,
              std::int64_t tokens_out = 0) {
        TrajectoryEvent e;
        e.task_id = task_id_;
        e.step = step;
        e.phase = phase;
        e.turn = ++turns_[{step, phase}];
        e.agent = agent;
        e.payload = std::move(payload);
        e.tokens_in = tokens_in;
        e.tokens_out = tokens_out;
        e.timestamp = now_timestamp();
        validate(e);
        if (sink_ != nullptr) sink_->write(e);
        events_.push_back(std::move(e));
    }

    template <typename T>
    void emit_turn(int step, Phase phase, AgentRole agent, const AgentTurn<T>& turn) {
        emit(step, phase, agent, turn.raw, turn.tokens_in, turn.tokens_out);
    }

    std::vector<TrajectoryEvent> take() { return std::move(events_); }

private:
    std::string task_id_;
    TrajectorySink* sink_;
    std::map<std::pair<int, Phase>, int> turns_;
    std::vector<TrajectoryEvent> events_;
};

struct RunState {
    RunOutcome outcome;
    Recorder recorder;
    int step = 0;

    RunState(const Task& task, TrajectorySink* sink) : recorder(task.id, sink) {
        outcome.task_id = task.id;
    }

    void record_call(const ToolInvocation& inv, const ExecResult& result) {
        recorder.emit(step, Phase::ToolCall, AgentRole::Environment,
                      tool_call_payload(inv, result).dump(-1, ' ', false, json::error_handler_t::replace));
        if (result.is_ok()) outcome.executed_ok_tools.push_back(result.tool);
    }

    RunOutcome finish(const PlanStep& plan, const AgentTurn<std::optional<PlanStep>>& turn) {
        recorder.emit_turn(step, Phase::Finish, AgentRole::Grounding, turn);
        outcome.finished = true;
        outcome.answer = plan.answer;
        return close();
    }

    RunOutcome abort(AbortReason reason, std::string error = {}) {
        outcome.abort_reason = reason;
        outcome.error = std::move(error);
        json payload{{"abort_reason", to_string(reason)},
                     {"steps_used", static_cast<int>(outcome.history.size())}};
        if (!outcome.error.empty()) payload["error"] = outcome.error;
        recorder.emit(std::max(step, 1), Phase::Finish, AgentRole::Environment,
                      payload.dump(-1, ' ', false, json::error_handler_t::replace));
        return close();
    }

    RunOutcome close() {
        outcome.steps_used = static_cast<int>(outcome.history.size());
        outcome.trajectory = recorder.take();
        return std::move(outcome);
    }
};

// The execution agent cannot write a call for a tool without documentation;
// the plan's tool is invoked as-is so the environment reports the failure.
AgentTurn<ToolInvocation> undocumented_invocation(const PlanStep& plan) {
    AgentTurn<ToolInvocation> turn;
    turn.value.tool = plan.tool;
    turn.raw = prompts::render_invocation(turn.value);
    turn.precheck = true;
    return turn;
}

PlanStep unparsed_candidate(const std::string& raw) {
    PlanStep p;
    p.kind = PlanKind::UseTool;
    p.raw = raw;
    return p;
}

// Model calls one adaptive step may spend: the initial grounding and
// execution calls plus two per repair.
int adaptive_step_budget(const ProtocolConfig& config) {
    return 2 + 2 * std::max(config.alpha, config.beta);
}

RunOutcome automatic_loop(RunState& st, const Task& task, ToolRegistry& registry,
                          const Backends& backends, const ProtocolConfig& config) {
    const auto toolset = registry.docs_for(task.candidate_tools);

    for (st.step = 1; st.step <= config.max_steps; ++st.step) {
        // Planning-review phase.
        std::vector<PlanRevision> revisions;
        std::optional<PlanStep> chosen;
        for (int j = 1; j <= config.alpha; ++j) {
            auto turn = ground(backends, task, toolset, st.outcome.history, revisions, config);
            if (turn.value && turn.value->kind == PlanKind::Finish) return st.finish(*turn.value, turn);
            st.recorder.emit_turn(st.step, Phase::Planning, AgentRole::Grounding, turn);

            PlanStep candidate;
            Feedback feedback;
            if (!turn.value) {
                candidate = unparsed_candidate(turn.raw);
                const auto payload = precheck_review_payload(kUnparseablePlan);
                feedback = Feedback{FeedbackTarget::Grounding, Verdict::Revise,
                                    std::string(kUnparseablePlan), payload};
                st.recorder.emit(st.step, Phase::PlanReview, AgentRole::Review, payload);
            } else {
                candidate = *turn.value;
                chosen = candidate;
                auto review = review_planning(backends, task, toolset, candidate);
                st.recorder.emit_turn(st.step, Phase::PlanReview, AgentRole::Review, review);
                if (review.value.approved()) break;
                feedback = review.value;
            }
            if (j < config.alpha) revisions.emplace_back(std::move(candidate), std::move(feedback));
        }
        if (!chosen) continue;

        // Execution-review phase.
        const PlanStep& plan = *chosen;
        const ToolDoc doc = documentation_for(registry, plan.tool);
        const bool documented = registry.contains(plan.tool);
        std::vector<ExecRevision> revisions_e;
        ExecResult last;
        for (int j = 1; j <= config.beta; ++j) {
            auto turn = documented ? execute_plan(backends, task, plan, doc, revisions_e, config)
                                   : undocumented_invocation(plan);
            st.recorder.emit_turn(st.step, Phase::Execution, AgentRole::Execution, turn);
            last = registry.invoke(turn.value);
            st.record_call(turn.value, last);

            auto review = review_execution(backends, task, doc, turn.value, last, config);
            st.recorder.emit_turn(st.step, Phase::ExecReview, AgentRole::Review, review);
            if (review.value.approved() || !documented) break;
            if (j < config.beta) revisions_e.emplace_back(turn.value, review.value);
        }
        st.outcome.history = history_append(st.outcome.history, plan, last);
    }
    st.step = config.max_steps;
    return st.abort(AbortReason::MaxSteps);
}

RunOutcome adaptive_loop(RunState& st, const Task& task, ToolRegistry& registry,
                         const Backends& backends, const ProtocolConfig& config) {
    const auto toolset = registry.docs_for(task.candidate_tools);
    const int budget = adaptive_step_budget(config);

    for (st.step = 1; st.step <= config.max_steps; ++st.step) {
        std::vector<PlanRevision> plan_revisions;
        std::vector<ExecRevision> exec_revisions;
        int plan_repairs = 0;
        int exec_repairs = 0;
        int calls = 0;
        std::optional<PlanStep> plan;
        std::optional<PlanStep> executed_plan;
        ExecResult last;
        bool need_plan = true;

        while (true) {
            if (need_plan) {
                // Ground until a parseable plan appears; re-grounding after an
                // unparseable answer counts as a planning repair. One call of
                // the budget stays reserved for executing the plan.
                plan.reset();
                while (calls + 2 <= budget) {
                    ++calls;
                    auto turn = ground(backends, task, toolset, st.outcome.history, plan_revisions,
                                       config);
                    if (turn.value && turn.value->kind == PlanKind::Finish) {
                        return st.finish(*turn.value, turn);
                    }
                    st.recorder.emit_turn(st.step, Phase::Planning, AgentRole::Grounding, turn);
                    if (turn.value) {
                        plan = *turn.value;
                        break;
                    }
                    if (plan_repairs >= config.alpha) break;
                    ++plan_repairs;
                    plan_revisions.emplace_back(
                        unparsed_candidate(turn.raw),
                        Feedback{FeedbackTarget::Grounding, Verdict::Revise,
                                 std::string(kUnparseablePlan),
                                 precheck_review_payload(kUnparseablePlan)});
                    if (static_cast<int>(plan_revisions.size()) >= config.alpha) {
                        plan_revisions.erase(plan_revisions.begin());
                    }
                }
                if (!plan) break;
                need_plan = false;
                exec_revisions.clear();
            }

            const bool documented = registry.contains(plan->tool);
            ++calls;
            auto turn = documented ? execute_plan(backends, task, *plan,
                                                  documentation_for(registry, plan->tool),
                                                  exec_revisions, config)
                                   : undocumented_invocation(*plan);
            st.recorder.emit_turn(st.step, Phase::Execution, AgentRole::Execution, turn);
            last = registry.invoke(turn.value);
            st.record_call(turn.value, last);
            executed_plan = plan;
            if (last.is_ok() || calls >= budget) break;

            // The review agent sees the failure and decides who repairs it.
            ++calls;
            auto routing = route_error(backends, task, *plan, turn.value, last, config);
            st.recorder.emit_turn(st.step, Phase::Routing, AgentRole::Review, routing);

            if (routing.value.fault == Fault::Planning) {
                // A replan costs a grounding call and an execution call.
                if (plan_repairs >= config.alpha || calls + 2 > budget) break;
                ++plan_repairs;
                std::string text = "The call failed: " +
                                   text::truncate_chars(last.error_message, config.error_cap) +
                                   "\nReviewer: " + routing.value.rationale;
                plan_revisions.emplace_back(
                    *plan, Feedback{FeedbackTarget::Grounding, Verdict::Revise, std::move(text),
                                    routing.raw});
                if (static_cast<int>(plan_revisions.size()) >= config.alpha) {
                    plan_revisions.erase(plan_revisions.begin());
                }
                need_plan = true;
                continue;
            }

            if (!documented || exec_repairs >= config.beta || calls + 1 > budget) break;
            ++exec_repairs;
            exec_revisions.emplace_back(
                turn.value, Feedback{FeedbackTarget::Execution, Verdict::Revise,
                                     routing.value.rationale, routing.raw});
            if (static_cast<int>(exec_revisions.size()) >= config.beta) {
                exec_revisions.erase(exec_revisions.begin());
            }
        }

        if (executed_plan) {
            st.outcome.history = history_append(st.outcome.history, *executed_plan, last);
        }
    }
    st.step = config.max_steps;
    return st.abort(AbortReason::MaxSteps);
}

template <typename Loop>
RunOutcome run_guarded(const Task& task, ToolRegistry& registry, const Backends& backends,
                       const ProtocolConfig& config, TrajectorySink* sink, Loop loop) {
    validate(config);
    RunState st(task, sink);
    try {
        return loop(st, task, registry, backends, config);
    } catch (const Error& e) {
        if (!is_backend_failure(e)) throw;
        return st.abort(AbortReason::BackendError, e.what());
    }
}

}  // namespace

std::string_view to_string(AbortReason r) {
    switch (r) {
        case AbortReason::None: return "NONE";
        case AbortReason::MaxSteps: return "MAX_STEPS";
        case AbortReason::BackendError: return "BACKEND_ERROR";
    }
    return "?";
}

AbortReason parse_abort_reason(std::string_view s) {
    if (s == "NONE") return AbortReason::None;
    if (s == "MAX_STEPS") return AbortReason::MaxSteps;
    if (s == "BACKEND_ERROR") return AbortReason::BackendError;
    throw Error(ErrorKind::Parse, "unknown abort reason: '" + std::string(s) + "'");
}

RunOutcome run_automatic(const Task& task, ToolRegistry& registry, const Backends& backends,
                         const ProtocolConfig& config, TrajectorySink* sink) {
    if (config.protocol != ProtocolKind::Automatic) {
        throw Error(ErrorKind::InvalidArgument, "run_automatic requires the AUTOMATIC protocol");
    }
    return run_guarded(task, registry, backends, config, sink, automatic_loop);
}

RunOutcome run_adaptive(const Task& task, ToolRegistry& registry, const Backends& backends,
                        const ProtocolConfig& config, TrajectorySink* sink) {
    if (config.protocol != ProtocolKind::Adaptive) {
        throw Error(ErrorKind::InvalidArgument, "run_adaptive requires the ADAPTIVE protocol");
    }
    return run_guarded(task, registry, backends, config, sink, adaptive_loop);
}

RunOutcome run_protocol(const Task& task, ToolRegistry& registry, const Backends& backends,
                        const ProtocolConfig& config, TrajectorySink* sink) {
    return config.protocol == ProtocolKind::Automatic
               ? run_automatic(task, registry, backends, config, sink)
               : run_adaptive(task, registry, backends, config, sink);
}

long max_model_calls(const ProtocolConfig& config) {
    const long per_step = config.protocol == ProtocolKind::Automatic
                              ? 2L * config.alpha + 2L * config.beta
                              : adaptive_step_budget(config);
    return static_cast<long>(config.max_steps) * per_step + 1;
}

ToolDoc documentation_for(const ToolRegistry& registry, const std::string& tool) {
    if (const auto* spec = registry.find(tool)) return spec->doc;
    return ToolDoc{tool, "no documentation: this tool is not available", {}};
}

json tool_call_payload(const ToolInvocation& invocation, const ExecResult& result) {
    json inv = to_json(invocation);
    if (invocation.parse_error) inv["parse_error"] = *invocation.parse_error;
    return json{{"invocation", std::move(inv)}, {"result", to_json(result)}};
}

ExecResult result_from_tool_call_payload(const std::string& payload) {
    return exec_result_from_json(json::parse(payload).at("result"));
}

RunOutcome reconstruct_outcome(const std::string& task_id,
                               const std::vector<TrajectoryEvent>& events) {
    RunOutcome out;
    out.task_id = task_id;
    out.trajectory = events;

    struct StepView {
        std::optional<PlanStep> plan;
        std::optional<ExecResult> result;
    };
    std::map<int, StepView> steps;
    std::optional<int> abort_steps;
    std::optional<int> finish_step;

    try {
        for (const auto& e : events) {
            if (e.task_id != task_id) {
                throw Error(ErrorKind::Parse, "event for task " + e.task_id + " in log of " + task_id);
            }
            auto& view = steps[e.step];
            switch (e.phase) {
                case Phase::Planning:
                    if (auto p = parse::plan(e.payload); p && p->kind == PlanKind::UseTool) view.plan = *p;
                    break;
                case Phase::ToolCall: {
                    auto r = result_from_tool_call_payload(e.payload);
                    if (r.is_ok()) out.executed_ok_tools.push_back(r.tool);
                    view.result = std::move(r);
                    break;
                }
                case Phase::Finish:
                    if (e.agent == AgentRole::Grounding) {
                        auto p = parse::plan(e.payload);
                        if (!p || p->kind != PlanKind::Finish) {
                            throw Error(ErrorKind::Parse, "FINISH event without a finish plan");
                        }
                        out.finished = true;
                        out.answer = p->answer;
                        finish_step = e.step;
                    } else {
                        const auto j = json::parse(e.payload);
                        out.abort_reason = parse_abort_reason(j.at("abort_reason").get<std::string>());
                        abort_steps = j.at("steps_used").get<int>();
                        out.error = j.value("error", std::string{});
                    }
                    break;
                default:
                    break;
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "task " + task_id + ": malformed event payload: " + e.what());
    }

    for (const auto& [step, view] : steps) {
        if (abort_steps && static_cast<int>(out.history.size()) >= *abort_steps) break;
        // A step that ends in FINISH (possibly after a replan) is never committed.
        if (finish_step && step >= *finish_step) break;
        if (view.plan && view.result) out.history = history_append(out.history, *view.plan, *view.result);
    }
    out.steps_used = static_cast<int>(out.history.size());
    return out;
}

std::vector<RunOutcome> reconstruct_outcomes(const std::vector<TrajectoryEvent>& events) {
    std::map<std::string, std::vector<TrajectoryEvent>> by_task;
    for (const auto& e : events) by_task[e.task_id].push_back(e);
    std::vector<RunOutcome> out;
    out.reserve(by_task.size());
    for (const auto& [id, evs] : by_task) out.push_back(reconstruct_outcome(id, evs));
    return out;
}

}  // namespace conagents
