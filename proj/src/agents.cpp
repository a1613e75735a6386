#include "conagents/agents.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace conagents {

namespace {

constexpr std::string_view kGroundingSystem =
    "You are the grounding agent of a tool-use team. Break the task into steps and, at each "
    "step, choose exactly one tool from the provided list and state what it must do, including "
    "the argument values it needs. When the previous results already answer the task, finish.";

constexpr std::string_view kExecutionSystem =
    "You are the execution agent of a tool-use team. Turn the plan into one call of the "
    "documented tool. Use only documented parameters, supply every required one with the "
    "documented type, and optionally select the fields of the result that the plan needs.";

constexpr std::string_view kReviewSystem =
    "You are the review agent of a tool-use team. Check plans against the task and the tool "
    "list, and check tool calls against the documentation and the observed result. Approve "
    "work that is correct; otherwise give concrete instructions for fixing it.";

constexpr std::string_view kGroundingTemplate =
    "Task:\n{task}\n\n"
    "Available tools:\n{toolset}\n\n"
    "Previous steps:\n{history}\n"
    "{revisions}\n"
    "Reply with exactly one line, either\n"
    "USE <tool>: <what the tool must do and the argument values to use>\n"
    "or, when the task is solved,\n"
    "FINISH: <final answer>";

constexpr std::string_view kExecutionTemplate =
    "Plan:\n{plan}\n\n"
    "Tool documentation:\n{documentation}\n"
    "{revisions}\n"
    "Write the call as a fenced JSON block:\n"
    "```json\n"
    "{\"tool\": \"<name>\", \"arguments\": {\"<param>\": <value>}, \"selectors\": [\".path[0].field\"]}\n"
    "```\n"
    "selectors is optional; omit it to keep the whole result.";

constexpr std::string_view kPlanReviewTemplate =
    "Task:\n{task}\n\n"
    "Available tools:\n{toolset}\n\n"
    "Proposed plan:\n{plan}\n\n"
    "Is the plan clear, feasible with the chosen tool, and a useful next step? Reply with a "
    "fenced JSON block:\n"
    "```json\n"
    "{\"verdict\": \"APPROVE\" or \"REVISE\", \"feedback\": \"<instructions when revising>\"}\n"
    "```";

constexpr std::string_view kExecReviewTemplate =
    "Task:\n{task}\n\n"
    "Tool documentation:\n{documentation}\n\n"
    "Call:\n{invocation}\n\n"
    "Result:\n{result}\n\n"
    "Does the call follow the documentation and does the result serve the task? Reply with a "
    "fenced JSON block:\n"
    "```json\n"
    "{\"verdict\": \"APPROVE\" or \"REVISE\", \"feedback\": \"<instructions when revising>\"}\n"
    "```";

constexpr std::string_view kRoutingTemplate =
    "Task:\n{task}\n\n"
    "Plan:\n{plan}\n\n"
    "Call:\n{invocation}\n\n"
    "Result:\n{result}\n\n"
    "The call failed. Decide whether the plan itself is infeasible (for example it lacks "
    "required information) or the call was written incorrectly. Reply with a fenced JSON "
    "block:\n"
    "```json\n"
    "{\"fault\": \"PLANNING_FAULT\" or \"EXECUTION_FAULT\", \"rationale\": \"<why>\"}\n"
    "```";

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::string plan_line(const PlanStep& p) {
    if (p.kind == PlanKind::Finish) return "FINISH: " + p.answer;
    if (p.tool.empty()) return text::trim(p.raw);
    return "USE " + p.tool + ": " + p.intent;
}

// First JSON object found in the fenced blocks (or, failing that, the whole
// output) that satisfies `accept`.
template <typename Accept>
std::optional<json> find_json_object(std::string_view output, Accept accept) {
    auto blocks = parse::fenced_blocks(output);
    blocks.push_back(std::string(output));
    for (const auto& block : blocks) {
        auto doc = json::parse(block, nullptr, false);
        if (!doc.is_discarded() && doc.is_object() && accept(doc)) return doc;
    }
    return std::nullopt;
}

ChatRequest make_request(AgentRole role, std::string prompt) {
    ChatRequest req;
    req.system = std::string(prompts::system_prompt(role));
    req.messages.push_back({Speaker::User, std::move(prompt)});
    req.temperature = 0.0;
    return req;
}

Completion call(const Backends& backends, AgentRole role, const Task& task, std::string prompt) {
    return backends.for_role(role).complete(CallContext{role, task.id},
                                            make_request(role, std::move(prompt)));
}

std::string fenced_json(const json& j) {
    return "```json\n" + j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n```";
}

}  // namespace

std::string_view to_string(Fault f) {
    return f == Fault::Planning ? "PLANNING_FAULT" : "EXECUTION_FAULT";
}

namespace prompts {

std::string_view system_prompt(AgentRole role) {
    switch (role) {
        case AgentRole::Grounding: return kGroundingSystem;
        case AgentRole::Execution: return kExecutionSystem;
        case AgentRole::Review: return kReviewSystem;
        case AgentRole::Environment: break;
    }
    return {};
}

std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto name = tmpl.substr(i + 1, close - i - 1);
                const bool is_name =
                    !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
                        return std::islower(static_cast<unsigned char>(c)) || c == '_';
                    });
                if (is_name) {
                    if (auto it = values.find(std::string(name)); it != values.end()) {
                        out += it->second;
                        i = close + 1;
                        continue;
                    }
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::string render_task(const Task& task) { return task.description; }

std::string render_toolset(const std::vector<ToolDoc>& toolset) {
    std::string out;
    for (const auto& doc : toolset) {
        if (!out.empty()) out += '\n';
        const auto lines = text::split_lines(doc.description);
        out += "- " + doc.name + ": " + (lines.empty() ? std::string{} : text::trim(lines.front()));
    }
    return out.empty() ? "(none)" : out;
}

std::string render_documentation(const ToolDoc& doc) {
    std::ostringstream out;
    out << "name: " << doc.name << '\n' << "description: " << doc.description << '\n';
    out << "parameters:";
    if (doc.parameters.empty()) out << " none";
    for (const auto& p : doc.parameters) {
        out << "\n- " << p.name << " (" << to_string(p.type) << ", "
            << (p.required ? "required" : "optional") << ")";
        if (!p.description.empty()) out << ": " << p.description;
    }
    return out.str();
}

std::string render_invocation(const ToolInvocation& inv) {
    if (inv.malformed()) return inv.raw;
    return fenced_json(to_json(inv));
}

std::string render_result(const ExecResult& result, const ProtocolConfig& config) {
    if (result.is_ok()) {
        return "status: OK\npayload: " + text::truncate_chars(result.payload.dump(), config.payload_cap);
    }
    return "status: ERROR\nerror: " + text::truncate_chars(result.error_message, config.error_cap);
}

std::string render_plan_revisions(const std::vector<PlanRevision>& revisions) {
    if (revisions.empty()) return {};
    std::ostringstream out;
    out << "\nEarlier plans for this step and the reviewer's feedback:\n";
    std::size_t j = 1;
    for (const auto& [plan, feedback] : revisions) {
        out << "Attempt " << j << ": " << plan_line(plan) << '\n';
        out << "Feedback " << j << ": " << feedback.text << '\n';
        ++j;
    }
    return out.str();
}

std::string render_exec_revisions(const std::vector<ExecRevision>& revisions,
                                  const ProtocolConfig& config) {
    if (revisions.empty()) return {};
    std::ostringstream out;
    out << "\nEarlier calls for this plan and the reviewer's feedback:\n";
    std::size_t j = 1;
    for (const auto& [inv, feedback] : revisions) {
        out << "Attempt " << j << ":\n"
            << (inv.malformed() ? text::truncate_chars(inv.raw, config.error_cap)
                                : render_invocation(inv))
            << '\n';
        out << "Feedback " << j << ": " << feedback.text << '\n';
        ++j;
    }
    return out.str();
}

std::string grounding_prompt(const Task& task, const std::vector<ToolDoc>& toolset,
                             const History& history, const std::vector<PlanRevision>& revisions,
                             const ProtocolConfig& config) {
    return fill(kGroundingTemplate, {{"task", render_task(task)},
                                     {"toolset", render_toolset(toolset)},
                                     {"history", render_history(history, config)},
                                     {"revisions", render_plan_revisions(revisions)}});
}

std::string execution_prompt(const PlanStep& plan, const ToolDoc& doc,
                             const std::vector<ExecRevision>& revisions,
                             const ProtocolConfig& config) {
    return fill(kExecutionTemplate, {{"plan", plan_line(plan)},
                                     {"documentation", render_documentation(doc)},
                                     {"revisions", render_exec_revisions(revisions, config)}});
}

std::string plan_review_prompt(const Task& task, const std::vector<ToolDoc>& toolset,
                               const PlanStep& plan) {
    return fill(kPlanReviewTemplate, {{"task", render_task(task)},
                                      {"toolset", render_toolset(toolset)},
                                      {"plan", plan_line(plan)}});
}

std::string exec_review_prompt(const Task& task, const ToolDoc& doc, const ToolInvocation& inv,
                               const ExecResult& result, const ProtocolConfig& config) {
    return fill(kExecReviewTemplate, {{"task", render_task(task)},
                                      {"documentation", render_documentation(doc)},
                                      {"invocation", render_invocation(inv)},
                                      {"result", render_result(result, config)}});
}

std::string routing_prompt(const Task& task, const PlanStep& plan, const ToolInvocation& inv,
                           const ExecResult& result, const ProtocolConfig& config) {
    return fill(kRoutingTemplate, {{"task", render_task(task)},
                                   {"plan", plan_line(plan)},
                                   {"invocation", render_invocation(inv)},
                                   {"result", render_result(result, config)}});
}

}  // namespace prompts

namespace parse {

std::optional<PlanStep> plan(std::string_view output) {
    const auto lines = text::split_lines(output);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = text::trim(lines[i]);
        if (line.rfind("FINISH:", 0) == 0) {
            std::string answer = line.substr(7);
            for (std::size_t k = i + 1; k < lines.size(); ++k) answer += "\n" + lines[k];
            answer = text::trim(answer);
            if (!answer.empty()) return PlanStep::finish(std::move(answer), std::string(output));
            continue;
        }
        if (line.rfind("USE ", 0) == 0) {
            const auto colon = line.find(':', 4);
            if (colon == std::string::npos) continue;
            auto tool = text::trim(std::string_view(line).substr(4, colon - 4));
            if (tool.size() >= 2 && tool.front() == '`' && tool.back() == '`') {
                tool = tool.substr(1, tool.size() - 2);
            }
            const bool has_space = std::any_of(tool.begin(), tool.end(), [](unsigned char c) {
                return std::isspace(c) != 0;
            });
            if (tool.empty() || has_space) continue;
            return PlanStep::use_tool(std::move(tool), text::trim(line.substr(colon + 1)),
                                      std::string(output));
        }
    }
    return std::nullopt;
}

std::vector<std::string> fenced_blocks(std::string_view output) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    while (true) {
        const auto open = output.find("```", pos);
        if (open == std::string_view::npos) break;
        auto body_start = output.find('\n', open + 3);
        if (body_start == std::string_view::npos) break;
        ++body_start;
        const auto close = output.find("```", body_start);
        if (close == std::string_view::npos) break;
        blocks.emplace_back(output.substr(body_start, close - body_start));
        pos = close + 3;
    }
    return blocks;
}

std::optional<std::string> first_fenced_block(std::string_view output) {
    auto blocks = fenced_blocks(output);
    if (blocks.empty()) return std::nullopt;
    return std::move(blocks.front());
}

ToolInvocation invocation(std::string_view output) {
    ToolInvocation inv;
    inv.raw = std::string(output);
    const auto blocks = fenced_blocks(output);
    if (blocks.empty()) {
        inv.parse_error = "no fenced invocation block";
        return inv;
    }
    std::string last_problem = "fenced block is not a JSON object with a \"tool\" field";
    for (const auto& block : blocks) {
        const auto doc = json::parse(block, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) continue;
        auto tool_it = doc.find("tool");
        if (tool_it == doc.end() || !tool_it->is_string() || tool_it->get<std::string>().empty()) {
            continue;
        }
        inv.tool = tool_it->get<std::string>();
        if (auto args = doc.find("arguments"); args != doc.end()) {
            if (!args->is_object()) {
                last_problem = "\"arguments\" must be an object";
                continue;
            }
            inv.arguments = *args;
        }
        if (auto sels = doc.find("selectors"); sels != doc.end() && !sels->is_null()) {
            if (!sels->is_array()) {
                last_problem = "\"selectors\" must be an array of strings";
                continue;
            }
            std::vector<std::string> selectors;
            bool ok = true;
            for (const auto& s : *sels) {
                if (!s.is_string() || !parse_selector(s.get<std::string>())) {
                    last_problem = "invalid selector " + s.dump();
                    ok = false;
                    break;
                }
                selectors.push_back(s.get<std::string>());
            }
            if (!ok) continue;
            inv.selectors = std::move(selectors);
        }
        inv.parse_error.reset();
        return inv;
    }
    inv.tool.clear();
    inv.arguments = json::object();
    inv.parse_error = last_problem;
    return inv;
}

Feedback review(std::string_view output, FeedbackTarget target, bool* parsed) {
    Feedback fb;
    fb.target = target;
    fb.raw = std::string(output);
    const auto doc = find_json_object(output, [](const json& j) {
        auto v = j.find("verdict");
        if (v == j.end() || !v->is_string()) return false;
        const auto verdict = upper(v->get<std::string>());
        return verdict == "APPROVE" || verdict == "REVISE";
    });
    if (parsed) *parsed = doc.has_value();
    if (!doc) {
        fb.verdict = Verdict::Revise;
        fb.text = text::trim(output);
        if (fb.text.empty()) fb.text = "review produced no usable feedback; re-check the work";
        return fb;
    }
    fb.verdict = upper(doc->at("verdict").get<std::string>()) == "APPROVE" ? Verdict::Approve
                                                                            : Verdict::Revise;
    if (auto f = doc->find("feedback"); f != doc->end()) {
        fb.text = f->is_string() ? f->get<std::string>() : f->dump();
    }
    if (fb.verdict == Verdict::Revise && text::trim(fb.text).empty()) {
        fb.text = "reviewer requested a revision without details";
    }
    return fb;
}

Routing routing(std::string_view output, bool* parsed) {
    Routing r;
    r.raw = std::string(output);
    const auto doc = find_json_object(output, [](const json& j) {
        auto f = j.find("fault");
        if (f == j.end() || !f->is_string()) return false;
        const auto fault = upper(f->get<std::string>());
        return fault == "PLANNING_FAULT" || fault == "EXECUTION_FAULT";
    });
    if (parsed) *parsed = doc.has_value();
    if (!doc) {
        r.fault = Fault::Execution;
        r.rationale = std::string(kUnparseableRouting);
        return r;
    }
    r.fault = upper(doc->at("fault").get<std::string>()) == "PLANNING_FAULT" ? Fault::Planning
                                                                             : Fault::Execution;
    if (auto why = doc->find("rationale"); why != doc->end()) {
        r.rationale = why->is_string() ? why->get<std::string>() : why->dump();
    }
    if (text::trim(r.rationale).empty()) r.rationale = "no rationale given";
    return r;
}

}  // namespace parse

std::string precheck_review_payload(std::string_view feedback) {
    return fenced_json(json{{"verdict", "REVISE"}, {"feedback", std::string(feedback)}});
}

AgentTurn<std::optional<PlanStep>> ground(const Backends& backends, const Task& task,
                                          const std::vector<ToolDoc>& toolset,
                                          const History& history,
                                          const std::vector<PlanRevision>& revisions,
                                          const ProtocolConfig& config) {
    if (static_cast<int>(revisions.size()) >= config.alpha) {
        throw Error(ErrorKind::InvalidArgument, "planning revisions exceed alpha");
    }
    const auto c = call(backends, AgentRole::Grounding, task,
                        prompts::grounding_prompt(task, toolset, history, revisions, config));
    AgentTurn<std::optional<PlanStep>> turn;
    turn.value = parse::plan(c.text);
    turn.raw = c.text;
    turn.tokens_in = c.tokens_in;
    turn.tokens_out = c.tokens_out;
    if (!turn.value) turn.parse_error = "output matches neither `USE <tool>: <intent>` nor `FINISH: <answer>`";
    return turn;
}

AgentTurn<ToolInvocation> execute_plan(const Backends& backends, const Task& task,
                                       const PlanStep& plan, const ToolDoc& doc,
                                       const std::vector<ExecRevision>& revisions,
                                       const ProtocolConfig& config) {
    if (plan.kind != PlanKind::UseTool) {
        throw Error(ErrorKind::InvalidArgument, "execute_plan requires a USE_TOOL plan");
    }
    if (doc.name != plan.tool) {
        throw Error(ErrorKind::InvalidArgument,
                    "documentation for " + doc.name + " does not match planned tool " + plan.tool);
    }
    if (static_cast<int>(revisions.size()) >= config.beta) {
        throw Error(ErrorKind::InvalidArgument, "execution revisions exceed beta");
    }
    const auto c = call(backends, AgentRole::Execution, task,
                        prompts::execution_prompt(plan, doc, revisions, config));
    AgentTurn<ToolInvocation> turn;
    turn.value = parse::invocation(c.text);
    if (turn.value.malformed()) {
        turn.value.tool = plan.tool;
        turn.parse_error = turn.value.parse_error;
    }
    turn.raw = c.text;
    turn.tokens_in = c.tokens_in;
    turn.tokens_out = c.tokens_out;
    return turn;
}

AgentTurn<Feedback> review_planning(const Backends& backends, const Task& task,
                                    const std::vector<ToolDoc>& toolset, const PlanStep& plan) {
    if (plan.kind != PlanKind::UseTool) {
        throw Error(ErrorKind::InvalidArgument, "FINISH plans are not reviewed");
    }
    AgentTurn<Feedback> turn;
    const bool known = std::any_of(toolset.begin(), toolset.end(),
                                   [&](const ToolDoc& d) { return d.name == plan.tool; });
    if (!known) {
        turn.raw = precheck_review_payload(kOnlySelectGivenTools);
        turn.value = Feedback{FeedbackTarget::Grounding, Verdict::Revise,
                              std::string(kOnlySelectGivenTools), turn.raw};
        turn.precheck = true;
        return turn;
    }
    const auto c =
        call(backends, AgentRole::Review, task, prompts::plan_review_prompt(task, toolset, plan));
    bool parsed = false;
    turn.value = parse::review(c.text, FeedbackTarget::Grounding, &parsed);
    if (!parsed) turn.parse_error = "review output lacks a verdict block";
    turn.raw = c.text;
    turn.tokens_in = c.tokens_in;
    turn.tokens_out = c.tokens_out;
    return turn;
}

AgentTurn<Feedback> review_execution(const Backends& backends, const Task& task,
                                     const ToolDoc& doc, const ToolInvocation& inv,
                                     const ExecResult& result, const ProtocolConfig& config) {
    const auto c = call(backends, AgentRole::Review, task,
                        prompts::exec_review_prompt(task, doc, inv, result, config));
    AgentTurn<Feedback> turn;
    bool parsed = false;
    turn.value = parse::review(c.text, FeedbackTarget::Execution, &parsed);
    if (!parsed) turn.parse_error = "review output lacks a verdict block";
    turn.raw = c.text;
    turn.tokens_in = c.tokens_in;
    turn.tokens_out = c.tokens_out;
    return turn;
}

AgentTurn<Routing> route_error(const Backends& backends, const Task& task, const PlanStep& plan,
                               const ToolInvocation& inv, const ExecResult& result,
                               const ProtocolConfig& config) {
    if (result.is_ok()) throw Error(ErrorKind::InvalidArgument, "route_error needs a failed result");
    AgentTurn<Routing> turn;
    if (result.error_class == ErrorClass::UnknownTool) {
        turn.raw = fenced_json(json{{"fault", "PLANNING_FAULT"}, {"rationale", result.error_message}});
        turn.value = Routing{Fault::Planning, result.error_message, turn.raw};
        turn.precheck = true;
        return turn;
    }
    const auto c = call(backends, AgentRole::Review, task,
                        prompts::routing_prompt(task, plan, inv, result, config));
    bool parsed = false;
    turn.value = parse::routing(c.text, &parsed);
    if (!parsed) turn.parse_error = std::string(kUnparseableRouting);
    turn.raw = c.text;
    turn.tokens_in = c.tokens_in;
    turn.tokens_out = c.tokens_out;
    return turn;
}

}  // namespace conagents
