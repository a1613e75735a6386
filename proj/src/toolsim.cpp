#include "conagents/toolsim.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace conagents {

namespace {

bool rule_matches(const ResponseRule& rule, const json& arguments) {
    for (const auto& [name, expected] : rule.match.items()) {
        auto it = arguments.find(name);
        if (it == arguments.end()) return false;
        if (expected.is_string() && expected.get_ref<const std::string&>() == "*") continue;
        if (*it != expected) return false;
    }
    return true;
}

bool fault_fires(const FaultSpec& spec, std::uint64_t seen) {
    switch (spec.trigger) {
        case FaultTrigger::EveryCall: return true;
        case FaultTrigger::FirstN: return seen <= static_cast<std::uint64_t>(spec.n);
        case FaultTrigger::NthCall: return seen == static_cast<std::uint64_t>(spec.n);
    }
    return false;
}

FaultTrigger parse_trigger(std::string_view s) {
    if (s == "EVERY_CALL") return FaultTrigger::EveryCall;
    if (s == "FIRST_N") return FaultTrigger::FirstN;
    if (s == "NTH_CALL") return FaultTrigger::NthCall;
    throw Error(ErrorKind::Parse, "unknown fault trigger: '" + std::string(s) + "'");
}

bool scoped_to(const FaultSpec& spec, const std::string& task_id) {
    return spec.tasks.empty() ||
           std::find(spec.tasks.begin(), spec.tasks.end(), task_id) != spec.tasks.end();
}

}  // namespace

std::string unknown_tool_message(std::string_view tool) {
    return "unknown tool: " + std::string(tool);
}

std::string missing_argument_message(std::string_view arg) {
    return "missing required argument: " + std::string(arg);
}

std::string_view to_string(FaultTrigger t) {
    switch (t) {
        case FaultTrigger::EveryCall: return "EVERY_CALL";
        case FaultTrigger::FirstN: return "FIRST_N";
        case FaultTrigger::NthCall: return "NTH_CALL";
    }
    return "?";
}

json to_json(const ToolSpec& spec) {
    json j = to_json(spec.doc);
    json responses = json::array();
    for (const auto& r : spec.responses) {
        responses.push_back({{"match", r.match}, {"status", to_string(r.status)}, {"body", r.body}});
    }
    j["responses"] = std::move(responses);
    j["callable"] = spec.callable;
    j["deprecated"] = spec.deprecated;
    return j;
}

ToolSpec tool_spec_from_json(const json& j) {
    ToolSpec spec;
    const auto name = j.value("name", std::string{});
    try {
        spec.doc = tool_doc_from_json(j);
        spec.callable = j.value("callable", true);
        spec.deprecated = j.value("deprecated", false);
        if (j.contains("responses")) {
            for (const auto& r : j.at("responses")) {
                ResponseRule rule;
                rule.match = r.value("match", json::object());
                if (!rule.match.is_object()) {
                    throw Error(ErrorKind::Parse, "response match must be an object");
                }
                rule.status = parse_exec_status(r.value("status", std::string("OK")));
                rule.body = r.value("body", json{});
                spec.responses.push_back(std::move(rule));
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "tool '" + name + "': " + e.what());
    } catch (const Error& e) {
        throw Error(e.kind(), "tool '" + name + "': " + e.what());
    }
    return spec;
}

json to_json(const FaultSpec& f) {
    json j{{"tool", f.tool}, {"trigger", to_string(f.trigger)}, {"n", f.n},
           {"error_message", f.error_message}};
    if (!f.tasks.empty()) j["tasks"] = f.tasks;
    return j;
}

FaultSpec fault_spec_from_json(const json& j) {
    FaultSpec f;
    f.tool = j.at("tool").get<std::string>();
    f.trigger = parse_trigger(j.value("trigger", std::string("EVERY_CALL")));
    f.n = j.value("n", 1);
    f.error_message = j.value("error_message", std::string("injected fault"));
    f.tasks = j.value("tasks", std::vector<std::string>{});
    return f;
}

void ToolManifest::validate() const {
    std::set<std::string_view> names;
    for (const auto& t : tools) {
        conagents::validate(t.doc);
        if (!names.insert(t.doc.name).second) {
            throw Error(ErrorKind::Validation, "duplicate tool name: " + t.doc.name);
        }
        if (t.callable && t.responses.empty()) {
            throw Error(ErrorKind::Validation,
                        "tool " + t.doc.name + ": callable tool has no response rules");
        }
    }
    for (const auto& f : faults) {
        if (!names.contains(f.tool)) {
            throw Error(ErrorKind::Validation, "fault references unknown tool: " + f.tool);
        }
        if (f.n < 1) throw Error(ErrorKind::Validation, "fault on tool " + f.tool + ": n must be >= 1");
    }
}

json ToolManifest::to_json() const {
    json j{{"tools", json::array()}, {"faults", json::array()}};
    for (const auto& t : tools) j["tools"].push_back(conagents::to_json(t));
    for (const auto& f : faults) j["faults"].push_back(conagents::to_json(f));
    return j;
}

ToolManifest ToolManifest::from_json(const json& j) {
    if (!j.is_object() || !j.contains("tools") || !j.at("tools").is_array()) {
        throw Error(ErrorKind::Parse, "manifest must be an object with a 'tools' array");
    }
    ToolManifest m;
    for (const auto& t : j.at("tools")) m.tools.push_back(tool_spec_from_json(t));
    if (j.contains("faults")) {
        for (const auto& f : j.at("faults")) {
            try {
                m.faults.push_back(fault_spec_from_json(f));
            } catch (const json::exception& e) {
                throw Error(ErrorKind::Parse, std::string("malformed fault: ") + e.what());
            }
        }
    }
    m.validate();
    return m;
}

ToolManifest ToolManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open tool manifest " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return from_json(json::parse(buf.str()));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

ToolRegistry::ToolRegistry(ToolManifest manifest) {
    manifest.validate();
    tools_ = std::move(manifest.tools);
    for (std::size_t i = 0; i < tools_.size(); ++i) index_.emplace(tools_[i].doc.name, i);
    for (auto& f : manifest.faults) {
        if (f.tasks.empty()) faults_.push_back({f, 0});
        declared_faults_.push_back(std::move(f));
    }
}

ToolRegistry::ToolRegistry(const ToolRegistry& other) {
    std::lock_guard lock(other.mu_);
    tools_ = other.tools_;
    index_ = other.index_;
    declared_faults_ = other.declared_faults_;
    counters_ = other.counters_;
    faults_ = other.faults_;
}

ToolRegistry& ToolRegistry::operator=(const ToolRegistry& other) {
    if (this == &other) return *this;
    ToolRegistry copy(other);
    std::lock_guard lock(mu_);
    tools_ = std::move(copy.tools_);
    index_ = std::move(copy.index_);
    declared_faults_ = std::move(copy.declared_faults_);
    counters_ = std::move(copy.counters_);
    faults_ = std::move(copy.faults_);
    return *this;
}

ToolRegistry ToolRegistry::load(const std::filesystem::path& path) {
    return ToolRegistry(ToolManifest::load(path));
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &tools_[it->second];
}

std::vector<ToolDoc> ToolRegistry::docs() const {
    std::vector<ToolDoc> out;
    out.reserve(tools_.size());
    for (const auto& t : tools_) out.push_back(t.doc);
    return out;
}

std::vector<ToolDoc> ToolRegistry::docs_for(const std::vector<std::string>& names) const {
    std::vector<ToolDoc> out;
    for (const auto& n : names) {
        if (const auto* spec = find(n)) out.push_back(spec->doc);
    }
    return out;
}

Validation ToolRegistry::validate(const ToolInvocation& inv) const {
    if (inv.malformed()) {
        return {ErrorClass::Malformed, inv.tool, "malformed invocation: " + *inv.parse_error};
    }
    const ToolSpec* spec = find(inv.tool);
    if (spec == nullptr) return {ErrorClass::UnknownTool, inv.tool, unknown_tool_message(inv.tool)};
    if (!spec->callable) {
        return {ErrorClass::NotCallable, inv.tool, "tool not callable: " + inv.tool};
    }
    if (!inv.arguments.is_object()) {
        return {ErrorClass::Malformed, inv.tool, "malformed invocation: arguments must be an object"};
    }
    for (const auto& p : spec->doc.parameters) {
        if (p.required && !inv.arguments.contains(p.name)) {
            return {ErrorClass::MissingRequired, p.name, missing_argument_message(p.name)};
        }
    }
    for (const auto& p : spec->doc.parameters) {
        auto it = inv.arguments.find(p.name);
        if (it != inv.arguments.end() && !matches_type(p.type, *it)) {
            return {ErrorClass::TypeMismatch, p.name,
                    "type mismatch for argument " + p.name + ": expected " +
                        std::string(to_string(p.type))};
        }
    }
    for (const auto& sel : inv.selectors) {
        if (!parse_selector(sel)) {
            return {ErrorClass::Malformed, inv.tool, "malformed invocation: invalid selector " + sel};
        }
    }
    return {};
}

ExecResult ToolRegistry::invoke(const ToolInvocation& inv) {
    const auto started = std::chrono::steady_clock::now();
    auto finish = [&](ExecResult r) {
        r.elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::steady_clock::now() - started);
        return r;
    };

    const Validation v = validate(inv);

    std::optional<std::string> fault_message;
    {
        std::lock_guard lock(mu_);
        ++counters_[inv.tool];
        if (v.valid()) {
            // Every active fault on this tool observes the call; the first
            // one that fires supplies the error.
            for (auto& f : faults_) {
                if (f.spec.tool != inv.tool) continue;
                ++f.seen;
                if (!fault_message && fault_fires(f.spec, f.seen)) fault_message = f.spec.error_message;
            }
        }
    }

    if (!v.valid()) return finish(ExecResult::error(inv.tool, v.outcome, v.message));
    if (fault_message) return finish(ExecResult::error(inv.tool, ErrorClass::Fault, *fault_message));

    const ToolSpec& spec = *find(inv.tool);
    const auto rule = std::find_if(spec.responses.begin(), spec.responses.end(),
                                   [&](const ResponseRule& r) { return rule_matches(r, inv.arguments); });
    if (rule == spec.responses.end()) {
        return finish(ExecResult::error(inv.tool, ErrorClass::NoMatchingRule,
                                        "no response rule matches the given arguments"));
    }
    if (rule->status == ExecStatus::Error) {
        const auto msg = rule->body.is_string() ? rule->body.get<std::string>() : rule->body.dump();
        return finish(ExecResult::error(inv.tool, ErrorClass::ToolError, msg));
    }
    if (inv.selectors.empty()) return finish(ExecResult::ok(inv.tool, rule->body));

    json selected = json::object();
    for (const auto& sel : inv.selectors) {
        const json* value = resolve_path(rule->body, *parse_selector(sel));
        if (value == nullptr) {
            return finish(ExecResult::error(inv.tool, ErrorClass::SelectorMiss,
                                            std::string(kSelectorNotFound) + ": " + sel));
        }
        selected[sel] = *value;
    }
    return finish(ExecResult::ok(inv.tool, std::move(selected)));
}

void ToolRegistry::inject_fault(FaultSpec spec) {
    if (!contains(spec.tool)) {
        throw Error(ErrorKind::InvalidArgument, "cannot inject fault: unknown tool " + spec.tool);
    }
    if (spec.n < 1) throw Error(ErrorKind::InvalidArgument, "fault trigger count must be >= 1");
    std::lock_guard lock(mu_);
    declared_faults_.push_back(spec);
    faults_.push_back({std::move(spec), 0});
}

ToolRegistry ToolRegistry::fork_for(const Task& task) const {
    ToolManifest m;
    for (const auto& name : task.candidate_tools) {
        const auto* spec = find(name);
        if (spec == nullptr) continue;
        if (std::any_of(m.tools.begin(), m.tools.end(),
                        [&](const ToolSpec& t) { return t.doc.name == name; })) {
            continue;
        }
        m.tools.push_back(*spec);
    }
    ToolRegistry fork(std::move(m));
    std::lock_guard lock(mu_);
    for (const auto& f : declared_faults_) {
        if (!fork.contains(f.tool) || !scoped_to(f, task.id)) continue;
        fork.declared_faults_.push_back(f);
        fork.faults_.push_back({f, 0});
    }
    return fork;
}

std::uint64_t ToolRegistry::call_count(std::string_view tool) const {
    std::lock_guard lock(mu_);
    auto it = counters_.find(tool);
    return it == counters_.end() ? 0 : it->second;
}

std::uint64_t ToolRegistry::total_calls() const {
    std::lock_guard lock(mu_);
    std::uint64_t total = 0;
    for (const auto& [_, n] : counters_) total += n;
    return total;
}

}  // namespace conagents
