#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "conagents/core.hpp"
#include "conagents/tools.hpp"

namespace conagents {

// Canned response. `match` maps argument names to expected values; the
// string "*" matches any present value. An empty match accepts anything.
struct ResponseRule {
    json match = json::object();
    ExecStatus status = ExecStatus::Ok;
    json body;
};

struct ToolSpec {
    ToolDoc doc;
    std::vector<ResponseRule> responses;
    bool callable = true;
    bool deprecated = false;
};

json to_json(const ToolSpec& spec);
ToolSpec tool_spec_from_json(const json& j);

enum class FaultTrigger { EveryCall, FirstN, NthCall };

std::string_view to_string(FaultTrigger t);

struct FaultSpec {
    std::string tool;
    FaultTrigger trigger = FaultTrigger::EveryCall;
    int n = 1;
    std::string error_message;
    // Task ids the fault applies to when a registry is forked per task;
    // empty means every task.
    std::vector<std::string> tasks;
};

json to_json(const FaultSpec& f);
FaultSpec fault_spec_from_json(const json& j);

struct ToolManifest {
    std::vector<ToolSpec> tools;
    std::vector<FaultSpec> faults;

    // Throws Error{Validation} naming the offending tool.
    void validate() const;

    json to_json() const;
    static ToolManifest from_json(const json& j);
    static ToolManifest load(const std::filesystem::path& path);
};

// Result of checking an invocation against the registry. VALID is
// represented by outcome == ErrorClass::None.
struct Validation {
    ErrorClass outcome = ErrorClass::None;
    std::string subject;  // tool or argument name the outcome refers to
    std::string message;  // canonical error text; empty when valid

    bool valid() const noexcept { return outcome == ErrorClass::None; }
};

// Simulated tool environment. Shared between task workers: counters and
// fault state are guarded by a mutex.
class ToolRegistry {
public:
    ToolRegistry() = default;
    explicit ToolRegistry(ToolManifest manifest);

    ToolRegistry(const ToolRegistry& other);
    ToolRegistry& operator=(const ToolRegistry& other);

    static ToolRegistry load(const std::filesystem::path& path);

    const ToolSpec* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
    std::vector<ToolDoc> docs() const;
    // Docs for `names` in that order; names the registry lacks are skipped.
    std::vector<ToolDoc> docs_for(const std::vector<std::string>& names) const;

    Validation validate(const ToolInvocation& invocation) const;

    // Execute(c): validation, then active faults in injection order, then the
    // first matching response rule. Increments exactly one call counter.
    ExecResult invoke(const ToolInvocation& invocation);

    // Throws Error{InvalidArgument} for unregistered tools or n < 1.
    void inject_fault(FaultSpec spec);

    // A fresh registry restricted to the task's candidate tools, with zeroed
    // counters and only the faults scoped to this task.
    ToolRegistry fork_for(const Task& task) const;

    std::uint64_t call_count(std::string_view tool) const;
    std::uint64_t total_calls() const;

private:
    struct ActiveFault {
        FaultSpec spec;
        std::uint64_t seen = 0;
    };

    std::vector<ToolSpec> tools_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::vector<FaultSpec> declared_faults_;

    mutable std::mutex mu_;
    std::map<std::string, std::uint64_t, std::less<>> counters_;
    std::vector<ActiveFault> faults_;
};

// Canonical error texts.
std::string unknown_tool_message(std::string_view tool);
std::string missing_argument_message(std::string_view arg);
inline constexpr std::string_view kSelectorNotFound = "selector path not found";

}  // namespace conagents
