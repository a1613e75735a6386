#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "conagents/core.hpp"

namespace conagents {

enum class ParamType { String, Number, Boolean, Object };

std::string_view to_string(ParamType t);
ParamType parse_param_type(std::string_view s);

// True when `value` is acceptable for a parameter of type `t`.
bool matches_type(ParamType t, const json& value);

struct ToolParameter {
    std::string name;
    ParamType type = ParamType::String;
    bool required = false;
    std::string description;

    bool operator==(const ToolParameter&) const = default;
};

// Documentation the execution agent sees for one tool.
struct ToolDoc {
    std::string name;
    std::string description;
    std::vector<ToolParameter> parameters;

    std::size_t word_count() const { return text::count_tokens(description); }
    const ToolParameter* parameter(std::string_view name) const;

    bool operator==(const ToolDoc&) const = default;
};

// Throws Error{Validation} on empty names or duplicate parameter names.
void validate(const ToolDoc& doc);

json to_json(const ToolDoc& doc);
ToolDoc tool_doc_from_json(const json& j);

// The execution agent's restricted "program": which tool, with which
// arguments, and which fields of the result to keep.
struct ToolInvocation {
    std::string tool;
    json arguments = json::object();
    std::vector<std::string> selectors;
    std::string raw;
    // Set when the agent output could not be parsed; the invocation then
    // fails validation as MALFORMED.
    std::optional<std::string> parse_error;

    bool malformed() const noexcept { return parse_error.has_value(); }
};

json to_json(const ToolInvocation& inv);
ToolInvocation tool_invocation_from_json(const json& j);

// Selector grammar: optional leading '.', identifiers separated by '.',
// each optionally followed by one or more [k] integer indexes.
// Examples: ".results[0].title", "data.items[2][1]".
using PathElement = std::variant<std::string, std::size_t>;

std::optional<std::vector<PathElement>> parse_selector(std::string_view selector);

// nullptr when the path does not resolve.
const json* resolve_path(const json& root, const std::vector<PathElement>& path);

}  // namespace conagents
