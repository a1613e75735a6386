#include "conagents/tools.hpp"

#include <cctype>
#include <set>

namespace conagents {

std::string_view to_string(ParamType t) {
    switch (t) {
        case ParamType::String: return "string";
        case ParamType::Number: return "number";
        case ParamType::Boolean: return "boolean";
        case ParamType::Object: return "object";
    }
    return "?";
}

ParamType parse_param_type(std::string_view s) {
    if (s == "string") return ParamType::String;
    if (s == "number") return ParamType::Number;
    if (s == "boolean") return ParamType::Boolean;
    if (s == "object") return ParamType::Object;
    throw Error(ErrorKind::Parse, "unknown parameter type: '" + std::string(s) + "'");
}

bool matches_type(ParamType t, const json& value) {
    switch (t) {
        case ParamType::String: return value.is_string();
        case ParamType::Number: return value.is_number();
        case ParamType::Boolean: return value.is_boolean();
        case ParamType::Object: return value.is_object();
    }
    return false;
}

const ToolParameter* ToolDoc::parameter(std::string_view name) const {
    for (const auto& p : parameters) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

void validate(const ToolDoc& doc) {
    if (doc.name.empty()) throw Error(ErrorKind::Validation, "tool name must be non-empty");
    std::set<std::string_view> seen;
    for (const auto& p : doc.parameters) {
        if (p.name.empty()) {
            throw Error(ErrorKind::Validation, "tool " + doc.name + ": parameter with empty name");
        }
        if (!seen.insert(p.name).second) {
            throw Error(ErrorKind::Validation,
                        "tool " + doc.name + ": duplicate parameter '" + p.name + "'");
        }
    }
}

json to_json(const ToolDoc& doc) {
    json params = json::array();
    for (const auto& p : doc.parameters) {
        params.push_back({{"name", p.name},
                          {"type", to_string(p.type)},
                          {"required", p.required},
                          {"description", p.description}});
    }
    return json{{"name", doc.name}, {"description", doc.description}, {"parameters", params}};
}

ToolDoc tool_doc_from_json(const json& j) {
    ToolDoc doc;
    doc.name = j.at("name").get<std::string>();
    doc.description = j.value("description", std::string{});
    if (j.contains("parameters")) {
        for (const auto& p : j.at("parameters")) {
            ToolParameter param;
            param.name = p.at("name").get<std::string>();
            param.type = parse_param_type(p.value("type", std::string("string")));
            param.required = p.value("required", false);
            param.description = p.value("description", std::string{});
            doc.parameters.push_back(std::move(param));
        }
    }
    validate(doc);
    return doc;
}

json to_json(const ToolInvocation& inv) {
    return json{{"tool", inv.tool}, {"arguments", inv.arguments}, {"selectors", inv.selectors}};
}

ToolInvocation tool_invocation_from_json(const json& j) {
    ToolInvocation inv;
    inv.tool = j.at("tool").get<std::string>();
    inv.arguments = j.value("arguments", json::object());
    inv.selectors = j.value("selectors", std::vector<std::string>{});
    return inv;
}

std::optional<std::vector<PathElement>> parse_selector(std::string_view s) {
    std::vector<PathElement> path;
    std::size_t i = 0;
    if (i < s.size() && s[i] == '.') ++i;
    bool expect_segment = true;
    while (i < s.size()) {
        if (expect_segment) {
            const auto start = i;
            while (i < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '-')) {
                ++i;
            }
            if (i > start) {
                path.emplace_back(std::string(s.substr(start, i - start)));
            } else if (!(path.empty() && i < s.size() && s[i] == '[')) {
                return std::nullopt;
            }
            expect_segment = false;
            continue;
        }
        if (s[i] == '[') {
            ++i;
            const auto start = i;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i == start || i >= s.size() || s[i] != ']' || i - start > 18) return std::nullopt;
            path.emplace_back(static_cast<std::size_t>(std::stoull(std::string(s.substr(start, i - start)))));
            ++i;
        } else if (s[i] == '.') {
            ++i;
            if (i >= s.size()) return std::nullopt;
            expect_segment = true;
        } else {
            return std::nullopt;
        }
    }
    if (path.empty()) return std::nullopt;
    return path;
}

const json* resolve_path(const json& root, const std::vector<PathElement>& path) {
    const json* cur = &root;
    for (const auto& elem : path) {
        if (const auto* key = std::get_if<std::string>(&elem)) {
            if (!cur->is_object()) return nullptr;
            auto it = cur->find(*key);
            if (it == cur->end()) return nullptr;
            cur = &*it;
        } else {
            const auto index = std::get<std::size_t>(elem);
            if (!cur->is_array() || index >= cur->size()) return nullptr;
            cur = &(*cur)[index];
        }
    }
    return cur;
}

}  // namespace conagents
