#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace conagents {

enum class ErrorKind {
    InvalidArgument,
    Parse,
    Validation,
    Io,
    Transport,
    ScriptExhausted,
    Auth,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace conagents
