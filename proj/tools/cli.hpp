#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "conagents/core.hpp"

namespace conagents::cli {

struct CliConfig {
    std::string command;  // run | eval | synthesize | stats | replay
    std::string tasks_path;
    std::string tools_path;
    std::string backend_kind = "scripted";  // scripted | live
    std::string endpoint;
    std::string model_name;
    std::string script_path;
    std::string protocol = "auto";  // auto | adaptive
    int alpha = 3;
    int beta = 3;
    int max_steps = 10;
    int workers = 1;
    std::string out_path = ".";
    std::uint64_t seed = 0;
    int min_candidate_tools = 10;
    int min_doc_words = 100;
    double sim_threshold = 0.85;
};

// Parses argv into a config. Throws CLI::ParseError (help included).
CliConfig parse_args(int argc, const char* const* argv);

// Executes one command. Returns the process exit code; diagnostics go to err.
int execute(const CliConfig& config, std::ostream& out, std::ostream& err);

// parse_args + execute with usage errors mapped to exit codes.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace conagents::cli
