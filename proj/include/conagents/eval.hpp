#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conagents/backend.hpp"
#include "conagents/core.hpp"
#include "conagents/protocol.hpp"
#include "conagents/toolsim.hpp"
#include "conagents/trajectory.hpp"

namespace conagents {

// 1 iff the run finished and every gold tool (with multiplicity) appears
// among the tools that executed OK.
int success_rate(const RunOutcome& outcome, const std::vector<std::string>& gold);

// Multiset F1 between generated and gold tool names. Both empty -> 1;
// exactly one empty -> 0.
double correct_path_f1(const std::vector<std::string>& generated,
                       const std::vector<std::string>& gold);

struct TokenTotals {
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::int64_t model_calls = 0;

    bool operator==(const TokenTotals&) const = default;
};

TokenTotals token_totals(const std::vector<TrajectoryEvent>& trajectory);

struct TaskRow {
    std::string task_id;
    int success = 0;
    double path_f1 = 0.0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::int64_t model_calls = 0;
    int steps_used = 0;
    AbortReason abort_reason = AbortReason::None;

    bool operator==(const TaskRow&) const = default;
};

struct SuiteAggregates {
    double mean_success = 0.0;
    double mean_path_f1 = 0.0;
    std::int64_t total_tokens_in = 0;
    std::int64_t total_tokens_out = 0;
    std::int64_t total_tokens = 0;
    double mean_tokens_per_task = 0.0;

    bool operator==(const SuiteAggregates&) const = default;
};

struct SuiteReport {
    std::vector<TaskRow> per_task;  // ordered by task id
    SuiteAggregates aggregates;

    // True when aggregates equal a recomputation from per_task.
    bool self_consistent() const;
    bool operator==(const SuiteReport&) const = default;
};

SuiteAggregates aggregate(const std::vector<TaskRow>& rows);

TaskRow score_outcome(const RunOutcome& outcome, const std::vector<std::string>& gold);

// Rows for every outcome whose task id is in `tasks`, sorted by id.
SuiteReport build_report(const std::vector<Task>& tasks, const std::vector<RunOutcome>& outcomes);

json to_json(const SuiteReport& report);
SuiteReport suite_report_from_json(const json& j);
std::string render_table(const SuiteReport& report);

struct SuiteRun {
    SuiteReport report;
    std::vector<RunOutcome> outcomes;  // in task order of the input
};

// Runs every task under config.protocol with up to `workers` tasks in
// flight. Each task sees registry.fork_for(task). Per-task backend failures
// become rows with success 0; they never abort the suite.
SuiteRun run_suite_detailed(const std::vector<Task>& tasks, const ToolRegistry& registry,
                            const Backends& backends, const ProtocolConfig& config, int workers,
                            TrajectorySink* sink = nullptr);

SuiteReport run_suite(const std::vector<Task>& tasks, const ToolRegistry& registry,
                      const Backends& backends, const ProtocolConfig& config, int workers,
                      TrajectorySink* sink = nullptr);

// Newline-delimited Task records. Errors name the line.
std::vector<Task> load_tasks(const std::filesystem::path& path);

}  // namespace conagents
