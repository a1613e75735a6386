#include "conagents/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace conagents {

namespace {

std::map<std::string, int> counts(const std::vector<std::string>& items) {
    std::map<std::string, int> c;
    for (const auto& s : items) ++c[s];
    return c;
}

}  // namespace

int success_rate(const RunOutcome& outcome, const std::vector<std::string>& gold) {
    if (!outcome.finished) return 0;
    const auto have = counts(outcome.executed_ok_tools);
    for (const auto& [tool, need] : counts(gold)) {
        auto it = have.find(tool);
        if (it == have.end() || it->second < need) return 0;
    }
    return 1;
}

double correct_path_f1(const std::vector<std::string>& generated,
                       const std::vector<std::string>& gold) {
    if (generated.empty() && gold.empty()) return 1.0;
    if (generated.empty() || gold.empty()) return 0.0;
    const auto gen = counts(generated);
    const auto ref = counts(gold);
    std::size_t overlap = 0;
    for (const auto& [tool, n] : gen) {
        if (auto it = ref.find(tool); it != ref.end()) {
            overlap += static_cast<std::size_t>(std::min(n, it->second));
        }
    }
    // Harmonic mean of m/|gen| and m/|gold|, reduced to one division.
    return 2.0 * static_cast<double>(overlap) /
           static_cast<double>(generated.size() + gold.size());
}

TokenTotals token_totals(const std::vector<TrajectoryEvent>& trajectory) {
    TokenTotals t;
    for (const auto& e : trajectory) {
        t.tokens_in += e.tokens_in;
        t.tokens_out += e.tokens_out;
        if (e.is_model_call()) ++t.model_calls;
    }
    return t;
}

SuiteAggregates aggregate(const std::vector<TaskRow>& rows) {
    SuiteAggregates a;
    if (rows.empty()) return a;
    double success = 0.0;
    double f1 = 0.0;
    for (const auto& r : rows) {
        success += r.success;
        f1 += r.path_f1;
        a.total_tokens_in += r.tokens_in;
        a.total_tokens_out += r.tokens_out;
    }
    const auto n = static_cast<double>(rows.size());
    a.mean_success = success / n;
    a.mean_path_f1 = f1 / n;
    a.total_tokens = a.total_tokens_in + a.total_tokens_out;
    a.mean_tokens_per_task = static_cast<double>(a.total_tokens) / n;
    return a;
}

bool SuiteReport::self_consistent() const { return aggregate(per_task) == aggregates; }

TaskRow score_outcome(const RunOutcome& outcome, const std::vector<std::string>& gold) {
    TaskRow row;
    row.task_id = outcome.task_id;
    row.success = success_rate(outcome, gold);
    row.path_f1 = correct_path_f1(outcome.executed_ok_tools, gold);
    const auto totals = token_totals(outcome.trajectory);
    row.tokens_in = totals.tokens_in;
    row.tokens_out = totals.tokens_out;
    row.model_calls = totals.model_calls;
    row.steps_used = outcome.steps_used;
    row.abort_reason = outcome.abort_reason;
    return row;
}

SuiteReport build_report(const std::vector<Task>& tasks, const std::vector<RunOutcome>& outcomes) {
    std::map<std::string, const Task*> by_id;
    for (const auto& t : tasks) by_id.emplace(t.id, &t);
    SuiteReport report;
    for (const auto& o : outcomes) {
        auto it = by_id.find(o.task_id);
        if (it == by_id.end()) continue;
        report.per_task.push_back(score_outcome(o, it->second->gold_tools));
    }
    std::sort(report.per_task.begin(), report.per_task.end(),
              [](const TaskRow& a, const TaskRow& b) { return a.task_id < b.task_id; });
    report.aggregates = aggregate(report.per_task);
    return report;
}

json to_json(const SuiteReport& report) {
    json rows = json::array();
    for (const auto& r : report.per_task) {
        rows.push_back({{"task_id", r.task_id},
                        {"success", r.success},
                        {"path_f1", r.path_f1},
                        {"tokens_in", r.tokens_in},
                        {"tokens_out", r.tokens_out},
                        {"model_calls", r.model_calls},
                        {"steps_used", r.steps_used},
                        {"abort_reason", to_string(r.abort_reason)}});
    }
    const auto& a = report.aggregates;
    return json{{"per_task", std::move(rows)},
                {"aggregates",
                 {{"mean_success", a.mean_success},
                  {"mean_path_f1", a.mean_path_f1},
                  {"total_tokens_in", a.total_tokens_in},
                  {"total_tokens_out", a.total_tokens_out},
                  {"total_tokens", a.total_tokens},
                  {"mean_tokens_per_task", a.mean_tokens_per_task}}}};
}

SuiteReport suite_report_from_json(const json& j) {
    SuiteReport report;
    for (const auto& r : j.at("per_task")) {
        TaskRow row;
        row.task_id = r.at("task_id").get<std::string>();
        row.success = r.at("success").get<int>();
        row.path_f1 = r.at("path_f1").get<double>();
        row.tokens_in = r.at("tokens_in").get<std::int64_t>();
        row.tokens_out = r.at("tokens_out").get<std::int64_t>();
        row.model_calls = r.at("model_calls").get<std::int64_t>();
        row.steps_used = r.at("steps_used").get<int>();
        row.abort_reason = parse_abort_reason(r.at("abort_reason").get<std::string>());
        report.per_task.push_back(std::move(row));
    }
    const auto& a = j.at("aggregates");
    report.aggregates.mean_success = a.at("mean_success").get<double>();
    report.aggregates.mean_path_f1 = a.at("mean_path_f1").get<double>();
    report.aggregates.total_tokens_in = a.at("total_tokens_in").get<std::int64_t>();
    report.aggregates.total_tokens_out = a.at("total_tokens_out").get<std::int64_t>();
    report.aggregates.total_tokens = a.at("total_tokens").get<std::int64_t>();
    report.aggregates.mean_tokens_per_task = a.at("mean_tokens_per_task").get<double>();
    return report;
}

std::string render_table(const SuiteReport& report) {
    std::size_t id_width = 7;
    for (const auto& r : report.per_task) id_width = std::max(id_width, r.task_id.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(id_width)) << "task_id" << std::right
        << std::setw(9) << "success" << std::setw(9) << "path_f1" << std::setw(11) << "tokens_in"
        << std::setw(12) << "tokens_out" << std::setw(7) << "calls" << std::setw(7) << "steps"
        << "  abort\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& r : report.per_task) {
        out << std::left << std::setw(static_cast<int>(id_width)) << r.task_id << std::right
            << std::setw(9) << r.success << std::setw(9) << r.path_f1 << std::setw(11)
            << r.tokens_in << std::setw(12) << r.tokens_out << std::setw(7) << r.model_calls
            << std::setw(7) << r.steps_used << "  " << to_string(r.abort_reason) << '\n';
    }
    const auto& a = report.aggregates;
    out << "tasks: " << report.per_task.size() << "  success: " << a.mean_success * 100.0
        << "%  path: " << a.mean_path_f1 * 100.0 << "%  tokens: " << a.total_tokens
        << " (in " << a.total_tokens_in << ", out " << a.total_tokens_out
        << ", per task " << std::setprecision(2) << a.mean_tokens_per_task << ")\n";
    return out.str();
}

SuiteRun run_suite_detailed(const std::vector<Task>& tasks, const ToolRegistry& registry,
                            const Backends& backends, const ProtocolConfig& config, int workers,
                            TrajectorySink* sink) {
    if (workers < 1) throw Error(ErrorKind::InvalidArgument, "workers must be >= 1");
    validate(config);
    validate_suite(tasks);

    std::vector<std::optional<RunOutcome>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex commit_mu;
    std::size_t committed = 0;
    std::exception_ptr failure;

    // Events reach the sink in task order, each task's block as soon as all
    // earlier tasks have finished, so the log does not depend on scheduling.
    auto commit_ready = [&] {
        while (committed < results.size() && results[committed]) {
            if (sink != nullptr) {
                for (const auto& e : results[committed]->trajectory) sink->write(e);
            }
            ++committed;
        }
    };

    auto worker = [&] {
        while (true) {
            const auto i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                auto scoped = registry.fork_for(tasks[i]);
                auto outcome = run_protocol(tasks[i], scoped, backends, config, nullptr);
                std::lock_guard lock(commit_mu);
                results[i] = std::move(outcome);
                commit_ready();
            } catch (...) {
                std::lock_guard lock(commit_mu);
                if (!failure) failure = std::current_exception();
                next.store(tasks.size());
                return;
            }
        }
    };

    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), tasks.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    SuiteRun run;
    run.outcomes.reserve(tasks.size());
    for (auto& r : results) run.outcomes.push_back(std::move(*r));
    run.report = build_report(tasks, run.outcomes);
    return run;
}

SuiteReport run_suite(const std::vector<Task>& tasks, const ToolRegistry& registry,
                      const Backends& backends, const ProtocolConfig& config, int workers,
                      TrajectorySink* sink) {
    return run_suite_detailed(tasks, registry, backends, config, workers, sink).report;
}

std::vector<Task> load_tasks(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open task suite " + path.string());
    std::vector<Task> tasks;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            tasks.push_back(task_from_json(json::parse(line)));
            validate(tasks.back());
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate_suite(tasks);
    return tasks;
}

}  // namespace conagents
