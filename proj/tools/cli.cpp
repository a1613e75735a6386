#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "conagents/backend.hpp"
#include "conagents/eval.hpp"
#include "conagents/protocol.hpp"
#include "conagents/span.hpp"
#include "conagents/toolsim.hpp"
#include "conagents/trajectory.hpp"

namespace conagents::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kTrajectoryFile = "trajectory.jsonl";

void build_app(CLI::App& app, CliConfig& c) {
    app.require_subcommand(1, 1);
    app.fallthrough();

    app.add_option("--tasks", c.tasks_path, "Task suite (JSONL); the corpus for synthesize/stats");
    app.add_option("--tools", c.tools_path, "Tool manifest (JSON)");
    app.add_option("--backend", c.backend_kind, "Model backend")
        ->check(CLI::IsMember({"scripted", "live"}));
    app.add_option("--endpoint", c.endpoint, "Chat-completion URL for the live backend");
    app.add_option("--model", c.model_name, "Model name for the live backend");
    app.add_option("--script", c.script_path, "Script file for the scripted backend");
    app.add_option("--protocol", c.protocol, "Agent communication protocol")
        ->check(CLI::IsMember({"auto", "adaptive"}));
    app.add_option("--alpha", c.alpha, "Max planning-review turns")->check(CLI::PositiveNumber);
    app.add_option("--beta", c.beta, "Max execution-review turns")->check(CLI::PositiveNumber);
    app.add_option("--max-steps", c.max_steps, "Max plan-execute steps per task")
        ->check(CLI::PositiveNumber);
    app.add_option("--workers", c.workers, "Tasks run concurrently")->check(CLI::PositiveNumber);
    app.add_option("--out", c.out_path, "Output directory");
    app.add_option("--seed", c.seed, "Seed for randomized tooling (live retry jitter)");
    app.add_option("--min-candidate-tools", c.min_candidate_tools,
                   "Synthesis filter: minimum candidate tools")
        ->check(CLI::PositiveNumber);
    app.add_option("--min-doc-words", c.min_doc_words,
                   "Synthesis filter: minimum words per tool description")
        ->check(CLI::PositiveNumber);
    app.add_option("--sim-threshold", c.sim_threshold, "Synthesis dedup cosine threshold")
        ->check(CLI::NonNegativeNumber);

    const std::pair<const char*, const char*> commands[] = {
        {"run", "Run the task suite; write trajectory log and report"},
        {"eval", "Run the task suite; write the report only"},
        {"synthesize", "Filter, dedup, synthesize and reorganize a corpus into datasets"},
        {"stats", "Dataset statistics over a synthesis output directory"},
        {"replay", "Recompute the report from a trajectory log"},
    };
    for (const auto& [name, help] : commands) {
        app.add_subcommand(name, help)->callback([&c, n = std::string(name)] { c.command = n; });
    }
}

ProtocolConfig protocol_config(const CliConfig& c) {
    ProtocolConfig p;
    p.alpha = c.alpha;
    p.beta = c.beta;
    p.max_steps = c.max_steps;
    p.protocol = c.protocol == "adaptive" ? ProtocolKind::Adaptive : ProtocolKind::Automatic;
    validate(p);
    return p;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, message);
}

Backends make_backends(const CliConfig& c, const ProtocolConfig& p) {
    if (c.backend_kind == "live") {
        require(!c.endpoint.empty(), "--backend live requires --endpoint");
        require(!c.model_name.empty(), "--backend live requires --model");
        LiveBackendOptions opts;
        opts.endpoint = c.endpoint;
        opts.model = c.model_name;
        opts.transport_retries = p.transport_retries;
        opts.seed = c.seed;
        const char* key = std::getenv(opts.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw Error(ErrorKind::Auth, "--backend live requires " + opts.api_key_env);
        }
        return Backends::shared(std::make_shared<LiveBackend>(opts));
    }
    require(!c.script_path.empty(), "--backend scripted requires --script");
    return Backends::shared(ScriptedBackend::load(c.script_path));
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

int cmd_run(const CliConfig& c, bool with_log, std::ostream& out) {
    require(!c.tasks_path.empty(), "--tasks is required");
    require(!c.tools_path.empty(), "--tools is required");
    const auto p = protocol_config(c);
    const auto tasks = load_tasks(c.tasks_path);
    const auto registry = ToolRegistry::load(c.tools_path);
    const auto backends = make_backends(c, p);

    const fs::path dir(c.out_path);
    ensure_dir(dir);
    std::unique_ptr<FileTrajectorySink> sink;
    if (with_log) sink = std::make_unique<FileTrajectorySink>(dir / kTrajectoryFile);

    const auto report = run_suite(tasks, registry, backends, p, c.workers, sink.get());
    write_file(dir / "report.json", to_json(report).dump(2) + "\n");
    const auto table = render_table(report);
    write_file(dir / "report.txt", table);
    out << table;
    return 0;
}

int cmd_replay(const CliConfig& c, std::ostream& out) {
    require(!c.tasks_path.empty(), "replay needs --tasks for the gold tool sequences");
    const auto tasks = load_tasks(c.tasks_path);
    const fs::path dir(c.out_path);
    const auto events = read_trajectory_log(dir / kTrajectoryFile);
    const auto report = build_report(tasks, reconstruct_outcomes(events));
    write_file(dir / "replay_report.json", to_json(report).dump(2) + "\n");
    out << render_table(report);
    return 0;
}

int cmd_synthesize(const CliConfig& c, std::ostream& out) {
    require(!c.tasks_path.empty(), "--tasks (the corpus) is required");
    require(c.protocol == "auto", "synthesis runs the automatic protocol only");
    const auto p = protocol_config(c);
    const auto corpus = span::load_corpus(c.tasks_path);

    span::FilterThresholds thresholds;
    thresholds.min_candidate_tools = c.min_candidate_tools;
    thresholds.min_doc_words = c.min_doc_words;
    const auto filtered = span::filter_tasks(corpus, thresholds);
    const auto deduped = span::dedup_cluster(filtered, c.sim_threshold);

    const auto registry = c.tools_path.empty() ? span::registry_from_corpus(corpus)
                                               : ToolRegistry::load(c.tools_path);
    const auto backends = make_backends(c, p);
    const auto synthesis = span::synthesize_trajectories(deduped, registry, backends, p, c.workers);

    const auto tasks = span::tasks_of(deduped);
    const auto datasets = span::reorganize(synthesis.outcomes, tasks, registry, p);
    const auto stats = span::dataset_stats(tasks, synthesis.outcomes);

    const fs::path dir(c.out_path);
    ensure_dir(dir);
    span::write_jsonl(dir / "grounding.jsonl", datasets.grounding);
    span::write_jsonl(dir / "execution.jsonl", datasets.execution);
    span::write_jsonl(dir / "review.jsonl", datasets.review);
    {
        FileTrajectorySink sink(dir / kTrajectoryFile);
        for (const auto& o : synthesis.outcomes) {
            for (const auto& e : o.trajectory) sink.write(e);
        }
    }
    write_file(dir / "stats.json", span::to_json(stats).dump(2) + "\n");

    out << "corpus: " << corpus.size() << "  filtered: " << filtered.size()
        << "  deduplicated: " << deduped.size() << "  synthesized: " << synthesis.outcomes.size()
        << "  dropped: " << synthesis.dropped.size() << '\n';
    for (const auto& d : synthesis.dropped) out << "  dropped " << d.task_id << ": " << d.reason << '\n';
    out << "examples: grounding " << datasets.grounding.size() << ", execution "
        << datasets.execution.size() << ", review " << datasets.review.size() << '\n';
    return 0;
}

int cmd_stats(const CliConfig& c, std::ostream& out) {
    require(!c.tasks_path.empty(), "--tasks (the corpus) is required");
    const auto tasks = span::tasks_of(span::load_corpus(c.tasks_path));
    const fs::path dir(c.out_path);
    auto outcomes = reconstruct_outcomes(read_trajectory_log(dir / kTrajectoryFile));
    std::erase_if(outcomes, [](const RunOutcome& o) { return !o.finished; });
    const auto stats = span::dataset_stats(tasks, outcomes);
    const auto text = span::to_json(stats).dump(2) + "\n";
    write_file(dir / "stats.json", text);
    out << text;
    return 0;
}

}  // namespace

CliConfig parse_args(int argc, const char* const* argv) {
    CliConfig c;
    CLI::App app{"Cooperative tool-learning agents: run, evaluate, synthesize", "conagents"};
    build_app(app, c);
    app.parse(argc, argv);
    return c;
}

int execute(const CliConfig& c, std::ostream& out, std::ostream& err) {
    try {
        if (c.command == "run") return cmd_run(c, true, out);
        if (c.command == "eval") return cmd_run(c, false, out);
        if (c.command == "replay") return cmd_replay(c, out);
        if (c.command == "synthesize") return cmd_synthesize(c, out);
        if (c.command == "stats") return cmd_stats(c, out);
        err << "error: unknown command '" << c.command << "'\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CliConfig c;
    CLI::App app{"Cooperative tool-learning agents: run, evaluate, synthesize", "conagents"};
    build_app(app, c);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    return execute(c, out, err);
}

}  // namespace conagents::cli
