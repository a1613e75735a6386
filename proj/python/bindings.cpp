#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "conagents/backend.hpp"
#include "conagents/eval.hpp"
#include "conagents/protocol.hpp"
#include "conagents/span.hpp"
#include "conagents/toolsim.hpp"
#include "conagents/trajectory.hpp"

namespace py = pybind11;
using namespace conagents;

namespace {

ProtocolConfig make_config(const std::string& protocol, int alpha, int beta, int max_steps) {
    ProtocolConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.max_steps = max_steps;
    if (protocol == "auto" || protocol == "automatic") {
        c.protocol = ProtocolKind::Automatic;
    } else if (protocol == "adaptive") {
        c.protocol = ProtocolKind::Adaptive;
    } else {
        throw Error(ErrorKind::InvalidArgument, "protocol must be 'auto' or 'adaptive'");
    }
    validate(c);
    return c;
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

// Runs a suite with a scripted backend; returns the report as JSON text.
std::string run_scripted_suite(const std::string& tasks_path, const std::string& tools_path,
                               const std::string& script_path, const std::string& protocol, int alpha,
                               int beta, int max_steps, int workers, const std::string& trajectory_path) {
    const auto config = make_config(protocol, alpha, beta, max_steps);
    const auto tasks = load_tasks(tasks_path);
    const auto registry = ToolRegistry::load(tools_path);
    const auto backends = Backends::shared(ScriptedBackend::load(script_path));
    std::unique_ptr<FileTrajectorySink> sink;
    if (!trajectory_path.empty()) sink = std::make_unique<FileTrajectorySink>(trajectory_path);
    py::gil_scoped_release release;
    return dump(to_json(run_suite(tasks, registry, backends, config, workers, sink.get())));
}

std::string replay(const std::string& tasks_path, const std::string& trajectory_path) {
    const auto tasks = load_tasks(tasks_path);
    return dump(to_json(build_report(tasks, reconstruct_outcomes(read_trajectory_log(trajectory_path)))));
}

std::vector<std::string> filter_corpus(const std::string& corpus_path, int min_candidate_tools,
                                       int min_doc_words, bool require_callable) {
    const auto kept = span::filter_tasks(span::load_corpus(corpus_path),
                                         {min_candidate_tools, min_doc_words, require_callable});
    std::vector<std::string> ids;
    for (const auto& c : kept) ids.push_back(c.task.id);
    return ids;
}

// Indices of the descriptions retained by greedy clustering.
std::vector<std::size_t> dedup_descriptions(const std::vector<std::string>& descriptions, double threshold) {
    std::vector<span::CorpusTask> corpus;
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
        span::CorpusTask c;
        c.task.id = std::to_string(i);
        c.task.description = descriptions[i];
        corpus.push_back(std::move(c));
    }
    std::vector<std::size_t> kept;
    for (const auto& c : span::dedup_cluster(corpus, threshold)) kept.push_back(std::stoul(c.task.id));
    return kept;
}

std::string dataset_stats_from_log(const std::string& corpus_path, const std::string& trajectory_path) {
    const auto tasks = span::tasks_of(span::load_corpus(corpus_path));
    auto outcomes = reconstruct_outcomes(read_trajectory_log(trajectory_path));
    std::erase_if(outcomes, [](const RunOutcome& o) { return !o.finished; });
    return dump(span::to_json(span::dataset_stats(tasks, outcomes)));
}

}  // namespace

PYBIND11_MODULE(_conagents, m) {
    m.doc() = "Three-agent tool-learning runtime: protocols, metrics and dataset pipeline";

    py::register_exception<Error>(m, "ConagentsError");

    m.def("success_rate",
          [](bool finished, const std::vector<std::string>& executed, const std::vector<std::string>& gold) {
              RunOutcome o;
              o.finished = finished;
              o.executed_ok_tools = executed;
              return success_rate(o, gold);
          },
          py::arg("finished"), py::arg("executed_ok_tools"), py::arg("gold_tools"));
    m.def("correct_path_f1", &correct_path_f1, py::arg("generated"), py::arg("gold"));
    m.def("max_model_calls",
          [](const std::string& protocol, int alpha, int beta, int max_steps) {
              return max_model_calls(make_config(protocol, alpha, beta, max_steps));
          },
          py::arg("protocol") = "auto", py::arg("alpha") = 3, py::arg("beta") = 3, py::arg("max_steps") = 10);
    m.def("_run_suite", &run_scripted_suite, py::arg("tasks"), py::arg("tools"), py::arg("script"),
          py::arg("protocol") = "auto", py::arg("alpha") = 3, py::arg("beta") = 3, py::arg("max_steps") = 10,
          py::arg("workers") = 1, py::arg("trajectory") = "");
    m.def("_replay", &replay, py::arg("tasks"), py::arg("trajectory"));
    m.def("filter_corpus", &filter_corpus, py::arg("corpus"), py::arg("min_candidate_tools") = 10,
          py::arg("min_doc_words") = 100, py::arg("require_callable") = true);
    m.def("dedup", &dedup_descriptions, py::arg("descriptions"), py::arg("threshold") = 0.85);
    m.def("lexical_similarity", [](const std::string& a, const std::string& b) { return span::lexical_similarity(a, b); });
    m.def("_dataset_stats", &dataset_stats_from_log, py::arg("corpus"), py::arg("trajectory"));
}
