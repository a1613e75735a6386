#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "conagents/backend.hpp"
#include "conagents/core.hpp"
#include "conagents/protocol.hpp"
#include "conagents/toolsim.hpp"

// Specialized action distillation: turn teacher trajectories into
// per-agent instruction datasets.
namespace conagents::span {

// A task as it arrives from the source corpus, with its tools inline.
struct CorpusTask {
    Task task;
    std::string origin_id;
    std::vector<ToolSpec> tools;

    const ToolSpec* tool(std::string_view name) const;
};

json to_json(const CorpusTask& t);
CorpusTask corpus_task_from_json(const json& j);

// JSONL: one object per line with the Task fields plus "origin_id" and a
// "tools" array in the manifest tool format.
std::vector<CorpusTask> load_corpus(const std::filesystem::path& path);

std::vector<Task> tasks_of(const std::vector<CorpusTask>& corpus);

// Registry holding every tool defined inline in the corpus; the first
// definition of a name wins.
ToolRegistry registry_from_corpus(const std::vector<CorpusTask>& corpus);

struct FilterThresholds {
    int min_candidate_tools = 10;
    int min_doc_words = 100;
    bool require_callable = true;
};

// Keeps tasks with enough candidate tools whose every candidate has inline
// documentation of at least min_doc_words words and, when required, is
// callable and not deprecated. Order is preserved.
std::vector<CorpusTask> filter_tasks(const std::vector<CorpusTask>& corpus,
                                     const FilterThresholds& thresholds);

// Maps a description to a vector; similarity is the cosine of two vectors.
using Embedder = std::function<std::vector<double>(const std::string&)>;

// Cosine over lowercase alphanumeric term-frequency vectors, in [0, 1].
double lexical_similarity(std::string_view a, std::string_view b);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Similarity of two task descriptions, in [0, 1].
using Similarity = std::function<double(const std::string&, const std::string&)>;

// Greedy single pass in input order: a task joins the first retained task
// it is at least `threshold` similar to, otherwise it is retained.
std::vector<CorpusTask> dedup_cluster(const std::vector<CorpusTask>& corpus,
                                      double threshold = 0.85, const Embedder& embedder = {});

std::vector<CorpusTask> dedup_cluster(const std::vector<CorpusTask>& corpus, double threshold,
                                      const Similarity& similarity);

struct Dropped {
    std::string task_id;
    std::string reason;
};

struct SynthesisResult {
    std::vector<RunOutcome> outcomes;  // finished runs only, corpus order
    std::vector<Dropped> dropped;
};

// Runs the automatic protocol with the teacher backends on every task.
SynthesisResult synthesize_trajectories(const std::vector<CorpusTask>& corpus,
                                        const ToolRegistry& registry, const Backends& teacher,
                                        const ProtocolConfig& config, int workers = 1);

struct Provenance {
    std::string task_id;
    int step = 1;
    Phase phase = Phase::Planning;
    int turn = 1;
};

struct TrainingExample {
    AgentRole role = AgentRole::Grounding;
    std::string input;
    std::string target;
    Provenance provenance;
};

json to_json(const TrainingExample& ex);

struct Datasets {
    std::vector<TrainingExample> grounding;
    std::vector<TrainingExample> execution;
    std::vector<TrainingExample> review;
};

// Splits finished trajectories into one dataset per agent. Inputs are the
// exact prompts the agent saw at that turn; targets are the logged outputs.
// Throws Error{Parse} when the event log is inconsistent.
Datasets reorganize(const std::vector<RunOutcome>& outcomes, const std::vector<Task>& tasks,
                    const ToolRegistry& registry, const ProtocolConfig& config);

// The event a provenance refers to, or nullptr.
const TrajectoryEvent* resolve(const std::vector<RunOutcome>& outcomes, const Provenance& p);

struct DatasetStats {
    std::size_t scale = 0;
    double avg_task_tokens = 0.0;
    double avg_candidate_tools = 0.0;
    double avg_gold_tools = 0.0;
    double avg_plan_review_turns = 0.0;
    double avg_exec_review_turns = 0.0;
};

json to_json(const DatasetStats& s);

DatasetStats dataset_stats(const std::vector<Task>& tasks, const std::vector<RunOutcome>& outcomes);

void write_jsonl(const std::filesystem::path& path, const std::vector<TrainingExample>& examples);

}  // namespace conagents::span
