#include "conagents/span.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "conagents/agents.hpp"
#include "conagents/eval.hpp"

namespace conagents::span {

namespace {

std::map<std::string, double> term_frequencies(std::string_view s) {
    std::map<std::string, double> tf;
    std::string token;
    for (const char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else if (!token.empty()) {
            tf[token] += 1.0;
            token.clear();
        }
    }
    if (!token.empty()) tf[token] += 1.0;
    return tf;
}

double clamp_unit(double x) { return std::min(1.0, std::max(0.0, x)); }

[[noreturn]] void corrupt(const Provenance& p, const std::string& what) {
    throw Error(ErrorKind::Parse, "task " + p.task_id + " step " + std::to_string(p.step) + " " +
                                      std::string(to_string(p.phase)) + " turn " +
                                      std::to_string(p.turn) + ": " + what);
}

}  // namespace

const ToolSpec* CorpusTask::tool(std::string_view name) const {
    for (const auto& t : tools) {
        if (t.doc.name == name) return &t;
    }
    return nullptr;
}

json to_json(const CorpusTask& t) {
    json j = conagents::to_json(t.task);
    j["origin_id"] = t.origin_id;
    json tools = json::array();
    for (const auto& spec : t.tools) tools.push_back(conagents::to_json(spec));
    j["tools"] = std::move(tools);
    return j;
}

CorpusTask corpus_task_from_json(const json& j) {
    CorpusTask t;
    t.task = task_from_json(j);
    t.origin_id = j.value("origin_id", t.task.id);
    if (j.contains("tools")) {
        for (const auto& spec : j.at("tools")) t.tools.push_back(tool_spec_from_json(spec));
    }
    validate(t.task);
    return t;
}

std::vector<CorpusTask> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open corpus " + path.string());
    std::vector<CorpusTask> corpus;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            corpus.push_back(corpus_task_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!ids.insert(corpus.back().task.id).second) {
            throw Error(ErrorKind::Validation, path.string() + ":" + std::to_string(line_no) +
                                                   ": duplicate task id " + corpus.back().task.id);
        }
    }
    return corpus;
}

std::vector<Task> tasks_of(const std::vector<CorpusTask>& corpus) {
    std::vector<Task> tasks;
    tasks.reserve(corpus.size());
    for (const auto& c : corpus) tasks.push_back(c.task);
    return tasks;
}

ToolRegistry registry_from_corpus(const std::vector<CorpusTask>& corpus) {
    ToolManifest manifest;
    std::set<std::string> seen;
    for (const auto& c : corpus) {
        for (const auto& spec : c.tools) {
            if (seen.insert(spec.doc.name).second) manifest.tools.push_back(spec);
        }
    }
    return ToolRegistry(std::move(manifest));
}

std::vector<CorpusTask> filter_tasks(const std::vector<CorpusTask>& corpus,
                                     const FilterThresholds& thresholds) {
    if (thresholds.min_candidate_tools < 1 || thresholds.min_doc_words < 1) {
        throw Error(ErrorKind::InvalidArgument, "filter thresholds must be >= 1");
    }
    std::vector<CorpusTask> kept;
    for (const auto& c : corpus) {
        if (static_cast<int>(c.task.candidate_tools.size()) < thresholds.min_candidate_tools) continue;
        bool ok = true;
        for (const auto& name : c.task.candidate_tools) {
            const ToolSpec* spec = c.tool(name);
            if (spec == nullptr ||
                static_cast<int>(spec->doc.word_count()) < thresholds.min_doc_words ||
                (thresholds.require_callable && (!spec->callable || spec->deprecated))) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(c);
    }
    return kept;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = std::min(a.size(), b.size());
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
    double na = 0.0;
    double nb = 0.0;
    for (const double x : a) na += x * x;
    for (const double x : b) nb += x * x;
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return clamp_unit(dot / (std::sqrt(na) * std::sqrt(nb)));
}

double lexical_similarity(std::string_view a, std::string_view b) {
    const auto ta = term_frequencies(a);
    const auto tb = term_frequencies(b);
    if (ta.empty() && tb.empty()) return 1.0;
    if (ta.empty() || tb.empty()) return 0.0;
    double dot = 0.0;
    for (const auto& [term, x] : ta) {
        if (auto it = tb.find(term); it != tb.end()) dot += x * it->second;
    }
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [_, x] : ta) na += x * x;
    for (const auto& [_, x] : tb) nb += x * x;
    return clamp_unit(dot / (std::sqrt(na) * std::sqrt(nb)));
}

namespace {

void check_threshold(double threshold) {
    if (!(threshold >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "similarity threshold must be >= 0");
    }
}

template <typename Joins>
std::vector<CorpusTask> greedy_clusters(const std::vector<CorpusTask>& corpus, Joins joins) {
    std::vector<CorpusTask> retained;
    std::vector<std::size_t> origin;  // corpus index of each retained task
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        bool joined = false;
        for (std::size_t k = 0; k < retained.size() && !joined; ++k) joined = joins(i, origin[k]);
        if (!joined) {
            retained.push_back(corpus[i]);
            origin.push_back(i);
        }
    }
    return retained;
}

}  // namespace

std::vector<CorpusTask> dedup_cluster(const std::vector<CorpusTask>& corpus, double threshold,
                                      const Embedder& embedder) {
    check_threshold(threshold);
    if (!embedder) {
        return greedy_clusters(corpus, [&](std::size_t i, std::size_t k) {
            return lexical_similarity(corpus[i].task.description, corpus[k].task.description) >=
                   threshold;
        });
    }
    std::vector<std::vector<double>> vectors;
    vectors.reserve(corpus.size());
    for (const auto& c : corpus) vectors.push_back(embedder(c.task.description));
    return greedy_clusters(corpus, [&](std::size_t i, std::size_t k) {
        return cosine(vectors[i], vectors[k]) >= threshold;
    });
}

std::vector<CorpusTask> dedup_cluster(const std::vector<CorpusTask>& corpus, double threshold,
                                      const Similarity& similarity) {
    check_threshold(threshold);
    if (!similarity) return dedup_cluster(corpus, threshold, Embedder{});
    return greedy_clusters(corpus, [&](std::size_t i, std::size_t k) {
        return similarity(corpus[i].task.description, corpus[k].task.description) >= threshold;
    });
}

SynthesisResult synthesize_trajectories(const std::vector<CorpusTask>& corpus,
                                        const ToolRegistry& registry, const Backends& teacher,
                                        const ProtocolConfig& config, int workers) {
    if (config.protocol != ProtocolKind::Automatic) {
        throw Error(ErrorKind::InvalidArgument, "synthesis uses the automatic protocol");
    }
    auto run = run_suite_detailed(tasks_of(corpus), registry, teacher, config, workers, nullptr);
    SynthesisResult result;
    for (auto& o : run.outcomes) {
        if (o.finished) {
            result.outcomes.push_back(std::move(o));
        } else {
            result.dropped.push_back({o.task_id, std::string(to_string(o.abort_reason)) +
                                                     (o.error.empty() ? "" : ": " + o.error)});
        }
    }
    return result;
}

json to_json(const TrainingExample& ex) {
    return json{{"role", to_string(ex.role)},
                {"input", ex.input},
                {"target", ex.target},
                {"provenance",
                 {{"task_id", ex.provenance.task_id},
                  {"step", ex.provenance.step},
                  {"phase", to_string(ex.provenance.phase)},
                  {"turn", ex.provenance.turn}}}};
}

Datasets reorganize(const std::vector<RunOutcome>& outcomes, const std::vector<Task>& tasks,
                    const ToolRegistry& registry, const ProtocolConfig& config) {
    std::map<std::string, const Task*> by_id;
    for (const auto& t : tasks) by_id.emplace(t.id, &t);

    Datasets out;
    for (const auto& outcome : outcomes) {
        if (!outcome.finished) {
            throw Error(ErrorKind::InvalidArgument,
                        "reorganize needs finished runs; task " + outcome.task_id + " was not");
        }
        auto task_it = by_id.find(outcome.task_id);
        if (task_it == by_id.end()) {
            throw Error(ErrorKind::Parse, "no task definition for " + outcome.task_id);
        }
        const Task& task = *task_it->second;
        const ToolRegistry scoped = registry.fork_for(task);
        const auto toolset = scoped.docs_for(task.candidate_tools);

        // Replays the automatic loop's bookkeeping from the event log.
        History history;
        int current_step = 0;
        std::vector<PlanRevision> plan_revisions;
        std::optional<PlanStep> candidate;
        std::optional<PlanStep> chosen;
        std::vector<ExecRevision> exec_revisions;
        std::optional<ToolInvocation> invocation;
        std::optional<ExecResult> result;

        auto close_step = [&] {
            if (chosen && result) history = history_append(history, *chosen, *result);
        };

        for (const auto& e : outcome.trajectory) {
            const Provenance prov{e.task_id, e.step, e.phase, e.turn};
            if (e.task_id != task.id) corrupt(prov, "event belongs to another task");
            if (e.step != current_step) {
                if (e.step < current_step) corrupt(prov, "steps out of order");
                close_step();
                current_step = e.step;
                plan_revisions.clear();
                candidate.reset();
                chosen.reset();
                exec_revisions.clear();
                invocation.reset();
                result.reset();
            }
            switch (e.phase) {
                case Phase::Planning:
                case Phase::Finish: {
                    if (e.phase == Phase::Finish && e.agent != AgentRole::Grounding) break;
                    out.grounding.push_back(
                        {AgentRole::Grounding,
                         prompts::grounding_prompt(task, toolset, history, plan_revisions, config),
                         e.payload, prov});
                    auto parsed = parse::plan(e.payload);
                    if (parsed && parsed->kind == PlanKind::UseTool) {
                        candidate = parsed;
                        chosen = parsed;
                    } else {
                        PlanStep p;
                        p.raw = e.payload;
                        candidate = std::move(p);
                    }
                    break;
                }
                case Phase::PlanReview: {
                    if (!candidate) corrupt(prov, "plan review without a plan");
                    out.review.push_back({AgentRole::Review,
                                          prompts::plan_review_prompt(task, toolset, *candidate),
                                          e.payload, prov});
                    plan_revisions.emplace_back(*candidate,
                                                parse::review(e.payload, FeedbackTarget::Grounding));
                    candidate.reset();
                    break;
                }
                case Phase::Execution: {
                    if (!chosen) corrupt(prov, "execution without an executable plan");
                    const ToolDoc doc = documentation_for(scoped, chosen->tool);
                    out.execution.push_back(
                        {AgentRole::Execution,
                         prompts::execution_prompt(*chosen, doc, exec_revisions, config), e.payload,
                         prov});
                    auto inv = parse::invocation(e.payload);
                    if (inv.malformed()) inv.tool = chosen->tool;
                    invocation = std::move(inv);
                    break;
                }
                case Phase::ToolCall: {
                    if (!invocation) corrupt(prov, "tool call without an invocation");
                    try {
                        result = result_from_tool_call_payload(e.payload);
                    } catch (const std::exception& ex) {
                        corrupt(prov, std::string("bad tool call payload: ") + ex.what());
                    }
                    break;
                }
                case Phase::ExecReview: {
                    if (!invocation || !result || !chosen) corrupt(prov, "review without a tool call");
                    const ToolDoc doc = documentation_for(scoped, chosen->tool);
                    out.review.push_back(
                        {AgentRole::Review,
                         prompts::exec_review_prompt(task, doc, *invocation, *result, config),
                         e.payload, prov});
                    exec_revisions.emplace_back(*invocation,
                                                parse::review(e.payload, FeedbackTarget::Execution));
                    break;
                }
                case Phase::Routing:
                    break;
            }
        }
    }
    return out;
}

const TrajectoryEvent* resolve(const std::vector<RunOutcome>& outcomes, const Provenance& p) {
    for (const auto& o : outcomes) {
        if (o.task_id != p.task_id) continue;
        for (const auto& e : o.trajectory) {
            if (e.step == p.step && e.phase == p.phase && e.turn == p.turn) return &e;
        }
    }
    return nullptr;
}

json to_json(const DatasetStats& s) {
    return json{{"scale", s.scale},
                {"avg_task_tokens", s.avg_task_tokens},
                {"avg_candidate_tools", s.avg_candidate_tools},
                {"avg_gold_tools", s.avg_gold_tools},
                {"avg_plan_review_turns", s.avg_plan_review_turns},
                {"avg_exec_review_turns", s.avg_exec_review_turns}};
}

DatasetStats dataset_stats(const std::vector<Task>& tasks, const std::vector<RunOutcome>& outcomes) {
    DatasetStats s;
    s.scale = outcomes.size();
    if (outcomes.empty()) return s;

    std::map<std::string, const Task*> by_id;
    for (const auto& t : tasks) by_id.emplace(t.id, &t);

    double task_tokens = 0.0;
    double candidates = 0.0;
    double gold = 0.0;
    double plan_reviews = 0.0;
    double exec_reviews = 0.0;
    for (const auto& o : outcomes) {
        auto it = by_id.find(o.task_id);
        if (it == by_id.end()) throw Error(ErrorKind::InvalidArgument, "no task for outcome " + o.task_id);
        const Task& t = *it->second;
        task_tokens += static_cast<double>(text::count_tokens(t.description));
        candidates += static_cast<double>(t.candidate_tools.size());
        gold += static_cast<double>(t.gold_tools.size());
        for (const auto& e : o.trajectory) {
            if (e.phase == Phase::PlanReview) plan_reviews += 1.0;
            if (e.phase == Phase::ExecReview) exec_reviews += 1.0;
        }
    }
    const auto n = static_cast<double>(outcomes.size());
    s.avg_task_tokens = task_tokens / n;
    s.avg_candidate_tools = candidates / n;
    s.avg_gold_tools = gold / n;
    s.avg_plan_review_turns = plan_reviews / n;
    s.avg_exec_review_turns = exec_reviews / n;
    return s;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<TrainingExample>& examples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    for (const auto& ex : examples) {
        out << to_json(ex).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "write to " + path.string() + " failed");
}

}  // namespace conagents::span
