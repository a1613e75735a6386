#pragma once

// Shared builders for scripted scenarios.

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conagents/agents.hpp"
#include "conagents/backend.hpp"
#include "conagents/core.hpp"
#include "conagents/eval.hpp"
#include "conagents/protocol.hpp"
#include "conagents/span.hpp"
#include "conagents/toolsim.hpp"
#include "conagents/trajectory.hpp"

namespace fx {

using namespace conagents;

inline std::string fenced(const json& j) { return "```json\n" + j.dump() + "\n```"; }

inline std::string use(const std::string& tool, const std::string& intent) {
    return "USE " + tool + ": " + intent;
}

inline std::string finish(const std::string& answer) { return "FINISH: " + answer; }

inline std::string call(const std::string& tool, json args = json::object(),
                        std::vector<std::string> selectors = {}) {
    json j{{"tool", tool}, {"arguments", std::move(args)}};
    if (!selectors.empty()) j["selectors"] = selectors;
    return "Calling the tool.\n" + fenced(j);
}

inline std::string approve() { return fenced({{"verdict", "APPROVE"}, {"feedback", ""}}); }

inline std::string revise(const std::string& text) {
    return fenced({{"verdict", "REVISE"}, {"feedback", text}});
}

inline std::string route(const std::string& fault, const std::string& rationale) {
    return fenced({{"fault", fault}, {"rationale", rationale}});
}

inline ToolSpec tool(const std::string& name, const std::string& description,
                     std::vector<ToolParameter> params, json ok_body) {
    ToolSpec spec;
    spec.doc = ToolDoc{name, description, std::move(params)};
    spec.responses.push_back(ResponseRule{json::object(), ExecStatus::Ok, std::move(ok_body)});
    return spec;
}

// A small movie-database environment.
inline ToolManifest movie_manifest() {
    ToolManifest m;
    m.tools.push_back(tool("search_movie", "Search movies by title. Returns matching movies.",
                           {{"query", ParamType::String, true, "title words"}},
                           {{"results", {{{"title", "Dune"}, {"id", 438631}}}}}));
    m.tools.push_back(tool("get_credits", "Cast and crew of a movie.",
                           {{"movie_id", ParamType::Number, true, "movie id"},
                            {"date", ParamType::String, false, "as-of date"}},
                           {{"director", "Denis Villeneuve"}}));
    m.tools.push_back(tool("get_reviews", "User reviews of a movie.",
                           {{"movie_id", ParamType::Number, true, "movie id"}},
                           {{"reviews", json::array({"great"})}}));
    m.tools.push_back(tool("trending", "Movies trending today.", {}, {{"results", json::array()}}));
    return m;
}

inline Task task(const std::string& id, std::vector<std::string> candidates,
                 std::vector<std::string> gold, const std::string& description = {}) {
    Task t;
    t.id = id;
    t.description = description.empty() ? "Who directed the movie for task " + id + "?" : description;
    t.candidate_tools = std::move(candidates);
    t.gold_tools = std::move(gold);
    return t;
}

inline std::vector<std::string> movie_tools() {
    return {"search_movie", "get_credits", "get_reviews", "trending"};
}

using Queues = ScriptedBackend::Queues;

inline Queues queues(std::vector<std::string> g, std::vector<std::string> e,
                     std::vector<std::string> r) {
    Queues q;
    q[AgentRole::Grounding] = {g.begin(), g.end()};
    q[AgentRole::Execution] = {e.begin(), e.end()};
    q[AgentRole::Review] = {r.begin(), r.end()};
    return q;
}

inline Backends scripted(Queues q) {
    return Backends::shared(std::make_shared<ScriptedBackend>(std::move(q)));
}

// Wraps a backend and keeps every request it forwards.
class RecordingBackend final : public Backend {
public:
    struct Call {
        CallContext ctx;
        ChatRequest request;
    };

    explicit RecordingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

    Completion complete(const CallContext& ctx, const ChatRequest& request) override {
        {
            std::lock_guard lock(mu_);
            calls_.push_back({ctx, request});
        }
        return inner_->complete(ctx, request);
    }

    std::vector<Call> calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    std::shared_ptr<Backend> inner_;
    mutable std::mutex mu_;
    std::vector<Call> calls_;
};

inline ProtocolConfig automatic(int alpha = 3, int beta = 3, int max_steps = 10) {
    ProtocolConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.max_steps = max_steps;
    c.protocol = ProtocolKind::Automatic;
    return c;
}

inline ProtocolConfig adaptive(int alpha = 3, int beta = 3, int max_steps = 10) {
    auto c = automatic(alpha, beta, max_steps);
    c.protocol = ProtocolKind::Adaptive;
    return c;
}

inline std::vector<Phase> phases(const std::vector<TrajectoryEvent>& events) {
    std::vector<Phase> out;
    for (const auto& e : events) out.push_back(e.phase);
    return out;
}

// Model-call roles in order (ENVIRONMENT and zero-token prechecks excluded).
inline std::vector<AgentRole> model_roles(const std::vector<TrajectoryEvent>& events) {
    std::vector<AgentRole> out;
    for (const auto& e : events) {
        if (e.is_model_call() && (e.tokens_in > 0 || e.tokens_out > 0)) out.push_back(e.agent);
    }
    return out;
}

// Scenario: plan rejected once then approved; invocation fails once, then
// succeeds and is approved; then FINISH.
inline Queues revise_once_scenario() {
    return queues(
        {use("get_credits", "find the director"), use("search_movie", "search for Dune"),
         finish("Denis Villeneuve")},
        {call("search_movie", json::object()), call("search_movie", {{"query", "Dune"}})},
        {revise("look the movie up first"), approve(),
         revise("add required field `query`"), approve()});
}

inline json queues_json(const std::vector<std::string>& g, const std::vector<std::string>& e,
                        const std::vector<std::string>& r) {
    return json{{"GROUNDING", g}, {"EXECUTION", e}, {"REVIEW", r}};
}

struct Suite {
    std::vector<Task> tasks;
    ToolManifest manifest;
    json script;  // per-task sections
};

// n tasks that all succeed when scripted; tasks listed in `faulty` get a
// FIRST_N(1) fault on search_movie that the script repairs.
inline Suite movie_suite(int n, const std::set<int>& faulty, ProtocolKind protocol) {
    Suite s;
    s.manifest = movie_manifest();
    s.script = json{{"tasks", json::object()}};
    const bool automatic = protocol == ProtocolKind::Automatic;
    for (int i = 0; i < n; ++i) {
        const std::string id = (i < 10 ? "task-0" : "task-") + std::to_string(i);
        std::vector<std::string> gold{"search_movie"};
        if (i % 2) gold.push_back("get_credits");
        s.tasks.push_back(task(id, movie_tools(), gold,
                               "Find the movie number " + std::to_string(i) + " and report who made it"));
        const bool fault = faulty.contains(i);
        if (fault) s.manifest.faults.push_back({"search_movie", FaultTrigger::FirstN, 1, "search backend timed out", {id}});

        std::vector<std::string> g, e, r;
        for (const auto& t : gold) {
            g.push_back(use(t, "step for " + t));
            if (automatic) r.push_back(approve());
            const std::string c = t == "search_movie" ? call(t, {{"query", "Dune"}})
                                                      : call(t, {{"movie_id", 438631}});
            e.push_back(c);
            if (fault && t == "search_movie") {
                r.push_back(automatic ? revise("the search timed out; call it again")
                                      : route("EXECUTION_FAULT", "transient failure; call it again"));
                e.push_back(c);
            }
            if (automatic) r.push_back(approve());
        }
        g.push_back(finish("answer " + std::to_string(i)));
        s.script["tasks"][id] = queues_json(g, e, r);
    }
    return s;
}

inline std::string words(int n, const std::string& stem = "word") {
    std::string s;
    for (int i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += stem + std::to_string(i);
    }
    return s;
}

// One corpus task whose candidates are tools named <id>_t<k>. `doc_words`
// gives each candidate's description length.
inline span::CorpusTask corpus_task(const std::string& id, const std::vector<int>& doc_words) {
    span::CorpusTask c;
    std::vector<std::string> names;
    for (std::size_t k = 0; k < doc_words.size(); ++k) {
        names.push_back(id + "_t" + std::to_string(k));
        c.tools.push_back(tool(names.back(), words(doc_words[k], id + "w"), {}, {{"ok", true}}));
    }
    c.task = task(id, names, {names.front()}, "Task " + id + ": " + words(6, id + "q"));
    c.origin_id = "origin-" + id;
    return c;
}

// Twenty tasks around the filter boundaries, plus the ids that survive the
// default thresholds.
struct FilterFixture {
    std::vector<span::CorpusTask> corpus;
    std::vector<std::string> kept;
};

inline FilterFixture filter_fixture() {
    FilterFixture f;
    auto add = [&](const std::string& id, std::vector<int> doc_words, bool keep) {
        f.corpus.push_back(corpus_task(id, doc_words));
        if (keep) f.kept.push_back(id);
        return &f.corpus.back();
    };
    const std::vector<int> ten(10, 100);
    add("f01", ten, true);
    add("f02", std::vector<int>(9, 120), false);
    add("f03", std::vector<int>(11, 100), true);
    {
        auto w = ten;
        w[3] = 99;
        add("f04", w, false);
    }
    {
        std::vector<int> w(10, 150);
        w[0] = 100;
        add("f05", w, true);
    }
    add("f06", ten, false)->tools[4].deprecated = true;
    add("f07", ten, false)->tools[9].callable = false;
    add("f08", ten, false)->tools.pop_back();  // a candidate without documentation
    add("f09", std::vector<int>(20, 100), true);
    add("f10", {300}, false);
    {
        auto w = ten;
        w[5] = 0;
        add("f11", w, false);
    }
    add("f12", std::vector<int>(12, 100), true);
    add("f13", std::vector<int>(9, 100), false);
    {
        auto w = ten;
        w[9] = 99;
        add("f14", w, false);
    }
    {
        // The extra deprecated tool is not a candidate, so it does not count.
        auto* c = add("f15", std::vector<int>(10, 110), true);
        c->tools.push_back(tool("f15_extra", words(100), {}, {{"ok", true}}));
        c->tools.back().deprecated = true;
    }
    add("f16", std::vector<int>(10, 101), true);
    {
        auto w = ten;
        w[1] = 99;
        add("f17", w, false);
    }
    add("f18", ten, true);
    add("f19", ten, false)->tools[0].deprecated = true;
    add("f20", std::vector<int>(30, 100), true);
    return f;
}

// Teacher script for corpus tasks: plan the first gold tool, call it, finish.
// Tasks in `broken` get an empty script and abort with a backend error.
inline json teacher_script(const std::vector<span::CorpusTask>& corpus,
                           const std::set<std::string>& broken = {}) {
    json script{{"tasks", json::object()}};
    for (const auto& c : corpus) {
        const auto& id = c.task.id;
        if (broken.contains(id)) {
            script["tasks"][id] = queues_json({}, {}, {});
            continue;
        }
        const auto& t = c.task.gold_tools.front();
        script["tasks"][id] = queues_json({use(t, "call " + t), finish("done " + id)}, {call(t)},
                                          {approve(), approve()});
    }
    return script;
}

// Drops timestamps so logs from two runs can be compared.
inline std::vector<TrajectoryEvent> without_timestamps(std::vector<TrajectoryEvent> events) {
    for (auto& e : events) e.timestamp.clear();
    return events;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() /
                ("conagents-" + tag + "-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace fx
