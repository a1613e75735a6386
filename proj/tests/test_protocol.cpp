#include <doctest.h>

#include <random>

#include "fixtures.hpp"

using namespace conagents;

namespace {

struct Env {
    Task task = fx::task("t1", fx::movie_tools(), {"search_movie"}, "Who directed Dune?");
    ToolRegistry registry{fx::movie_manifest()};
};

int count(const std::vector<TrajectoryEvent>& ev, Phase p) {
    return static_cast<int>(std::count_if(ev.begin(), ev.end(), [p](const auto& e) { return e.phase == p; }));
}

int count_agent(const std::vector<TrajectoryEvent>& ev, AgentRole r) {
    return static_cast<int>(std::count_if(ev.begin(), ev.end(), [r](const auto& e) { return e.agent == r; }));
}

void check_turns_gapless(const std::vector<TrajectoryEvent>& ev) {
    std::map<std::pair<int, Phase>, int> last;
    for (const auto& e : ev) {
        auto& t = last[{e.step, e.phase}];
        CHECK(e.turn == t + 1);
        t = e.turn;
    }
}

}  // namespace

TEST_CASE("automatic: revise-once scenario yields the 11-event sequence") {
    Env env;
    auto out = run_automatic(env.task, env.registry, fx::scripted(fx::revise_once_scenario()),
                             fx::automatic());
    const std::vector<Phase> expected{
        Phase::Planning,  Phase::PlanReview, Phase::Planning,   Phase::PlanReview,
        Phase::Execution, Phase::ToolCall,   Phase::ExecReview, Phase::Execution,
        Phase::ToolCall,  Phase::ExecReview, Phase::Finish};
    CHECK(fx::phases(out.trajectory) == expected);
    CHECK(out.trajectory.back().agent == AgentRole::Grounding);
    CHECK(out.finished);
    CHECK(out.answer == "Denis Villeneuve");
    CHECK(out.executed_ok_tools == std::vector<std::string>{"search_movie"});
    CHECK(out.steps_used == 1);
    CHECK(out.abort_reason == AbortReason::None);
    REQUIRE(out.history.size() == 1);
    CHECK(out.history.entries()[0].plan.tool == "search_movie");
    CHECK(out.history.entries()[0].result.is_ok());
    check_turns_gapless(out.trajectory);
    // The revised plan's feedback reached the second grounding prompt.
    CHECK(out.trajectory[2].step == 1);
    CHECK(out.trajectory[10].step == 2);
}

TEST_CASE("automatic: never-approving review exhausts both caps") {
    Env env;
    std::vector<std::string> g(3, fx::use("search_movie", "Dune"));
    std::vector<std::string> e(3, fx::call("search_movie", {{"query", "Dune"}}));
    std::vector<std::string> r(6, fx::revise("try again"));
    auto out = run_automatic(env.task, env.registry, fx::scripted(fx::queues(g, e, r)),
                             fx::automatic(3, 3, 1));
    CHECK(count(out.trajectory, Phase::Planning) == 3);
    CHECK(count(out.trajectory, Phase::PlanReview) == 3);
    CHECK(count(out.trajectory, Phase::Execution) == 3);
    CHECK(count(out.trajectory, Phase::ExecReview) == 3);
    CHECK(count(out.trajectory, Phase::ToolCall) == 3);
    CHECK(out.abort_reason == AbortReason::MaxSteps);
    CHECK_FALSE(out.finished);
    CHECK(token_totals(out.trajectory).model_calls == 12);
    CHECK(out.steps_used == 1);
    // Proceeds with the last candidate and the last result.
    CHECK(out.history.entries()[0].result.is_ok());
}

TEST_CASE("automatic: FINISH first means no reviews and no tool calls") {
    Env env;
    auto out = run_automatic(env.task, env.registry, fx::scripted(fx::queues({fx::finish("42")}, {}, {})),
                             fx::automatic());
    REQUIRE(out.trajectory.size() == 1);
    CHECK(out.trajectory[0].phase == Phase::Finish);
    CHECK(out.finished);
    CHECK(out.answer == "42");
    CHECK(env.registry.total_calls() == 0);
    CHECK(out.steps_used == 0);
}

TEST_CASE("automatic: unknown tool is caught by the precheck") {
    Env env;
    auto q = fx::queues({fx::use("imdb", "x"), fx::use("search_movie", "Dune"), fx::finish("ok")},
                        {fx::call("search_movie", {{"query", "Dune"}})}, {fx::approve(), fx::approve()});
    auto out = run_automatic(env.task, env.registry, fx::scripted(q), fx::automatic());
    REQUIRE(out.finished);
    const auto& pr = out.trajectory[1];
    CHECK(pr.phase == Phase::PlanReview);
    CHECK(pr.tokens_in == 0);
    CHECK(pr.tokens_out == 0);
    CHECK(parse::review(pr.payload, FeedbackTarget::Grounding).text == "only select tools from given list");
}

TEST_CASE("automatic: unparseable plans are revised without a model review") {
    Env env;
    auto q = fx::queues({"hmm", "still thinking", "no idea", fx::finish("gave up")}, {}, {});
    auto out = run_automatic(env.task, env.registry, fx::scripted(q), fx::automatic(3, 3, 2));
    CHECK(out.finished);
    CHECK(count(out.trajectory, Phase::Planning) == 3);
    CHECK(count(out.trajectory, Phase::PlanReview) == 3);
    CHECK(count(out.trajectory, Phase::Execution) == 0);
    CHECK(out.steps_used == 0);
    for (const auto& e : out.trajectory) {
        if (e.phase == Phase::PlanReview) CHECK(e.tokens_in + e.tokens_out == 0);
    }
}

TEST_CASE("automatic: backend failure aborts with the partial trajectory") {
    Env env;
    auto q = fx::queues({fx::use("search_movie", "Dune")}, {}, {fx::approve()});
    MemoryTrajectorySink sink;
    auto out = run_automatic(env.task, env.registry, fx::scripted(q), fx::automatic(), &sink);
    CHECK(out.abort_reason == AbortReason::BackendError);
    CHECK_FALSE(out.finished);
    CHECK(out.error.find("exhausted") != std::string::npos);
    CHECK(fx::phases(out.trajectory) ==
          std::vector<Phase>{Phase::Planning, Phase::PlanReview, Phase::Finish});
    CHECK(out.trajectory.back().agent == AgentRole::Environment);
    CHECK(sink.events().size() == out.trajectory.size());
}

TEST_CASE("automatic: within a step every PLAN_REVIEW precedes the first EXECUTION") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        Env env;
        std::vector<std::string> g, e, r;
        for (int i = 0; i < 40; ++i) {
            g.push_back(rng() % 6 == 0 ? "garbage" : fx::use(rng() % 5 == 0 ? "imdb" : "search_movie", "x"));
            e.push_back(rng() % 3 == 0 ? fx::call("search_movie") : fx::call("search_movie", {{"query", "q"}}));
            r.push_back(rng() % 2 ? fx::approve() : fx::revise("no"));
        }
        g[static_cast<std::size_t>(rng() % 40)] = fx::finish("done");
        const auto cfg = fx::automatic(1 + static_cast<int>(rng() % 3), 1 + static_cast<int>(rng() % 3),
                                       1 + static_cast<int>(rng() % 4));
        auto out = run_automatic(env.task, env.registry, fx::scripted(fx::queues(g, e, r)), cfg);
        std::map<int, bool> executing;
        for (const auto& ev : out.trajectory) {
            if (ev.phase == Phase::Execution) executing[ev.step] = true;
            if (ev.phase == Phase::PlanReview) CHECK_FALSE(executing[ev.step]);
            if (ev.phase == Phase::PlanReview) CHECK(ev.turn <= cfg.alpha);
            if (ev.phase == Phase::ExecReview) CHECK(ev.turn <= cfg.beta);
        }
        check_turns_gapless(out.trajectory);
        CHECK(out.steps_used <= cfg.max_steps);
        CHECK(token_totals(out.trajectory).model_calls <= max_model_calls(cfg));
    }
}

TEST_CASE("adaptive: all calls succeed, no review events") {
    Env env;
    auto q = fx::queues({fx::use("search_movie", "Dune"), fx::use("get_credits", "438631"), fx::finish("DV")},
                        {fx::call("search_movie", {{"query", "Dune"}}), fx::call("get_credits", {{"movie_id", 438631}})},
                        {});
    auto out = run_adaptive(env.task, env.registry, fx::scripted(q), fx::adaptive());
    CHECK(out.finished);
    CHECK(count_agent(out.trajectory, AgentRole::Review) == 0);
    CHECK(fx::phases(out.trajectory) ==
          std::vector<Phase>{Phase::Planning, Phase::Execution, Phase::ToolCall, Phase::Planning,
                             Phase::Execution, Phase::ToolCall, Phase::Finish});
    CHECK(out.executed_ok_tools == std::vector<std::string>{"search_movie", "get_credits"});
    CHECK(out.steps_used == 2);
}

TEST_CASE("adaptive: PLANNING_FAULT re-invokes the grounding agent") {
    Env env;
    env.registry.inject_fault({"get_credits", FaultTrigger::FirstN, 1, "missing required argument", {}});
    auto q = fx::queues({fx::use("get_credits", "credits"), fx::use("search_movie", "find the id"), fx::finish("x")},
                        {fx::call("get_credits", {{"movie_id", 1}}), fx::call("search_movie", {{"query", "Dune"}})},
                        {fx::route("PLANNING_FAULT", "plan lacks the required arguments")});
    auto rec = std::make_shared<fx::RecordingBackend>(std::make_shared<ScriptedBackend>(q));
    auto out = run_adaptive(env.task, env.registry, Backends::shared(rec), fx::adaptive());
    CHECK(out.finished);
    const auto roles = fx::model_roles(out.trajectory);
    REQUIRE(roles.size() >= 4);
    CHECK(roles[2] == AgentRole::Review);
    CHECK(roles[3] == AgentRole::Grounding);
    const auto calls = rec->calls();
    const auto replan = calls[3].request.messages[0].content;
    CHECK(replan.find("The call failed: missing required argument") != std::string::npos);
    CHECK(replan.find("Reviewer: plan lacks the required arguments") != std::string::npos);
    CHECK(out.steps_used == 1);
    CHECK(out.history.entries()[0].plan.tool == "search_movie");
}

TEST_CASE("adaptive: EXECUTION_FAULT re-invokes the execution agent with the feedback") {
    Env env;
    env.registry.inject_fault({"search_movie", FaultTrigger::FirstN, 1, "malformed query", {}});
    auto q = fx::queues({fx::use("search_movie", "Dune"), fx::finish("x")},
                        {fx::call("search_movie", {{"query", "dune!!"}}), fx::call("search_movie", {{"query", "Dune"}})},
                        {fx::route("EXECUTION_FAULT", "quote the title exactly")});
    auto rec = std::make_shared<fx::RecordingBackend>(std::make_shared<ScriptedBackend>(q));
    auto out = run_adaptive(env.task, env.registry, Backends::shared(rec), fx::adaptive());
    CHECK(out.finished);
    const auto roles = fx::model_roles(out.trajectory);
    REQUIRE(roles.size() >= 4);
    CHECK(roles[2] == AgentRole::Review);
    CHECK(roles[3] == AgentRole::Execution);
    const auto redo = rec->calls()[3].request.messages[0].content;
    CHECK(redo.find("Feedback 1: quote the title exactly") != std::string::npos);
    CHECK(out.executed_ok_tools == std::vector<std::string>{"search_movie"});
}

TEST_CASE("adaptive: unknown tool routes to grounding without review tokens") {
    Env env;
    auto q = fx::queues({fx::use("imdb", "x"), fx::use("search_movie", "Dune"), fx::finish("x")},
                        {fx::call("search_movie", {{"query", "Dune"}})}, {});
    auto out = run_adaptive(env.task, env.registry, fx::scripted(q), fx::adaptive());
    CHECK(out.finished);
    CHECK(fx::phases(out.trajectory) ==
          std::vector<Phase>{Phase::Planning, Phase::Execution, Phase::ToolCall, Phase::Routing,
                             Phase::Planning, Phase::Execution, Phase::ToolCall, Phase::Finish});
    const auto& routing = out.trajectory[3];
    CHECK(routing.agent == AgentRole::Review);
    CHECK(routing.tokens_in + routing.tokens_out == 0);
    CHECK(out.trajectory[1].tokens_in + out.trajectory[1].tokens_out == 0);  // no documentation, no model call
    CHECK(out.trajectory[4].agent == AgentRole::Grounding);
}

TEST_CASE("adaptive: repairs exhaust, the erroneous step enters history") {
    Env env;
    env.registry.inject_fault({"search_movie", FaultTrigger::EveryCall, 1, "down", {}});
    std::vector<std::string> g(10, fx::use("search_movie", "Dune"));
    std::vector<std::string> e(10, fx::call("search_movie", {{"query", "Dune"}}));
    std::vector<std::string> r(10, fx::route("EXECUTION_FAULT", "retry"));
    auto out = run_adaptive(env.task, env.registry, fx::scripted(fx::queues(g, e, r)), fx::adaptive(3, 3, 1));
    CHECK(out.abort_reason == AbortReason::MaxSteps);
    REQUIRE(out.history.size() == 1);
    CHECK_FALSE(out.history.entries()[0].result.is_ok());
    CHECK(count(out.trajectory, Phase::Execution) == 4);  // one call plus beta repairs
    CHECK(token_totals(out.trajectory).model_calls <= max_model_calls(fx::adaptive(3, 3, 1)));
}

TEST_CASE("call bounds hold on adversarial scripts") {
    std::mt19937_64 rng(99);
    const std::vector<std::string> faults{"PLANNING_FAULT", "EXECUTION_FAULT"};
    for (int trial = 0; trial < 300; ++trial) {
        Env env;
        env.registry.inject_fault({"search_movie", FaultTrigger::EveryCall, 1, "down", {}});
        std::vector<std::string> g, e, r;
        for (int i = 0; i < 400; ++i) {
            g.push_back(rng() % 7 == 0 ? "???" : fx::use(rng() % 6 == 0 ? "imdb" : "search_movie", "x"));
            e.push_back(rng() % 4 == 0 ? "no block" : fx::call("search_movie", {{"query", "q"}}));
            r.push_back(rng() % 5 == 0 ? "rambling" : rng() % 2 ? fx::revise("no") : fx::route(faults[rng() % 2], "why"));
        }
        const int alpha = 1 + static_cast<int>(rng() % 4);
        const int beta = 1 + static_cast<int>(rng() % 4);
        const int steps = 1 + static_cast<int>(rng() % 3);
        for (auto cfg : {fx::automatic(alpha, beta, steps), fx::adaptive(alpha, beta, steps)}) {
            auto registry = env.registry;
            auto out = run_protocol(env.task, registry, fx::scripted(fx::queues(g, e, r)), cfg);
            CHECK(out.abort_reason == AbortReason::MaxSteps);
            const long calls = token_totals(out.trajectory).model_calls;
            const long bound = cfg.protocol == ProtocolKind::Automatic
                                   ? static_cast<long>(steps) * (2 * alpha + 2 * beta) + 1
                                   : static_cast<long>(steps) * (2 + 2 * std::max(alpha, beta)) + 1;
            CHECK(calls <= bound);
            CHECK(max_model_calls(cfg) == bound);
            check_turns_gapless(out.trajectory);
        }
    }
}

TEST_CASE("adaptive trigger exactness: review events iff some call failed") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        Env env;
        if (rng() % 2) {
            env.registry.inject_fault({"search_movie", FaultTrigger::NthCall,
                                       1 + static_cast<int>(rng() % 3), "flaky", {}});
        }
        std::vector<std::string> g, e, r;
        for (int i = 0; i < 30; ++i) {
            g.push_back(fx::use(rng() % 8 == 0 ? "imdb" : "search_movie", "x"));
            e.push_back(rng() % 6 == 0 ? fx::call("search_movie") : fx::call("search_movie", {{"query", "q"}}));
            r.push_back(fx::route(rng() % 2 ? "PLANNING_FAULT" : "EXECUTION_FAULT", "why"));
        }
        g[static_cast<std::size_t>(3 + rng() % 20)] = fx::finish("done");
        auto out = run_adaptive(env.task, env.registry, fx::scripted(fx::queues(g, e, r)), fx::adaptive());
        bool any_error = false;
        for (const auto& ev : out.trajectory) {
            if (ev.phase == Phase::ToolCall && !result_from_tool_call_payload(ev.payload).is_ok()) any_error = true;
        }
        CHECK((count_agent(out.trajectory, AgentRole::Review) > 0) == any_error);
    }
}

TEST_CASE("protocols share one outcome schema") {
    Env env;
    auto q = [] {
        return fx::queues({fx::use("search_movie", "Dune"), fx::finish("x")},
                          {fx::call("search_movie", {{"query", "Dune"}})}, {fx::approve(), fx::approve()});
    };
    auto r1 = env.registry;
    auto a = run_protocol(env.task, r1, fx::scripted(q()), fx::automatic());
    auto r2 = env.registry;
    auto b = run_protocol(env.task, r2, fx::scripted(q()), fx::adaptive());
    CHECK(a.finished == b.finished);
    CHECK(a.executed_ok_tools == b.executed_ok_tools);
    CHECK(a.steps_used == b.steps_used);
    CHECK_THROWS_AS(run_automatic(env.task, r1, fx::scripted(q()), fx::adaptive()), Error);
    CHECK_THROWS_AS(run_adaptive(env.task, r1, fx::scripted(q()), fx::automatic()), Error);
}

TEST_CASE("replay reconstructs the live history") {
    std::mt19937_64 rng(11);
    fx::TempDir dir("protocol");
    for (int trial = 0; trial < 100; ++trial) {
        Env env;
        env.registry.inject_fault({"get_credits", FaultTrigger::FirstN, 1, "cold start", {}});
        std::vector<std::string> g, e, r;
        const std::vector<std::string> tools{"search_movie", "get_credits", "imdb"};
        for (int i = 0; i < 30; ++i) {
            g.push_back(rng() % 9 == 0 ? "noise" : fx::use(tools[rng() % 3], "x"));
            e.push_back(rng() % 5 == 0 ? "oops" : fx::call(tools[rng() % 2], {{"query", "q"}, {"movie_id", 2}}));
            r.push_back(rng() % 3 == 0 ? fx::route("PLANNING_FAULT", "p")
                        : rng() % 2  ? fx::approve()
                                     : fx::revise("again"));
        }
        if (rng() % 3) g[static_cast<std::size_t>(rng() % 20)] = fx::finish("done");
        const auto cfg = rng() % 2 ? fx::automatic(2, 2, 3) : fx::adaptive(2, 2, 3);
        const auto path = dir / ("log" + std::to_string(trial) + ".jsonl");
        RunOutcome live;
        {
            FileTrajectorySink sink(path);
            live = run_protocol(env.task, env.registry, fx::scripted(fx::queues(g, e, r)), cfg, &sink);
        }
        auto replayed = reconstruct_outcome(env.task.id, read_trajectory_log(path));
        CHECK(replayed.history.same_content(live.history));
        CHECK(replayed.finished == live.finished);
        CHECK(replayed.answer == live.answer);
        CHECK(replayed.executed_ok_tools == live.executed_ok_tools);
        CHECK(replayed.steps_used == live.steps_used);
        CHECK(replayed.abort_reason == live.abort_reason);
    }
}

TEST_CASE("tool call payload round trip") {
    ToolInvocation inv;
    inv.tool = "a";
    inv.arguments = {{"x", 1}};
    auto r = ExecResult::error("a", ErrorClass::Fault, "boom");
    CHECK(result_from_tool_call_payload(tool_call_payload(inv, r).dump()).same_content(r));
}
