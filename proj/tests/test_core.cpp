#include <doctest.h>

#include <thread>

#include "fixtures.hpp"

using namespace conagents;

namespace {

ExecResult ok_result(const std::string& tool) { return ExecResult::ok(tool, {{"n", 1}}); }

}  // namespace

TEST_CASE("history_append grows by one and keeps the prefix") {
    History h;
    auto h1 = history_append(h, PlanStep::use_tool("A", "do a"), ok_result("A"));
    CHECK(h.empty());
    REQUIRE(h1.size() == 1);

    auto h2 = history_append(h1, PlanStep::use_tool("B", "do b"), ok_result("B"));
    auto h3 = history_append(h2, PlanStep::use_tool("C", "do c"),
                             ExecResult::error("C", ErrorClass::Fault, "boom"));
    REQUIRE(h3.size() == 3);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(h3.entries()[i].plan == h2.entries()[i].plan);
        CHECK(h3.entries()[i].result.same_content(h2.entries()[i].result));
    }
    CHECK(h2.size() == 2);
}

TEST_CASE("history_append rejects FINISH plans") {
    try {
        history_append({}, PlanStep::finish("done"), ok_result("A"));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidArgument);
        CHECK(std::string(e.what()) == "finish not appendable");
    }
}

TEST_CASE("render_history") {
    ProtocolConfig cfg;
    SUBCASE("empty history") { CHECK(render_history({}, cfg) == "no prior steps"); }

    SUBCASE("payload truncated to the cap with suffix") {
        const std::string big(5000, 'x');
        auto h = history_append({}, PlanStep::use_tool("A", "fetch"), ExecResult::ok("A", big));
        const auto out = render_history(h, cfg);
        // The payload renders as a JSON string: a quote plus 1023 x's fill the cap.
        const std::string expected = text::truncate_chars(json(big).dump(), 1024);
        CHECK(text::char_count(expected) == 1024 + text::char_count(text::kTruncationSuffix));
        CHECK(out.find(expected) != std::string::npos);
        CHECK(out.find("Step 1: tool=A status=OK") != std::string::npos);
        const std::string marker = "  result: ";
        const auto rendered = out.substr(out.find(marker) + marker.size());
        CHECK(text::char_count(rendered) == 1024 + text::char_count(text::kTruncationSuffix));
        CHECK(rendered.ends_with(text::kTruncationSuffix));
    }

    SUBCASE("deterministic") {
        auto h = history_append({}, PlanStep::use_tool("A", "fetch"), ok_result("A"));
        h = history_append(h, PlanStep::use_tool("B", "other"),
                           ExecResult::error("B", ErrorClass::Fault, "bad"));
        CHECK(render_history(h, cfg) == render_history(h, cfg));
        CHECK(render_history(h, cfg).find("error: bad") != std::string::npos);
    }
}

TEST_CASE("truncate_chars counts code points") {
    CHECK(text::truncate_chars("abc", 3) == "abc");
    CHECK(text::truncate_chars("abcd", 3) == "abc" + std::string(text::kTruncationSuffix));
    // Two-byte characters are never split.
    CHECK(text::truncate_chars("ééé", 2) == "éé" + std::string(text::kTruncationSuffix));
    CHECK(text::char_count("ééé") == 3);
}

TEST_CASE("count_tokens is a whitespace split") {
    CHECK(text::count_tokens("") == 0);
    CHECK(text::count_tokens("a b c") == 3);
    CHECK(text::count_tokens("  a\tb\n\nc  ") == 3);
}

TEST_CASE("task invariants") {
    auto t = fx::task("t1", {"A", "B"}, {"A"});
    CHECK_NOTHROW(validate(t));
    auto no_tools = t;
    no_tools.candidate_tools.clear();
    no_tools.gold_tools.clear();
    CHECK_THROWS_AS(validate(no_tools), Error);
    auto stray_gold = t;
    stray_gold.gold_tools = {"C"};
    CHECK_THROWS_AS(validate(stray_gold), Error);
    CHECK_THROWS_AS(validate_suite({t, t}), Error);
    CHECK(task_from_json(to_json(t)) == t);
}

TEST_CASE("protocol config invariants") {
    ProtocolConfig c;
    CHECK(c.alpha == 3);
    CHECK(c.beta == 3);
    CHECK(c.max_steps == 10);
    CHECK(c.payload_cap == 1024);
    CHECK(c.error_cap == 2048);
    CHECK(c.transport_retries == 2);
    CHECK_NOTHROW(validate(c));
    for (auto mutate : std::vector<void (*)(ProtocolConfig&)>{
             [](ProtocolConfig& x) { x.alpha = 0; }, [](ProtocolConfig& x) { x.beta = 0; },
             [](ProtocolConfig& x) { x.max_steps = 0; }, [](ProtocolConfig& x) { x.payload_cap = 0; },
             [](ProtocolConfig& x) { x.error_cap = 0; }}) {
        auto bad = c;
        mutate(bad);
        CHECK_THROWS_AS(validate(bad), Error);
    }
}

TEST_CASE("exec result json round trip") {
    auto ok = ExecResult::ok("A", {{"k", {1, 2}}});
    CHECK(exec_result_from_json(to_json(ok)).same_content(ok));
    auto err = ExecResult::error("B", ErrorClass::MissingRequired, "missing required argument: x");
    auto back = exec_result_from_json(to_json(err));
    CHECK(back.same_content(err));
    CHECK(back.error_class == ErrorClass::MissingRequired);
}

namespace {

TrajectoryEvent sample_event(int turn = 1) {
    TrajectoryEvent e;
    e.task_id = "t1";
    e.step = 1;
    e.phase = Phase::Planning;
    e.turn = turn;
    e.agent = AgentRole::Grounding;
    e.payload = "USE A: x\nsecond line \"quoted\"";
    e.tokens_in = 10;
    e.tokens_out = 3;
    e.timestamp = now_timestamp();
    return e;
}

}  // namespace

TEST_CASE("trajectory_write produces one parseable line per event") {
    fx::TempDir dir("core");
    const auto path = dir / "log.jsonl";
    {
        FileTrajectorySink sink(path);
        trajectory_write(sink, sample_event());
    }
    const auto content = fx::read_file(path);
    CHECK(std::count(content.begin(), content.end(), '\n') == 1);
    const auto j = json::parse(content);
    for (const char* k : {"task_id", "step", "phase", "turn", "agent", "payload", "tokens_in",
                          "tokens_out", "timestamp"}) {
        CHECK(j.contains(k));
    }
    CHECK(j.size() == 9);
    auto events = read_trajectory_log(path);
    REQUIRE(events.size() == 1);
    auto expected = to_json(sample_event());
    expected["timestamp"] = events[0].timestamp;
    CHECK(to_json(events[0]) == expected);
}

TEST_CASE("trajectory_write rejects turn 0 and bad TOOL_CALL events") {
    MemoryTrajectorySink sink;
    CHECK_THROWS_AS(trajectory_write(sink, sample_event(0)), Error);
    auto e = sample_event();
    e.phase = Phase::ToolCall;
    CHECK_THROWS_AS(trajectory_write(sink, e), Error);
    e.agent = AgentRole::Environment;
    CHECK_THROWS_AS(trajectory_write(sink, e), Error);  // tokens must be zero
    e.tokens_in = e.tokens_out = 0;
    CHECK_NOTHROW(trajectory_write(sink, e));
    auto neg = sample_event();
    neg.tokens_out = -1;
    CHECK_THROWS_AS(trajectory_write(sink, neg), Error);
    CHECK(sink.events().size() == 1);
}

TEST_CASE("concurrent writers leave intact lines") {
    fx::TempDir dir("core");
    const auto path = dir / "log.jsonl";
    constexpr int kThreads = 8;
    constexpr int kPerThread = 200;
    {
        FileTrajectorySink sink(path);
        std::vector<std::thread> threads;
        for (int t = 0; t < kThreads; ++t) {
            threads.emplace_back([&sink, t] {
                for (int i = 0; i < kPerThread; ++i) {
                    auto e = sample_event(i + 1);
                    e.task_id = "task" + std::to_string(t);
                    e.payload = std::string(static_cast<std::size_t>(100 + i * 7), 'p');
                    trajectory_write(sink, e);
                }
            });
        }
        for (auto& th : threads) th.join();
    }
    const auto events = read_trajectory_log(path);
    CHECK(events.size() == kThreads * kPerThread);
}

TEST_CASE("read_trajectory_log names the corrupt line") {
    fx::TempDir dir("core");
    const auto path = dir / "log.jsonl";
    const auto line = serialize_event(sample_event());
    fx::write_file(path, line + "\n" + line + "\n" + line.substr(0, line.size() / 2));
    try {
        read_trajectory_log(path);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
}

TEST_CASE("enum names round trip") {
    for (auto p : {Phase::Planning, Phase::PlanReview, Phase::Execution, Phase::ExecReview,
                   Phase::Routing, Phase::ToolCall, Phase::Finish}) {
        CHECK(parse_phase(to_string(p)) == p);
    }
    for (auto r : {AgentRole::Grounding, AgentRole::Execution, AgentRole::Review,
                   AgentRole::Environment}) {
        CHECK(parse_agent_role(to_string(r)) == r);
    }
    CHECK(to_string(Phase::PlanReview) == "PLAN_REVIEW");
    CHECK_THROWS_AS(parse_phase("planning"), Error);
}
