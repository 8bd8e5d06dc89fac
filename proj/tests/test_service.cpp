// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gbt/service.hpp"
#include "spec_gen.hpp"

#include <httplib.h>

#include <atomic>
#include <map>
#include <thread>

using namespace gbt;
using namespace std::chrono_literals;
using Json = nlohmann::json;

namespace {

LoadedDefinitions bundled()
{
    const auto d = testkit::bundled_definitions();
    return {d.spec, d.personas, validate_process(d.spec, d.personas)};
}

ActionSpec act(std::string id, Actor actor, std::string goal, Duration timeout)
{
    ActionSpec a;
    a.id = std::move(id);
    a.label = a.id;
    a.actor = actor;
    a.goal_id = std::move(goal);
    a.timeout = timeout;
    if (actor != Actor::Human) a.nominal_duration = 30ms;
    return a;
}

Strategy strat(std::string id, unsigned level, std::vector<ActionSpec> actions, bool universal = false)
{
    Strategy s;
    s.id = std::move(id);
    s.assistance_level = level;
    if (universal) s.allowlist_mode = AllowlistMode::Universal;
    s.actions = std::move(actions);
    return s;
}

// Three short parts: acknowledged by hand, fall-through to a shared step, and
// a failure followed by an acknowledgement.
LoadedDefinitions short_definitions()
{
    ProcessSpec spec;
    spec.id = "bench";
    spec.name = "bench";
    spec.default_timeout = 2s;
    spec.vocabulary = default_vocabulary();

    PartProcess a;
    a.id = "a";
    a.goal_ids = {"pressed"};
    a.strategies = {strat("manual", 0, {act("press", Actor::Human, "pressed", 2s)}),
                    strat("auto", 1, {act("go", Actor::Robot, "pressed", 1s)}, true)};

    PartProcess b;
    b.id = "b";
    b.goal_ids = {"lifted"};
    auto steady = act("steady", Actor::Shared, "lifted", 2s);
    steady.companion = Companion{"hold part", "let go"};
    b.strategies = {strat("manual", 0, {act("lift", Actor::Human, "lifted", 250ms)}),
                    strat("collab", 1, {steady}),
                    strat("auto", 2, {act("lift_auto", Actor::Robot, "lifted", 1s)}, true)};

    PartProcess c;
    c.id = "c";
    c.goal_ids = {"finished"};
    c.strategies = {strat("manual", 0, {act("finish", Actor::Human, "finished", 2s)}),
                    strat("auto", 1, {act("finish_auto", Actor::Robot, "finished", 1s)}, true)};

    spec.part_processes = {a, b, c};
    std::vector<Persona> personas = {Persona{1, "reference", {}, {}}};
    auto diags = validate_process(spec, personas);
    REQUIRE_FALSE(has_errors(diags));
    return {spec, personas, diags};
}

struct Running {
    explicit Running(LoadedDefinitions defs, ServiceOptions opts = {}) : service(std::move(defs), opts)
    {
        const auto p = service.bind("127.0.0.1", 0);
        REQUIRE(p.has_value());
        port = *p;
        service.start();
    }
    ~Running() { service.stop(); }

    httplib::Client client() const
    {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(5, 0);
        return c;
    }

    Service service;
    int port = 0;
};

Json body_of(const httplib::Result& r)
{
    REQUIRE(r);
    return Json::parse(r->body);
}

} // namespace

TEST_CASE("bind address parsing")
{
    CHECK(parse_bind_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
    CHECK(parse_bind_address("[::1]:9") == std::pair<std::string, int>{"[::1]", 9});
    CHECK_THROWS_AS(parse_bind_address("localhost"), ValidationError);
    CHECK_THROWS_AS(parse_bind_address(":80"), ValidationError);
    CHECK_THROWS_AS(parse_bind_address("host:"), ValidationError);
    CHECK_THROWS_AS(parse_bind_address("host:99999"), ValidationError);
    CHECK_THROWS_AS(parse_bind_address("host:8o"), ValidationError);
}

TEST_CASE("subscription drops the oldest frames")
{
    Subscription sub(3);
    for (std::uint64_t i = 1; i <= 5; ++i) sub.push({i, "s", {}});
    auto b = sub.take(0ms);
    REQUIRE(b.frames.size() == 3);
    CHECK(b.frames.front().seq == 3);
    CHECK(b.frames.back().seq == 5);
    CHECK(b.dropped == 2);
    b = sub.take(10ms);
    CHECK(b.frames.empty());
    CHECK(b.dropped == 0);
    sub.close();
    CHECK(sub.take(1s).closed);
}

TEST_CASE("fallthrough frames carry a notice")
{
    StreamFrame f{7, "session-1", {TimePoint{5}, "b", "fallthrough", "from=manual,next=collab,level=1"}};
    const auto j = f.to_json();
    CHECK(j["seq"] == 7);
    CHECK(j["notice"]["part_process_id"] == "b");
    CHECK(j["notice"]["from"] == "manual");
    CHECK(j["notice"]["next"] == "collab");
    CHECK(j["notice"]["level"] == 1);
    StreamFrame last{8, "session-1", {TimePoint{6}, "b", "fallthrough", "from=auto,next=none"}};
    CHECK(last.to_json()["notice"]["next"].is_null());
    StreamFrame plain{9, "session-1", {TimePoint{6}, "b/manual/lift", "instruction", "lift"}};
    CHECK_FALSE(plain.to_json().contains("notice"));
}

TEST_CASE("request validation")
{
    Running r(bundled());
    auto c = r.client();

    CHECK(c.Post("/session", "nope", "application/json")->status == 400);
    CHECK(c.Post("/session", R"({"persona_id":"one"})", "application/json")->status == 400);
    CHECK(c.Post("/session", R"({"persona_id":42})", "application/json")->status == 404);
    CHECK(c.Post("/event", R"({"kind":"human_ack"})", "application/json")->status == 409);
    CHECK(c.Delete("/session")->status == 404);

    const auto created = c.Post("/session", R"({"persona_id":2})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(body_of(created)["session_id"] == "session-1");
    CHECK(c.Post("/session", R"({"persona_id":1})", "application/json")->status == 409);

    CHECK(c.Post("/event", R"({"kind":"robot_done"})", "application/json")->status == 400);
    CHECK(c.Post("/event", R"({"kind":"wave"})", "application/json")->status == 400);
    CHECK(c.Post("/event", R"({"kind":"human_ack","action_id":5})", "application/json")->status == 400);

    const auto bad = body_of(c.Post("/event", "[]", "application/json"));
    REQUIRE(bad["diagnostics"].size() == 1);
    CHECK(bad["diagnostics"][0]["severity"] == "error");
    CHECK(bad["diagnostics"][0].contains("path"));
    CHECK(bad["diagnostics"][0].contains("message"));

    const auto ended = c.Delete("/session");
    REQUIRE(ended);
    CHECK(ended->status == 200);
    CHECK(c.Post("/event", R"({"kind":"human_ack"})", "application/json")->status == 409);
}

TEST_CASE("read-only routes")
{
    Running r(bundled());
    auto c = r.client();
    const auto tree = body_of(c.Get("/tree"));
    CHECK(tree["process_id"] == "box_folding");
    CHECK(tree["nodes"].size() == r.service.tree().size());
    CHECK(body_of(c.Get("/personas"))["personas"].size() == 7);
    CHECK(body_of(c.Get("/process"))["part_processes"].size() == 6);
    const auto idle = body_of(c.Get("/state"));
    CHECK(idle["phase"] == "idle");
    CHECK(idle["session_id"].is_null());
    CHECK(idle["spec_digest"] == r.service.tree().digest());
    const auto trace = c.Get("/trace");
    REQUIRE(trace);
    CHECK(trace->body.empty());
    const auto options = c.Options("/state");
    REQUIRE(options);
    CHECK(options->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("session lifecycle against the bundled spec")
{
    ServiceOptions opts;
    opts.robot_duration_scale = 0.01;
    Running r(bundled(), opts);
    auto c = r.client();
    REQUIRE(c.Post("/session", R"({"persona_id":2})", "application/json")->status == 201);

    // Persona 2 cannot take the blank by hand: the first instruction comes
    // after the robot lifted it.
    for (int i = 0; i < 200 && !r.service.snapshot().instruction; ++i) std::this_thread::sleep_for(10ms);
    auto s = r.service.snapshot();
    CHECK(s.phase == SessionState::Phase::Running);
    CHECK(s.active_persona == 2);
    REQUIRE(s.instruction.has_value());
    CHECK(s.instruction->node_id == "unfold_blank/robot_holds_blank/unfold_one_hand/ack");
    CHECK(s.instruction->action_id == "unfold_one_hand");
    CHECK(s.strategy_id == "robot_holds_blank");
    CHECK(s.level == 1u);

    const auto accepted = c.Post("/event", R"({"kind":"human_ack","action_id":"unfold_one_hand"})", "application/json");
    REQUIRE(accepted);
    CHECK(accepted->status == 202);
    CHECK(body_of(accepted)["target"] == "unfold_blank/robot_holds_blank/unfold_one_hand/ack");

    // Acknowledge whatever comes next until the episode ends.
    std::string last_node;
    for (int i = 0; i < 2000 && !r.service.wait_finished(5ms); ++i) {
        const auto st = r.service.snapshot();
        if (st.instruction && st.instruction->node_id != last_node) {
            last_node = st.instruction->node_id;
            c.Post("/event", R"({"kind":"human_ack"})", "application/json");
        }
    }
    REQUIRE(r.service.wait_finished(0ms));
    const auto done = body_of(c.Get("/state"));
    CHECK(done["phase"] == "completed");
    CHECK(done["levels"]["unfold_blank"] == 1);
    CHECK(done["instruction"].is_null());
    CHECK(done["recent_events"].size() <= SessionState::kRecentEvents);
    CHECK(done["last_seq"].get<std::uint64_t>() == done["recent_events"].back()["seq"].get<std::uint64_t>());

    // A finished session can be replaced.
    CHECK(c.Post("/session", R"({"persona_id":1})", "application/json")->status == 201);
    CHECK(r.service.snapshot().session_id == "session-2");
}

TEST_CASE("event stream")
{
    ServiceOptions opts;
    opts.keepalive = 50ms;
    Running r(short_definitions(), opts);
    auto c = r.client();

    std::vector<Json> frames;
    std::atomic<bool> saw_outcome{false};
    std::thread reader([&] {
        auto rc = r.client();
        std::string buffer;
        rc.Get("/events", [&](const char* data, std::size_t len) {
            buffer.append(data, len);
            for (auto at = buffer.find("\n\n"); at != std::string::npos; at = buffer.find("\n\n")) {
                const auto block = buffer.substr(0, at);
                buffer.erase(0, at + 2);
                if (block.rfind("data: ", 0) != 0) continue;
                frames.push_back(Json::parse(block.substr(6)));
                if (frames.back()["kind"] == "outcome") saw_outcome = true;
            }
            return !saw_outcome;
        });
    });
    std::this_thread::sleep_for(100ms);
    REQUIRE(c.Post("/session", R"({"persona_id":1})", "application/json")->status == 201);
    // Silent operator: every part falls through to automation.
    REQUIRE(r.service.wait_finished(10s));
    reader.join();

    REQUIRE_FALSE(frames.empty());
    for (std::size_t i = 1; i < frames.size(); ++i) {
        CHECK(frames[i]["seq"].get<std::uint64_t>() == frames[i - 1]["seq"].get<std::uint64_t>() + 1);
    }
    int notices = 0;
    for (const auto& f : frames) notices += f.contains("notice") && !f["notice"]["next"].is_null();
    CHECK(notices == 4);
    CHECK(frames.back()["detail"] == "completed");
    const auto s = r.service.snapshot();
    CHECK(s.levels == std::map<std::string, unsigned>{{"a", 1}, {"b", 2}, {"c", 1}});
}

TEST_CASE("wall clock session replays identically on the simulated clock")
{
    for (int round = 0; round < 3; ++round) {
        Running r(short_definitions());
        auto c = r.client();
        auto sub = r.service.subscribe();
        REQUIRE(c.Post("/session", R"({"persona_id":1})", "application/json")->status == 201);

        int finish_seen = 0;
        bool done = false;
        while (!done) {
            const auto batch = sub->take(200ms);
            for (const auto& f : batch.frames) {
                if (f.entry.kind == "outcome") done = true;
                if (f.entry.kind != "instruction") continue;
                const auto& node = f.entry.node;
                if (node == "a/manual/press" || node == "b/collab/steady/ack") {
                    std::this_thread::sleep_for(20ms);
                    c.Post("/event", R"({"kind":"human_ack"})", "application/json");
                } else if (node == "c/manual/finish") {
                    const char* kind = finish_seen++ == 0 ? "human_fail" : "human_ack";
                    c.Post("/event", Json{{"kind", kind}, {"action_id", "finish"}}.dump(), "application/json");
                }
            }
            REQUIRE_FALSE(batch.closed);
        }
        REQUIRE(r.service.wait_finished(5s));
        const auto recorded = r.service.trace().body;
        const auto st = r.service.snapshot();
        CHECK(st.phase == SessionState::Phase::Completed);
        CHECK(st.levels == std::map<std::string, unsigned>{{"a", 0}, {"b", 1}, {"c", 0}});

        const auto events = events_from_jsonl(recorded);
        const auto first = Json::parse(recorded.substr(0, recorded.find('\n')))["time"].get<std::int64_t>();
        SimulatedClock clock{TimePoint{Duration{first}}};
        ScheduledEventSource replay(clock);
        for (const auto& e : events) replay.schedule(e);
        const auto again = run_episode(r.service.tree(), 1, replay, clock);
        CHECK(to_jsonl(again) == recorded);
    }
}

TEST_CASE("ending a running session aborts it")
{
    Running r(bundled());
    auto c = r.client();
    REQUIRE(c.Post("/session", R"({"persona_id":1})", "application/json")->status == 201);
    const auto ended = body_of(c.Delete("/session"));
    CHECK(ended["phase"] == "failed");
    CHECK(ended["note"] == "operator disconnected");
    CHECK(r.service.trace().body.find("\"abort\"") != std::string::npos);
}
