#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numbers>

#include "hnav/gateway.hpp"

using namespace hnav;
using namespace hnav::gateway;
using namespace std::chrono_literals;

namespace {

const std::string kDir = HNAV_SCENARIO_DIR;

json read_doc(const std::string& name) {
    std::ifstream in(kDir + "/" + name + ".json");
    return json::parse(in);
}

// Open-map goal with no scripted events, for live-driving tests.
json live_doc() {
    auto doc = read_doc("intervention");
    doc.erase("interventions");
    doc["crowd"] = json::array();
    return doc;
}

OperatorEvent joystick(double vx, double vy) {
    OperatorEvent e;
    e.kind = EventKind::Joystick;
    e.command = {vx, vy};
    return e;
}

OperatorEvent simple(EventKind k) {
    OperatorEvent e;
    e.kind = k;
    return e;
}

// Reweighting computed from the frame contents alone.
std::vector<double> expected_weights(const TelemetryFrame& before, Pose robot, Vec2 cmd, double kappa) {
    std::vector<double> w;
    double total = 0.0;
    for (const auto& c : before.components) {
        const auto& p = c.polyline;
        std::size_t idx = 0;
        for (std::size_t k = 0; k < p.size(); ++k)
            if (distance(p[k], robot) <= distance(p[idx], robot)) idx = k;
        const Vec2 dir = p[std::min(p.size() - 1, idx + 2)] - p[idx];
        const double a = std::acos(std::clamp(dot(dir, cmd) / (dir.norm() * cmd.norm()), -1.0, 1.0));
        w.push_back(c.weight * std::exp(-kappa * a * a));
        total += w.back();
    }
    for (auto& x : w) x /= total;
    return w;
}

}  // namespace

TEST(OpenSession, GoalScenarioNotAssistive) {
    SessionManager m;
    const auto id = m.open_session(read_doc("intervention"));
    const auto f = m.session(id)->latest_frame();
    EXPECT_EQ(f.tick, 0u);
    EXPECT_FALSE(f.assistive_mode);
    EXPECT_TRUE(f.paused);
    EXPECT_EQ(f.components.size(), 3u);
    double total = 0.0;
    for (const auto& c : f.components) total += c.weight;
    EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(OpenSession, NoGoalsIsAssistive) {
    auto doc = read_doc("assistive");
    doc.erase("interventions");
    SessionManager m;
    const auto id = m.open_session(doc);
    EXPECT_TRUE(m.session(id)->latest_frame().assistive_mode);
}

TEST(OpenSession, MalformedCreatesNothing) {
    SessionManager m;
    EXPECT_THROW(m.open_session(json{{"grid", 3}}), SchemaError);
    EXPECT_THROW(m.session("s1"), UnknownSession);
    EXPECT_EQ(m.open_session(live_doc()), "s1");
}

TEST(SubmitEvent, JoystickReweightsNextFrame) {
    SessionManager m;
    const auto id = m.open_session(live_doc());
    const auto sc = load_scenario(live_doc());
    auto q = m.stream_frames(id);
    m.submit_event(id, simple(EventKind::Resume));
    ASSERT_TRUE(m.step(id));
    q->try_pop();
    const auto before = *q->try_pop();

    const Vec2 cmd{0.5, 0.6};
    const auto ack = m.submit_event(id, joystick(cmd.x, cmd.y));
    EXPECT_EQ(ack.applies_at_tick, 1u);
    ASSERT_TRUE(m.step(id));
    const auto after = *q->try_pop();
    ASSERT_EQ(after.pending_joystick.size(), 1u);
    ASSERT_EQ(after.components.size(), before.components.size());

    // the plan set is unchanged; only the pose it is conditioned at moved
    const auto expect = expected_weights(before, before.robot, cmd, sc.global.kappa);
    for (std::size_t i = 0; i < before.components.size(); ++i) {
        const auto it = std::find_if(after.components.begin(), after.components.end(),
                                     [&](const FrameComponent& c) { return c.id == before.components[i].id; });
        ASSERT_NE(it, after.components.end());
        EXPECT_NEAR(it->weight, expect[i], 1e-9);
    }
}

TEST(SubmitEvent, ClearingGoalsFlipsToJoystickRay) {
    SessionManager m;
    const auto id = m.open_session(live_doc());
    auto q = m.stream_frames(id);
    m.submit_event(id, simple(EventKind::Resume));
    m.step(id);
    OperatorEvent clear;
    clear.kind = EventKind::GoalSet;
    m.submit_event(id, clear);
    m.step(id);
    auto f = m.session(id)->latest_frame();
    EXPECT_TRUE(f.assistive_mode);
    EXPECT_TRUE(f.components.empty());
    m.submit_event(id, joystick(1.0, 0.0));
    m.step(id);
    f = m.session(id)->latest_frame();
    EXPECT_TRUE(f.assistive_mode);
    ASSERT_EQ(f.components.size(), 1u);
    EXPECT_DOUBLE_EQ(f.components[0].weight, 1.0);
    const auto& ray = f.components[0].polyline;
    for (std::size_t k = 1; k < ray.size(); ++k) EXPECT_NEAR(ray[k].y, ray[0].y, 1e-12);
    EXPECT_GT(ray.back().x, ray.front().x);
}

TEST(SubmitEvent, PauseJoystickResume) {
    SessionManager m;
    const auto id = m.open_session(live_doc());
    m.submit_event(id, simple(EventKind::Resume));
    m.step(id);
    m.submit_event(id, simple(EventKind::Pause));
    m.submit_event(id, joystick(0.0, 1.0));
    EXPECT_FALSE(m.step(id));
    EXPECT_TRUE(m.session(id)->latest_frame().pending_joystick.empty());
    m.submit_event(id, simple(EventKind::Resume));
    ASSERT_TRUE(m.step(id));
    const auto f = m.session(id)->latest_frame();
    ASSERT_EQ(f.pending_joystick.size(), 1u);
    EXPECT_EQ(f.pending_joystick[0].command, (Velocity{0, 1}));
    EXPECT_TRUE(m.session(id)->runlog().records.back().joystick_active);
}

TEST(SubmitEvent, JoystickClampedAndErrors) {
    SessionManager m;
    const auto id = m.open_session(live_doc());
    m.submit_event(id, simple(EventKind::Resume));
    m.submit_event(id, joystick(3.0, 4.0));
    m.step(id);
    const auto f = m.session(id)->latest_frame();
    ASSERT_EQ(f.pending_joystick.size(), 1u);
    EXPECT_NEAR(f.pending_joystick[0].command.norm(), 1.0, 1e-12);

    OperatorEvent far;
    far.kind = EventKind::Waypoint;
    far.poses = {{500, 1}};
    EXPECT_THROW(m.submit_event(id, far), OutOfBounds);
    EXPECT_THROW(m.submit_event("nope", joystick(0, 0)), UnknownSession);
    EXPECT_THROW(m.stream_frames("nope"), UnknownSession);
}

TEST(StreamFrames, PausedIdles) {
    SessionManager m;
    const auto id = m.open_session(live_doc());
    auto q = m.stream_frames(id);
    ASSERT_TRUE(q->pop(10ms));
    EXPECT_FALSE(m.step(id));
    EXPECT_FALSE(q->pop(20ms));
}

TEST(StreamFrames, SubscribersSeeIdenticalGaplessFrames) {
    SessionManager m;
    auto doc = live_doc();
    doc["config"]["tick_limit"] = 6;
    const auto id = m.open_session(doc);
    auto a = m.stream_frames(id);
    auto b = m.stream_frames(id);
    m.submit_event(id, simple(EventKind::Resume));
    while (m.step(id)) {
    }
    std::vector<json> fa, fb;
    while (auto f = a->try_pop()) fa.push_back(to_json(*f));
    while (auto f = b->try_pop()) fb.push_back(to_json(*f));
    EXPECT_EQ(fa, fb);
    ASSERT_EQ(fa.size(), 7u);
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i]["tick"], i);
    EXPECT_TRUE(fa.back()["finished"]);
    EXPECT_TRUE(fa.back().contains("summary"));
    EXPECT_EQ(fa.back()["summary"]["ticks"], 6);
}

TEST(Session, HeadlessEquivalence) {
    SessionManager m;
    const auto doc = read_doc("intervention");
    const auto id = m.open_session(doc);
    m.submit_event(id, simple(EventKind::Resume));
    while (m.step(id)) {
    }
    EXPECT_EQ(to_jsonl(m.session(id)->runlog()), to_jsonl(run(load_scenario(doc))));
}

TEST(Session, LiveEventsMatchInlinedScript) {
    // joystick events submitted live equal the same events scripted at those ticks
    auto doc = live_doc();
    doc["config"]["tick_limit"] = 12;
    SessionManager m;
    const auto id = m.open_session(doc);
    m.submit_event(id, simple(EventKind::Resume));
    auto scripted = doc;
    scripted["interventions"] = json::array();
    for (int tick = 0; tick < 12; ++tick) {
        if (tick >= 2 && tick <= 4) {
            m.submit_event(id, joystick(0.5, 0.6));
            scripted["interventions"].push_back({{"t", tick * 0.5}, {"kind", "joystick"}, {"payload", {0.5, 0.6}}});
        }
        m.step(id);
    }
    EXPECT_EQ(to_jsonl(m.session(id)->runlog()), to_jsonl(run(load_scenario(scripted))));
}

TEST(Session, ResetRestarts) {
    SessionManager m;
    const auto id = m.open_session(live_doc());
    m.submit_event(id, simple(EventKind::Resume));
    m.step(id);
    m.step(id);
    m.submit_event(id, simple(EventKind::Reset));
    const auto s = m.session(id);
    EXPECT_TRUE(s->paused());
    EXPECT_TRUE(s->runlog().records.empty());
    m.submit_event(id, simple(EventKind::Resume));
    m.step(id);
    EXPECT_EQ(s->latest_frame().world_tick, 1u);
    EXPECT_EQ(s->latest_frame().tick, 3u);
}

TEST(Wire, EncodeDecodeRoundTrip) {
    MessageReader r;
    const json a{{"v", 1}, {"kind", "hello"}}, b{{"v", 1}, {"kind", "event"}, {"x", std::string(10000, 'q')}};
    const auto bytes = encode_message(a) + encode_message(b);
    EXPECT_EQ(static_cast<unsigned char>(bytes[3]), a.dump().size());
    for (std::size_t i = 0; i < bytes.size(); i += 7) r.feed(std::string_view(bytes).substr(i, 7));
    EXPECT_EQ(*r.next(), a);
    EXPECT_EQ(*r.next(), b);
    EXPECT_FALSE(r.next());
    r.feed(std::string("\x00\x00\x00\x02{x", 6));
    EXPECT_THROW(r.next(), SchemaError);
}

TEST(Wire, ParseEvent) {
    const auto j = parse_event(json::parse(R"({"kind": "joystick", "payload": [0.1, 0.2]})"));
    EXPECT_EQ(j.kind, EventKind::Joystick);
    EXPECT_EQ(j.command, (Velocity{0.1, 0.2}));
    const auto g = parse_event(json::parse(R"({"kind": "goal_set", "payload": [[1, 2], [3, 4]]})"));
    EXPECT_EQ(g.poses.size(), 2u);
    const auto g1 = parse_event(json::parse(R"({"kind": "goal_set", "payload": [1, 2]})"));
    EXPECT_EQ(g1.poses.size(), 1u);
    EXPECT_EQ(parse_event(json::parse(R"({"kind": "pause"})")).kind, EventKind::Pause);
    EXPECT_THROW(parse_event(json::parse(R"({"kind": "dance"})")), SchemaError);
    EXPECT_THROW(parse_event(json::parse(R"({"kind": "waypoint"})")), SchemaError);
}

TEST(Server, TcpLoopback) {
    SessionManager m;
    Server server(m, 0, 0ms);
    server.start();
    ASSERT_GT(server.port(), 0);

    Client c("127.0.0.1", server.port());
    c.send({{"v", 1}, {"kind", "hello"}, {"scenario", live_doc()}});
    auto hello = c.receive_kind("hello", 2s);
    ASSERT_TRUE(hello);
    const std::string sid = (*hello)["session"];
    auto f0 = c.receive_kind("frame", 2s);
    ASSERT_TRUE(f0);
    EXPECT_EQ((*f0)["frame"]["tick"], 0);
    EXPECT_EQ((*f0)["v"], 1);

    c.send({{"v", 1}, {"kind", "event"}, {"session", sid}, {"ref", 7}, {"event", {{"kind", "resume"}}}});
    auto ack = c.receive_kind("ack", 2s);
    ASSERT_TRUE(ack);
    EXPECT_EQ((*ack)["ref"], 7);
    c.send({{"v", 1}, {"kind", "event"}, {"session", sid}, {"event", {{"kind", "joystick"}, {"payload", {0.5, 0.6}}}}});
    ack = c.receive_kind("ack", 2s);
    ASSERT_TRUE(ack);
    EXPECT_EQ((*ack)["applies_at_tick"], 0);

    ASSERT_TRUE(m.step(sid));
    auto f1 = c.receive_kind("frame", 2s);
    ASSERT_TRUE(f1);
    EXPECT_EQ((*f1)["frame"]["tick"], 1);
    EXPECT_EQ((*f1)["frame"]["pending"]["joystick"].size(), 1u);

    // a second client joins the running session by id
    Client d("127.0.0.1", server.port());
    d.send({{"v", 1}, {"kind", "hello"}, {"session", sid}});
    ASSERT_TRUE(d.receive_kind("hello", 2s));
    auto latest = d.receive_kind("frame", 2s);
    ASSERT_TRUE(latest);
    EXPECT_EQ((*latest)["frame"], (*f1)["frame"]);

    c.send({{"v", 2}, {"kind", "hello"}});
    auto err = c.receive_kind("error", 2s);
    ASSERT_TRUE(err);
    EXPECT_EQ((*err)["code"], "UnsupportedVersion");
    c.send({{"v", 1}, {"kind", "event"}, {"session", "zzz"}, {"event", {{"kind", "pause"}}}});
    err = c.receive_kind("error", 2s);
    ASSERT_TRUE(err);
    EXPECT_EQ((*err)["code"], "UnknownSession");
    c.send({{"v", 1}, {"kind", "hello"}, {"scenario", {{"grid", 1}}}});
    err = c.receive_kind("error", 2s);
    ASSERT_TRUE(err);
    EXPECT_EQ((*err)["code"], "SchemaError");
    server.stop();
}

TEST(Server, TickerAdvancesRunningSessions) {
    SessionManager m;
    auto doc = live_doc();
    doc["config"]["tick_limit"] = 5;
    const auto id = m.open_session(doc);
    Server server(m, 0, 5ms);
    server.start();
    Client c("127.0.0.1", server.port());
    c.send({{"v", 1}, {"kind", "hello"}, {"session", id}});
    c.send({{"v", 1}, {"kind", "event"}, {"session", id}, {"event", {{"kind", "resume"}}}});
    std::optional<json> last;
    for (int i = 0; i < 200; ++i) {
        auto f = c.receive_kind("frame", 2s);
        ASSERT_TRUE(f);
        last = f;
        if ((*f)["frame"]["finished"] == true) break;
    }
    EXPECT_EQ((*last)["frame"]["tick"], 5);
    EXPECT_TRUE((*last)["frame"].contains("summary"));
    server.stop();
}
