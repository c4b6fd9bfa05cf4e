#include <gtest/gtest.h>

#include "softarm/session.hpp"

using namespace softarm;
using nlohmann::json;

namespace {

json base_doc(const std::string& preset = "br2", bool gravity = true)
{
    json d = {{"schema_version", 1},
              {"name", "session-test"},
              {"arm", {{"preset", preset}, {"n_elements", 3}}},
              {"numerics", {{"tune_connections", false}}}};
    if (!gravity) d["environment"] = {{"gravity", {0, 0, 0}}};
    return d;
}

Session make(const json& d) { return Session(parse_scenario(d)); }

std::vector<double> node_positions(const Session& s)
{
    std::vector<double> out;
    for (const auto& r : s.world().assembly().rods)
        for (const auto& x : r.state.position) out.insert(out.end(), {x.x(), x.y(), x.z()});
    return out;
}

}  // namespace

TEST(Session, FullArmPresetHasSixRods)
{
    const Session s = make(base_doc("br2-b3"));
    EXPECT_EQ(s.world().assembly().rods.size(), 6u);
    EXPECT_EQ(s.hello()["channels"].size(), 4u);
}

TEST(Session, SameScenarioGivesIdenticalInitialSnapshot)
{
    const Session a = make(base_doc());
    const Session b = make(base_doc());
    EXPECT_EQ(*a.snapshot().text, *b.snapshot().text);
}

TEST(Session, RestsWithoutCommandsOrGravity)
{
    Session s = make(base_doc("br2", false));
    const auto before = node_positions(s);
    s.run_until(0.2);
    const auto after = node_positions(s);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(after[i], before[i], 1e-12);
}

TEST(Session, SnapshotsAreDecimatedAndOrdered)
{
    Session s = make(base_doc());
    std::vector<double> times;
    s.on_snapshot = [&](const Snapshot& snap) {
        times.push_back(snap.time);
        const json j = json::parse(*snap.text);
        EXPECT_EQ(j["rods"].size(), 3u);
        EXPECT_EQ(j["rods"][0]["quaternions"].size(), 4u * 3u);
        EXPECT_EQ(j["rods"][0]["positions"].size(), 3u * 4u);
    };
    s.run_until(1.0);
    EXPECT_NEAR(static_cast<double>(times.size()), 30.0, 1.0);
    for (std::size_t i = 1; i < times.size(); ++i) EXPECT_GT(times[i], times[i - 1]);
}

TEST(Session, ScriptedPauseAndAttachFireOnce)
{
    json d = base_doc();
    d["environment"] = {{"payloads", {{{"id", "battery"}, {"rod", "bend"}, {"mass", 0.02}}}}};
    d["events"] = json::parse(R"([{"time": 0.1, "type": "pause"},
                                  {"time": 0.1, "type": "attach_payload", "payload": "battery"},
                                  {"time": 0.1, "type": "resume"},
                                  {"time": 0.2, "type": "attach_payload", "payload": "battery"}])");
    Session s = make(d);
    const double tip_mass = s.world().assembly().rods[0].state.mass.back();
    s.run_until(0.3);
    EXPECT_NEAR(s.world().assembly().rods[0].state.mass.back(), tip_mass + 0.02, 1e-15);
    EXPECT_EQ(s.warnings().size(), 1u);
    EXPECT_FALSE(s.paused());
}

TEST(Session, ScriptedPauseHoldsUntilResumed)
{
    json d = base_doc();
    d["events"] = json::parse(R"([{"time": 0.1, "type": "pause"}])");
    Session s = make(d);
    s.run_until(0.5);
    EXPECT_TRUE(s.paused());
    EXPECT_NEAR(s.time(), 0.1, s.dt());
    EXPECT_TRUE(s.command({{"type", "resume"}}).ok);
    s.run_until(0.5);
    EXPECT_NEAR(s.time(), 0.5, s.dt());
}

TEST(Session, CommandsAreValidated)
{
    json d = base_doc();
    d["environment"] = {{"payloads", {{{"id", "battery"}, {"rod", "bend"}}}}};
    Session s = make(d);
    EXPECT_FALSE(s.command_text("{not json").ok);
    EXPECT_FALSE(s.command({{"type", "warp"}}).ok);
    EXPECT_FALSE(s.command({{"type", "set_actions"}, {"actions", {1, 2}}}).ok);
    EXPECT_FALSE(s.command({{"type", "set_actions"}, {"actions", {1, "a", 2}}}).ok);
    EXPECT_FALSE(s.command({{"type", "attach_payload"}, {"id", "coin"}}).ok);
    EXPECT_TRUE(s.command({{"type", "attach_payload"}, {"id", "battery"}}).ok);
    EXPECT_FALSE(s.command({{"type", "attach_payload"}, {"id", "battery"}}).ok);
    EXPECT_FALSE(s.command({{"type", "stop_record"}}).ok);
    EXPECT_FALSE(s.command({{"type", "hello"}, {"protocol_version", 99}}).ok);
    const Reply h = s.command({{"type", "hello"}, {"protocol_version", 1}, {"snapshot_hz", 10}});
    ASSERT_TRUE(h.ok);
    EXPECT_EQ(h.data["snapshot_hz"], 10.0);
}

TEST(Session, ZeroActionsRampPressuresToZero)
{
    Session s = make(base_doc());
    EXPECT_TRUE(s.command({{"type", "set_actions"}, {"actions", {10, 10, 10}}}).ok);
    s.run_until(0.5);
    EXPECT_GT(s.world().pressures()[0], 0.0);
    EXPECT_TRUE(s.command({{"type", "set_actions"}, {"actions", {0, 0, 0}}}).ok);
    s.run_until(3.0);
    for (double p : s.world().pressures()) EXPECT_LT(p, 1e-6 * kPsiToPa);
}

TEST(Session, RecordAndReplayReproduceTheTrajectory)
{
    Session s = make(base_doc());
    s.run_until(0.1);
    ASSERT_TRUE(s.command({{"type", "start_record"}}).ok);
    s.command({{"type", "set_actions"}, {"actions", {12, 0, 5}}});
    s.run_until(0.4);
    s.command({{"type", "set_actions"}, {"actions", {3, 8, 0}}});
    s.run_until(0.7);
    const Reply stop = s.command({{"type", "stop_record"}});
    ASSERT_TRUE(stop.ok);
    const std::uint64_t recorded = s.trajectory_hash();
    const double end = s.time();
    s.run_until(1.0);  // keep going past the recording

    ASSERT_TRUE(s.command({{"type", "replay"}}).ok);
    EXPECT_NEAR(s.time(), 0.1, s.dt());
    s.run_until(end);
    EXPECT_EQ(s.trajectory_hash(), recorded);

    // the text form round-trips into a fresh session from t = 0
    const std::string text = stop.data["trace"];
    EXPECT_EQ(format_trace(parse_trace(text)), text);
    Session fresh = make(base_doc());
    EXPECT_TRUE(fresh.command({{"type", "load_trace"}, {"trace", text}}).ok);
    EXPECT_TRUE(fresh.command({{"type", "replay"}}).ok);
    fresh.run_until(0.2);
    EXPECT_GT(fresh.world().pressures()[0], 0.0);
}

TEST(Session, ReplayIsIndependentOfHowItIsDriven)
{
    ControlTrace t;
    t.set_meta("scenario", "session-test");
    for (int k = 0; k < 25; ++k) t.samples.push_back({k * 0.02, {k < 10 ? 0.0 : 15.0, 4.0, 0.0}});
    Session a = make(base_doc());
    a.start_replay(t);
    a.run_until(0.6);
    Session b = make(base_doc());
    b.start_replay(t);
    while (b.time() < 0.6 - 0.5 * b.dt()) {
        b.run_until(std::min(b.time() + 0.013, 0.6));  // uneven chunks, as a realtime loop would
    }
    EXPECT_EQ(a.trajectory_hash(), b.trajectory_hash());
}

TEST(Session, ForeignTraceIsRefusedWithDiff)
{
    Session s = make(base_doc());
    ControlTrace t;
    t.set_meta("scenario", "elsewhere");
    t.samples.push_back({0.0, {1.0, 2.0}});
    const Reply r = s.command({{"type", "load_trace"}, {"trace", format_trace(t)}});
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.reason.find("scenario"), std::string::npos);
    EXPECT_NE(r.reason.find("channels"), std::string::npos);
}

TEST(Session, DivergenceFreezesTheSession)
{
    json d = base_doc();
    d["actuators"] = {{"*", {{"gamma", 1e5}}}};
    d["control"] = {{"max_rate", 1e6}, {"cutoff", 0}};
    Session s = make(d);
    const std::string before = *s.last_good_snapshot().text;
    s.command({{"type", "set_actions"}, {"actions", {45, 45, 45}}});
    s.run_until(1.0);
    ASSERT_TRUE(s.fault().has_value());
    EXPECT_LT(s.time(), 1.0);
    EXPECT_FALSE(s.command({{"type", "set_actions"}, {"actions", {0, 0, 0}}}).ok);
    EXPECT_FALSE(s.advance());
    EXPECT_TRUE(json::parse(*s.snapshot().text)["fault"].is_string());
    EXPECT_FALSE(json::parse(*s.last_good_snapshot().text).contains("fault"));
}
