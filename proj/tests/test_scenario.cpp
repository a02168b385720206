#include <gtest/gtest.h>

#include <filesystem>

#include "hnav/scenario.hpp"

using namespace hnav;

namespace {

const std::string kDir = HNAV_SCENARIO_DIR;

json minimal() {
    return json::parse(R"({"grid": {"width": 6, "height": 4, "resolution": 0.5},
                          "robot_start": [0.25, 0.25], "goals": [[2.75, 1.75]]})");
}

std::string schema_path(const json& doc) {
    try {
        load_scenario(doc);
    } catch (const SchemaError& e) {
        return e.path();
    }
    return "<no error>";
}

}  // namespace

TEST(LoadScenario, MinimalAppliesDefaults) {
    const auto sc = load_scenario(minimal());
    EXPECT_EQ(sc.grid.width(), 6);
    EXPECT_EQ(sc.grid.resolution(), 0.5);
    EXPECT_EQ(sc.goals.size(), 1u);
    EXPECT_TRUE(sc.crowd.empty());
    EXPECT_EQ(sc.horizon, 8u);
    EXPECT_EQ(sc.dt, 0.5);
    EXPECT_EQ(sc.inference.method, InferenceMethod::Importance);
    EXPECT_EQ(sc.potentials.h, 0.5);
    EXPECT_EQ(sc.potentials.alpha, 0.9);
    EXPECT_EQ(sc.potentials.sigma_r, 0.8);
    EXPECT_EQ(sc.models.v_max, 1.0);
    EXPECT_EQ(sc.models.sigma_theta, 0.3);
    EXPECT_EQ(sc.models.sigma0, 0.1);
    EXPECT_EQ(sc.models.sigma_g, 0.05);
    EXPECT_EQ(sc.models.fov_radius, 5.0);
    EXPECT_EQ(sc.global.k, 3);
    EXPECT_EQ(sc.global.lambda, 0.3);
    EXPECT_EQ(sc.global.rho, 2.0);
    EXPECT_EQ(sc.global.kappa, 2.0);
    EXPECT_EQ(sc.global.window, 1.5);
}

TEST(LoadScenario, GoalOnObstacle) {
    auto doc = minimal();
    doc["grid"]["occupied_cells"] = json::array({json::array({5, 3})});
    EXPECT_THROW(load_scenario(doc), InvariantViolation);
    doc = minimal();
    doc["robot_start"] = {10.0, 0.1};
    EXPECT_THROW(load_scenario(doc), InvariantViolation);
}

TEST(LoadScenario, CrowdCorridorHasFiveAgents) {
    const auto sc = load_scenario_file(kDir + "/crowd_corridor.json");
    EXPECT_EQ(sc.crowd.size(), 5u);
    EXPECT_EQ(sc.goals.size(), 1u);
}

TEST(LoadScenario, EveryShippedScenarioLoads) {
    int n = 0;
    for (const auto& e : std::filesystem::directory_iterator(kDir)) {
        if (e.path().extension() != ".json") continue;
        EXPECT_NO_THROW(load_scenario_file(e.path().string())) << e.path();
        ++n;
    }
    EXPECT_GE(n, 10);
}

TEST(LoadScenario, SchemaErrorPaths) {
    auto doc = minimal();
    doc["grid"].erase("width");
    EXPECT_EQ(schema_path(doc), "grid.width");

    doc = minimal();
    doc.erase("robot_start");
    EXPECT_EQ(schema_path(doc), "robot_start");

    doc = minimal();
    doc["config"] = {{"inference", {{"method", "laplace"}}}};
    EXPECT_EQ(schema_path(doc), "config.inference.method");

    doc = minimal();
    doc["crowd"] = json::array({{{"speed", 1.0}}});
    EXPECT_EQ(schema_path(doc), "crowd[0].waypoints");

    doc = minimal();
    doc["interventions"] = json::array({{{"t", 1.0}, {"kind", "wave"}, {"payload", {0, 0}}}});
    EXPECT_EQ(schema_path(doc), "interventions[0].kind");

    doc = minimal();
    doc["config"] = {{"potentials", {{"alpha", 1.5}}}};
    EXPECT_EQ(schema_path(doc), "config.potentials.alpha");

    doc = minimal();
    doc["goals"] = json::array({json::array({1.0})});
    EXPECT_EQ(schema_path(doc), "goals[0]");

    EXPECT_THROW(load_scenario("{not json", false), SchemaError);
    EXPECT_THROW(load_scenario_file("/nonexistent/x.json"), SchemaError);
}

TEST(LoadScenario, InterventionsParse) {
    auto doc = minimal();
    doc["interventions"] = json::parse(R"([
        {"t": 0.5, "kind": "joystick", "payload": [0.5, 0]},
        {"t": 1.0, "kind": "waypoint", "payload": [1.25, 0.25]},
        {"t": 2.0, "kind": "goal", "payload": []},
        {"t": 3.0, "kind": "goal", "payload": [[1.25, 1.25], [2.25, 0.25]]}])");
    const auto sc = load_scenario(doc);
    ASSERT_EQ(sc.interventions.size(), 4u);
    EXPECT_EQ(sc.interventions[0].command, (Velocity{0.5, 0}));
    EXPECT_EQ(sc.interventions[1].poses.size(), 1u);
    EXPECT_TRUE(sc.interventions[2].poses.empty());
    EXPECT_EQ(sc.interventions[3].poses.size(), 2u);

    doc["interventions"][0]["t"] = 5.0;
    EXPECT_THROW(load_scenario(doc), InvariantViolation);
}

TEST(LoadScenario, RoundTripsThroughJson) {
    const auto sc = load_scenario_file(kDir + "/intervention.json");
    const auto back = load_scenario(to_json(sc));
    EXPECT_EQ(back.grid, sc.grid);
    EXPECT_EQ(back.interventions, sc.interventions);
    EXPECT_EQ(to_json(back), to_json(sc));
}

TEST(CrowdScript, WalksAndLoops) {
    const CrowdScript once{{{0, 0}, {2, 0}}, 1.0, false};
    EXPECT_EQ(once.position_at(1.0), (Pose{1, 0}));
    EXPECT_EQ(once.position_at(10.0), (Pose{2, 0}));
    const CrowdScript loop{{{0, 0}, {2, 0}}, 1.0, true};
    EXPECT_EQ(loop.position_at(3.0), (Pose{1, 0}));
    EXPECT_EQ(loop.position_at(4.0), (Pose{0, 0}));
    const CrowdScript still{{{3, 3}}, 0.0, false};
    EXPECT_EQ(still.position_at(7.0), (Pose{3, 3}));
}
