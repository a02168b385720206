#include <gtest/gtest.h>

#include "hnav/random.hpp"
#include "hnav/trajectory.hpp"
#include "oracles.hpp"

using namespace hnav;

namespace {

Trajectory traj(std::vector<Pose> pts, double dt = 1.0) { return Trajectory{0, dt, std::move(pts)}; }

Trajectory random_traj(Rng& rng, std::size_t n) {
    Trajectory t{0, 1.0, {}};
    for (std::size_t i = 0; i < n; ++i) t.points.push_back({uniform(rng, -5, 5), uniform(rng, -5, 5)});
    return t;
}

}  // namespace

TEST(Resample, MidpointInterpolation) {
    const auto r = resample(traj({{0, 0}, {1, 0}}), 0.5, 3);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0], (Pose{0, 0}));
    EXPECT_EQ(r[1], (Pose{0.5, 0}));
    EXPECT_EQ(r[2], (Pose{1, 0}));
    EXPECT_DOUBLE_EQ(r.dt, 0.5);
}

TEST(Resample, OwnGridIsIdentity) {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        auto t = random_traj(rng, 1 + i % 9);
        t.dt = 0.25 + 0.1 * i;
        const auto r = resample(t, t.dt, t.size());
        EXPECT_EQ(r.points, t.points);
        EXPECT_EQ(resample(r, r.dt, r.size()), r);
    }
}

TEST(Resample, SinglePointRepeats) {
    const auto r = resample(traj({{2, 3}}), 0.7, 4);
    EXPECT_EQ(r.points, std::vector<Pose>(4, Pose{2, 3}));
}

TEST(Resample, HoldsFinalPosePastEnd) {
    const auto r = resample(traj({{0, 0}, {1, 0}}), 1.0, 5);
    EXPECT_EQ(r[4], (Pose{1, 0}));
    EXPECT_EQ(r[2], (Pose{1, 0}));
}

TEST(Resample, Errors) {
    EXPECT_THROW(resample(traj({}), 1.0, 2), InvalidTrajectory);
    EXPECT_THROW(resample(traj({{0, 0}}), 0.0, 2), InvalidTrajectory);
    EXPECT_THROW(resample(traj({{0, 0}}), 1.0, 0), InvalidTrajectory);
}

TEST(SquaredDeviation, Examples) {
    EXPECT_EQ(squared_deviation(traj({{1, 2}, {3, 4}}), traj({{1, 2}, {3, 4}})), 0.0);
    EXPECT_DOUBLE_EQ(squared_deviation(traj({{0, 0}, {1, 0}}), traj({{0, 0}, {0, 0}})), 1.0);
    EXPECT_DOUBLE_EQ(squared_deviation(traj({{0, 0}, {1, 1}}), traj({{1, 0}, {0, 1}})), 2.0);
}

TEST(SquaredDeviation, LengthMismatch) {
    EXPECT_THROW(squared_deviation(traj({{0, 0}}), traj({{0, 0}, {1, 1}})), AlignmentError);
    EXPECT_THROW(squared_deviation(traj({{0, 0}}, 1.0), traj({{0, 0}}, 0.5)), AlignmentError);
}

TEST(SquaredDeviation, SymmetricAndMatchesReference) {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const auto a = random_traj(rng, 6), b = random_traj(rng, 6);
        EXPECT_EQ(squared_deviation(a, b), squared_deviation(b, a));
        EXPECT_NEAR(squared_deviation(a, b), oracle::sq_dev(a.points, b.points), 1e-9);
        EXPECT_GT(squared_deviation(a, b), 0.0);
    }
}

TEST(ProjectProgress, Examples) {
    const auto plan = traj({{0, 0}, {1, 0}, {2, 0}});
    EXPECT_EQ(project_progress(plan, {1.1, 0}), 1u);
    EXPECT_EQ(project_progress(plan, {0.5, 0.3}), 1u);
    EXPECT_EQ(project_progress(plan, {5, 5}), 2u);
    EXPECT_THROW(project_progress(traj({}), {0, 0}), InvalidTrajectory);
}

TEST(ProjectProgress, MonotoneAlongPlan) {
    const auto plan = traj({{0, 0}, {1, 0}, {2, 0.5}, {3, 1.5}, {3, 3}, {2, 4}});
    std::size_t prev = 0;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        const auto idx = project_progress(plan, plan[k]);
        EXPECT_GE(idx, prev);
        EXPECT_EQ(idx, k);
        prev = idx;
    }
}

TEST(PlanWindow, StartsAtProgressPoint) {
    const auto plan = traj({{0, 0}, {1, 0}, {2, 0}, {3, 0}});
    const auto w = plan_window(plan, {1.9, 0.1}, 0.5, 4);
    EXPECT_EQ(w.points, (std::vector<Pose>{{2, 0}, {2.5, 0}, {3, 0}, {3, 0}}));
}

TEST(Retime, EvenSpacingKeepsEndpoint) {
    const std::vector<Pose> poly{{0, 0}, {3, 0}, {3, 2}};
    const auto t = retime(poly, 1.0, 0.5);
    EXPECT_EQ(t.front(), (Pose{0, 0}));
    EXPECT_EQ(t.back(), (Pose{3, 2}));
    EXPECT_EQ(t.size(), 11u);
    EXPECT_TRUE(kinematically_feasible(t, 1.0));
}

TEST(Grid, CellsAndBlocking) {
    OccupancyGrid g(4, 3, 0.5);
    EXPECT_EQ(g.cell_of({1.2, 0.9}), (Cell{2, 1}));
    g.set_occupied({2, 1});
    EXPECT_TRUE(g.blocked({1.2, 0.9}));
    EXPECT_TRUE(g.blocked({-0.1, 0.0}));
    EXPECT_FALSE(g.blocked({0.1, 0.1}));
    EXPECT_THROW(g.set_occupied({4, 0}), OutOfBounds);
    EXPECT_THROW(OccupancyGrid(0, 3, 1.0), InvariantViolation);
    EXPECT_THROW(OccupancyGrid(3, 3, 0.0), InvariantViolation);
}

TEST(Trajectory, ValidateRejectsNonFinite) {
    EXPECT_THROW(validate(traj({{0, std::nan("")}})), InvalidTrajectory);
    EXPECT_THROW(validate(traj({})), InvalidTrajectory);
    EXPECT_NO_THROW(validate(traj({{0, 0}})));
}
