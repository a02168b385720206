#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "hnav/error.hpp"
#include "hnav/random.hpp"
#include "hnav/trajectory.hpp"

namespace hnav {

// ---------------------------------------------------------------------------
// Robot kinematic prior p(f^R | z^R)

struct RobotState {
    Pose pose;
    Velocity velocity;
    std::vector<TimedPose> history;  // z^R
};

struct RobotModelConfig {
    double v_max = 1.0;        // m/s
    double sigma_theta = 0.3;  // rad, per-tick heading jitter
    double dt = 0.5;           // s
};

// Integrates a constant-speed primitive. The heading performs a random walk:
// step k uses heading + sum(jitter[0..k]).
inline Trajectory integrate_primitive(Pose start, double speed, double heading, std::span<const double> jitter,
                                      double dt, std::size_t horizon) {
    Trajectory traj{0, dt, {start}};
    traj.points.reserve(horizon);
    double theta = heading;
    for (std::size_t k = 1; k < horizon; ++k) {
        if (k - 1 < jitter.size()) theta += jitter[k - 1];
        traj.points.push_back(traj.back() + Vec2{std::cos(theta), std::sin(theta)} * (speed * dt));
    }
    return traj;
}

// Unnormalized prior density of a local trajectory: zero if any step exceeds
// v_max*dt or (with a grid) any point is blocked, otherwise the Gaussian
// heading-jitter likelihood exp(-sum(turn^2) / (2 sigma_theta^2)).
inline double robot_prior_density(const Trajectory& traj, const RobotModelConfig& cfg,
                                  const OccupancyGrid* grid = nullptr) {
    const double limit = cfg.v_max * traj.dt * (1.0 + 1e-12) + 1e-12;
    double turn_sq = 0.0;
    Vec2 prev_step;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        const Vec2 step = traj[k] - traj[k - 1];
        if (step.norm() > limit) return 0.0;
        if (step.norm() > 1e-12) {
            if (prev_step.norm() > 1e-12) {
                const double a = angle_between(prev_step, step);
                turn_sq += a * a;
            }
            prev_step = step;
        }
    }
    if (grid != nullptr)
        for (const auto& p : traj.points)
            if (grid->blocked(p)) return 0.0;
    if (cfg.sigma_theta == 0.0) return turn_sq < 1e-18 ? 1.0 : 0.0;
    return std::exp(-turn_sq / (2.0 * cfg.sigma_theta * cfg.sigma_theta));
}

// Motion-primitive sampler: speed ~ U[0, v_max], heading ~ U[-pi, pi),
// per-tick heading jitter ~ N(0, sigma_theta^2).
inline Trajectory sample_robot_trajectory(const RobotState& state, std::size_t horizon, const RobotModelConfig& cfg,
                                          Rng& rng) {
    const double speed = uniform(rng, 0.0, cfg.v_max);
    const double heading = uniform(rng, -std::numbers::pi, std::numbers::pi);
    std::vector<double> jitter(horizon > 1 ? horizon - 1 : 0);
    for (auto& j : jitter) j = normal(rng, cfg.sigma_theta);
    return integrate_primitive(state.pose, speed, heading, jitter, cfg.dt, horizon);
}

inline std::vector<Trajectory> sample_robot_prior(const RobotState& state, std::size_t n, std::size_t horizon,
                                                  const RobotModelConfig& cfg, Rng& rng) {
    if (n < 1 || horizon < 1) throw InvariantViolation("n and horizon must be >= 1");
    std::vector<Trajectory> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_robot_trajectory(state, horizon, cfg, rng));
    return out;
}

// Clamp every step to v_max*dt, re-integrating from the first point.
inline Trajectory project_feasible(const Trajectory& traj, double v_max) {
    Trajectory out{traj.start_tick, traj.dt, {traj.front()}};
    out.points.reserve(traj.size());
    for (std::size_t k = 1; k < traj.size(); ++k)
        out.points.push_back(out.back() + clamp_norm(traj[k] - traj[k - 1], v_max * traj.dt));
    return out;
}

// The continuous robot prior as used by the samplers.
class PrimitivePrior {
public:
    PrimitivePrior(RobotState state, RobotModelConfig cfg, std::size_t horizon, const OccupancyGrid* grid = nullptr)
        : state_(std::move(state)), cfg_(cfg), horizon_(horizon), grid_(grid) {}

    std::size_t horizon() const { return horizon_; }
    double dt() const { return cfg_.dt; }
    Pose start() const { return state_.pose; }
    const RobotModelConfig& config() const { return cfg_; }

    Trajectory sample(Rng& rng) const { return sample_robot_trajectory(state_, horizon_, cfg_, rng); }
    double density(const Trajectory& traj) const { return robot_prior_density(traj, cfg_, grid_); }

    // Nearest feasible trajectory starting at the robot pose.
    Trajectory project(const Trajectory& traj) const {
        Trajectory t = traj;
        t.points.front() = state_.pose;
        return project_feasible(t, cfg_.v_max);
    }

    // Gaussian perturbation of each step displacement.
    Trajectory perturb(const Trajectory& traj, double stddev, Rng& rng) const {
        Trajectory out{traj.start_tick, traj.dt, {traj.front()}};
        for (std::size_t k = 1; k < traj.size(); ++k) {
            const Vec2 noise{normal(rng, stddev), normal(rng, stddev)};
            out.points.push_back(out.back() + (traj[k] - traj[k - 1]) + noise);
        }
        return project(out);
    }

    std::vector<double> tie_key(const Trajectory& traj) const {
        std::vector<double> key;
        key.reserve(2 * traj.size());
        for (const auto& p : traj.points) {
            key.push_back(p.x);
            key.push_back(p.y);
        }
        return key;
    }

    Trajectory stationary() const { return Trajectory{0, cfg_.dt, std::vector<Pose>(horizon_, state_.pose)}; }

private:
    RobotState state_;
    RobotModelConfig cfg_;
    std::size_t horizon_;
    const OccupancyGrid* grid_;
};

// ---------------------------------------------------------------------------
// Crowd predictive model p(f | z^f)

struct AgentTrack {
    int id = 0;
    std::vector<TimedPose> observations;  // z^f, strictly increasing timestamps

    friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

struct CrowdModelConfig {
    double sigma0 = 0.1;   // m
    double sigma_g = 0.05; // m per tick ahead
    double dt = 0.5;       // s
};

// Predictive distribution for one agent: mean[k-1] and stddev[k-1] describe
// the position k ticks after the last observation `origin`.
struct AgentBelief {
    int id = 0;
    Pose origin;
    Trajectory mean;
    std::vector<double> stddev;
    double sigma0 = 0.1;

    // Positions for ticks 0..points-1 where tick 0 is the observation time.
    Trajectory aligned_mean(std::size_t points) const {
        Trajectory t{0, mean.dt, {origin}};
        for (std::size_t k = 1; k < points; ++k) t.points.push_back(mean[std::min(k - 1, mean.size() - 1)]);
        return t;
    }
    double aligned_stddev(std::size_t k) const {
        if (k == 0) return sigma0;
        return stddev[std::min(k - 1, stddev.size() - 1)];
    }
};

struct CrowdBelief {
    std::vector<AgentBelief> agents;

    bool empty() const { return agents.empty(); }
    std::size_t size() const { return agents.size(); }
};

inline CrowdBelief predict_crowd(std::span<const AgentTrack> tracks, std::size_t horizon, const CrowdModelConfig& cfg) {
    if (horizon < 1) throw InvariantViolation("crowd horizon must be >= 1");
    CrowdBelief belief;
    for (const auto& track : tracks) {
        if (track.observations.empty()) throw InvariantViolation("agent track has no observations");
        const auto& last = track.observations.back();
        Velocity v;
        if (track.observations.size() >= 2) {
            const auto& prev = track.observations[track.observations.size() - 2];
            const double span = last.t - prev.t;
            if (!(span > 0.0)) throw InvariantViolation("agent observation timestamps must increase");
            v = (last.pose - prev.pose) / span;
        }
        AgentBelief a{track.id, last.pose, Trajectory{0, cfg.dt, {}}, {}, cfg.sigma0};
        for (std::size_t k = 1; k <= horizon; ++k) {
            a.mean.points.push_back(last.pose + v * (cfg.dt * static_cast<double>(k)));
            a.stddev.push_back(cfg.sigma0 + cfg.sigma_g * static_cast<double>(k));
        }
        belief.agents.push_back(std::move(a));
    }
    return belief;
}

// Tracks whose latest observation lies in the closed disk of `radius` around the robot.
inline std::vector<AgentTrack> visible_tracks(std::span<const AgentTrack> tracks, Pose robot, double radius) {
    if (radius < 0.0) throw InvariantViolation("fov radius must be >= 0");
    std::vector<AgentTrack> out;
    for (const auto& t : tracks)
        if (!t.observations.empty() && distance(t.observations.back().pose, robot) <= radius) out.push_back(t);
    return out;
}

using CrowdSample = std::vector<Trajectory>;

inline CrowdSample crowd_mean(const CrowdBelief& belief, std::size_t points) {
    CrowdSample out;
    for (const auto& a : belief.agents) out.push_back(a.aligned_mean(points));
    return out;
}

// One joint draw: independent isotropic Gaussian noise around each mean point.
inline CrowdSample sample_crowd(const CrowdBelief& belief, std::size_t points, Rng& rng) {
    CrowdSample out;
    for (const auto& a : belief.agents) {
        auto t = a.aligned_mean(points);
        for (std::size_t k = 0; k < points; ++k) {
            const double s = a.aligned_stddev(k);
            t.points[k] = t.points[k] + Vec2{normal(rng, s), normal(rng, s)};
        }
        out.push_back(std::move(t));
    }
    return out;
}

// Unnormalized density of a crowd draw; exactly 1 at the predictive mean.
inline double crowd_density(const CrowdBelief& belief, const CrowdSample& crowd) {
    double log_p = 0.0;
    for (std::size_t i = 0; i < belief.agents.size(); ++i) {
        const auto& a = belief.agents[i];
        const auto mean = a.aligned_mean(crowd[i].size());
        for (std::size_t k = 0; k < crowd[i].size(); ++k) {
            const double s = a.aligned_stddev(k);
            log_p -= squared_distance(crowd[i][k], mean[k]) / (2.0 * s * s);
        }
    }
    return std::exp(log_p);
}

}  // namespace hnav
