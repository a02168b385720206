#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <vector>

#include "hnav/error.hpp"
#include "hnav/trajectory.hpp"

namespace hnav {

// ---------------------------------------------------------------------------
// Operator evidence

using GoalSet = std::vector<Pose>;

struct JoystickSample {
    double t = 0.0;
    Velocity command;

    friend bool operator==(const JoystickSample&, const JoystickSample&) = default;
};

struct OperatorEvidence {
    GoalSet goals;
    std::vector<TimedPose> waypoints;       // pending, in timestamp order
    std::vector<JoystickSample> joystick;   // z^h, nondecreasing timestamps

    friend bool operator==(const OperatorEvidence&, const OperatorEvidence&) = default;
};

inline void validate(const OperatorEvidence& ev) {
    for (std::size_t i = 1; i < ev.waypoints.size(); ++i)
        if (ev.waypoints[i].t < ev.waypoints[i - 1].t) throw InvariantViolation("waypoint timestamps decrease");
    for (std::size_t i = 1; i < ev.joystick.size(); ++i)
        if (ev.joystick[i].t < ev.joystick[i - 1].t) throw InvariantViolation("joystick timestamps decrease");
}

// Nonzero joystick commands with timestamp in (now - window, now].
inline std::vector<JoystickSample> joystick_window(const OperatorEvidence& ev, double now, double window) {
    std::vector<JoystickSample> out;
    for (const auto& s : ev.joystick)
        if (s.t > now - window && s.t <= now && s.command.norm() > 1e-12) out.push_back(s);
    return out;
}

// ---------------------------------------------------------------------------
// Plan distribution

struct PlanComponent {
    double weight = 0.0;
    Trajectory plan;
    int id = 0;  // stable identity of the plan within one distribution build

    friend bool operator==(const PlanComponent&, const PlanComponent&) = default;
};

// Finite delta-mixture over global plans, sorted by descending weight.
struct GlobalPlanDistribution {
    std::vector<PlanComponent> components;
    bool assistive = false;  // plan inferred from joystick input alone

    std::size_t size() const { return components.size(); }
    bool empty() const { return components.empty(); }
    const PlanComponent& operator[](std::size_t i) const { return components[i]; }

    friend bool operator==(const GlobalPlanDistribution&, const GlobalPlanDistribution&) = default;
};

inline void sort_components(GlobalPlanDistribution& dist) {
    std::stable_sort(dist.components.begin(), dist.components.end(),
                     [](const PlanComponent& a, const PlanComponent& b) { return a.weight > b.weight; });
}

inline void normalize(GlobalPlanDistribution& dist) {
    double total = 0.0;
    for (const auto& c : dist.components) total += c.weight;
    for (auto& c : dist.components) c.weight /= total;
}

inline void validate(const GlobalPlanDistribution& dist) {
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (!(dist[i].weight > 0.0)) throw InvariantViolation("component weight must be positive");
        if (i > 0 && dist[i].weight > dist[i - 1].weight) throw InvariantViolation("components not sorted");
        total += dist[i].weight;
    }
    if (!dist.empty() && std::abs(total - 1.0) > 1e-9) throw InvariantViolation("weights do not sum to 1");
}

// ---------------------------------------------------------------------------
// A*

struct GridPath {
    std::vector<Cell> cells;
    double cost = 0.0;  // meters, including any penalty multipliers
};

namespace detail {

inline double octile(Cell a, Cell b) {
    const double dx = std::abs(a.x - b.x);
    const double dy = std::abs(a.y - b.y);
    return std::max(dx, dy) + (std::numbers::sqrt2 - 1.0) * std::min(dx, dy);
}

struct Move {
    int dx, dy;
    double cost;
};

inline constexpr Move kMoves[8] = {
    {1, 0, 1.0},  {-1, 0, 1.0}, {0, 1, 1.0},  {0, -1, 1.0},
    {1, 1, std::numbers::sqrt2}, {1, -1, std::numbers::sqrt2}, {-1, 1, std::numbers::sqrt2}, {-1, -1, std::numbers::sqrt2},
};

}  // namespace detail

// Whether the 8-connected move from `c` by (dx, dy) is allowed: target free,
// and a diagonal may not clip an occupied orthogonal neighbour.
inline bool move_allowed(const OccupancyGrid& grid, Cell c, int dx, int dy) {
    const Cell n{c.x + dx, c.y + dy};
    if (!grid.in_bounds(n) || grid.occupied(n)) return false;
    if (dx != 0 && dy != 0) {
        if (grid.occupied({c.x + dx, c.y}) || grid.occupied({c.x, c.y + dy})) return false;
    }
    return true;
}

// Minimum-cost 8-connected path. `cell_factor`, when non-empty, multiplies
// the cost of every move into a cell (all factors must be >= 1 to keep the
// octile heuristic admissible).
inline GridPath astar_search(const OccupancyGrid& grid, Cell start, Cell goal,
                             std::span<const double> cell_factor = {}) {
    if (!grid.in_bounds(start) || grid.occupied(start)) throw InvalidEndpoint("start cell is not free");
    if (!grid.in_bounds(goal) || grid.occupied(goal)) throw InvalidEndpoint("goal cell is not free");

    const std::size_t n = grid.cell_count();
    const double res = grid.resolution();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> g(n, inf);
    std::vector<std::size_t> parent(n, n);
    std::vector<char> closed(n, 0);

    struct Entry {
        double f, h;
        std::size_t idx;
        bool operator>(const Entry& o) const {
            if (f != o.f) return f > o.f;
            if (h != o.h) return h > o.h;
            return idx > o.idx;
        }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

    const std::size_t s = grid.index(start);
    const std::size_t t = grid.index(goal);
    g[s] = 0.0;
    open.push({detail::octile(start, goal) * res, detail::octile(start, goal) * res, s});

    while (!open.empty()) {
        const Entry top = open.top();
        open.pop();
        if (closed[top.idx]) continue;
        closed[top.idx] = true;
        if (top.idx == t) break;
        const Cell c = grid.cell_at(top.idx);
        for (const auto& m : detail::kMoves) {
            if (!move_allowed(grid, c, m.dx, m.dy)) continue;
            const Cell nc{c.x + m.dx, c.y + m.dy};
            const std::size_t ni = grid.index(nc);
            if (closed[ni]) continue;
            const double factor = cell_factor.empty() ? 1.0 : cell_factor[ni];
            const double cand = g[top.idx] + m.cost * res * factor;
            if (cand < g[ni]) {
                g[ni] = cand;
                parent[ni] = top.idx;
                const double h = detail::octile(nc, goal) * res;
                open.push({cand + h, h, ni});
            }
        }
    }
    if (!closed[t]) throw NoPath("no path between start and goal");

    GridPath path;
    path.cost = g[t];
    for (std::size_t i = t; i != n; i = parent[i]) path.cells.push_back(grid.cell_at(i));
    std::reverse(path.cells.begin(), path.cells.end());
    return path;
}

inline Trajectory cells_to_trajectory(const OccupancyGrid& grid, std::span<const Cell> cells) {
    Trajectory traj{0, 1.0, {}};
    traj.points.reserve(cells.size());
    for (const auto& c : cells) traj.points.push_back(grid.center(c));
    return traj;
}

// Grid path between the cells containing start and goal, as cell centers
// (one cell per nominal tick).
inline Trajectory astar(const OccupancyGrid& grid, Pose start, Pose goal) {
    if (!grid.contains(start) || !grid.contains(goal)) throw InvalidEndpoint("endpoint outside grid");
    const auto path = astar_search(grid, grid.cell_of(start), grid.cell_of(goal));
    return cells_to_trajectory(grid, path.cells);
}

// ---------------------------------------------------------------------------
// Diverse plans

struct DiversityConfig {
    int k = 3;
    double rho = 2.0;        // multiplicative penalty per previous use
    int penalty_radius = 2;  // cells around a used cell that share its penalty
};

struct RoutePlan {
    std::vector<Cell> cells;
    double length = 0.0;  // geometric length in meters
};

// Up to k distinct routes through `via` (start, intermediate waypoints, goal),
// found by re-running A* with a compounding penalty on cells near earlier
// attempts. The first route is the unpenalized optimum.
inline std::vector<RoutePlan> k_diverse_routes(const OccupancyGrid& grid, std::span<const Pose> via,
                                               const DiversityConfig& cfg) {
    if (cfg.k < 1) throw InvariantViolation("k must be >= 1");
    if (!(cfg.rho > 1.0)) throw InvariantViolation("rho must exceed 1");
    if (via.size() < 2) throw InvalidEndpoint("route needs a start and a goal");
    std::vector<Cell> anchors;
    for (const auto& p : via) {
        if (!grid.contains(p)) throw InvalidEndpoint("route point outside grid");
        anchors.push_back(grid.cell_of(p));
    }

    std::vector<double> factor(grid.cell_count(), 1.0);
    std::vector<RoutePlan> plans;
    const int max_attempts = cfg.k * 4;
    for (int attempt = 0; attempt < max_attempts && static_cast<int>(plans.size()) < cfg.k; ++attempt) {
        RoutePlan route;
        for (std::size_t leg = 0; leg + 1 < anchors.size(); ++leg) {
            const auto part = astar_search(grid, anchors[leg], anchors[leg + 1], factor);
            auto first = part.cells.begin();
            if (!route.cells.empty() && !part.cells.empty() && route.cells.back() == part.cells.front()) ++first;
            route.cells.insert(route.cells.end(), first, part.cells.end());
        }
        const auto traj = cells_to_trajectory(grid, route.cells);
        route.length = path_length(traj);

        const bool fresh = std::none_of(plans.begin(), plans.end(),
                                        [&](const RoutePlan& p) { return p.cells == route.cells; });

        std::vector<char> touched(grid.cell_count(), 0);
        for (const auto& c : route.cells) {
            for (int dy = -cfg.penalty_radius; dy <= cfg.penalty_radius; ++dy)
                for (int dx = -cfg.penalty_radius; dx <= cfg.penalty_radius; ++dx) {
                    const Cell n{c.x + dx, c.y + dy};
                    if (grid.in_bounds(n)) touched[grid.index(n)] = true;
                }
        }
        for (std::size_t i = 0; i < touched.size(); ++i)
            if (touched[i]) factor[i] *= cfg.rho;

        if (fresh) plans.push_back(std::move(route));
    }
    return plans;
}

inline std::vector<Trajectory> k_diverse_plans(const OccupancyGrid& grid, Pose start, Pose goal, int k,
                                               double rho = 2.0, int penalty_radius = 2) {
    const Pose via[2] = {start, goal};
    const auto routes = k_diverse_routes(grid, via, {k, rho, penalty_radius});
    std::vector<Trajectory> out;
    for (const auto& r : routes) out.push_back(cells_to_trajectory(grid, r.cells));
    return out;
}

// Softmax over negative plan length: w_i proportional to exp(-lambda * length_i).
inline std::vector<double> plan_weights(std::span<const double> lengths, double lambda) {
    if (lengths.empty()) throw InvariantViolation("plan_weights needs at least one plan");
    if (!(lambda > 0.0)) throw InvariantViolation("lambda must be positive");
    const double shortest = *std::min_element(lengths.begin(), lengths.end());
    std::vector<double> w;
    w.reserve(lengths.size());
    double total = 0.0;
    for (double len : lengths) {
        w.push_back(std::exp(-lambda * (len - shortest)));
        total += w.back();
    }
    for (auto& x : w) x /= total;
    return w;
}

inline std::vector<double> plan_weights(std::span<const Trajectory> plans, double lambda) {
    std::vector<double> lengths;
    for (const auto& p : plans) lengths.push_back(path_length(p));
    return plan_weights(std::span<const double>(lengths), lambda);
}

// ---------------------------------------------------------------------------
// Distribution construction

struct GlobalPlannerConfig {
    int k = 3;
    double lambda = 0.3;       // 1/m
    double rho = 2.0;
    int penalty_radius = 2;    // cells
    double kappa = 2.0;        // joystick agreement sharpness, 1/rad^2
    double window = 1.5;       // joystick window, seconds
    double v_nominal = 1.0;    // m/s used to time-parameterize plans
    double dt = 0.5;           // s
    int direction_lookahead = 2;  // plan points used for the local heading
};

// Local heading of a plan at the robot's projected progress point.
inline Vec2 plan_direction(const Trajectory& plan, Pose robot, int lookahead) {
    const std::size_t idx = project_progress(plan, robot);
    const std::size_t ahead = std::min(plan.size() - 1, idx + static_cast<std::size_t>(std::max(lookahead, 1)));
    if (ahead != idx) return plan[ahead] - plan[idx];
    if (idx > 0) return plan[idx] - plan[idx - 1];
    return {};
}

// Mean squared angle between each joystick sample and the plan's local direction.
inline double joystick_misalignment(const Trajectory& plan, Pose robot, std::span<const JoystickSample> window,
                                    int lookahead = 2) {
    if (window.empty()) return 0.0;
    const Vec2 dir = plan_direction(plan, robot, lookahead);
    double sum = 0.0;
    for (const auto& s : window) {
        // A plan that has already arrived has no heading; treat it as orthogonal.
        const double a = dir.norm() > 1e-12 ? angle_between(s.command, dir) : std::numbers::pi / 2.0;
        sum += a * a;
    }
    return sum / static_cast<double>(window.size());
}

// Multiplies each weight by exp(-kappa * misalignment) and renormalizes. The
// component set is never changed.
inline GlobalPlanDistribution condition_on_joystick(GlobalPlanDistribution dist, Pose robot,
                                                    std::span<const JoystickSample> window,
                                                    const GlobalPlannerConfig& cfg) {
    if (window.empty() || dist.empty()) return dist;
    // Work in log space against the largest term so tiny weights do not underflow.
    std::vector<double> logw;
    for (const auto& c : dist.components)
        logw.push_back(std::log(c.weight) - cfg.kappa * joystick_misalignment(c.plan, robot, window,
                                                                              cfg.direction_lookahead));
    const double top = *std::max_element(logw.begin(), logw.end());
    for (std::size_t i = 0; i < dist.size(); ++i) dist.components[i].weight = std::exp(logw[i] - top);
    normalize(dist);
    sort_components(dist);
    return dist;
}

// Straight ray from `robot` along `direction`, sampled every v_nominal*dt and
// stopped before the first blocked sample.
inline Trajectory assistive_ray(const OccupancyGrid& grid, Pose robot, Vec2 direction,
                                const GlobalPlannerConfig& cfg) {
    Trajectory ray{0, cfg.dt, {robot}};
    const double n = direction.norm();
    if (!(n > 1e-12)) return ray;
    const Vec2 step = direction * (cfg.v_nominal * cfg.dt / n);
    const double diagonal = std::hypot(grid.width(), grid.height()) * grid.resolution();
    const auto limit = static_cast<std::size_t>(std::ceil(diagonal / (cfg.v_nominal * cfg.dt))) + 2;
    for (std::size_t k = 1; k < limit; ++k) {
        const Pose next = robot + step * static_cast<double>(k);
        if (grid.blocked(next)) break;
        ray.points.push_back(next);
    }
    return ray;
}

// Goal- and waypoint-derived plans, weighted by length only.
inline GlobalPlanDistribution goals_only_distribution(const OccupancyGrid& grid, Pose robot,
                                                      const OperatorEvidence& ev,
                                                      const GlobalPlannerConfig& cfg) {
    std::vector<Pose> targets = ev.goals;
    std::vector<Pose> via_prefix{robot};
    for (const auto& wp : ev.waypoints) via_prefix.push_back(wp.pose);
    if (targets.empty()) {
        // waypoints alone: the last one acts as the goal
        targets.push_back(via_prefix.back());
        via_prefix.pop_back();
    }

    std::vector<Trajectory> plans;
    std::vector<double> lengths;
    for (const auto& goal : targets) {
        auto via = via_prefix;
        via.push_back(goal);
        std::vector<RoutePlan> routes;
        try {
            routes = k_diverse_routes(grid, via, {cfg.k, cfg.rho, cfg.penalty_radius});
        } catch (const NoPath&) {
            continue;
        } catch (const InvalidEndpoint&) {
            continue;
        }
        for (const auto& r : routes) {
            auto poly = cells_to_trajectory(grid, r.cells).points;
            poly.front() = robot;
            poly.back() = goal;
            plans.push_back(retime(poly, cfg.v_nominal, cfg.dt));
            lengths.push_back(r.length);
        }
    }
    if (plans.empty()) throw NoPath("no goal is reachable");

    const auto w = plan_weights(std::span<const double>(lengths), cfg.lambda);
    GlobalPlanDistribution dist;
    for (std::size_t i = 0; i < plans.size(); ++i)
        dist.components.push_back({w[i], std::move(plans[i]), static_cast<int>(i)});
    sort_components(dist);
    // ids follow the goals-only ranking so they survive reweighting
    for (std::size_t i = 0; i < dist.size(); ++i) dist.components[i].id = static_cast<int>(i);
    return dist;
}

inline GlobalPlanDistribution assistive_distribution(const OccupancyGrid& grid, Pose robot,
                                                     std::span<const JoystickSample> window,
                                                     const GlobalPlannerConfig& cfg) {
    Vec2 mean;
    for (const auto& s : window) mean = mean + s.command;
    if (window.empty() || !(mean.norm() > 1e-12)) throw NoEvidence("no goals and no recent joystick input");
    GlobalPlanDistribution dist;
    dist.assistive = true;
    dist.components.push_back({1.0, assistive_ray(grid, robot, mean, cfg), 0});
    return dist;
}

// p(eta_0 | G, m, z^h): goals (through pending waypoints) reweighted by the
// recent joystick window, or a single joystick ray when no goal exists.
inline GlobalPlanDistribution build_distribution(const OccupancyGrid& grid, Pose robot, const OperatorEvidence& ev,
                                                 double now, const GlobalPlannerConfig& cfg) {
    const auto window = joystick_window(ev, now, cfg.window);
    if (ev.goals.empty() && ev.waypoints.empty()) return assistive_distribution(grid, robot, window, cfg);
    return condition_on_joystick(goals_only_distribution(grid, robot, ev, cfg), robot, window, cfg);
}

}  // namespace hnav
