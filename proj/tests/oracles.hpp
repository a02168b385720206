#pragma once

// Independent reference implementations used only by tests.

#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <vector>

#include "hnav/suite.hpp"
#include "hnav/trajectory.hpp"

namespace oracle {

// Plain Dijkstra over the 8-connected grid, no heuristic. Diagonal moves may
// not cut an occupied orthogonal neighbour, matching the planner's move rule.
inline double dijkstra_cost(const hnav::OccupancyGrid& g, hnav::Cell s, hnav::Cell t) {
    const int w = g.width(), h = g.height();
    std::vector<double> dist(static_cast<std::size_t>(w * h), std::numeric_limits<double>::infinity());
    auto id = [w](int x, int y) { return static_cast<std::size_t>(y * w + x); };
    auto free = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && !g.occupied({x, y}); };
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[id(s.x, s.y)] = 0.0;
    pq.push({0.0, id(s.x, s.y)});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u]) continue;
        const int x = static_cast<int>(u) % w, y = static_cast<int>(u) / w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                if (!free(x + dx, y + dy)) continue;
                if (dx != 0 && dy != 0 && (!free(x + dx, y) || !free(x, y + dy))) continue;
                const double nd = d + (dx != 0 && dy != 0 ? std::sqrt(2.0) : 1.0) * g.resolution();
                const auto v = id(x + dx, y + dy);
                if (nd < dist[v]) {
                    dist[v] = nd;
                    pq.push({nd, v});
                }
            }
    }
    return dist[id(t.x, t.y)];
}

inline std::vector<double> softmax_neg(const std::vector<double>& lengths, double lambda) {
    std::vector<double> w;
    double total = 0.0;
    for (double l : lengths) {
        w.push_back(std::exp(-lambda * l));
        total += w.back();
    }
    for (auto& x : w) x /= total;
    return w;
}

inline double sq_dev(const std::vector<hnav::Pose>& a, const std::vector<hnav::Pose>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double dx = a[i].x - b[i].x, dy = a[i].y - b[i].y;
        s += dx * dx + dy * dy;
    }
    return s;
}

inline double gauss_agreement(double sq, double h) { return std::exp(-sq / (2.0 * h)); }

inline double repulsion(const std::vector<hnav::Pose>& robot, const std::vector<std::vector<hnav::Pose>>& crowd,
                        double alpha, double sigma_r) {
    double v = 1.0;
    for (const auto& a : crowd)
        for (std::size_t t = 0; t < robot.size(); ++t) {
            const double dx = robot[t].x - a[t].x, dy = robot[t].y - a[t].y;
            v *= 1.0 - alpha * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_r * sigma_r));
        }
    return v;
}

// Signed area of the polygon traced by the path then closed through the
// straight start-goal chord, relative to a point: sign tells which side of
// the point the path passes.
inline double side_of(const std::vector<hnav::Pose>& path, hnav::Pose p) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const auto a = path[i] - p, b = path[i + 1] - p;
        s += a.x * b.y - a.y * b.x;
    }
    const auto a = path.back() - p, b = path.front() - p;
    s += a.x * b.y - a.y * b.x;
    return s;
}

// Exhaustive reference: evaluates every (sequence, configuration) with the
// test oracles' formulas, independent of PlanModel.
// Windows are the first steps+1 plan points; the crowd moves at constant velocity.
struct RefResult {
    std::size_t config = 0;
    double density = -1.0;
};

inline RefResult reference_map(const hnav::OracleInstance& inst) {
    const std::size_t n = inst.steps + 1;
    std::vector<std::vector<std::vector<hnav::Pose>>> windows;
    std::vector<std::vector<double>> weights;
    for (const auto& l : inst.levels) {
        windows.emplace_back();
        weights.emplace_back();
        for (const auto& c : l.distribution.components) {
            windows.back().push_back({c.plan.points.begin(), c.plan.points.begin() + static_cast<long>(n)});
            weights.back().push_back(c.weight);
        }
    }
    std::vector<std::vector<hnav::Pose>> crowd;
    for (const auto& a : inst.crowd) {
        const auto& o = a.observations;
        const hnav::Pose p = o.back().pose;
        const hnav::Vec2 v = o.size() > 1 ? (p - o[o.size() - 2].pose) / (o.back().t - o[o.size() - 2].t) : hnav::Vec2{};
        std::vector<hnav::Pose> traj;
        for (std::size_t k = 0; k < n; ++k) traj.push_back(p + v * (inst.dt * static_cast<double>(k)));
        crowd.push_back(traj);
    }
    std::size_t configs = 1;
    for (const auto& w : weights) configs *= w.size();
    const auto bw = inst.potentials.bandwidths(weights.size());

    RefResult best;
    std::vector<std::size_t> seq(inst.steps, 0);
    const std::size_t na = inst.actions.size();
    for (;;) {
        std::vector<hnav::Pose> robot{inst.start};
        for (auto a : seq) robot.push_back(robot.back() + inst.actions[a] * inst.dt);
        const double rep = repulsion(robot, crowd, inst.potentials.alpha, inst.potentials.sigma_r);
        for (std::size_t c = 0; c < configs; ++c) {
            std::vector<std::size_t> idx(weights.size());
            std::size_t rest = c;
            for (std::size_t j = weights.size(); j-- > 0;) {
                idx[j] = rest % weights[j].size();
                rest /= weights[j].size();
            }
            double d = 1.0;
            for (std::size_t j = 0; j < idx.size(); ++j) d *= weights[j][idx[j]];
            for (std::size_t j = 0; j + 1 < idx.size(); ++j)
                d *= gauss_agreement(sq_dev(windows[j][idx[j]], windows[j + 1][idx[j + 1]]), bw[j]);
            d *= gauss_agreement(sq_dev(windows.back()[idx.back()], robot), bw[weights.size() - 1]) * rep;
            if (d > best.density * (1 + 1e-12)) best = {c, d};
        }
        std::size_t pos = seq.size();
        while (pos > 0 && ++seq[pos - 1] == na) {
            seq[pos - 1] = 0;
            --pos;
        }
        if (pos == 0) break;
    }
    return best;
}

}  // namespace oracle
