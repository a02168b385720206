#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hnav/error.hpp"

namespace hnav {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
    friend Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
    friend Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }

    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

// Planar position in meters. Velocities reuse Vec2 in m/s.
using Pose = Vec2;
using Velocity = Vec2;

inline double distance(Pose a, Pose b) { return (a - b).norm(); }
inline double squared_distance(Pose a, Pose b) { return (a - b).squared_norm(); }

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// Unsigned angle in [0, pi] between two nonzero vectors.
inline double angle_between(Vec2 a, Vec2 b) {
    const double cross = a.x * b.y - a.y * b.x;
    return std::abs(std::atan2(cross, dot(a, b)));
}

inline Vec2 clamp_norm(Vec2 v, double max_norm) {
    const double n = v.norm();
    if (n > max_norm && n > 0.0) return v * (max_norm / n);
    return v;
}

struct TimedPose {
    double t = 0.0;
    Pose pose;

    friend bool operator==(const TimedPose&, const TimedPose&) = default;
};

// Uniformly sampled planar path. points[k] is the pose at tick start_tick + k.
struct Trajectory {
    std::int64_t start_tick = 0;
    double dt = 1.0;
    std::vector<Pose> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    const Pose& front() const { return points.front(); }
    const Pose& back() const { return points.back(); }
    const Pose& operator[](std::size_t i) const { return points[i]; }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline void validate(const Trajectory& traj) {
    if (traj.points.empty()) throw InvalidTrajectory("trajectory has no points");
    if (!(traj.dt > 0.0) || !std::isfinite(traj.dt)) throw InvalidTrajectory("dt must be positive");
    for (const auto& p : traj.points)
        if (!p.finite()) throw InvalidTrajectory("non-finite trajectory point");
}

// Every step displacement is at most v_max * dt (with a small absolute slack).
inline bool kinematically_feasible(const Trajectory& traj, double v_max, double slack = 1e-9) {
    const double limit = v_max * traj.dt + slack;
    for (std::size_t k = 1; k < traj.size(); ++k)
        if (distance(traj[k - 1], traj[k]) > limit) return false;
    return true;
}

inline double path_length(std::span<const Pose> points) {
    double len = 0.0;
    for (std::size_t k = 1; k < points.size(); ++k) len += distance(points[k - 1], points[k]);
    return len;
}

inline double path_length(const Trajectory& traj) { return path_length(std::span<const Pose>(traj.points)); }

// Linear interpolation onto `horizon` points spaced `dt` apart. Past the end
// of the input the final pose is held.
inline Trajectory resample(const Trajectory& traj, double dt, std::size_t horizon) {
    if (traj.points.empty()) throw InvalidTrajectory("cannot resample an empty trajectory");
    if (!(dt > 0.0)) throw InvalidTrajectory("resample dt must be positive");
    if (horizon < 1) throw InvalidTrajectory("resample horizon must be >= 1");

    Trajectory out{traj.start_tick, dt, {}};
    out.points.reserve(horizon);
    const double ratio = dt / traj.dt;
    const std::size_t last = traj.size() - 1;
    for (std::size_t k = 0; k < horizon; ++k) {
        const double s = static_cast<double>(k) * ratio;
        const double base = std::floor(s);
        if (base >= static_cast<double>(last)) {
            out.points.push_back(traj.back());
            continue;
        }
        const auto i = static_cast<std::size_t>(base);
        const double frac = s - base;
        if (frac == 0.0) {
            out.points.push_back(traj[i]);
        } else {
            out.points.push_back(traj[i] + (traj[i + 1] - traj[i]) * frac);
        }
    }
    return out;
}

inline void check_aligned(const Trajectory& a, const Trajectory& b) {
    if (a.size() != b.size())
        throw AlignmentError("trajectory lengths differ: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    if (std::abs(a.dt - b.dt) > 1e-12 * std::max(a.dt, b.dt))
        throw AlignmentError("trajectory time steps differ");
}

// Sum over ticks of the squared pointwise distance.
inline double squared_deviation(const Trajectory& a, const Trajectory& b) {
    check_aligned(a, b);
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) sum += squared_distance(a[k], b[k]);
    return sum;
}

// Index of the plan point nearest `pose`; equal distances resolve to the later index.
inline std::size_t project_progress(const Trajectory& plan, Pose pose) {
    if (plan.points.empty()) throw InvalidTrajectory("cannot project onto an empty plan");
    std::size_t best = 0;
    double best_d = squared_distance(plan[0], pose);
    for (std::size_t k = 1; k < plan.size(); ++k) {
        const double d = squared_distance(plan[k], pose);
        if (d <= best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

// The part of a long plan that a local trajectory of `horizon` points at `dt`
// is compared against: starts at the projected progress point.
inline Trajectory plan_window(const Trajectory& plan, Pose pose, double dt, std::size_t horizon) {
    const std::size_t idx = project_progress(plan, pose);
    Trajectory tail{plan.start_tick + static_cast<std::int64_t>(idx), plan.dt,
                    {plan.points.begin() + static_cast<std::ptrdiff_t>(idx), plan.points.end()}};
    auto w = resample(tail, dt, horizon);
    w.start_tick = 0;
    return w;
}

// Re-parameterizes a polyline by arc length so consecutive points are
// `speed * dt` apart; the exact final vertex is always kept.
inline Trajectory retime(std::span<const Pose> polyline, double speed, double dt) {
    if (polyline.empty()) throw InvalidTrajectory("cannot retime an empty polyline");
    Trajectory out{0, dt, {polyline.front()}};
    const double step = speed * dt;
    if (!(step > 0.0) || polyline.size() == 1) {
        if (polyline.size() > 1 && polyline.back() != polyline.front()) out.points.push_back(polyline.back());
        return out;
    }
    double carried = 0.0;  // arc length travelled since the last emitted point
    for (std::size_t k = 1; k < polyline.size(); ++k) {
        const Pose a = polyline[k - 1];
        const Pose b = polyline[k];
        const double seg = distance(a, b);
        double pos = step - carried;  // distance along this segment of the next emission
        while (pos <= seg + 1e-12) {
            out.points.push_back(a + (b - a) * (seg > 0.0 ? std::min(pos / seg, 1.0) : 0.0));
            pos += step;
        }
        carried = seg - (pos - step);
    }
    if (distance(out.back(), polyline.back()) > 1e-9) out.points.push_back(polyline.back());
    return out;
}

// Integer cell coordinates inside an OccupancyGrid.
struct Cell {
    int x = 0;
    int y = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

// Static map; cell (x, y) covers [x*res, (x+1)*res) x [y*res, (y+1)*res).
class OccupancyGrid {
public:
    OccupancyGrid() = default;

    OccupancyGrid(int width, int height, double resolution)
        : width_(width), height_(height), resolution_(resolution) {
        if (width < 1 || height < 1) throw InvariantViolation("grid dimensions must be >= 1");
        if (!(resolution > 0.0)) throw InvariantViolation("grid resolution must be positive");
        occupied_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), false);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    double resolution() const { return resolution_; }
    std::size_t cell_count() const { return occupied_.size(); }

    bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }

    std::size_t index(Cell c) const {
        return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.x);
    }
    Cell cell_at(std::size_t index) const {
        return {static_cast<int>(index % static_cast<std::size_t>(width_)),
                static_cast<int>(index / static_cast<std::size_t>(width_))};
    }

    bool occupied(Cell c) const { return occupied_[index(c)]; }
    void set_occupied(Cell c, bool value = true) {
        if (!in_bounds(c)) throw OutOfBounds("cell outside grid");
        occupied_[index(c)] = value;
    }

    // Marks the inclusive rectangle [x0, x1] x [y0, y1].
    void fill(Cell lo, Cell hi, bool value = true) {
        for (int y = lo.y; y <= hi.y; ++y)
            for (int x = lo.x; x <= hi.x; ++x) set_occupied({x, y}, value);
    }

    Cell cell_of(Pose p) const {
        return {static_cast<int>(std::floor(p.x / resolution_)), static_cast<int>(std::floor(p.y / resolution_))};
    }
    Pose center(Cell c) const { return {(c.x + 0.5) * resolution_, (c.y + 0.5) * resolution_}; }

    bool contains(Pose p) const { return p.finite() && in_bounds(cell_of(p)); }

    // Out-of-bounds poses count as blocked.
    bool blocked(Pose p) const {
        if (!contains(p)) return true;
        return occupied(cell_of(p));
    }

    std::vector<Cell> occupied_cells() const {
        std::vector<Cell> out;
        for (std::size_t i = 0; i < occupied_.size(); ++i)
            if (occupied_[i]) out.push_back(cell_at(i));
        return out;
    }

    friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

private:
    int width_ = 1;
    int height_ = 1;
    double resolution_ = 1.0;
    std::vector<char> occupied_ = std::vector<char>(1, 0);
};

}  // namespace hnav
