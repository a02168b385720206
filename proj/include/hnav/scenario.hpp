#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnav/error.hpp"
#include "hnav/global_planner.hpp"
#include "hnav/inference.hpp"
#include "hnav/local_models.hpp"
#include "hnav/potentials.hpp"
#include "hnav/trajectory.hpp"

namespace hnav {

using json = nlohmann::json;

// Scripted, non-reactive pedestrian: walks the waypoint polyline at `speed`
// (looping back to the first waypoint when `loop`), then stands still.
struct CrowdScript {
    std::vector<Pose> waypoints;
    double speed = 0.0;
    bool loop = false;

    Pose position_at(double t) const {
        if (waypoints.size() == 1 || speed <= 0.0) return waypoints.front();
        std::vector<Pose> poly = waypoints;
        if (loop) poly.push_back(waypoints.front());
        const double total = path_length(std::span<const Pose>(poly));
        if (!(total > 0.0)) return waypoints.front();
        double s = speed * t;
        if (loop) s = std::fmod(s, total);
        for (std::size_t k = 1; k < poly.size(); ++k) {
            const double seg = distance(poly[k - 1], poly[k]);
            if (s <= seg) return seg > 0.0 ? poly[k - 1] + (poly[k] - poly[k - 1]) * (s / seg) : poly[k];
            s -= seg;
        }
        return poly.back();
    }
};

enum class InterventionKind { Joystick, Waypoint, Goal };

inline const char* to_string(InterventionKind k) {
    switch (k) {
        case InterventionKind::Joystick: return "joystick";
        case InterventionKind::Waypoint: return "waypoint";
        case InterventionKind::Goal: return "goal";
    }
    return "?";
}

struct Intervention {
    double t = 0.0;
    InterventionKind kind = InterventionKind::Joystick;
    std::vector<Pose> poses;  // goal: replacement goal set (may be empty); waypoint: one pose
    Velocity command;         // joystick

    friend bool operator==(const Intervention&, const Intervention&) = default;
};

enum class InferenceMethod { Importance, Mh, Brute };

inline const char* to_string(InferenceMethod m) {
    switch (m) {
        case InferenceMethod::Importance: return "importance";
        case InferenceMethod::Mh: return "mh";
        case InferenceMethod::Brute: return "brute";
    }
    return "?";
}

inline InferenceMethod parse_method(const std::string& s) {
    if (s == "importance") return InferenceMethod::Importance;
    if (s == "mh") return InferenceMethod::Mh;
    if (s == "brute") return InferenceMethod::Brute;
    throw SchemaError("config.inference.method", "unknown method '" + s + "'");
}

struct InferenceSettings {
    InferenceMethod method = InferenceMethod::Importance;
    std::size_t samples = 1000;  // importance draws, or MH iterations
    std::uint64_t seed = 1;
    double proposal_std = 0.2;   // MH
    int brute_headings = 8;      // brute: headings at v_max plus a stop action
    CrowdMode crowd = CrowdMode::Sampled;  // importance: one crowd draw per robot draw, or the mean
};

struct ModelSettings {
    double v_max = 1.0;
    double sigma_theta = 0.3;
    double sigma0 = 0.1;
    double sigma_g = 0.05;
    double fov_radius = 5.0;
};

struct Scenario {
    std::string name;
    OccupancyGrid grid;
    Pose robot_start;
    GoalSet goals;
    std::vector<CrowdScript> crowd;
    std::vector<Intervention> interventions;
    std::size_t horizon = 8;  // points per local trajectory, including the current pose
    double dt = 0.5;
    std::size_t tick_limit = 400;
    InferenceSettings inference;
    PotentialConfig potentials;
    ModelSettings models;
    GlobalPlannerConfig global;

    RobotModelConfig robot_model() const { return {models.v_max, models.sigma_theta, dt}; }
    CrowdModelConfig crowd_model() const { return {models.sigma0, models.sigma_g, dt}; }
    GlobalPlannerConfig planner() const {
        auto g = global;
        g.v_nominal = models.v_max;
        g.dt = dt;
        return g;
    }
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

inline std::string index_path(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

inline double number_at(const json& v, const std::string& path) {
    if (!v.is_number()) throw SchemaError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw SchemaError(path, "expected a finite number");
    return x;
}

inline Vec2 vec_at(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2) throw SchemaError(path, "expected [x, y]");
    return {number_at(v[0], path + "[0]"), number_at(v[1], path + "[1]")};
}

inline std::vector<Pose> poses_at(const json& v, const std::string& path) {
    if (!v.is_array()) throw SchemaError(path, "expected an array of [x, y]");
    std::vector<Pose> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(vec_at(v[i], index_path(path, i)));
    return out;
}

inline const json& required(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw SchemaError(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(join_path(path, key), "missing required field");
    return *it;
}

template <class T>
void optional_number(const json& obj, const std::string& key, const std::string& path, T& out) {
    if (!obj.is_object()) throw SchemaError(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) return;
    const double x = number_at(*it, join_path(path, key));
    if constexpr (std::is_integral_v<T>) {
        if (x < 0 || std::floor(x) != x) throw SchemaError(join_path(path, key), "expected a non-negative integer");
    }
    out = static_cast<T>(x);
}

inline const json* optional_object(const json& obj, const std::string& key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) return nullptr;
    if (!it->is_object()) throw SchemaError(join_path(path, key), "expected an object");
    return &*it;
}

inline void check_positive(double x, const std::string& path) {
    if (!(x > 0.0)) throw SchemaError(path, "must be positive");
}

}  // namespace detail

inline void validate(const Scenario& sc) {
    const auto& g = sc.grid;
    if (g.blocked(sc.robot_start)) throw InvariantViolation("robot_start is not on a free in-bounds cell");
    for (std::size_t i = 0; i < sc.goals.size(); ++i)
        if (g.blocked(sc.goals[i]))
            throw InvariantViolation("goals[" + std::to_string(i) + "] is not on a free in-bounds cell");
    for (std::size_t i = 0; i < sc.crowd.size(); ++i) {
        if (sc.crowd[i].waypoints.empty())
            throw InvariantViolation("crowd[" + std::to_string(i) + "] has no waypoints");
        for (const auto& p : sc.crowd[i].waypoints)
            if (!g.contains(p)) throw InvariantViolation("crowd[" + std::to_string(i) + "] waypoint out of bounds");
    }
    for (std::size_t i = 0; i < sc.interventions.size(); ++i) {
        const auto& iv = sc.interventions[i];
        if (i > 0 && iv.t < sc.interventions[i - 1].t)
            throw InvariantViolation("intervention timestamps must be nondecreasing");
        for (const auto& p : iv.poses)
            if (!g.contains(p)) throw InvariantViolation("interventions[" + std::to_string(i) + "] pose out of bounds");
    }
    if (sc.horizon < 2) throw InvariantViolation("horizon must be >= 2");
    if (!(sc.dt > 0.0)) throw InvariantViolation("dt must be positive");
    if (sc.inference.samples < 1) throw InvariantViolation("inference.samples must be >= 1");
    validate(sc.potentials);
}

inline Scenario load_scenario(const json& doc) {
    using namespace detail;
    if (!doc.is_object()) throw SchemaError("", "scenario document must be an object");
    Scenario sc;
    if (auto it = doc.find("name"); it != doc.end() && it->is_string()) sc.name = it->get<std::string>();

    const auto& grid = required(doc, "grid", "");
    const auto& w = required(grid, "width", "grid");
    const auto& h = required(grid, "height", "grid");
    const auto& r = required(grid, "resolution", "grid");
    if (!w.is_number_integer() || w.get<int>() < 1) throw SchemaError("grid.width", "expected an integer >= 1");
    if (!h.is_number_integer() || h.get<int>() < 1) throw SchemaError("grid.height", "expected an integer >= 1");
    check_positive(number_at(r, "grid.resolution"), "grid.resolution");
    sc.grid = OccupancyGrid(w.get<int>(), h.get<int>(), r.get<double>());
    if (auto it = grid.find("occupied_cells"); it != grid.end()) {
        if (!it->is_array()) throw SchemaError("grid.occupied_cells", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto path = index_path("grid.occupied_cells", i);
            const auto& c = (*it)[i];
            if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() || !c[1].is_number_integer())
                throw SchemaError(path, "expected [x, y] integer cell");
            const Cell cell{c[0].get<int>(), c[1].get<int>()};
            if (!sc.grid.in_bounds(cell)) throw SchemaError(path, "cell outside grid");
            sc.grid.set_occupied(cell);
        }
    }
    // Convenience extension: inclusive rectangles [x0, y0, x1, y1].
    if (auto it = grid.find("occupied_rects"); it != grid.end()) {
        if (!it->is_array()) throw SchemaError("grid.occupied_rects", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto path = index_path("grid.occupied_rects", i);
            const auto& c = (*it)[i];
            if (!c.is_array() || c.size() != 4) throw SchemaError(path, "expected [x0, y0, x1, y1]");
            for (const auto& v : c)
                if (!v.is_number_integer()) throw SchemaError(path, "expected integer cells");
            const Cell lo{c[0].get<int>(), c[1].get<int>()}, hi{c[2].get<int>(), c[3].get<int>()};
            if (!sc.grid.in_bounds(lo) || !sc.grid.in_bounds(hi)) throw SchemaError(path, "rectangle outside grid");
            sc.grid.fill(lo, hi);
        }
    }

    sc.robot_start = vec_at(required(doc, "robot_start", ""), "robot_start");
    if (auto it = doc.find("goals"); it != doc.end()) sc.goals = poses_at(*it, "goals");

    if (auto it = doc.find("crowd"); it != doc.end()) {
        if (!it->is_array()) throw SchemaError("crowd", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto path = index_path("crowd", i);
            const auto& a = (*it)[i];
            CrowdScript script;
            script.waypoints = poses_at(required(a, "waypoints", path), join_path(path, "waypoints"));
            if (script.waypoints.empty()) throw SchemaError(join_path(path, "waypoints"), "needs at least one pose");
            optional_number(a, "speed", path, script.speed);
            if (script.speed < 0.0) throw SchemaError(join_path(path, "speed"), "must be >= 0");
            if (auto l = a.find("loop"); l != a.end()) {
                if (!l->is_boolean()) throw SchemaError(join_path(path, "loop"), "expected a boolean");
                script.loop = l->get<bool>();
            }
            sc.crowd.push_back(std::move(script));
        }
    }

    if (auto it = doc.find("interventions"); it != doc.end()) {
        if (!it->is_array()) throw SchemaError("interventions", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto path = index_path("interventions", i);
            const auto& e = (*it)[i];
            Intervention iv;
            iv.t = number_at(required(e, "t", path), join_path(path, "t"));
            const auto& kind = required(e, "kind", path);
            if (!kind.is_string()) throw SchemaError(join_path(path, "kind"), "expected a string");
            const auto& payload = required(e, "payload", path);
            const auto ppath = join_path(path, "payload");
            const auto k = kind.get<std::string>();
            if (k == "joystick") {
                iv.kind = InterventionKind::Joystick;
                iv.command = vec_at(payload, ppath);
            } else if (k == "waypoint") {
                iv.kind = InterventionKind::Waypoint;
                iv.poses = {vec_at(payload, ppath)};
            } else if (k == "goal") {
                iv.kind = InterventionKind::Goal;
                // a single [x, y] or a list of them; an empty list clears all goals
                if (payload.is_array() && payload.size() == 2 && payload[0].is_number())
                    iv.poses = {vec_at(payload, ppath)};
                else
                    iv.poses = poses_at(payload, ppath);
            } else {
                throw SchemaError(join_path(path, "kind"), "expected joystick, waypoint or goal");
            }
            sc.interventions.push_back(std::move(iv));
        }
    }

    if (const json* cfg = optional_object(doc, "config", "")) {
        const std::string cp = "config";
        optional_number(*cfg, "horizon", cp, sc.horizon);
        optional_number(*cfg, "dt", cp, sc.dt);
        optional_number(*cfg, "tick_limit", cp, sc.tick_limit);
        check_positive(sc.dt, "config.dt");
        if (sc.horizon < 2) throw SchemaError("config.horizon", "must be >= 2");
        if (const json* inf = optional_object(*cfg, "inference", cp)) {
            const std::string ip = "config.inference";
            if (auto m = inf->find("method"); m != inf->end()) {
                if (!m->is_string()) throw SchemaError(ip + ".method", "expected a string");
                sc.inference.method = parse_method(m->get<std::string>());
            }
            optional_number(*inf, "samples", ip, sc.inference.samples);
            optional_number(*inf, "seed", ip, sc.inference.seed);
            optional_number(*inf, "proposal_std", ip, sc.inference.proposal_std);
            optional_number(*inf, "brute_headings", ip, sc.inference.brute_headings);
            if (auto c = inf->find("crowd"); c != inf->end()) {
                if (!c->is_string() || (*c != "sampled" && *c != "mean"))
                    throw SchemaError(ip + ".crowd", "expected sampled or mean");
                sc.inference.crowd = *c == "mean" ? CrowdMode::Mean : CrowdMode::Sampled;
            }
            if (sc.inference.samples < 1) throw SchemaError(ip + ".samples", "must be >= 1");
        }
        if (const json* pot = optional_object(*cfg, "potentials", cp)) {
            const std::string pp = "config.potentials";
            optional_number(*pot, "h", pp, sc.potentials.h);
            optional_number(*pot, "alpha", pp, sc.potentials.alpha);
            optional_number(*pot, "sigma_r", pp, sc.potentials.sigma_r);
            check_positive(sc.potentials.h, pp + ".h");
            check_positive(sc.potentials.sigma_r, pp + ".sigma_r");
            if (!(sc.potentials.alpha > 0.0 && sc.potentials.alpha < 1.0))
                throw SchemaError(pp + ".alpha", "must lie in (0, 1)");
        }
        if (const json* mod = optional_object(*cfg, "models", cp)) {
            const std::string mp = "config.models";
            optional_number(*mod, "v_max", mp, sc.models.v_max);
            optional_number(*mod, "sigma_theta", mp, sc.models.sigma_theta);
            optional_number(*mod, "sigma0", mp, sc.models.sigma0);
            optional_number(*mod, "sigma_g", mp, sc.models.sigma_g);
            optional_number(*mod, "fov_radius", mp, sc.models.fov_radius);
            if (sc.models.v_max < 0.0) throw SchemaError(mp + ".v_max", "must be >= 0");
            check_positive(sc.models.sigma0, mp + ".sigma0");
            if (sc.models.fov_radius < 0.0) throw SchemaError(mp + ".fov_radius", "must be >= 0");
        }
        if (const json* glob = optional_object(*cfg, "global", cp)) {
            const std::string gp = "config.global";
            optional_number(*glob, "k", gp, sc.global.k);
            optional_number(*glob, "lambda", gp, sc.global.lambda);
            optional_number(*glob, "rho", gp, sc.global.rho);
            optional_number(*glob, "kappa", gp, sc.global.kappa);
            optional_number(*glob, "window", gp, sc.global.window);
            optional_number(*glob, "penalty_radius", gp, sc.global.penalty_radius);
            if (sc.global.k < 1) throw SchemaError(gp + ".k", "must be >= 1");
            check_positive(sc.global.lambda, gp + ".lambda");
            if (!(sc.global.rho > 1.0)) throw SchemaError(gp + ".rho", "must exceed 1");
        }
    }

    validate(sc);
    return sc;
}

inline Scenario load_scenario(const std::string& text_or_path, bool is_path) {
    json doc;
    try {
        if (is_path) {
            std::ifstream in(text_or_path);
            if (!in) throw SchemaError("", "cannot open scenario file " + text_or_path);
            doc = json::parse(in);
        } else {
            doc = json::parse(text_or_path);
        }
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("malformed JSON: ") + e.what());
    }
    return load_scenario(doc);
}

inline Scenario load_scenario_file(const std::string& path) { return load_scenario(path, true); }

// ---------------------------------------------------------------------------
// Serialization (inverse of load_scenario, occupied cells listed explicitly)

inline json to_json(Vec2 v) { return json::array({v.x, v.y}); }

inline json to_json(std::span<const Pose> poses) {
    json out = json::array();
    for (const auto& p : poses) out.push_back(to_json(p));
    return out;
}

inline json to_json(const Scenario& sc) {
    json cells = json::array();
    for (const auto& c : sc.grid.occupied_cells()) cells.push_back({c.x, c.y});
    json crowd = json::array();
    for (const auto& a : sc.crowd) crowd.push_back({{"waypoints", to_json(a.waypoints)}, {"speed", a.speed}, {"loop", a.loop}});
    json interventions = json::array();
    for (const auto& iv : sc.interventions) {
        json payload = iv.kind == InterventionKind::Joystick ? to_json(iv.command)
                       : iv.kind == InterventionKind::Waypoint ? to_json(iv.poses.front())
                                                               : to_json(iv.poses);
        interventions.push_back({{"t", iv.t}, {"kind", to_string(iv.kind)}, {"payload", payload}});
    }
    return {
        {"name", sc.name},
        {"grid", {{"width", sc.grid.width()}, {"height", sc.grid.height()}, {"resolution", sc.grid.resolution()},
                  {"occupied_cells", cells}}},
        {"robot_start", to_json(sc.robot_start)},
        {"goals", to_json(sc.goals)},
        {"crowd", crowd},
        {"interventions", interventions},
        {"config",
         {{"horizon", sc.horizon},
          {"dt", sc.dt},
          {"tick_limit", sc.tick_limit},
          {"inference",
           {{"method", to_string(sc.inference.method)},
            {"samples", sc.inference.samples},
            {"seed", sc.inference.seed},
            {"proposal_std", sc.inference.proposal_std},
            {"brute_headings", sc.inference.brute_headings}}},
          {"potentials", {{"h", sc.potentials.h}, {"alpha", sc.potentials.alpha}, {"sigma_r", sc.potentials.sigma_r}}},
          {"models",
           {{"v_max", sc.models.v_max},
            {"sigma_theta", sc.models.sigma_theta},
            {"sigma0", sc.models.sigma0},
            {"sigma_g", sc.models.sigma_g},
            {"fov_radius", sc.models.fov_radius}}},
          {"global",
           {{"k", sc.global.k},
            {"lambda", sc.global.lambda},
            {"rho", sc.global.rho},
            {"kappa", sc.global.kappa},
            {"window", sc.global.window},
            {"penalty_radius", sc.global.penalty_radius}}}}},
    };
}

}  // namespace hnav
