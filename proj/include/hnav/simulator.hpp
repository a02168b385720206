#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnav/global_planner.hpp"
#include "hnav/inference.hpp"
#include "hnav/local_models.hpp"
#include "hnav/random.hpp"
#include "hnav/scenario.hpp"

namespace hnav {

inline constexpr double kCollisionDistance = 0.3;  // m

// Everything one tick decided, plus the inputs needed to replay the decision.
struct TickRecord {
    std::size_t tick = 0;
    double t = 0.0;
    Pose pose;            // robot pose when the decision was made
    Velocity velocity;    // robot velocity entering the tick
    Velocity command;     // next_action applied this tick
    std::vector<AgentTrack> visible;  // crowd tracks inside the field of view
    std::shared_ptr<const GlobalPlanDistribution> distribution;  // effective p(eta_0 | .) this tick
    std::uint64_t seed = 0;
    std::optional<std::size_t> component;  // chosen configuration index
    int plan_id = -1;
    double density = 0.0;
    std::vector<ComponentMass> masses;
    std::vector<WeightedSample> thinned;
    std::uint64_t generation = 0;  // bumps whenever the plan set is rebuilt
    bool assistive = false;
    bool joystick_active = false;
    std::size_t goals = 0;
    std::size_t waypoints = 0;
    double min_separation = std::numeric_limits<double>::infinity();  // to visible agents
};

struct RunSummary {
    std::size_t ticks = 0;
    bool reached_goal = false;
    std::optional<std::size_t> ticks_to_goal;
    double path_length = 0.0;
    double min_separation = std::numeric_limits<double>::infinity();
    std::size_t component_switches = 0;
    std::size_t collisions = 0;
    std::string termination;  // "goal" or "tick_limit"
};

struct RunLog {
    std::vector<TickRecord> records;
    RunSummary summary;
};

// Discrete action set used by the brute-force method: `headings` directions
// at v_max plus a stop action.
inline std::vector<Velocity> heading_actions(int headings, double v_max) {
    std::vector<Velocity> actions{{0.0, 0.0}};
    for (int i = 0; i < headings; ++i) {
        const double a = 2.0 * std::numbers::pi * i / headings;
        actions.push_back({v_max * std::cos(a), v_max * std::sin(a)});
    }
    return actions;
}

// The configured MAP inference for one tick. Shared by the live loop and by
// offline replay of logged ticks.
inline InferenceReport run_inference(const Scenario& sc, const GlobalPlanDistribution& dist, const RobotState& robot,
                                     std::span<const AgentTrack> visible, std::uint64_t seed) {
    const PlanModel model(dist, robot.pose, sc.dt, sc.horizon, sc.potentials);
    const auto belief = predict_crowd(visible, sc.horizon, sc.crowd_model());
    const auto robot_cfg = sc.robot_model();
    switch (sc.inference.method) {
        case InferenceMethod::Importance: {
            const PrimitivePrior prior(robot, robot_cfg, sc.horizon, &sc.grid);
            ImportanceConfig cfg;
            cfg.samples = sc.inference.samples;
            cfg.seed = seed;
            cfg.crowd = sc.inference.crowd;
            return importance_sample_map(model, prior, belief, cfg);
        }
        case InferenceMethod::Mh: {
            const PrimitivePrior prior(robot, robot_cfg, sc.horizon, &sc.grid);
            MhConfig cfg;
            cfg.iterations = sc.inference.samples;
            cfg.seed = seed;
            cfg.proposal_std = sc.inference.proposal_std;
            return mh_sample_map(model, prior, belief, cfg);
        }
        case InferenceMethod::Brute: {
            const OccupancyGrid* grid = &sc.grid;
            const DiscreteActionPrior prior(robot.pose, heading_actions(sc.inference.brute_headings, sc.models.v_max),
                                            sc.horizon - 1, sc.dt, [robot_cfg, grid](const Trajectory& t) {
                                                return robot_prior_density(t, robot_cfg, grid);
                                            });
            InferenceReport report;
            report.assignment = brute_force_map(model, prior, belief);
            report.seed = seed;
            report.samples_used = 1;
            report.thinned.push_back({report.assignment.robot, report.assignment.density});
            for (std::size_t c = 0; c < model.config_count(); ++c)
                report.per_component_mass.push_back(
                    {c, c == report.assignment.config ? report.assignment.density : 0.0, 0.0});
            return report;
        }
    }
    throw InvariantViolation("unknown inference method");
}

// Deterministic receding-horizon world. Each tick: fold pending operator
// events, observe the crowd, gate it by the field of view, (re)build the plan
// distribution, run MAP inference and execute the first action of f^R*.
class Simulator {
public:
    explicit Simulator(Scenario scenario) : sc_(std::move(scenario)) {
        validate(sc_);
        robot_.pose = sc_.robot_start;
        robot_.history.push_back({0.0, robot_.pose});
        evidence_.goals = sc_.goals;
        tracks_.resize(sc_.crowd.size());
        for (std::size_t i = 0; i < tracks_.size(); ++i) tracks_[i].id = static_cast<int>(i);
        rebuild_plans();
        if (at_goal()) finish("goal");
    }

    const Scenario& scenario() const { return sc_; }
    const RobotState& robot() const { return robot_; }
    const OperatorEvidence& evidence() const { return evidence_; }
    const RunLog& log() const { return log_; }
    bool finished() const { return finished_; }
    std::size_t tick_count() const { return tick_; }
    double now() const { return static_cast<double>(tick_) * sc_.dt; }

    // Plan set the next tick would use before joystick conditioning.
    const GlobalPlanDistribution& base_distribution() const { return base_; }

    // Crowd positions at the current time (ground truth, not FOV gated).
    std::vector<Pose> crowd_positions() const {
        std::vector<Pose> out;
        for (const auto& s : sc_.crowd) out.push_back(s.position_at(now()));
        return out;
    }

    // External event, folded in at the next tick boundary. Its timestamp is
    // overwritten with the simulation clock.
    void enqueue(Intervention iv) {
        iv.t = now();
        if (iv.kind == InterventionKind::Joystick) iv.command = clamp_norm(iv.command, sc_.models.v_max);
        queue_.push_back(std::move(iv));
    }

    std::size_t pending_events() const { return queue_.size(); }

    // Effective distribution for the current state (what the next tick starts from).
    GlobalPlanDistribution preview_distribution() const { return effective_distribution(); }

    const TickRecord& tick() {
        if (finished_) throw InvariantViolation("simulation already finished");
        const double t = now();
        fold_events(t);
        observe_crowd(t);
        if (dirty_) rebuild_plans();

        TickRecord rec;
        rec.tick = tick_;
        rec.t = t;
        rec.pose = robot_.pose;
        rec.velocity = robot_.velocity;
        rec.visible = visible_tracks(tracks_, robot_.pose, sc_.models.fov_radius);
        rec.seed = mix_seed(sc_.inference.seed, tick_);
        rec.generation = generation_;
        rec.goals = evidence_.goals.size();
        rec.waypoints = evidence_.waypoints.size();
        rec.joystick_active = !joystick_window(evidence_, t, sc_.global.window).empty();
        for (const auto& tr : rec.visible)
            rec.min_separation = std::min(rec.min_separation, distance(tr.observations.back().pose, robot_.pose));

        auto dist = std::make_shared<const GlobalPlanDistribution>(effective_distribution());
        rec.assistive = assistive();
        rec.distribution = dist;
        if (!dist->empty()) {
            const auto report = run_inference(sc_, *dist, robot_, rec.visible, rec.seed);
            rec.component = report.assignment.config;
            rec.plan_id = (*dist)[report.assignment.config].id;
            rec.density = report.assignment.density;
            rec.masses = report.per_component_mass;
            rec.thinned = report.thinned;
            rec.command = next_action(report, sc_.models.v_max);
        }

        // exact Euler step
        robot_.pose = robot_.pose + rec.command * sc_.dt;
        robot_.velocity = rec.command;
        ++tick_;
        robot_.history.push_back({now(), robot_.pose});

        update_summary(rec);
        log_.records.push_back(std::move(rec));

        consume_waypoints();
        if (at_goal()) finish("goal");
        else if (tick_ >= sc_.tick_limit) finish("tick_limit");
        return log_.records.back();
    }

    RunLog run() {
        while (!finished_) tick();
        return log_;
    }

    bool assistive() const { return evidence_.goals.empty() && evidence_.waypoints.empty(); }

private:
    void fold_events(double t) {
        while (next_scripted_ < sc_.interventions.size() && sc_.interventions[next_scripted_].t <= t + 1e-9)
            apply(sc_.interventions[next_scripted_++]);
        while (!queue_.empty()) {
            apply(queue_.front());
            queue_.pop_front();
        }
        // joystick samples older than the window can no longer matter
        const double horizon = t - sc_.global.window;
        std::erase_if(evidence_.joystick, [&](const JoystickSample& s) { return s.t <= horizon; });
    }

    void apply(const Intervention& iv) {
        switch (iv.kind) {
            case InterventionKind::Joystick:
                evidence_.joystick.push_back({iv.t, clamp_norm(iv.command, sc_.models.v_max)});
                break;
            case InterventionKind::Waypoint:
                evidence_.waypoints.push_back({iv.t, iv.poses.front()});
                dirty_ = true;
                break;
            case InterventionKind::Goal:
                evidence_.goals = iv.poses;
                dirty_ = true;
                break;
        }
    }

    void observe_crowd(double t) {
        for (std::size_t i = 0; i < tracks_.size(); ++i) {
            auto& obs = tracks_[i].observations;
            obs.push_back({t, sc_.crowd[i].position_at(t)});
            if (obs.size() > 2) obs.erase(obs.begin());
        }
    }

    void rebuild_plans() {
        dirty_ = false;
        ++generation_;
        base_ = {};
        if (assistive()) return;
        try {
            base_ = goals_only_distribution(sc_.grid, robot_.pose, evidence_, sc_.planner());
        } catch (const NoPath&) {
        } catch (const InvalidEndpoint&) {
        }
    }

    GlobalPlanDistribution effective_distribution() const {
        const auto window = joystick_window(evidence_, now(), sc_.global.window);
        if (assistive()) {
            try {
                return assistive_distribution(sc_.grid, robot_.pose, window, sc_.planner());
            } catch (const NoEvidence&) {
                return {};
            }
        }
        return condition_on_joystick(base_, robot_.pose, window, sc_.planner());
    }

    void consume_waypoints() {
        const double reach = sc_.grid.resolution();
        while (!evidence_.waypoints.empty() && distance(evidence_.waypoints.front().pose, robot_.pose) <= reach) {
            evidence_.waypoints.erase(evidence_.waypoints.begin());
            dirty_ = true;
        }
    }

    bool at_goal() const {
        const double reach = sc_.grid.resolution();
        for (const auto& g : evidence_.goals)
            if (distance(g, robot_.pose) <= reach) return true;
        return false;
    }

    void update_summary(const TickRecord& rec) {
        auto& s = log_.summary;
        s.ticks = log_.records.size() + 1;
        s.path_length += rec.command.norm() * sc_.dt;
        s.min_separation = std::min(s.min_separation, rec.min_separation);
        for (const auto& tr : rec.visible)
            if (distance(tr.observations.back().pose, rec.pose) < kCollisionDistance) ++s.collisions;
        if (!log_.records.empty()) {
            const auto& prev = log_.records.back();
            if (prev.generation == rec.generation && !rec.assistive && prev.plan_id >= 0 && rec.plan_id >= 0 &&
                prev.plan_id != rec.plan_id)
                ++s.component_switches;
        }
    }

    void finish(const char* why) {
        finished_ = true;
        log_.summary.termination = why;
        if (std::string(why) == "goal") {
            log_.summary.reached_goal = true;
            log_.summary.ticks_to_goal = tick_;
        }
    }

    Scenario sc_;
    RobotState robot_;
    OperatorEvidence evidence_;
    std::vector<AgentTrack> tracks_;
    GlobalPlanDistribution base_;
    std::deque<Intervention> queue_;
    std::size_t next_scripted_ = 0;
    std::size_t tick_ = 0;
    std::uint64_t generation_ = 0;
    bool dirty_ = false;
    bool finished_ = false;
    RunLog log_;
};

inline RunLog run(const Scenario& sc) { return Simulator(sc).run(); }

// ---------------------------------------------------------------------------
// RunLog serialization: one JSON object per tick, then {"summary": ...}

inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const TickRecord& r) {
    json masses = json::array();
    for (const auto& m : r.masses) masses.push_back({m.config, m.max_density, m.mean_density});
    json weights = json::array();
    json ids = json::array();
    if (r.distribution)
        for (const auto& c : r.distribution->components) {
            weights.push_back(c.weight);
            ids.push_back(c.id);
        }
    json crowd = json::array();
    for (const auto& tr : r.visible) {
        const auto p = tr.observations.back().pose;
        crowd.push_back({tr.id, p.x, p.y});
    }
    return {
        {"tick", r.tick},
        {"t", r.t},
        {"pose", to_json(r.pose)},
        {"command", to_json(r.command)},
        {"component", r.component ? json(*r.component) : json(nullptr)},
        {"plan_id", r.plan_id},
        {"density", r.density},
        {"masses", masses},
        {"weights", weights},
        {"plan_ids", ids},
        {"crowd", crowd},
        {"seed", r.seed},
        {"generation", r.generation},
        {"evidence",
         {{"goals", r.goals}, {"waypoints", r.waypoints}, {"joystick_active", r.joystick_active},
          {"assistive", r.assistive}}},
        {"min_separation", number_or_null(r.min_separation)},
    };
}

inline json to_json(const RunSummary& s) {
    return {
        {"ticks", s.ticks},
        {"reached_goal", s.reached_goal},
        {"ticks_to_goal", s.ticks_to_goal ? json(*s.ticks_to_goal) : json(nullptr)},
        {"path_length", s.path_length},
        {"min_separation", number_or_null(s.min_separation)},
        {"component_switches", s.component_switches},
        {"collisions", s.collisions},
        {"termination", s.termination},
    };
}

inline std::string to_jsonl(const RunLog& log) {
    std::string out;
    for (const auto& r : log.records) {
        out += to_json(r).dump();
        out += '\n';
    }
    out += json{{"summary", to_json(log.summary)}}.dump();
    out += '\n';
    return out;
}

// FNV-1a over the serialized log.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t runlog_hash(const RunLog& log) { return fnv1a(to_jsonl(log)); }

}  // namespace hnav
