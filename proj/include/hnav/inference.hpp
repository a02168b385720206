#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "hnav/error.hpp"
#include "hnav/global_planner.hpp"
#include "hnav/local_models.hpp"
#include "hnav/potentials.hpp"
#include "hnav/random.hpp"
#include "hnav/trajectory.hpp"

namespace hnav {

// ---------------------------------------------------------------------------
// Model: the plan levels windowed around the robot, ready for evaluation

// A configuration picks one component per level. Configurations are numbered
// row-major with the mission level most significant, so numeric order is the
// lexicographic order of component indices.
class PlanModel {
public:
    PlanModel(const HierarchyLevels& levels, Pose robot, double dt, std::size_t horizon, PotentialConfig cfg)
        : cfg_(std::move(cfg)), dt_(dt), horizon_(horizon) {
        if (levels.empty()) throw EmptyDistribution("no plan levels");
        bandwidths_ = cfg_.bandwidths(levels.size());
        for (const auto& level : levels) {
            if (level.distribution.empty()) throw EmptyDistribution("plan level has no components");
            std::vector<WindowedComponent> comps;
            for (const auto& c : level.distribution.components)
                comps.push_back({c.weight, plan_window(c.plan, robot, dt, horizon)});
            levels_.push_back(std::move(comps));
        }
        std::size_t count = 1;
        for (const auto& l : levels_) count *= l.size();
        upper_.reserve(count);
        std::vector<WindowedComponent> chosen(levels_.size());
        for (std::size_t c = 0; c < count; ++c) {
            const auto idx = decode(c);
            for (std::size_t j = 0; j < idx.size(); ++j) chosen[j] = levels_[j][idx[j]];
            upper_.push_back(chain_upper_factor(chosen, bandwidths_));
        }
    }

    PlanModel(const GlobalPlanDistribution& dist, Pose robot, double dt, std::size_t horizon, PotentialConfig cfg)
        : PlanModel(HierarchyLevels{{dist, "mission"}}, robot, dt, horizon, std::move(cfg)) {}

    std::size_t level_count() const { return levels_.size(); }
    std::size_t config_count() const { return upper_.size(); }
    std::size_t horizon() const { return horizon_; }
    double dt() const { return dt_; }
    const PotentialConfig& potentials() const { return cfg_; }
    const std::vector<WindowedComponent>& level(std::size_t j) const { return levels_[j]; }

    std::vector<std::size_t> decode(std::size_t config) const {
        std::vector<std::size_t> idx(levels_.size());
        for (std::size_t j = levels_.size(); j-- > 0;) {
            idx[j] = config % levels_[j].size();
            config /= levels_[j].size();
        }
        return idx;
    }

    const WindowedComponent& bottom(std::size_t config) const {
        return levels_.back()[config % levels_.back().size()];
    }

    // Same factor order as chain_density, so values agree bit for bit.
    double density(std::size_t config, const Trajectory& robot, double crowd_factor, PriorDensities priors) const {
        double d = upper_[config];
        d *= plan_agreement(bottom(config).window, robot, bandwidths_.back());
        d *= crowd_factor;
        d *= priors.robot;
        d *= priors.crowd;
        return d;
    }

    double crowd_factor(const Trajectory& robot, const CrowdSample& crowd) const {
        return crowd_interaction(robot, crowd, cfg_.alpha, cfg_.sigma_r);
    }

private:
    PotentialConfig cfg_;
    double dt_;
    std::size_t horizon_;
    std::vector<double> bandwidths_;
    std::vector<std::vector<WindowedComponent>> levels_;
    std::vector<double> upper_;
};

// ---------------------------------------------------------------------------
// Results

struct MapAssignment {
    std::size_t config = 0;
    std::vector<std::size_t> components;  // one index per level
    Trajectory robot;                     // f^R*
    CrowdSample crowd;                    // f*
    double density = 0.0;

    std::size_t component_index() const { return components.empty() ? 0 : components.front(); }
};

struct ComponentMass {
    std::size_t config = 0;
    double max_density = 0.0;
    double mean_density = 0.0;
};

struct SampleRecord {
    Trajectory robot;
    PriorDensities priors;
    double crowd_factor = 1.0;
    std::vector<double> densities;  // per configuration
};

struct WeightedSample {
    Trajectory robot;
    double weight = 0.0;
};

struct InferenceReport {
    MapAssignment assignment;
    std::vector<ComponentMass> per_component_mass;
    std::size_t samples_used = 0;
    std::uint64_t seed = 0;
    double acceptance_rate = 1.0;
    std::vector<SampleRecord> samples;   // only when requested
    std::vector<WeightedSample> thinned;  // up to `thin` samples for display
};

enum class CrowdMode { Sampled, Mean };

namespace detail {

template <class Prior>
struct BestTracker {
    const Prior& prior;
    explicit BestTracker(const Prior& p) : prior(p) {}
    bool set = false;
    double density = -1.0;
    std::size_t config = 0;
    Trajectory robot;
    CrowdSample crowd;

    // Total order: density, then lower configuration, then smaller tie key.
    bool improves(double d, std::size_t c, const Trajectory& r) const {
        if (!set || d > density) return true;
        if (d < density) return false;
        if (c != config) return c < config;
        return prior.tie_key(r) < prior.tie_key(robot);
    }

    void offer(double d, std::size_t c, const Trajectory& r, const CrowdSample& f) {
        if (!improves(d, c, r)) return;
        set = true;
        density = d;
        config = c;
        robot = r;
        crowd = f;
    }

    MapAssignment assignment(const PlanModel& model) const {
        return {config, model.decode(config), robot, crowd, density};
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Discrete action prior: uniform over sequences of a finite action set

class DiscreteActionPrior {
public:
    using Weight = std::function<double(const Trajectory&)>;

    DiscreteActionPrior(Pose start, std::vector<Velocity> actions, std::size_t steps, double dt, Weight weight = {})
        : start_(start), actions_(std::move(actions)), steps_(steps), dt_(dt), weight_(std::move(weight)) {
        if (actions_.empty()) throw InvariantViolation("action set is empty");
    }

    std::size_t horizon() const { return steps_ + 1; }
    std::size_t steps() const { return steps_; }
    double dt() const { return dt_; }
    Pose start() const { return start_; }
    const std::vector<Velocity>& actions() const { return actions_; }

    Trajectory integrate(std::span<const std::size_t> seq) const {
        Trajectory t{0, dt_, {start_}};
        t.points.reserve(steps_ + 1);
        for (auto a : seq) t.points.push_back(t.back() + actions_[a] * dt_);
        return t;
    }

    Trajectory sample(Rng& rng) const {
        std::vector<std::size_t> seq(steps_);
        for (auto& a : seq) a = uniform_index(rng, actions_.size());
        return integrate(seq);
    }

    double density(const Trajectory& traj) const { return weight_ ? weight_(traj) : 1.0; }

    // Nearest action per step; equal distances resolve to the lower index.
    std::vector<std::size_t> decode(const Trajectory& traj) const {
        std::vector<std::size_t> seq;
        seq.reserve(steps_);
        for (std::size_t k = 1; k < traj.size() && seq.size() < steps_; ++k) {
            const Vec2 v = (traj[k] - traj[k - 1]) / dt_;
            std::size_t best = 0;
            double best_d = squared_distance(v, actions_[0]);
            for (std::size_t a = 1; a < actions_.size(); ++a) {
                const double d = squared_distance(v, actions_[a]);
                if (d < best_d) {
                    best_d = d;
                    best = a;
                }
            }
            seq.push_back(best);
        }
        while (seq.size() < steps_) seq.push_back(0);
        return seq;
    }

    Trajectory project(const Trajectory& traj) const { return integrate(decode(traj)); }

    Trajectory perturb(const Trajectory& traj, double stddev, Rng& rng) const {
        Trajectory noisy{0, dt_, {start_}};
        for (std::size_t k = 1; k < traj.size(); ++k) {
            const Vec2 noise{normal(rng, stddev), normal(rng, stddev)};
            noisy.points.push_back(noisy.back() + (traj[k] - traj[k - 1]) + noise);
        }
        return project(noisy);
    }

    std::vector<double> tie_key(const Trajectory& traj) const {
        const auto seq = decode(traj);
        return {seq.begin(), seq.end()};
    }

    Trajectory stationary() const { return Trajectory{0, dt_, std::vector<Pose>(steps_ + 1, start_)}; }

private:
    Pose start_;
    std::vector<Velocity> actions_;
    std::size_t steps_;
    double dt_;
    Weight weight_;
};

// ---------------------------------------------------------------------------
// Importance sampling

struct ImportanceConfig {
    std::size_t samples = 1000;
    std::uint64_t seed = 1;
    CrowdMode crowd = CrowdMode::Sampled;
    bool keep_samples = false;
    std::size_t thin = 50;
};

// Draws robot trajectories from the prior (and one crowd draw each), weights
// every draw by the joint density under each configuration, and keeps the
// highest-weight pair.
template <class Prior>
InferenceReport importance_sample_map(const PlanModel& model, const Prior& prior, const CrowdBelief& belief,
                                      const ImportanceConfig& cfg) {
    if (model.config_count() == 0) throw EmptyDistribution("plan distribution is empty");
    if (cfg.samples < 1) throw InvariantViolation("need at least one sample");
    const std::size_t configs = model.config_count();
    const std::size_t points = prior.horizon();

    Rng rng(cfg.seed);
    detail::BestTracker<Prior> best(prior);
    std::vector<double> max_d(configs, 0.0), sum_d(configs, 0.0);
    InferenceReport report;
    report.seed = cfg.seed;
    report.samples_used = cfg.samples;
    const std::size_t stride = cfg.thin == 0 ? 0 : std::max<std::size_t>(1, (cfg.samples + cfg.thin - 1) / cfg.thin);
    const CrowdSample mean_crowd = crowd_mean(belief, points);

    for (std::size_t i = 0; i < cfg.samples; ++i) {
        Trajectory robot = prior.sample(rng);
        CrowdSample crowd = cfg.crowd == CrowdMode::Sampled ? sample_crowd(belief, points, rng) : mean_crowd;
        const PriorDensities priors{prior.density(robot), crowd_density(belief, crowd)};
        const double cf = model.crowd_factor(robot, crowd);

        SampleRecord rec;
        double top = 0.0;
        for (std::size_t c = 0; c < configs; ++c) {
            const double d = model.density(c, robot, cf, priors);
            max_d[c] = std::max(max_d[c], d);
            sum_d[c] += d;
            top = std::max(top, d);
            if (cfg.keep_samples) rec.densities.push_back(d);
            best.offer(d, c, robot, crowd);
        }
        if (stride != 0 && i % stride == 0 && report.thinned.size() < cfg.thin) report.thinned.push_back({robot, top});
        if (cfg.keep_samples) {
            rec.robot = std::move(robot);
            rec.priors = priors;
            rec.crowd_factor = cf;
            report.samples.push_back(std::move(rec));
        }
    }

    report.assignment = best.assignment(model);
    for (std::size_t c = 0; c < configs; ++c)
        report.per_component_mass.push_back({c, max_d[c], sum_d[c] / static_cast<double>(cfg.samples)});
    return report;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration (exact oracle on small discrete instances)

inline constexpr double kMaxBruteForceStates = 1e6;

// Exact argmax over every action sequence and configuration, with the crowd
// held at its predictive mean. Ties go to the lower configuration, then the
// lexicographically smaller action sequence.
inline MapAssignment brute_force_map(const PlanModel& model, const DiscreteActionPrior& prior,
                                     const CrowdBelief& belief) {
    if (model.config_count() == 0) throw EmptyDistribution("plan distribution is empty");
    const double states = std::pow(static_cast<double>(prior.actions().size()), static_cast<double>(prior.steps())) *
                          static_cast<double>(model.config_count());
    if (states > kMaxBruteForceStates)
        throw InstanceTooLarge("instance has " + std::to_string(states) + " joint states");

    const std::size_t points = prior.horizon();
    const CrowdSample crowd = crowd_mean(belief, points);
    const double crowd_p = crowd_density(belief, crowd);
    const std::size_t configs = model.config_count();
    const std::size_t n_actions = prior.actions().size();

    std::vector<std::size_t> seq(prior.steps(), 0);
    std::vector<std::size_t> best_seq;
    std::size_t best_config = 0;
    double best_d = -1.0;
    Trajectory best_robot;
    for (;;) {
        const Trajectory robot = prior.integrate(seq);
        const PriorDensities priors{prior.density(robot), crowd_p};
        const double cf = model.crowd_factor(robot, crowd);
        for (std::size_t c = 0; c < configs; ++c) {
            const double d = model.density(c, robot, cf, priors);
            // sequences arrive in lexicographic order, so on equal density only a
            // lower configuration can win
            if (d > best_d || (d == best_d && c < best_config)) {
                best_d = d;
                best_config = c;
                best_seq = seq;
                best_robot = robot;
            }
        }
        // odometer increment, last step fastest
        std::size_t pos = seq.size();
        while (pos > 0 && ++seq[pos - 1] == n_actions) {
            seq[pos - 1] = 0;
            --pos;
        }
        if (pos == 0) break;
    }
    return {best_config, model.decode(best_config), best_robot, crowd, best_d};
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings

struct MhConfig {
    std::size_t iterations = 5000;
    std::uint64_t seed = 1;
    double proposal_std = 0.2;  // m, per-tick displacement noise
    double switch_prob = 0.2;   // probability a move proposes a new configuration
    double jump_prob = 0.5;     // on a switch, probability of jumping to the new plan's window
    std::optional<std::pair<std::size_t, Trajectory>> init;
    std::size_t thin = 50;
};

// MH over (configuration, robot trajectory) with the crowd at its predictive
// mean. Returns the best state visited.
template <class Prior>
InferenceReport mh_sample_map(const PlanModel& model, const Prior& prior, const CrowdBelief& belief,
                              const MhConfig& cfg) {
    if (model.config_count() == 0) throw EmptyDistribution("plan distribution is empty");
    if (cfg.iterations < 1) throw InvariantViolation("need at least one iteration");
    const std::size_t configs = model.config_count();
    const std::size_t points = prior.horizon();
    const CrowdSample crowd = crowd_mean(belief, points);
    const double crowd_p = crowd_density(belief, crowd);

    auto evaluate = [&](std::size_t c, const Trajectory& robot) {
        return model.density(c, robot, model.crowd_factor(robot, crowd), {prior.density(robot), crowd_p});
    };

    Rng rng(cfg.seed);
    std::size_t cur_c = 0;
    Trajectory cur;
    if (cfg.init) {
        cur_c = cfg.init->first;
        cur = cfg.init->second;
    } else {
        cur = prior.project(model.bottom(0).window);
    }
    double cur_d = evaluate(cur_c, cur);

    detail::BestTracker<Prior> best(prior);
    best.offer(cur_d, cur_c, cur, crowd);
    std::vector<double> max_d(configs, 0.0), sum_d(configs, 0.0);
    std::vector<std::size_t> visits(configs, 0);
    std::size_t accepted = 0;
    InferenceReport report;
    report.seed = cfg.seed;
    report.samples_used = cfg.iterations;
    const std::size_t stride = cfg.thin == 0 ? 0 : std::max<std::size_t>(1, (cfg.iterations + cfg.thin - 1) / cfg.thin);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        std::size_t prop_c = cur_c;
        Trajectory prop;
        if (configs > 1 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.switch_prob) {
            prop_c = uniform_index(rng, configs - 1);
            if (prop_c >= cur_c) ++prop_c;
            const bool jump = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.jump_prob;
            prop = jump ? prior.project(model.bottom(prop_c).window) : cur;
        } else {
            prop = prior.perturb(cur, cfg.proposal_std, rng);
        }
        const double prop_d = evaluate(prop_c, prop);
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const bool accept = cur_d <= 0.0 ? prop_d >= cur_d : u < prop_d / cur_d;
        if (accept) {
            ++accepted;
            cur_c = prop_c;
            cur = std::move(prop);
            cur_d = prop_d;
            best.offer(cur_d, cur_c, cur, crowd);
        }
        max_d[cur_c] = std::max(max_d[cur_c], cur_d);
        sum_d[cur_c] += cur_d;
        ++visits[cur_c];
        if (stride != 0 && it % stride == 0 && report.thinned.size() < cfg.thin) report.thinned.push_back({cur, cur_d});
    }

    report.assignment = best.assignment(model);
    report.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(cfg.iterations);
    for (std::size_t c = 0; c < configs; ++c)
        report.per_component_mass.push_back(
            {c, max_d[c], visits[c] == 0 ? 0.0 : sum_d[c] / static_cast<double>(visits[c])});
    return report;
}

// ---------------------------------------------------------------------------

// First step of f^R* as a velocity command, clamped to v_max.
inline Velocity next_action(const Trajectory& robot, double v_max) {
    if (robot.size() < 2) throw TooShort("MAP trajectory needs at least two points");
    return clamp_norm((robot[1] - robot[0]) / robot.dt, v_max);
}

inline Velocity next_action(const InferenceReport& report, double v_max) {
    return next_action(report.assignment.robot, v_max);
}

}  // namespace hnav
