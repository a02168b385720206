#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hnav/error.hpp"
#include "hnav/global_planner.hpp"
#include "hnav/trajectory.hpp"

namespace hnav {

struct PotentialConfig {
    double h = 0.5;        // m^2, plan-agreement bandwidth
    double alpha = 0.9;    // repulsion strength in (0, 1)
    double sigma_r = 0.8;  // m, repulsion range
    // One bandwidth per adjacent pair (eta_0, eta_1), ..., (eta_k, f^R).
    // Empty means "h at every level". +infinity makes a coupling constant.
    std::vector<double> chain_bandwidths;

    std::vector<double> bandwidths(std::size_t levels) const {
        if (chain_bandwidths.empty()) return std::vector<double>(levels, h);
        if (chain_bandwidths.size() < levels)
            throw MissingBandwidth("need " + std::to_string(levels) + " chain bandwidths, got " +
                                   std::to_string(chain_bandwidths.size()));
        return chain_bandwidths;
    }
};

inline void validate(const PotentialConfig& cfg) {
    if (!(cfg.h > 0.0)) throw InvariantViolation("h must be positive");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InvariantViolation("alpha must lie in (0, 1)");
    if (!(cfg.sigma_r > 0.0)) throw InvariantViolation("sigma_r must be positive");
    for (double b : cfg.chain_bandwidths)
        if (!(b > 0.0)) throw InvariantViolation("chain bandwidths must be positive");
}

// psi(eta, f^R) = exp(-|eta - f^R|^2 / (2h)).
inline double plan_agreement(const Trajectory& eta, const Trajectory& robot, double h) {
    return std::exp(-squared_deviation(eta, robot) / (2.0 * h));
}

// psi(f^R, f) = prod_{i,t} (1 - alpha * exp(-|f^R_t - f^i_t|^2 / (2 sigma_r^2))).
inline double crowd_interaction(const Trajectory& robot, std::span<const Trajectory> crowd, double alpha,
                                double sigma_r) {
    double value = 1.0;
    const double denom = 2.0 * sigma_r * sigma_r;
    for (const auto& agent : crowd) {
        check_aligned(robot, agent);
        for (std::size_t t = 0; t < robot.size(); ++t)
            value *= 1.0 - alpha * std::exp(-squared_distance(robot[t], agent[t]) / denom);
    }
    return value;
}

struct PriorDensities {
    double robot = 1.0;  // p(f^R | z^R)
    double crowd = 1.0;  // p(f | z^f)
};

struct WindowedComponent {
    double weight = 1.0;
    Trajectory window;  // global plan already cut to the local horizon
};

// Unnormalized joint psi(eta, f^R) p(eta) psi(f^R, f) p(f^R | z^R) p(f | z^f)
// for one mixture component.
inline double joint_density(const WindowedComponent& component, const Trajectory& robot,
                            std::span<const Trajectory> crowd, PriorDensities priors, const PotentialConfig& cfg) {
    if (!(component.weight > 0.0)) throw NonpositiveWeight("component weight must be positive");
    double d = component.weight;
    d *= plan_agreement(component.window, robot, cfg.h);
    d *= crowd_interaction(robot, crowd, cfg.alpha, cfg.sigma_r);
    d *= priors.robot;
    d *= priors.crowd;
    return d;
}

struct HierarchyLevel {
    GlobalPlanDistribution distribution;
    std::string tag;  // which evidence measures this level, e.g. "mission", "tactical"
};

using HierarchyLevels = std::vector<HierarchyLevel>;

// Product of level weights and couplings between adjacent levels, in the
// order used by chain_density.
inline double chain_upper_factor(std::span<const WindowedComponent> chosen, std::span<const double> bandwidths) {
    double d = 1.0;
    for (const auto& c : chosen) {
        if (!(c.weight > 0.0)) throw NonpositiveWeight("component weight must be positive");
        d *= c.weight;
    }
    for (std::size_t j = 0; j + 1 < chosen.size(); ++j)
        d *= plan_agreement(chosen[j].window, chosen[j + 1].window, bandwidths[j]);
    return d;
}

// Chain factorization psi(eta_0, eta_1) p(eta_0) psi(eta_1, eta_2) p(eta_1) ...
// psi(eta_k, f^R) p(eta_k) p(f^R, f). `chosen` holds the selected component
// of each level, mission level first. With one level this is joint_density.
inline double chain_density(std::span<const WindowedComponent> chosen, const Trajectory& robot,
                            std::span<const Trajectory> crowd, PriorDensities priors, const PotentialConfig& cfg) {
    if (chosen.empty()) throw InvariantViolation("hierarchy needs at least one level");
    const auto bw = cfg.bandwidths(chosen.size());
    double d = chain_upper_factor(chosen, bw);
    d *= plan_agreement(chosen.back().window, robot, bw[chosen.size() - 1]);
    d *= crowd_interaction(robot, crowd, cfg.alpha, cfg.sigma_r);
    d *= priors.robot;
    d *= priors.crowd;
    return d;
}

}  // namespace hnav
