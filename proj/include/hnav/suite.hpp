#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnav/error.hpp"
#include "hnav/inference.hpp"
#include "hnav/random.hpp"
#include "hnav/scenario.hpp"
#include "hnav/simulator.hpp"

namespace hnav {

// ---------------------------------------------------------------------------
// Small discrete instances with an exact answer

struct OracleInstance {
    std::string name;
    HierarchyLevels levels;
    Pose start;
    std::vector<Velocity> actions;
    std::size_t steps = 3;
    double dt = 1.0;
    std::vector<AgentTrack> crowd;
    PotentialConfig potentials;
    CrowdModelConfig crowd_model{0.1, 0.05, 1.0};

    PlanModel model() const { return PlanModel(levels, start, dt, steps + 1, potentials); }
    DiscreteActionPrior prior() const { return DiscreteActionPrior(start, actions, steps, dt); }
    CrowdBelief belief() const { return predict_crowd(crowd, steps + 1, crowd_model); }
    double state_count() const {
        double configs = 1.0;
        for (const auto& l : levels) configs *= static_cast<double>(l.distribution.size());
        return std::pow(static_cast<double>(actions.size()), static_cast<double>(steps)) * configs;
    }
};

namespace detail {

// Gently curving polyline from `start`, one point per `spacing` meters.
inline Trajectory random_plan(Rng& rng, Pose start, std::size_t points, double spacing, double dt) {
    Trajectory t{0, dt, {start}};
    double heading = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const double bend = uniform(rng, -0.4, 0.4);
    for (std::size_t k = 1; k < points; ++k) {
        heading += bend;
        t.points.push_back(t.back() + Vec2{std::cos(heading), std::sin(heading)} * spacing);
    }
    return t;
}

inline GlobalPlanDistribution random_distribution(Rng& rng, std::size_t components, Pose start, std::size_t points,
                                                  double dt) {
    GlobalPlanDistribution dist;
    double total = 0.0;
    for (std::size_t i = 0; i < components; ++i) {
        const double w = uniform(rng, 0.2, 1.0);
        total += w;
        dist.components.push_back({w, random_plan(rng, start, points, uniform(rng, 0.5, 1.0), dt), static_cast<int>(i)});
    }
    for (auto& c : dist.components) c.weight /= total;
    sort_components(dist);
    return dist;
}

}  // namespace detail

// Random instance: 3-6 actions of speed <= 1, 2-4 steps, 2-3 weighted plans,
// 0-2 agents near the robot. `levels` > 1 builds a plan hierarchy.
inline OracleInstance random_oracle_instance(std::uint64_t seed, std::size_t levels = 1) {
    Rng rng(mix_seed(seed, 0x6f7261636c65ULL));
    OracleInstance inst;
    inst.name = "random-" + std::to_string(seed);
    inst.start = {0.0, 0.0};
    const std::size_t n_actions = 3 + uniform_index(rng, 4);
    inst.actions.push_back({0.0, 0.0});
    const double offset = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (std::size_t a = 1; a < n_actions; ++a) {
        const double ang = offset + 2.0 * std::numbers::pi * static_cast<double>(a - 1) / static_cast<double>(n_actions - 1);
        inst.actions.push_back(Vec2{std::cos(ang), std::sin(ang)} * uniform(rng, 0.6, 1.0));
    }
    inst.steps = 2 + uniform_index(rng, 3);
    const std::size_t points = inst.steps + 4;
    for (std::size_t j = 0; j < levels; ++j) {
        const std::size_t comps = 2 + uniform_index(rng, 2);
        inst.levels.push_back({detail::random_distribution(rng, comps, inst.start, points, inst.dt),
                               j == 0 ? "mission" : "tactical"});
    }
    const std::size_t agents = uniform_index(rng, 3);
    for (std::size_t i = 0; i < agents; ++i) {
        const Pose p{uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0)};
        const Vec2 v{uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8)};
        inst.crowd.push_back({static_cast<int>(i), {{-1.0, p - v}, {0.0, p}}});
    }
    inst.potentials.h = uniform(rng, 0.3, 2.0);
    inst.potentials.alpha = uniform(rng, 0.5, 0.95);
    inst.potentials.sigma_r = uniform(rng, 0.4, 1.2);
    return inst;
}

struct OracleMethods {
    std::size_t importance_samples = 10000;
    std::size_t mh_iterations = 50000;
    double mh_proposal_std = 0.5;
    std::uint64_t seed = 7;
};

struct MethodAgreement {
    std::string method;
    std::size_t matched = 0;
    std::size_t total = 0;
    std::vector<std::string> skipped;

    double rate() const { return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total); }
};

struct AgreementReport {
    std::vector<MethodAgreement> methods;  // importance, mh

    const MethodAgreement& at(const std::string& name) const {
        for (const auto& m : methods)
            if (m.method == name) return m;
        throw InvariantViolation("no method " + name);
    }
};

// For every instance, does each sampler's argmax configuration match the
// exhaustive enumerator's?
inline AgreementReport oracle_check(std::span<const OracleInstance> instances, const OracleMethods& cfg = {}) {
    if (instances.empty()) throw EmptySet("oracle check over zero instances");
    AgreementReport report;
    report.methods.resize(2);
    report.methods[0].method = "importance";
    report.methods[1].method = "mh";
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        if (inst.state_count() > kMaxBruteForceStates) {
            for (auto& m : report.methods) m.skipped.push_back(inst.name + ": InstanceTooLarge");
            continue;
        }
        const auto model = inst.model();
        const auto prior = inst.prior();
        const auto belief = inst.belief();
        const auto exact = brute_force_map(model, prior, belief);

        ImportanceConfig is;
        is.samples = cfg.importance_samples;
        is.seed = mix_seed(cfg.seed, i);
        is.crowd = CrowdMode::Mean;
        is.thin = 0;
        const auto a = importance_sample_map(model, prior, belief, is);

        MhConfig mh;
        mh.iterations = cfg.mh_iterations;
        mh.seed = mix_seed(cfg.seed ^ 0x5bd1e995ULL, i);
        mh.proposal_std = cfg.mh_proposal_std;
        mh.thin = 0;
        const auto b = mh_sample_map(model, prior, belief, mh);

        auto& ism = report.methods[0];
        auto& mhm = report.methods[1];
        ++ism.total;
        ++mhm.total;
        ism.matched += a.assignment.config == exact.config ? 1 : 0;
        mhm.matched += b.assignment.config == exact.config ? 1 : 0;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Scenario suites

struct SuiteDocument {
    std::vector<std::string> scenarios;  // resolved paths
    std::vector<InferenceMethod> methods;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    std::optional<std::size_t> samples;  // overrides each scenario's sample count
    std::optional<std::size_t> oracle_instances;
    OracleMethods oracle;
};

inline SuiteDocument load_suite(const json& doc, const std::filesystem::path& base_dir = {}) {
    if (!doc.is_object()) throw SchemaError("", "suite document must be an object");
    SuiteDocument s;
    auto list = [&](const char* key) -> const json& {
        auto it = doc.find(key);
        if (it == doc.end() || !it->is_array()) throw SchemaError(key, "expected an array");
        return *it;
    };
    for (const auto& p : list("scenarios")) {
        if (!p.is_string()) throw SchemaError("scenarios", "expected path strings");
        std::filesystem::path path = p.get<std::string>();
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        s.scenarios.push_back(path.string());
    }
    for (const auto& m : list("methods")) {
        if (!m.is_string()) throw SchemaError("methods", "expected method names");
        s.methods.push_back(parse_method(m.get<std::string>()));
    }
    for (const auto& x : list("seeds")) {
        if (!x.is_number_unsigned()) throw SchemaError("seeds", "expected non-negative integers");
        s.seeds.push_back(x.get<std::uint64_t>());
    }
    if (auto it = doc.find("out_dir"); it != doc.end() && it->is_string()) {
        std::filesystem::path out = it->get<std::string>();
        if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
        s.out_dir = out.string();
    }
    if (auto it = doc.find("samples"); it != doc.end()) s.samples = it->get<std::size_t>();
    if (auto it = doc.find("oracle"); it != doc.end()) {
        if (!it->is_object()) throw SchemaError("oracle", "expected an object");
        s.oracle_instances = it->value("instances", std::size_t{100});
        s.oracle.importance_samples = it->value("importance_samples", s.oracle.importance_samples);
        s.oracle.mh_iterations = it->value("mh_iterations", s.oracle.mh_iterations);
        s.oracle.seed = it->value("seed", s.oracle.seed);
    }
    return s;
}

inline SuiteDocument load_suite_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("", "cannot open suite file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("malformed JSON: ") + e.what());
    }
    return load_suite(doc, std::filesystem::path(path).parent_path());
}

struct SuiteRow {
    std::string scenario;
    std::string method;
    std::uint64_t seed = 0;
    std::string status = "ok";  // or the error code of a failed cell
    RunSummary summary;
    std::uint64_t runlog_hash = 0;
};

struct SuiteResult {
    std::vector<SuiteRow> rows;
    std::optional<AgreementReport> oracle;
};

namespace detail {

inline std::string fmt_double(double x) {
    if (!std::isfinite(x)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

inline std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t j = 0; j < jobs; ++j)
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
    for (auto& w : workers) w.join();
}

}  // namespace detail

inline std::string suite_csv(const SuiteResult& result) {
    std::string out =
        "scenario,method,seed,status,ticks,reached_goal,ticks_to_goal,path_length,min_separation,"
        "component_switches,collisions,termination,runlog_hash\n";
    for (const auto& r : result.rows) {
        const auto& s = r.summary;
        out += r.scenario + "," + r.method + "," + std::to_string(r.seed) + "," + r.status + "," +
               std::to_string(s.ticks) + "," + (s.reached_goal ? "1" : "0") + "," +
               (s.ticks_to_goal ? std::to_string(*s.ticks_to_goal) : "") + "," + detail::fmt_double(s.path_length) +
               "," + detail::fmt_double(s.min_separation) + "," + std::to_string(s.component_switches) + "," +
               std::to_string(s.collisions) + "," + s.termination + "," + detail::hex64(r.runlog_hash) + "\n";
    }
    return out;
}

inline std::string oracle_csv(const AgreementReport& report) {
    std::string out = "method,matched,total,rate,skipped\n";
    for (const auto& m : report.methods)
        out += m.method + "," + std::to_string(m.matched) + "," + std::to_string(m.total) + "," +
               detail::fmt_double(m.rate()) + "," + std::to_string(m.skipped.size()) + "\n";
    return out;
}

// Runs the scenario x method x seed product. Failed cells are recorded with
// their error code and the suite continues. Rows are ordered by
// (scenario, method, seed) regardless of `jobs`.
inline SuiteResult run_suite(const SuiteDocument& doc, std::size_t jobs = 1) {
    struct Cell {
        std::size_t scenario, method, seed;
    };
    std::vector<Cell> cells;
    for (std::size_t a = 0; a < doc.scenarios.size(); ++a)
        for (std::size_t b = 0; b < doc.methods.size(); ++b)
            for (std::size_t c = 0; c < doc.seeds.size(); ++c) cells.push_back({a, b, c});

    if (!doc.out_dir.empty()) std::filesystem::create_directories(std::filesystem::path(doc.out_dir) / "runs");

    SuiteResult result;
    result.rows.resize(cells.size());
    detail::parallel_for(cells.size(), jobs, [&](std::size_t i) {
        const auto& cell = cells[i];
        auto& row = result.rows[i];
        const std::string stem = std::filesystem::path(doc.scenarios[cell.scenario]).stem().string();
        row.scenario = stem;
        row.method = to_string(doc.methods[cell.method]);
        row.seed = doc.seeds[cell.seed];
        try {
            auto sc = load_scenario_file(doc.scenarios[cell.scenario]);
            sc.inference.method = doc.methods[cell.method];
            sc.inference.seed = row.seed;
            if (doc.samples) sc.inference.samples = *doc.samples;
            const auto log = run(sc);
            const auto text = to_jsonl(log);
            row.summary = log.summary;
            row.runlog_hash = fnv1a(text);
            if (!doc.out_dir.empty()) {
                std::ofstream out(std::filesystem::path(doc.out_dir) / "runs" /
                                  (stem + "_" + row.method + "_" + std::to_string(row.seed) + ".jsonl"));
                out << text;
            }
        } catch (const Error& e) {
            row.status = e.code();
        } catch (const std::exception&) {
            row.status = "InternalError";
        }
    });

    if (doc.oracle_instances) {
        std::vector<OracleInstance> instances;
        for (std::size_t i = 0; i < *doc.oracle_instances; ++i)
            instances.push_back(random_oracle_instance(mix_seed(doc.oracle.seed, i)));
        result.oracle = oracle_check(instances, doc.oracle);
    }

    if (!doc.out_dir.empty()) {
        std::ofstream(std::filesystem::path(doc.out_dir) / "summary.csv") << suite_csv(result);
        if (result.oracle) std::ofstream(std::filesystem::path(doc.out_dir) / "oracle.csv") << oracle_csv(*result.oracle);
    }
    return result;
}

}  // namespace hnav
