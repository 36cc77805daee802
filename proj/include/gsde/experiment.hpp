#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsde/calculus.hpp"
#include "gsde/coefficients.hpp"
#include "gsde/error.hpp"
#include "gsde/families.hpp"
#include "gsde/io.hpp"
#include "gsde/oracles.hpp"
#include "gsde/parallel.hpp"
#include "gsde/sampler.hpp"
#include "gsde/solver.hpp"
#include "gsde/uncertainty.hpp"

#ifndef GSDE_VERSION
#define GSDE_VERSION "dev"
#endif

namespace gsde::experiment {

using nlohmann::json;

enum class Kind { SimulateGbm, CheckLemmas, Solve, CompareClassical, CompareGHeat, D1Check };

inline Kind parse_kind(const std::string& s) {
    if (s == "simulate-gbm") return Kind::SimulateGbm;
    if (s == "check-lemmas") return Kind::CheckLemmas;
    if (s == "solve") return Kind::Solve;
    if (s == "compare-classical") return Kind::CompareClassical;
    if (s == "compare-gheat") return Kind::CompareGHeat;
    if (s == "d1-check") return Kind::D1Check;
    throw ConfigError("unknown experiment kind '" + s + "'");
}

/// Reads one JSON object and rejects keys that were never consumed.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T required(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError("missing required key '" + key + "' in " + name_);
        return fetch<T>(key);
    }

    template <typename T>
    T optional(const std::string& key, T fallback) {
        if (!j_.contains(key)) return fallback;
        return fetch<T>(key);
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + name_);
        }
    }

private:
    template <typename T>
    T fetch(const std::string& key) {
        seen_.insert(key);
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("key '" + key + "' in " + name_ + " has the wrong type");
        }
    }

    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

struct ControlSpec {
    ControlStrategy strategy = strategy::ConstantVertices{};
    std::size_t budget = 0;  // 0: number of generators
};

struct SolverSettings {
    double t_start = 0.0;
    double t_end = 1.0;
    std::size_t steps = 64;
    std::size_t paths = 1000;
    double picard_tol = 1e-4;
    std::size_t max_iterations = 25;
    double epsilon_tol = 0.05;
    std::uint64_t seed = 42;
    double xi_mean = 1.0;
    double xi_std = 0.0;
};

struct LemmaSettings {
    std::vector<double> ps{1.0, 2.0};
    std::vector<double> a;
    std::vector<double> b;
    double epsilon = Constants::epsilon_tol;
};

struct GHeatSettings {
    std::vector<std::string> payoffs{"square", "neg_square", "identity"};
    std::size_t space_steps = 2000;
    std::size_t time_steps = 0;
    double space_halfwidth = 0.0;
    double grid_tolerance = 1e-3;
};

struct D1Settings {
    std::size_t pairs = 100;
    std::size_t family_size = 64;
    std::size_t scenarios = 3;
    std::size_t paths = 512;
    double slack = 1e-3;
};

struct ExperimentConfig {
    Kind kind = Kind::Solve;
    std::string kind_name;
    std::optional<UncertaintySet> set;
    ControlSpec controls;
    std::optional<json> coefficients;
    SolverSettings solver;
    LemmaSettings lemmas;
    GHeatSettings gheat;
    D1Settings d1;
    std::string output;
    std::set<std::string> formats{"json", "csv"};
};

inline Matrix parse_matrix(const json& j, const std::string& where) {
    if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": matrix must be a number or a non-empty array of rows");
    const std::size_t n = j.size();
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!j[i].is_array() || j[i].size() != n) throw ConfigError(where + ": matrix must be square");
        for (std::size_t k = 0; k < n; ++k) {
            if (!j[i][k].is_number()) throw ConfigError(where + ": matrix entries must be numbers");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
        }
    }
    return m;
}

inline UncertaintySet parse_uncertainty(const json& j) {
    Section sec(j, "uncertainty");
    const auto kind = sec.required<std::string>("kind");
    std::optional<UncertaintySet> out;
    try {
        if (kind == "singleton") {
            out = UncertaintySet::singleton(parse_matrix(sec.raw("sigma"), "uncertainty.sigma"));
        } else if (kind == "interval") {
            const double low = sec.required<double>("low");
            const double high = sec.required<double>("high");
            out = UncertaintySet::interval(low, high, sec.optional<std::size_t>("generators", 2));
        } else if (kind == "diagonal_box") {
            out = UncertaintySet::diagonal_box(sec.required<std::vector<double>>("lows"),
                                               sec.required<std::vector<double>>("highs"));
        } else if (kind == "finite") {
            std::vector<Matrix> mats;
            const json& list = sec.raw("matrices");
            if (!list.is_array()) throw ConfigError("uncertainty.matrices must be an array");
            for (const auto& m : list) mats.push_back(parse_matrix(m, "uncertainty.matrices"));
            out = UncertaintySet::finite(std::move(mats));
        } else {
            throw ConfigError("unknown uncertainty kind '" + kind + "'");
        }
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("uncertainty: ") + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("uncertainty: ") + e.what());
    }
    sec.finish();
    return *out;
}

inline ControlSpec parse_controls(const json& j) {
    Section sec(j, "controls");
    ControlSpec spec;
    const auto name = sec.optional<std::string>("strategy", "constant_vertices");
    spec.budget = sec.optional<std::size_t>("budget", 0);
    if (name == "constant_vertices") {
        spec.strategy = strategy::ConstantVertices{};
    } else if (name == "random_switching") {
        spec.strategy = strategy::RandomSwitching{sec.optional<std::uint64_t>("seed", 7),
                                                  sec.optional<std::size_t>("switch_count", 1)};
    } else if (name == "exhaustive") {
        spec.strategy = strategy::Exhaustive{sec.required<std::size_t>("max_scenarios")};
    } else {
        throw ConfigError("unknown control strategy '" + name + "'");
    }
    sec.finish();
    return spec;
}

inline SolverSettings parse_solver(const json& j) {
    Section sec(j, "solver");
    SolverSettings s;
    s.t_start = sec.optional("t_start", s.t_start);
    s.t_end = sec.optional("t_end", s.t_end);
    s.steps = sec.optional("steps", s.steps);
    s.paths = sec.optional("paths", s.paths);
    s.picard_tol = sec.optional("picard_tol", s.picard_tol);
    s.max_iterations = sec.optional("max_iterations", s.max_iterations);
    s.epsilon_tol = sec.optional("epsilon_tol", s.epsilon_tol);
    s.seed = sec.optional("seed", s.seed);
    if (sec.has("xi")) {
        const json& xi = sec.raw("xi");
        if (xi.is_number()) {
            s.xi_mean = xi.get<double>();
        } else {
            Section xs(xi, "solver.xi");
            s.xi_mean = xs.optional("mean", 0.0);
            s.xi_std = xs.optional("std", 0.0);
            xs.finish();
        }
    }
    sec.finish();
    if (!(s.t_end > s.t_start)) throw ConfigError("solver: t_end must exceed t_start");
    if (s.steps == 0 || s.paths == 0) throw ConfigError("solver: steps and paths must be positive");
    if (!(s.picard_tol > 0.0)) throw ConfigError("solver: picard_tol must be positive");
    if (s.max_iterations == 0) throw ConfigError("solver: max_iterations must be at least 1");
    if (s.xi_std < 0.0) throw ConfigError("solver: xi.std must be nonnegative");
    return s;
}

inline ExperimentConfig parse_config(const json& root) {
    Section sec(root, "config");
    ExperimentConfig cfg;
    cfg.kind_name = sec.required<std::string>("experiment");
    cfg.kind = parse_kind(cfg.kind_name);
    if (!sec.has("uncertainty")) throw ConfigError("missing required block 'uncertainty'");
    cfg.set = parse_uncertainty(sec.raw("uncertainty"));
    if (sec.has("controls")) cfg.controls = parse_controls(sec.raw("controls"));
    if (sec.has("coefficients")) {
        const json& c = sec.raw("coefficients");
        Section cs(c, "coefficients");
        cs.required<std::string>("family");
        if (cs.has("params")) cs.raw("params");
        cs.finish();
        cfg.coefficients = c;
    }
    if (sec.has("solver")) cfg.solver = parse_solver(sec.raw("solver"));
    if (sec.has("checks")) {
        Section cs(sec.raw("checks"), "checks");
        cfg.lemmas.ps = cs.optional("p", cfg.lemmas.ps);
        cfg.lemmas.a = cs.optional("a", cfg.lemmas.a);
        cfg.lemmas.b = cs.optional("b", cfg.lemmas.b);
        cfg.lemmas.epsilon = cs.optional("epsilon", cfg.lemmas.epsilon);
        cs.finish();
    }
    if (sec.has("gheat")) {
        Section gs(sec.raw("gheat"), "gheat");
        cfg.gheat.payoffs = gs.optional("payoffs", cfg.gheat.payoffs);
        cfg.gheat.space_steps = gs.optional("space_steps", cfg.gheat.space_steps);
        cfg.gheat.time_steps = gs.optional("time_steps", cfg.gheat.time_steps);
        cfg.gheat.space_halfwidth = gs.optional("space_halfwidth", cfg.gheat.space_halfwidth);
        cfg.gheat.grid_tolerance = gs.optional("grid_tolerance", cfg.gheat.grid_tolerance);
        gs.finish();
    }
    if (sec.has("d1")) {
        Section ds(sec.raw("d1"), "d1");
        cfg.d1.pairs = ds.optional("pairs", cfg.d1.pairs);
        cfg.d1.family_size = ds.optional("family_size", cfg.d1.family_size);
        cfg.d1.scenarios = ds.optional("scenarios", cfg.d1.scenarios);
        cfg.d1.paths = ds.optional("paths", cfg.d1.paths);
        cfg.d1.slack = ds.optional("slack", cfg.d1.slack);
        ds.finish();
    }
    cfg.output = sec.optional<std::string>("output", "");
    if (sec.has("formats")) {
        const auto list = sec.required<std::vector<std::string>>("formats");
        cfg.formats.clear();
        for (const auto& f : list) {
            if (f != "json" && f != "csv" && f != "bin") throw ConfigError("unknown output format '" + f + "'");
            cfg.formats.insert(f);
        }
    }
    sec.finish();

    const std::size_t n = cfg.set->dimension();
    if (cfg.lemmas.a.empty()) cfg.lemmas.a = basis_vector(n, 0);
    if (cfg.lemmas.b.empty()) cfg.lemmas.b = cfg.lemmas.a;
    if (cfg.lemmas.a.size() != n || cfg.lemmas.b.size() != n)
        throw ConfigError("checks: a and b must have the uncertainty dimension");
    const bool needs_coefficients = cfg.kind == Kind::Solve || cfg.kind == Kind::CompareClassical;
    if (needs_coefficients && !cfg.coefficients)
        throw ConfigError("experiment '" + cfg.kind_name + "' requires a 'coefficients' block");
    if (cfg.kind == Kind::CompareClassical && cfg.set->size() != 1)
        throw ConfigError("compare-classical requires a singleton uncertainty set");
    if (cfg.kind == Kind::CompareGHeat && !std::holds_alternative<set_kind::Interval1D>(cfg.set->kind()) &&
        !(std::holds_alternative<set_kind::Singleton>(cfg.set->kind()) && n == 1))
        throw ConfigError("compare-gheat requires a one-dimensional interval or singleton set");
    return cfg;
}

/// Builds a coefficient family from {"family": name, "params": {...}}.
inline CoefficientSet make_family(const json& spec, std::size_t n) {
    const auto family = spec.at("family").get<std::string>();
    const json params = spec.contains("params") ? spec.at("params") : json::object();
    Section ps(params, "coefficients.params");
    CoefficientSet c;
    try {
        if (family == "linear-meanfield") {
            c = families::linear_meanfield(n, ps.optional("mean_coeff", 1.0), ps.optional("state_coeff", 0.0),
                                           ps.optional("diffusion", 0.0), ps.optional("qv_coeff", 0.0));
        } else if (family == "geometric") {
            c = families::geometric(n, ps.optional("mu", 0.0), ps.optional("nu", 1.0));
        } else if (family == "osgood-log") {
            c = families::osgood_log(n, ps.optional("scale", 1.0), ps.optional("diffusion", 0.0));
        } else if (family == "sun-lifted") {
            c = families::sun_lifted(n, ps.optional("theta", 0.5), ps.optional("nu", 0.0));
        } else if (family == "custom-table") {
            c = families::custom_table(n, ps.required<std::vector<double>>("x"),
                                       ps.optional("b", std::vector<double>{}), ps.optional("g", std::vector<double>{}));
        } else if (family == "zero") {
            c = families::zero(n);
        } else {
            throw ConfigError("unknown coefficient family '" + family + "'");
        }
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("coefficients: ") + e.what());
    }
    ps.finish();
    return c;
}

/// Twenty scalar integrands on the bundle grid for the bound checks.
inline std::vector<std::pair<std::string, Ensemble>> lemma_integrand_suite(const GBMBundle& bundle,
                                                                           std::span<const double> a) {
    const TimeGrid& grid = bundle.grid();
    const std::size_t S = bundle.scenarios();
    const std::size_t P = bundle.paths();
    const double t0 = grid.t_start();
    const double T = grid.t_end();
    const double mid = t0 + 0.5 * (T - t0);
    const double q1 = t0 + 0.25 * (T - t0);
    const double q3 = t0 + 0.75 * (T - t0);
    std::vector<double> av(a.begin(), a.end());
    auto Ba = [&bundle, av](std::size_t s, std::size_t p, std::size_t k) { return bundle.projected(s, p, k, av); };
    auto make = [&](auto f) {
        return Ensemble::process_from(S, P, grid, 1, [&](std::size_t s, std::size_t p, std::size_t k, std::size_t) {
            return f(s, p, k, grid.node(k));
        });
    };
    const std::size_t mid_node = grid.steps() / 2;
    std::vector<std::pair<std::string, Ensemble>> suite;
    suite.emplace_back("constant_one", make([](auto, auto, auto, double) { return 1.0; }));
    suite.emplace_back("constant_minus_two", make([](auto, auto, auto, double) { return -2.0; }));
    suite.emplace_back("constant_half", make([](auto, auto, auto, double) { return 0.5; }));
    suite.emplace_back("zero", make([](auto, auto, auto, double) { return 0.0; }));
    suite.emplace_back("indicator_first_half", make([&](auto, auto, auto, double u) { return u < mid ? 1.0 : 0.0; }));
    suite.emplace_back("indicator_second_half", make([&](auto, auto, auto, double u) { return u >= mid ? 1.0 : 0.0; }));
    suite.emplace_back("indicator_middle", make([&](auto, auto, auto, double u) { return u >= q1 && u < q3 ? 1.0 : 0.0; }));
    suite.emplace_back("B", make([&](auto s, auto p, auto k, double) { return Ba(s, p, k); }));
    suite.emplace_back("minus_B", make([&](auto s, auto p, auto k, double) { return -Ba(s, p, k); }));
    suite.emplace_back("abs_B", make([&](auto s, auto p, auto k, double) { return std::abs(Ba(s, p, k)); }));
    suite.emplace_back("B_squared", make([&](auto s, auto p, auto k, double) { return Ba(s, p, k) * Ba(s, p, k); }));
    suite.emplace_back("B_stopped_mid", make([&](auto s, auto p, auto k, double) { return Ba(s, p, std::min(k, mid_node)); }));
    suite.emplace_back("ramp", make([&](auto, auto, auto, double u) { return u - t0; }));
    suite.emplace_back("ramp_stopped_half", make([&](auto, auto, auto, double u) { return std::min(u - t0, 0.5 * (T - t0)); }));
    suite.emplace_back("ramp_stopped_quarter", make([&](auto, auto, auto, double u) { return std::min(u - t0, 0.25 * (T - t0)); }));
    suite.emplace_back("cos_B", make([&](auto s, auto p, auto k, double) { return std::cos(Ba(s, p, k)); }));
    suite.emplace_back("sign_B", make([&](auto s, auto p, auto k, double) {
                           const double v = Ba(s, p, k);
                           return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                       }));
    suite.emplace_back("B_after_mid", make([&](auto s, auto p, auto k, double u) { return u >= mid ? Ba(s, p, k) : 0.0; }));
    suite.emplace_back("running_max_B", make([&](auto s, auto p, auto k, double) {
                           double best = 0.0;
                           for (std::size_t j = 0; j <= k; ++j) best = std::max(best, Ba(s, p, j));
                           return best;
                       }));
    suite.emplace_back("exp_minus_abs_B", make([&](auto s, auto p, auto k, double) { return std::exp(-std::abs(Ba(s, p, k))); }));
    return suite;
}

inline std::function<double(double)> payoff_by_name(const std::string& name) {
    if (name == "square") return [](double x) { return x * x; };
    if (name == "neg_square") return [](double x) { return -x * x; };
    if (name == "identity") return [](double x) { return x; };
    if (name == "abs") return [](double x) { return std::abs(x); };
    if (name == "call") return [](double x) { return std::max(x, 0.0); };
    if (name == "cubic") return [](double x) { return x * x * x; };
    if (name == "butterfly") return [](double x) { return std::max(0.0, 1.0 - std::abs(x)); };
    throw ConfigError("unknown payoff '" + name + "'");
}

/// Convex payoffs saturate sigma_high and concave ones sigma_low, so constant
/// controls reach the G-heat value; other payoffs only get the one-sided check.
inline bool payoff_constant_control_optimal(const std::string& name) {
    return name == "square" || name == "neg_square" || name == "identity" || name == "abs" || name == "call";
}

struct RunResult {
    int exit_code = 0;
    io::OutputSet files;
    std::vector<std::string> messages;
};

namespace detail {
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline ControlLattice lattice_for(const ExperimentConfig& cfg, const TimeGrid& grid) {
    const std::size_t budget = cfg.controls.budget == 0 ? cfg.set->size() : cfg.controls.budget;
    try {
        return build_controls(*cfg.set, grid, cfg.controls.strategy, budget);
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("controls: ") + e.what());
    }
}

inline Ensemble make_xi(const SolverSettings& s, std::size_t scenarios, std::size_t paths, std::uint64_t seed) {
    Ensemble xi = Ensemble::random_variable(scenarios, paths, 1, s.xi_mean);
    if (s.xi_std > 0.0) {
        for (std::size_t sc = 0; sc < scenarios; ++sc)
            for (std::size_t p = 0; p < paths; ++p) {
                CounterStream stream(seed, static_cast<std::uint32_t>(sc), static_cast<std::uint32_t>(p), 0xC1u);
                xi.at(sc, p) = s.xi_mean + s.xi_std * stream.normal();
            }
    }
    return xi;
}

inline double mean_of(const Ensemble& x) { return upper_expectation(x).value; }
}  // namespace detail

inline RunResult run_simulate_gbm(const ExperimentConfig& cfg) {
    RunResult out;
    const auto& s = cfg.solver;
    const TimeGrid grid(s.t_start, s.t_end, s.steps);
    const auto lattice = detail::lattice_for(cfg, grid);
    const GBMBundle bundle = simulate(lattice, s.paths, cfg.set->dimension(), s.seed);
    const std::size_t n = bundle.n();
    const auto a = cfg.lemmas.a;

    bool envelope_ok = true;
    const double hi = sigma_bar(*cfg.set, a, a);
    const double lo = sigma_under(*cfg.set, a);
    json scen = json::array();
    for (std::size_t sc = 0; sc < bundle.scenarios(); ++sc) {
        for (std::size_t k = 0; k < grid.node_count(); ++k) {
            const double v = bundle.qv_form(sc, k, a, a);
            const double t = grid.node(k) - grid.t_start();
            if (v < lo * lo * t * (1.0 - 1e-12) - 1e-15 || v > hi * hi * t * (1.0 + 1e-12) + 1e-15) envelope_ok = false;
        }
        json qvT = json::array();
        for (std::size_t i = 0; i < n; ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < n; ++j) row.push_back(bundle.qv_at(sc, grid.steps(), i, j));
            qvT.push_back(row);
        }
        double mean = 0.0, sq = 0.0;
        for (std::size_t p = 0; p < bundle.paths(); ++p) {
            const double v = bundle.projected(sc, p, grid.steps(), a);
            mean += v;
            sq += v * v;
        }
        mean /= static_cast<double>(bundle.paths());
        sq /= static_cast<double>(bundle.paths());
        scen.push_back({{"scenario", sc}, {"qv_terminal", qvT}, {"mean_Ba_T", mean}, {"second_moment_Ba_T", sq}});
    }
    const json summary{{"scenarios", bundle.scenarios()},
                       {"paths", bundle.paths()},
                       {"steps", grid.steps()},
                       {"sigma_bar_aa", hi},
                       {"sigma_under_aa", lo},
                       {"qv_envelope_ok", envelope_ok},
                       {"per_scenario", scen}};
    if (cfg.formats.count("json")) out.files["gbm_summary.json"] = detail::dump(summary);
    if (cfg.formats.count("csv")) {
        std::ostringstream os;
        os << std::setprecision(17) << "node_time,second_moment_upper,second_moment_lower,analytic_qv_upper,analytic_qv_lower\n";
        for (std::size_t k = 0; k < grid.node_count(); ++k) {
            const auto sq = upper_expectation_of(bundle.scenarios(), bundle.paths(), [&](std::size_t sc, std::size_t p) {
                const double v = bundle.projected(sc, p, k, a);
                return v * v;
            });
            const double lower = *std::min_element(sq.per_scenario.begin(), sq.per_scenario.end());
            double qmax = 0.0, qmin = std::numeric_limits<double>::infinity();
            for (std::size_t sc = 0; sc < bundle.scenarios(); ++sc) {
                qmax = std::max(qmax, bundle.qv_form(sc, k, a, a));
                qmin = std::min(qmin, bundle.qv_form(sc, k, a, a));
            }
            os << grid.node(k) << ',' << sq.value << ',' << lower << ',' << qmax << ',' << qmin << '\n';
        }
        out.files["gbm_nodes.csv"] = os.str();
    }
    if (cfg.formats.count("bin")) {
        std::ostringstream os(std::ios::binary);
        write_bundle(os, bundle);
        out.files["bundle.bin"] = os.str();
    }
    if (!envelope_ok) {
        out.exit_code = 2;
        out.messages.push_back("analytic QV left the sigma envelope");
    }
    return out;
}

inline RunResult run_check_lemmas(const ExperimentConfig& cfg) {
    RunResult out;
    const auto& s = cfg.solver;
    const TimeGrid grid(s.t_start, s.t_end, s.steps);
    const GBMBundle bundle = simulate(detail::lattice_for(cfg, grid), s.paths, cfg.set->dimension(), s.seed);
    const auto suite = lemma_integrand_suite(bundle, cfg.lemmas.a);
    json results = json::array();
    bool all_pass = true;
    for (const auto& [name, x] : suite) {
        for (double p : cfg.lemmas.ps) {
            const auto rep = check_bound_lemmas(bundle, x, p, cfg.lemmas.a, cfg.lemmas.b, full_window(grid), cfg.lemmas.epsilon);
            all_pass = all_pass && rep.q_bound.pass && (!rep.i_bound || rep.i_bound->pass);
            json entry = rep;
            entry["integrand"] = name;
            results.push_back(entry);
        }
    }
    const json report{{"epsilon", cfg.lemmas.epsilon}, {"bdg_c2", Constants::bdg_c2}, {"all_pass", all_pass}, {"checks", results}};
    out.files["bound_report.json"] = detail::dump(report);
    if (!all_pass) {
        out.exit_code = 2;
        out.messages.push_back("a bound lemma check failed");
    }
    return out;
}

inline SolverConfig solver_config(const SolverSettings& s) {
    SolverConfig c;
    c.grid = TimeGrid(s.t_start, s.t_end, s.steps);
    c.paths = s.paths;
    c.picard_tol = s.picard_tol;
    c.max_iterations = s.max_iterations;
    c.epsilon_tol = s.epsilon_tol;
    c.seed = s.seed;
    return c;
}

inline RunResult run_solve(const ExperimentConfig& cfg) {
    RunResult out;
    const auto scfg = solver_config(cfg.solver);
    const GBMBundle bundle = simulate(detail::lattice_for(cfg, scfg.grid), scfg.paths, cfg.set->dimension(), scfg.seed);
    const CoefficientSet coeffs = make_family(*cfg.coefficients, cfg.set->dimension());
    const auto regularity = verify_osgood(coeffs, scfg.grid, 2000, scfg.seed ^ 0x5EEDu, scfg.epsilon_tol);
    for (const auto& w : regularity.warnings) out.messages.push_back("warning: " + w);
    const Ensemble xi = detail::make_xi(cfg.solver, bundle.scenarios(), bundle.paths(), scfg.seed ^ 0xC0FFEEu);

    json report_json;
    try {
        auto [solution, report] = picard_solve(xi, coeffs, bundle, scfg);
        report_json = report;
        if (cfg.formats.count("csv")) out.files["solution.csv"] = solution_summary_csv(solution, report);
        if (!report.converged) {
            out.exit_code = 2;
            out.messages.push_back("Picard iteration did not reach the tolerance");
        }
        if (!report.q_violations.empty()) {
            out.exit_code = 2;
            out.messages.push_back("a priori envelope q violated");
        }
    } catch (const PicardDivergence& e) {
        report_json = e.report();
        out.exit_code = 2;
        out.messages.push_back(e.what());
    }
    report_json["regularity"] = regularity;
    report_json["family"] = coeffs.name;
    if (cfg.formats.count("json")) out.files["picard_report.json"] = detail::dump(report_json);
    return out;
}

inline RunResult run_compare_classical(const ExperimentConfig& cfg) {
    RunResult out;
    const auto scfg = solver_config(cfg.solver);
    const GBMBundle bundle = simulate(detail::lattice_for(cfg, scfg.grid), scfg.paths, cfg.set->dimension(), scfg.seed);
    const CoefficientSet coeffs = make_family(*cfg.coefficients, cfg.set->dimension());
    const Ensemble xi = detail::make_xi(cfg.solver, 1, scfg.paths, scfg.seed ^ 0xC0FFEEu);
    const auto [solution, report] = picard_solve(xi, coeffs, bundle, scfg);
    const Ensemble oracle_xi = detail::make_xi(cfg.solver, 1, scfg.paths, scfg.seed ^ 0xFACADEu);
    const Ensemble classical =
        oracle::classical_mkv_solve(oracle_xi, coeffs, cfg.set->generator(0), scfg.grid, scfg.paths, scfg.seed ^ 0xABCDEFu);

    auto terminal_sq = [&](const Ensemble& x) {
        return upper_expectation(x.slice(x.nodes() - 1).component(0).map([](double v) { return v * v; }));
    };
    const auto eng = terminal_sq(solution);
    const auto ora = terminal_sq(classical);
    const double combined = std::sqrt(eng.std_error * eng.std_error + ora.std_error * ora.std_error);
    const double gap = std::abs(eng.value - ora.value);
    bool pass = gap <= Constants::stderr_band * combined;
    json result{{"engine_second_moment_T", eng.value},       {"engine_std_error", eng.std_error},
                {"classical_second_moment_T", ora.value},    {"classical_std_error", ora.std_error},
                {"engine_vs_classical_gap", gap},            {"combined_std_error", combined},
                {"picard_iterations", report.iterations_used}, {"converged", report.converged}};
    if (coeffs.name == "geometric" && cfg.solver.xi_std == 0.0 && cfg.coefficients->contains("params")) {
        const auto& params = cfg.coefficients->at("params");
        const double mu = params.value("mu", 0.0);
        const double nu = params.value("nu", 1.0);
        const double sig2 = (cfg.set->generator(0) * cfg.set->generator(0).transpose()).sum();
        const double closed = cfg.solver.xi_mean * cfg.solver.xi_mean *
                              std::exp((2.0 * mu + nu * nu * sig2) * (scfg.grid.horizon()));
        result["closed_form_second_moment_T"] = closed;
        const bool ok_eng = std::abs(eng.value - closed) <= Constants::stderr_band * eng.std_error + 0.01 * closed;
        const bool ok_ora = std::abs(ora.value - closed) <= Constants::stderr_band * ora.std_error + 0.01 * closed;
        pass = pass && ok_eng && ok_ora;
    }
    result["pass"] = pass;
    out.files["comparison.json"] = detail::dump(result);
    if (!pass) {
        out.exit_code = 2;
        out.messages.push_back("engine and classical oracle disagree beyond the statistical band");
    }
    return out;
}

inline RunResult run_compare_gheat(const ExperimentConfig& cfg) {
    RunResult out;
    const auto& s = cfg.solver;
    const TimeGrid grid(s.t_start, s.t_end, s.steps);
    const GBMBundle bundle = simulate(detail::lattice_for(cfg, grid), s.paths, 1, s.seed);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& g : cfg.set->generators()) {
        lo = std::min(lo, std::abs(g(0, 0)));
        hi = std::max(hi, std::abs(g(0, 0)));
    }
    if (const auto* iv = std::get_if<set_kind::Interval1D>(&cfg.set->kind())) {
        lo = iv->low;
        hi = iv->high;
    }
    json results = json::array();
    bool all_pass = true;
    for (const auto& name : cfg.gheat.payoffs) {
        const auto phi = payoff_by_name(name);
        const auto est = upper_expectation_of(bundle.scenarios(), bundle.paths(), [&](std::size_t sc, std::size_t p) {
            return phi(bundle.B.at(sc, p, grid.steps(), 0));
        });
        const auto lower = upper_expectation_of(bundle.scenarios(), bundle.paths(), [&](std::size_t sc, std::size_t p) {
            return -phi(bundle.B.at(sc, p, grid.steps(), 0));
        });
        oracle::GHeatConfig gc;
        gc.sigma_low = lo;
        gc.sigma_high = hi;
        gc.horizon = grid.horizon();
        gc.space_halfwidth = cfg.gheat.space_halfwidth;
        gc.space_steps = cfg.gheat.space_steps;
        gc.time_steps = cfg.gheat.time_steps;
        gc.payoff = phi;
        const auto upper_oracle = oracle::gheat_expectation(gc);
        gc.payoff = [phi](double x) { return -phi(x); };
        const auto lower_oracle = oracle::gheat_expectation(gc);
        const double band = Constants::stderr_band * est.std_error + cfg.gheat.grid_tolerance;
        const double band_low = Constants::stderr_band * lower.std_error + cfg.gheat.grid_tolerance;
        bool pass = est.value <= upper_oracle.value + band && lower.value <= lower_oracle.value + band_low;
        if (payoff_constant_control_optimal(name)) {
            pass = pass && std::abs(est.value - upper_oracle.value) <= band &&
                   std::abs(lower.value - lower_oracle.value) <= band_low;
        }
        all_pass = all_pass && pass;
        results.push_back({{"payoff", name},
                           {"engine_upper", est.value},
                           {"engine_upper_std_error", est.std_error},
                           {"engine_lower", -lower.value},
                           {"engine_lower_std_error", lower.std_error},
                           {"gheat_upper", upper_oracle.value},
                           {"gheat_lower", -lower_oracle.value},
                           {"gheat_time_steps", upper_oracle.time_steps},
                           {"lattice_gap_upper", upper_oracle.value - est.value},
                           {"constant_control_optimal", payoff_constant_control_optimal(name)},
                           {"pass", pass}});
    }
    out.files["gheat_comparison.json"] = detail::dump({{"sigma_low", lo},
                                                       {"sigma_high", hi},
                                                       {"scenarios", bundle.scenarios()},
                                                       {"all_pass", all_pass},
                                                       {"payoffs", results}});
    if (!all_pass) {
        out.exit_code = 2;
        out.messages.push_back("engine/G-heat sandwich violated");
    }
    return out;
}

inline RunResult run_d1_check(const ExperimentConfig& cfg) {
    RunResult out;
    const auto& d = cfg.d1;
    const std::uint64_t seed = cfg.solver.seed;
    json pairs = json::array();
    bool all_pass = true;
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < d.pairs; ++i) {
        CounterStream stream(seed, static_cast<std::uint32_t>(i), 0xD1C0u, 0u);
        const double m1 = 2.0 * stream.normal(), s1 = std::exp(stream.normal());
        const double m2 = 2.0 * stream.normal(), s2 = std::exp(stream.normal());
        const bool coupled = stream.uniform() < 0.5;
        Ensemble xi = Ensemble::random_variable(d.scenarios, d.paths);
        Ensemble eta = Ensemble::random_variable(d.scenarios, d.paths);
        for (std::size_t sc = 0; sc < d.scenarios; ++sc)
            for (std::size_t p = 0; p < d.paths; ++p) {
                const double z = stream.normal();
                const double w = stream.normal();
                const double scen_scale = 1.0 + 0.25 * static_cast<double>(sc);
                xi.at(sc, p) = m1 + s1 * scen_scale * z;
                eta.at(sc, p) = coupled ? xi.at(sc, p) + m2 + 0.1 * s2 * w : m2 + s2 * w;
            }
        const double est = d1_distance(xi, eta, d.family_size, seed + i);
        const double l1 = lp_norm(xi - eta, 1.0);
        const bool ok = est <= l1 * (1.0 + d.slack);
        worst_ratio = std::max(worst_ratio, l1 > 0.0 ? est / l1 : 0.0);
        all_pass = all_pass && ok;
        pairs.push_back({{"d1", est}, {"l1", l1}, {"pass", ok}});
    }
    // Constant shift: xi = 0, eta = c gives d1 = |c| exactly.
    json shifts = json::array();
    for (double c : {-2.5, -0.5, 0.75, 3.0}) {
        const Ensemble zero = Ensemble::random_variable(d.scenarios, 8);
        const Ensemble shifted = Ensemble::random_variable(d.scenarios, 8, 1, c);
        const double est = d1_distance(zero, shifted, d.family_size, seed);
        const bool ok = std::abs(est - std::abs(c)) <= 1e-12;
        all_pass = all_pass && ok;
        shifts.push_back({{"shift", c}, {"d1", est}, {"pass", ok}});
    }
    out.files["d1_report.json"] = detail::dump(
        {{"all_pass", all_pass}, {"worst_ratio", worst_ratio}, {"pairs", pairs}, {"constant_shifts", shifts}});
    if (!all_pass) {
        out.exit_code = 2;
        out.messages.push_back("d1 estimator exceeded the L1 bound");
    }
    return out;
}

inline RunResult run_experiment(const ExperimentConfig& cfg) {
    switch (cfg.kind) {
    case Kind::SimulateGbm: return run_simulate_gbm(cfg);
    case Kind::CheckLemmas: return run_check_lemmas(cfg);
    case Kind::Solve: return run_solve(cfg);
    case Kind::CompareClassical: return run_compare_classical(cfg);
    case Kind::CompareGHeat: return run_compare_gheat(cfg);
    case Kind::D1Check: return run_d1_check(cfg);
    }
    throw ConfigError("unhandled experiment kind");
}

struct Overrides {
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
};

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputEnv = "GSDE_OUTPUT_DIR";

/// Loads the config, runs the experiment and writes results plus a run
/// manifest. Exit codes: 0 success, 1 usage/config error, 2 failed check.
inline int run(const std::filesystem::path& config_path, const Overrides& overrides = {},
               std::ostream& log = std::cerr) {
    const auto started = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    json root;
    try {
        const std::string text = io::read_file(config_path);
        try {
            root = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        if (overrides.seed) {
            if (!root.is_object()) throw ConfigError("config must be an object");
            root["solver"]["seed"] = *overrides.seed;
        }
        cfg = parse_config(root);
    } catch (const ConfigError& e) {
        log << "gsde_run: config error: " << e.what() << "\n";
        return 1;
    }
    if (overrides.output) cfg.output = *overrides.output;
    if (cfg.output.empty()) {
        if (const char* env = std::getenv(kOutputEnv)) cfg.output = env;
    }
    if (cfg.output.empty()) {
        log << "gsde_run: config error: no output directory (config 'output', --output or " << kOutputEnv << ")\n";
        return 1;
    }
    if (overrides.threads) set_thread_count(*overrides.threads);

    RunResult result;
    try {
        result = run_experiment(cfg);
    } catch (const ConfigError& e) {
        log << "gsde_run: config error: " << e.what() << "\n";
        return 1;
    } catch (const ContractViolation& e) {
        log << "gsde_run: invalid configuration: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        log << "gsde_run: experiment failed: " << e.what() << "\n";
        return 2;
    }
    for (const auto& m : result.messages) log << "gsde_run: " << m << "\n";

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json files = json::array();
    for (const auto& [name, _] : result.files) files.push_back(name);
    const json manifest{{"config_hash", io::fnv1a_hex(root.dump())},
                        {"experiment", cfg.kind_name},
                        {"seed", cfg.solver.seed},
                        {"version", GSDE_VERSION},
                        {"exit_code", result.exit_code},
                        {"files", files},
                        {"wall_time_seconds", wall}};
    result.files["manifest.json"] = manifest.dump(2) + "\n";
    try {
        io::write_outputs(cfg.output, result.files);
    } catch (const std::exception& e) {
        log << "gsde_run: cannot write outputs: " << e.what() << "\n";
        return 1;
    }
    return result.exit_code;
}

}  // namespace gsde::experiment
