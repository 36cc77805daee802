#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsde/calculus.hpp"
#include "gsde/coefficients.hpp"
#include "gsde/ensemble.hpp"
#include "gsde/error.hpp"
#include "gsde/parallel.hpp"
#include "gsde/sampler.hpp"
#include "gsde/uncertainty.hpp"

namespace gsde {

struct SolverConfig {
    TimeGrid grid{0.0, 1.0, 1};
    std::size_t paths = 1;
    double picard_tol = 1e-4;
    std::size_t max_iterations = 25;
    double epsilon_tol = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        require(picard_tol > 0.0, "SolverConfig: picard_tol must be positive");
        require(max_iterations >= 1, "SolverConfig: max_iterations must be at least 1");
        require(paths >= 1, "SolverConfig: paths must be positive");
        require(epsilon_tol >= 0.0, "SolverConfig: epsilon_tol must be nonnegative");
    }
};

/// (2 + n + n^2) (1 + T + sum_ij sigma_bar_ij^4 T + C_2 sum_i sigma_bar_ii^2),
/// with sigma_bar_ij = sigma_bar(e_i, e_j) and C_2 = 4.
inline double kappa_constant(const UncertaintySet& set, double T) {
    require(T > 0.0, "kappa_constant: horizon must be positive");
    const std::size_t n = set.dimension();
    double quartic = 0.0;
    double diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto ei = basis_vector(n, i);
        for (std::size_t j = 0; j < n; ++j) quartic += std::pow(sigma_bar(set, ei, basis_vector(n, j)), 4.0);
        diag += std::pow(sigma_bar(set, ei, ei), 2.0);
    }
    const double nn = static_cast<double>(n);
    return (2.0 + nn + nn * nn) * (1.0 + T + quartic * T + Constants::bdg_c2 * diag);
}

/// Overload taking the coefficient set for its noise dimension check.
inline double kappa_constant(const CoefficientSet& c, const UncertaintySet& set, double T) {
    require(c.n == set.dimension(), "kappa_constant: coefficient noise dimension differs from the set");
    return kappa_constant(set, T);
}

/// A-priori envelope q on the grid nodes.
struct QCurve {
    std::vector<double> values;
    /// max_k |q_{k+1} - q_k - int K(EK + gamma q)| / max(1, q_{k+1}) with a trapezoid for the q term.
    double ode_residual = 0.0;
};

/// q(s) = K e^{K G(s)} (|xi|^2 + int_t^s E[K_u] e^{-K G(u)} du), G(s) = int_t^s gamma.
/// gamma and E[K] are read as step functions (value at u_j held on [u_j, u_{j+1}))
/// and integrated exactly on each interval.
inline QCurve q_bound(double xi_norm_sq, const std::vector<double>& gamma, const std::vector<double>& expected_K,
                      double kcal, const TimeGrid& grid) {
    require(xi_norm_sq >= 0.0 && kcal >= 0.0, "q_bound: negative input");
    require(gamma.size() == grid.node_count() && expected_K.size() == grid.node_count(),
            "q_bound: tables must be tabulated on the grid nodes");
    for (std::size_t k = 0; k < gamma.size(); ++k)
        require(gamma[k] >= 0.0 && expected_K[k] >= 0.0, "q_bound: negative input");
    const double dt = grid.dt();
    QCurve out;
    out.values.resize(grid.node_count());
    double G = 0.0;      // int_t^{u_k} gamma
    double inner = 0.0;  // int_t^{u_k} E[K] e^{-K G}
    out.values[0] = kcal * xi_norm_sq;
    for (std::size_t k = 0; k + 1 < grid.node_count(); ++k) {
        const double rate = kcal * gamma[k];
        const double piece = rate > 0.0 ? (1.0 - std::exp(-rate * dt)) / rate : dt;
        inner += expected_K[k] * std::exp(-kcal * G) * piece;
        G += gamma[k] * dt;
        out.values[k + 1] = kcal * std::exp(kcal * G) * (xi_norm_sq + inner);
    }
    for (std::size_t k = 0; k + 1 < grid.node_count(); ++k) {
        const double dq = out.values[k + 1] - out.values[k];
        const double rhs = kcal * (expected_K[k] + gamma[k] * 0.5 * (out.values[k] + out.values[k + 1])) * dt;
        out.ode_residual = std::max(out.ode_residual, std::abs(dq - rhs) / std::max(1.0, out.values[k + 1]));
    }
    return out;
}

namespace detail {
inline void require_solver_shapes(const Ensemble& xi, const Ensemble& X, const Ensemble& Y, const CoefficientSet& c,
                                  const GBMBundle& bundle) {
    require(c.n == bundle.n(), "phi_apply: coefficient noise dimension differs from the bundle");
    require(xi.kind() == EnsembleKind::RandomVariable, "phi_apply: xi must be a random variable");
    require(xi.dim() == c.d && X.dim() == c.d && Y.dim() == c.d, "phi_apply: state dimension mismatch");
    require(xi.scenarios() == bundle.scenarios() && xi.paths() == bundle.paths(),
            "phi_apply: xi sample shape differs from the bundle");
    require_matches(X, bundle, "phi_apply");
    require_matches(Y, bundle, "phi_apply");
}
}  // namespace detail

/// Law views of Y at every node but the last.
inline std::vector<LawView> law_views(const Ensemble& Y) {
    std::vector<LawView> laws;
    laws.reserve(Y.nodes());
    for (std::size_t k = 0; k + 1 < Y.nodes(); ++k) laws.emplace_back(Y.slice(k));
    return laws;
}

/// Phi(X, Y)_{u_{k+1}} = Phi_{u_k} + b dt + sum_ij h_ij dQV_ij + sum_i g_i dB^i with every
/// coefficient evaluated at (u_k, X_{u_k}, law(Y_{u_k})); Phi_{u_0} = xi.
inline Ensemble phi_apply(const Ensemble& xi, const Ensemble& X, const Ensemble& Y, const CoefficientSet& c,
                          const GBMBundle& bundle) {
    detail::require_solver_shapes(xi, X, Y, c, bundle);
    const TimeGrid& grid = bundle.grid();
    const std::size_t S = bundle.scenarios();
    const std::size_t P = bundle.paths();
    const std::size_t m = grid.steps();
    const std::size_t d = c.d;
    const std::size_t n = c.n;
    const double dt = grid.dt();
    const auto laws = law_views(Y);

    Ensemble out = Ensemble::process(S, P, grid, d);
    parallel_for(S * P, [&](std::size_t idx) {
        const std::size_t s = idx / P;
        const std::size_t p = idx % P;
        std::vector<double> bv(c.b_size()), hv(c.h_size()), gv(c.g_size()), db(n), dqv(n * n);
        for (std::size_t q = 0; q < d; ++q) out.at(s, p, 0, q) = xi.at(s, p, 0, q);
        for (std::size_t k = 0; k < m; ++k) {
            const ScenarioContext ctx{s, p, k};
            const double t = grid.node(k);
            const auto x = X.state(s, p, k);
            detail::apply(c.b, t, x, laws[k], ctx, bv, "b");
            detail::apply(c.h, t, x, laws[k], ctx, hv, "h");
            detail::apply(c.g, t, x, laws[k], ctx, gv, "g");
            for (std::size_t i = 0; i < n; ++i) {
                db[i] = bundle.B.at(s, p, k + 1, i) - bundle.B.at(s, p, k, i);
                for (std::size_t j = 0; j < n; ++j) dqv[i * n + j] = bundle.qv_at(s, k + 1, i, j) - bundle.qv_at(s, k, i, j);
            }
            for (std::size_t q = 0; q < d; ++q) {
                double inc = bv[q] * dt;
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) inc += hv[(q * n + i) * n + j] * dqv[i * n + j];
                    inc += gv[q * n + i] * db[i];
                }
                const double next = out.at(s, p, k, q) + inc;
                if (!std::isfinite(next)) {
                    throw NonFiniteError("phi_apply: non-finite accumulation at node " + std::to_string(k + 1));
                }
                out.at(s, p, k + 1, q) = next;
            }
        }
    });
    return out;
}

struct QViolation {
    std::size_t iteration;
    std::size_t node;
    double lhs;
    double bound;
};

struct PicardReport {
    std::size_t iterates_kept = 0;
    std::vector<double> h2_distances;
    std::vector<double> contraction_ratios;
    std::vector<double> q_curve;
    double q_ode_residual = 0.0;
    std::vector<QViolation> q_violations;
    bool converged = false;
    std::size_t iterations_used = 0;
    double final_h2_norm = 0.0;
    double final_m2_norm = 0.0;
    double fixed_point_residual = 0.0;
    double kcal = 0.0;
    double sup_gamma = 0.0;
    double picard_tol = 0.0;
};

inline void to_json(nlohmann::json& j, const QViolation& v) {
    j = nlohmann::json{{"iteration", v.iteration}, {"node", v.node}, {"lhs", v.lhs}, {"bound", v.bound}};
}

inline void to_json(nlohmann::json& j, const PicardReport& r) {
    j = nlohmann::json{{"iterates_kept", r.iterates_kept},
                       {"h2_distances", r.h2_distances},
                       {"contraction_ratios", r.contraction_ratios},
                       {"q_curve", r.q_curve},
                       {"q_ode_residual", r.q_ode_residual},
                       {"q_violations", r.q_violations},
                       {"converged", r.converged},
                       {"iterations_used", r.iterations_used},
                       {"final_h2_norm", r.final_h2_norm},
                       {"final_m2_norm", r.final_m2_norm},
                       {"fixed_point_residual", r.fixed_point_residual},
                       {"kcal", r.kcal},
                       {"sup_gamma", r.sup_gamma},
                       {"picard_tol", r.picard_tol}};
}

/// Raised when successive distances exceed the first one three times in a row.
class PicardDivergence : public std::runtime_error {
public:
    PicardDivergence(const std::string& what, PicardReport report)
        : std::runtime_error(what), report_(std::move(report)) {}
    const PicardReport& report() const noexcept { return report_; }

private:
    PicardReport report_;
};

struct PicardResult {
    Ensemble solution;
    PicardReport report;
};

/// E[|xi|^2] with the Euclidean norm over components.
inline double l2_norm_sq(const Ensemble& xi) {
    const double v = lp_norm(xi, 2.0);
    return v * v;
}

/// Picard iteration X^{m+1} = Phi(X^m, X^m) from X^0 = xi held constant
/// (or a caller-supplied start). Every iterate is checked against the
/// envelope q; the factor d on the constant covers d-dimensional states.
inline PicardResult picard_solve(const Ensemble& xi, const CoefficientSet& c, const GBMBundle& bundle,
                                 const SolverConfig& cfg, std::optional<Ensemble> initial = std::nullopt) {
    cfg.validate();
    require(cfg.grid == bundle.grid(), "picard_solve: config grid differs from the bundle grid");
    require(xi.kind() == EnsembleKind::RandomVariable && xi.dim() == c.d, "picard_solve: xi shape mismatch");
    const TimeGrid& grid = bundle.grid();

    PicardReport rep;
    rep.picard_tol = cfg.picard_tol;
    rep.kcal = static_cast<double>(c.d) * kappa_constant(c, bundle.lattice.set, grid.t_end());
    const auto gamma = c.osgood.gamma_table(grid);
    const auto q = q_bound(l2_norm_sq(xi), gamma, c.osgood.expected_K(grid), rep.kcal, grid);
    rep.q_curve = q.values;
    rep.q_ode_residual = q.ode_residual;
    rep.sup_gamma = *std::max_element(gamma.begin(), gamma.end());

    auto check_envelope = [&](const Ensemble& x, std::size_t iteration) {
        const auto running = running_sup_second_moment(x);
        for (std::size_t k = 0; k < running.size(); ++k) {
            if (running[k] > q.values[k] * (1.0 + cfg.epsilon_tol))
                rep.q_violations.push_back({iteration, k, running[k], q.values[k]});
        }
    };

    Ensemble current = initial ? std::move(*initial) : xi.extend_constant(grid);
    require(current.same_shape(xi.extend_constant(grid)), "picard_solve: initial process shape mismatch");
    check_envelope(current, 0);
    rep.iterates_kept = 1;

    std::size_t above_initial = 0;
    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
        Ensemble next = phi_apply(xi, current, current, c, bundle);
        const double dist = h2_norm(next - current);
        if (!rep.h2_distances.empty())
            rep.contraction_ratios.push_back(rep.h2_distances.back() > 0.0 ? dist / rep.h2_distances.back() : 0.0);
        rep.h2_distances.push_back(dist);
        rep.iterations_used = it;
        current = std::move(next);
        check_envelope(current, it);
        if (dist <= cfg.picard_tol) {
            rep.converged = true;
            break;
        }
        above_initial = (rep.h2_distances.size() > 1 && dist > rep.h2_distances.front()) ? above_initial + 1 : 0;
        if (above_initial >= 3) {
            rep.final_h2_norm = h2_norm(current);
            throw PicardDivergence("Picard iteration diverged after " + std::to_string(it) + " iterations", rep);
        }
    }
    rep.final_h2_norm = h2_norm(current);
    rep.final_m2_norm = mp_norm(current, 2.0);
    rep.fixed_point_residual = h2_norm(phi_apply(xi, current, current, c, bundle) - current);
    return {std::move(current), std::move(rep)};
}

/// Alternative Picard starting point.
struct Perturbation {
    enum class Kind { Offset, ScaledB };
    Kind kind = Kind::Offset;
    double amount = 1.0;
};

struct UniquenessReport {
    std::vector<double> final_h2_norms;
    std::vector<std::size_t> iterations;
    std::vector<bool> converged;
    double max_pairwise_gap = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

inline void to_json(nlohmann::json& j, const UniquenessReport& r) {
    j = nlohmann::json{{"final_h2_norms", r.final_h2_norms}, {"iterations", r.iterations},
                       {"converged", r.converged},         {"max_pairwise_gap", r.max_pairwise_gap},
                       {"threshold", r.threshold},         {"pass", r.pass}};
}

/// Runs picard_solve from xi and from each perturbed start; all solutions
/// must lie within 3 x (tol_i + tol_j) of each other in H2.
inline UniquenessReport uniqueness_probe(const Ensemble& xi, const CoefficientSet& c, const GBMBundle& bundle,
                                         const SolverConfig& cfg, const std::vector<Perturbation>& perturbations) {
    const TimeGrid& grid = bundle.grid();
    std::vector<std::optional<Ensemble>> starts{std::nullopt};
    for (const auto& pert : perturbations) {
        Ensemble x0 = xi.extend_constant(grid);
        for (std::size_t s = 0; s < x0.scenarios(); ++s)
            for (std::size_t p = 0; p < x0.paths(); ++p)
                for (std::size_t k = 0; k < x0.nodes(); ++k)
                    for (std::size_t q = 0; q < x0.dim(); ++q) {
                        x0.at(s, p, k, q) += pert.kind == Perturbation::Kind::Offset
                                                 ? pert.amount
                                                 : pert.amount * bundle.B.at(s, p, k, q % bundle.n());
                    }
        starts.emplace_back(std::move(x0));
    }
    UniquenessReport rep;
    std::vector<Ensemble> solutions;
    for (auto& start : starts) {
        auto res = picard_solve(xi, c, bundle, cfg, std::move(start));
        rep.final_h2_norms.push_back(res.report.final_h2_norm);
        rep.iterations.push_back(res.report.iterations_used);
        rep.converged.push_back(res.report.converged);
        solutions.push_back(std::move(res.solution));
    }
    rep.threshold = 3.0 * (2.0 * cfg.picard_tol);
    for (std::size_t i = 0; i < solutions.size(); ++i)
        for (std::size_t j = i + 1; j < solutions.size(); ++j)
            rep.max_pairwise_gap = std::max(rep.max_pairwise_gap, h2_norm(solutions[i] - solutions[j]));
    rep.pass = rep.max_pairwise_gap <= rep.threshold &&
               std::all_of(rep.converged.begin(), rep.converged.end(), [](bool b) { return b; });
    return rep;
}

// ---------------------------------------------------------------------------
// Growth and continuity bounds on Phi as runtime checks.

/// E[sup|Phi(X,Y)|^2] <= K (|xi|^2 + E[int kappa |X|^2 + K_u (1 + ||Y_u||^2) du]).
inline BoundCheck check_phi_growth(const Ensemble& xi, const Ensemble& X, const Ensemble& Y, const CoefficientSet& c,
                                   const GBMBundle& bundle, double epsilon) {
    const Ensemble phi = phi_apply(xi, X, Y, c, bundle);
    const TimeGrid& grid = bundle.grid();
    const double kcal = static_cast<double>(c.d) * kappa_constant(c, bundle.lattice.set, grid.t_end());
    const auto kappa = c.osgood.kappa_table(grid);
    std::vector<double> y_norm_sq(grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k) y_norm_sq[k] = l2_norm_sq(Y.slice(k));
    const double integral = upper_expectation_of(X.scenarios(), X.paths(), [&](std::size_t s, std::size_t p) {
                                double acc = 0.0;
                                for (std::size_t k = 0; k < grid.steps(); ++k) {
                                    const double K = c.osgood.K_at({s, p, k});
                                    acc += (kappa[k] * squared_norm(X.state(s, p, k)) + K * (1.0 + y_norm_sq[k])) * grid.dt();
                                }
                                return acc;
                            }).value;
    BoundCheck out;
    out.p = 2.0;
    out.lhs = std::pow(h2_norm(phi), 2.0);
    out.rhs = kcal * (l2_norm_sq(xi) + integral);
    out.pass = out.lhs <= out.rhs * (1.0 + epsilon);
    return out;
}

/// E[sup|Phi^xi(X,Y) - Phi^eta(X',Y')|^2]
///   <= K (|xi-eta|^2 + E[int kappa rho1(|X-X'|^2) + K_u rho2(||Y_u-Y'_u||^2) du]).
inline BoundCheck check_phi_continuity(const Ensemble& xi, const Ensemble& X, const Ensemble& Y, const Ensemble& eta,
                                       const Ensemble& X2, const Ensemble& Y2, const CoefficientSet& c,
                                       const GBMBundle& bundle, double epsilon) {
    const Ensemble gap = phi_apply(xi, X, Y, c, bundle) - phi_apply(eta, X2, Y2, c, bundle);
    const TimeGrid& grid = bundle.grid();
    const double kcal = static_cast<double>(c.d) * kappa_constant(c, bundle.lattice.set, grid.t_end());
    const auto kappa = c.osgood.kappa_table(grid);
    std::vector<double> law_gap(grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k) law_gap[k] = l2_norm_sq(Y.slice(k) - Y2.slice(k));
    const double integral = upper_expectation_of(X.scenarios(), X.paths(), [&](std::size_t s, std::size_t p) {
                                double acc = 0.0;
                                for (std::size_t k = 0; k < grid.steps(); ++k) {
                                    double diff = 0.0;
                                    for (std::size_t q = 0; q < c.d; ++q) {
                                        const double e = X.at(s, p, k, q) - X2.at(s, p, k, q);
                                        diff += e * e;
                                    }
                                    const double K = c.osgood.K_at({s, p, k});
                                    acc += (kappa[k] * c.osgood.rho1(diff) + K * c.osgood.rho2(law_gap[k])) * grid.dt();
                                }
                                return acc;
                            }).value;
    BoundCheck out;
    out.p = 2.0;
    out.lhs = std::pow(h2_norm(gap), 2.0);
    out.rhs = kcal * (l2_norm_sq(xi - eta) + integral);
    out.pass = out.lhs <= out.rhs * (1.0 + epsilon);
    return out;
}

// ---------------------------------------------------------------------------
// Per-node summary export

/// CSV columns: node_time, mean_upper, mean_lower, second_moment_upper, h2_running, picard_iterations.
/// Statistics are taken on the first state component.
inline std::string solution_summary_csv(const Ensemble& solution, const PicardReport& report) {
    const auto x = solution.component(0);
    const auto running = running_sup_second_moment(x);
    std::ostringstream os;
    os << std::setprecision(17);
    os << "node_time,mean_upper,mean_lower,second_moment_upper,h2_running,picard_iterations\n";
    for (std::size_t k = 0; k < x.nodes(); ++k) {
        const Ensemble slice = x.slice(k);
        os << x.grid().node(k) << ',' << upper_expectation(slice).value << ',' << lower_expectation(slice) << ','
           << upper_expectation(slice.map([](double v) { return v * v; })).value << ',' << std::sqrt(running[k]) << ','
           << report.iterations_used << '\n';
    }
    return os.str();
}

}  // namespace gsde
