#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsde/ensemble.hpp"
#include "gsde/error.hpp"
#include "gsde/sampler.hpp"
#include "gsde/time_grid.hpp"

namespace gsde {

/// Numerical constants shared by the bound checks.
struct Constants {
    /// Burkholder-Davis-Gundy constant for p = 2 (Doob's L2 maximal inequality).
    static constexpr double bdg_c2 = 4.0;
    /// Default relative slack for runtime bound checks.
    static constexpr double epsilon_tol = 0.02;
    /// Relative tolerance for deterministic identities.
    static constexpr double identity_tol = 1e-10;
    /// Width of statistical bands, in standard errors.
    static constexpr double stderr_band = 5.0;
};

/// Max-over-scenarios of path means: the upper expectation estimator.
struct SublinearValue {
    double value = 0.0;
    std::vector<double> per_scenario;
    std::size_t argmax_scenario = 0;
    /// Standard error of the argmax scenario mean (sample variance / P).
    double std_error = 0.0;
};

/// Upper expectation of the per-sample quantity f(s, p).
/// Means are summed serially in path order so results are bit-stable.
template <typename F>
SublinearValue upper_expectation_of(std::size_t scenarios, std::size_t paths, F&& f) {
    require(scenarios > 0 && paths > 0, "upper_expectation: empty ensemble");
    SublinearValue out;
    out.per_scenario.resize(scenarios);
    std::vector<double> variance(scenarios);
    for (std::size_t s = 0; s < scenarios; ++s) {
        double sum = 0.0;
        double sum_sq = 0.0;
        for (std::size_t p = 0; p < paths; ++p) {
            const double v = f(s, p);
            sum += v;
            sum_sq += v * v;
        }
        const double mean = sum / static_cast<double>(paths);
        out.per_scenario[s] = mean;
        variance[s] = paths > 1 ? std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(paths - 1)) : 0.0;
    }
    const auto it = std::max_element(out.per_scenario.begin(), out.per_scenario.end());
    out.argmax_scenario = static_cast<std::size_t>(it - out.per_scenario.begin());
    out.value = *it;
    out.std_error = std::sqrt(variance[out.argmax_scenario] / static_cast<double>(paths));
    return out;
}

inline SublinearValue upper_expectation(const Ensemble& x) {
    require(!x.empty(), "upper_expectation: empty ensemble");
    require(x.kind() == EnsembleKind::RandomVariable, "upper_expectation: needs a random variable");
    require(x.dim() == 1, "upper_expectation: needs scalar components");
    return upper_expectation_of(x.scenarios(), x.paths(), [&](std::size_t s, std::size_t p) { return x.at(s, p); });
}

/// -E[-X], the lower expectation.
inline double lower_expectation(const Ensemble& x) {
    return -upper_expectation(x.map([](double v) { return -v; })).value;
}

/// E[|X|^p]^{1/p}, with |.| the Euclidean norm over components.
inline double lp_norm(const Ensemble& x, double p) {
    require(p >= 1.0, "lp_norm: p must be at least 1");
    require(x.kind() == EnsembleKind::RandomVariable, "lp_norm: needs a random variable");
    const auto v = upper_expectation_of(x.scenarios(), x.paths(), [&](std::size_t s, std::size_t q) {
        return std::pow(euclidean_norm(x.state(s, q)), p);
    });
    return std::pow(std::max(0.0, v.value), 1.0 / p);
}

namespace detail {
inline void require_process(const Ensemble& x, const char* who) {
    require(x.kind() == EnsembleKind::Process, std::string(who) + ": needs a process ensemble");
    require(x.maybe_grid().has_value(), std::string(who) + ": process grid missing");
}

inline void require_matches(const Ensemble& x, const GBMBundle& b, const char* who) {
    require_process(x, who);
    require(x.scenarios() == b.scenarios() && x.paths() == b.paths(),
            std::string(who) + ": ensemble and bundle sample shapes differ");
    require(x.grid() == b.grid(), std::string(who) + ": ensemble and bundle grids differ");
}

inline double node_moment(const Ensemble& x, std::size_t k, double p) {
    return upper_expectation_of(x.scenarios(), x.paths(), [&](std::size_t s, std::size_t q) {
               return std::pow(euclidean_norm(x.state(s, q, k)), p);
           }).value;
}
}  // namespace detail

/// (sum_k E[|X_{u_k}|^p] dt)^{1/p} with left endpoints (step-process integrand).
inline double mp_norm(const Ensemble& x, double p, std::optional<Window> window = std::nullopt) {
    require(p >= 1.0, "mp_norm: p must be at least 1");
    detail::require_process(x, "mp_norm");
    const NodeRange r = resolve(x.grid(), window.value_or(full_window(x.grid())));
    double acc = 0.0;
    for (std::size_t k = r.first; k < r.last; ++k) acc += detail::node_moment(x, k, p) * x.grid().dt();
    return std::pow(acc, 1.0 / p);
}

/// E[sup_k |X_{u_k}|^2]^{1/2} over the grid nodes.
inline double h2_norm(const Ensemble& x) {
    detail::require_process(x, "h2_norm");
    const auto v = upper_expectation_of(x.scenarios(), x.paths(), [&](std::size_t s, std::size_t p) {
        double best = 0.0;
        for (std::size_t k = 0; k < x.nodes(); ++k) best = std::max(best, squared_norm(x.state(s, p, k)));
        return best;
    });
    return std::sqrt(v.value);
}

/// Running E[sup_{w <= u_k} |X_w|^2] for every node k.
inline std::vector<double> running_sup_second_moment(const Ensemble& x) {
    detail::require_process(x, "running_sup_second_moment");
    const std::size_t S = x.scenarios();
    const std::size_t P = x.paths();
    std::vector<double> running(S * P, 0.0);
    std::vector<double> out(x.nodes());
    for (std::size_t k = 0; k < x.nodes(); ++k) {
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t p = 0; p < P; ++p)
                running[s * P + p] = std::max(running[s * P + p], squared_norm(x.state(s, p, k)));
        out[k] = upper_expectation_of(S, P, [&](std::size_t s, std::size_t p) { return running[s * P + p]; }).value;
    }
    return out;
}

/// Generic left-endpoint integral sum_k X_{u_k} * increment(s, p, k) over the window.
template <typename Increment>
Ensemble integrate_against(const Ensemble& x, const NodeRange& r, Increment&& increment) {
    Ensemble out = Ensemble::random_variable(x.scenarios(), x.paths(), x.dim());
    for (std::size_t s = 0; s < x.scenarios(); ++s)
        for (std::size_t p = 0; p < x.paths(); ++p)
            for (std::size_t k = r.first; k < r.last; ++k) {
                const double inc = increment(s, p, k);
                for (std::size_t c = 0; c < x.dim(); ++c) out.at(s, p, 0, c) += x.at(s, p, k, c) * inc;
            }
    out.validate_finite();
    return out;
}

/// Ito integral sum_k X_{u_k} (B^a_{u_{k+1}} - B^a_{u_k}) over the window.
inline Ensemble ito_integral(const Ensemble& x, const GBMBundle& bundle, std::span<const double> a, const Window& window) {
    detail::require_matches(x, bundle, "ito_integral");
    require(a.size() == bundle.n(), "ito_integral: direction length must equal n");
    const NodeRange r = resolve(x.grid(), window);
    return integrate_against(x, r, [&](std::size_t s, std::size_t p, std::size_t k) {
        return bundle.projected(s, p, k + 1, a) - bundle.projected(s, p, k, a);
    });
}

/// Integral against d<B^a, B^b> using the analytic covariation tensor.
inline Ensemble qv_integral(const Ensemble& x, const GBMBundle& bundle, std::span<const double> a,
                            std::span<const double> b, const Window& window) {
    detail::require_matches(x, bundle, "qv_integral");
    require(a.size() == bundle.n() && b.size() == bundle.n(), "qv_integral: direction length must equal n");
    const NodeRange r = resolve(x.grid(), window);
    return integrate_against(x, r, [&](std::size_t s, std::size_t, std::size_t k) {
        return bundle.qv_form(s, k + 1, a, b) - bundle.qv_form(s, k, a, b);
    });
}

/// 1/4 (Q_{a+b} - Q_{a-b}), the polarization form of qv_integral.
inline Ensemble qv_integral_polarized(const Ensemble& x, const GBMBundle& bundle, std::span<const double> a,
                                      std::span<const double> b, const Window& window) {
    require(a.size() == b.size(), "qv_integral_polarized: direction lengths differ");
    std::vector<double> plus(a.size()), minus(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        plus[i] = a[i] + b[i];
        minus[i] = a[i] - b[i];
    }
    const Ensemble qp = qv_integral(x, bundle, plus, plus, window);
    const Ensemble qm = qv_integral(x, bundle, minus, minus, window);
    return qp.combine(0.25, qm, -0.25);
}

/// Left-endpoint Riemann sum of X du.
inline Ensemble lebesgue_integral(const Ensemble& x, const Window& window) {
    detail::require_process(x, "lebesgue_integral");
    const NodeRange r = resolve(x.grid(), window);
    const double dt = x.grid().dt();
    return integrate_against(x, r, [dt](std::size_t, std::size_t, std::size_t) { return dt; });
}

/// One side-by-side evaluation of a moment bound.
struct BoundCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double sigma_bar = 0.0;
    double p = 0.0;
    bool pass = false;
};

inline void to_json(nlohmann::json& j, const BoundCheck& c) {
    j = nlohmann::json{{"lhs", c.lhs}, {"rhs", c.rhs}, {"sigma_bar", c.sigma_bar}, {"p", c.p}, {"pass", c.pass}};
}

struct BoundReport {
    BoundCheck q_bound;
    std::optional<BoundCheck> i_bound;  // present when p == 2
};

inline void to_json(nlohmann::json& j, const BoundReport& r) {
    j = nlohmann::json{{"q_bound", r.q_bound}};
    j["i_bound"] = r.i_bound ? nlohmann::json(*r.i_bound) : nlohmann::json(nullptr);
}

namespace detail {
inline double integrated_moment(const Ensemble& x, const NodeRange& r, double p) {
    double acc = 0.0;
    for (std::size_t k = r.first; k < r.last; ++k) acc += node_moment(x, k, p) * x.grid().dt();
    return acc;
}

template <typename Increment>
double sup_moment(const Ensemble& x, const NodeRange& r, double p, Increment&& increment) {
    return upper_expectation_of(x.scenarios(), x.paths(), [&](std::size_t s, std::size_t q) {
               double running = 0.0;
               double best = 0.0;
               for (std::size_t k = r.first; k < r.last; ++k) {
                   running += x.at(s, q, k) * increment(s, q, k);
                   best = std::max(best, std::abs(running));
               }
               return std::pow(best, p);
           }).value;
}
}  // namespace detail

/// E[sup_w |int_t^w X d<B^a,B^b>|^p] <= sigma_bar_ab^{2p} (s-t)^{p-1} int_t^s E|X_u|^p du.
inline BoundCheck check_q_bound(const GBMBundle& bundle, const Ensemble& x, double p, std::span<const double> a,
                                std::span<const double> b, const Window& window,
                                double epsilon = Constants::epsilon_tol) {
    require(p >= 1.0, "check_q_bound: p must be at least 1");
    detail::require_matches(x, bundle, "check_q_bound");
    require(x.dim() == 1, "check_q_bound: needs a scalar integrand");
    const NodeRange r = resolve(x.grid(), window);
    BoundCheck c;
    c.p = p;
    c.sigma_bar = sigma_bar(bundle.lattice.set, a, b);
    c.lhs = detail::sup_moment(x, r, p, [&](std::size_t s, std::size_t, std::size_t k) {
        return bundle.qv_form(s, k + 1, a, b) - bundle.qv_form(s, k, a, b);
    });
    const double len = window.end - window.start;
    c.rhs = std::pow(c.sigma_bar, 2.0 * p) * std::pow(len, p - 1.0) * detail::integrated_moment(x, r, p);
    c.pass = c.lhs <= c.rhs * (1.0 + epsilon);
    return c;
}

/// E[sup_w |int_t^w X dB^a|^p] <= C_p sigma_bar_aa^p (s-t)^{(p-2)/2} int_t^s E|X_u|^p du, p = 2 only
/// (C_2 = 4 is the only tabulated constant).
inline BoundCheck check_i_bound(const GBMBundle& bundle, const Ensemble& x, double p, std::span<const double> a,
                                const Window& window, double epsilon = Constants::epsilon_tol) {
    require(p >= 2.0, "check_i_bound: p must be at least 2");
    require(p == 2.0, "check_i_bound: BDG constant only tabulated for p = 2");
    detail::require_matches(x, bundle, "check_i_bound");
    require(x.dim() == 1, "check_i_bound: needs a scalar integrand");
    const NodeRange r = resolve(x.grid(), window);
    BoundCheck c;
    c.p = p;
    c.sigma_bar = sigma_bar(bundle.lattice.set, a, a);
    c.lhs = detail::sup_moment(x, r, p, [&](std::size_t s, std::size_t q, std::size_t k) {
        return bundle.projected(s, q, k + 1, a) - bundle.projected(s, q, k, a);
    });
    const double len = window.end - window.start;
    c.rhs = Constants::bdg_c2 * std::pow(c.sigma_bar, p) * std::pow(len, (p - 2.0) / 2.0) *
            detail::integrated_moment(x, r, p);
    c.pass = c.lhs <= c.rhs * (1.0 + epsilon);
    return c;
}

/// Q-bound for (a, b) and, when p >= 2, the I-bound for a.
inline BoundReport check_bound_lemmas(const GBMBundle& bundle, const Ensemble& x, double p, std::span<const double> a,
                                      std::span<const double> b, const Window& window,
                                      double epsilon = Constants::epsilon_tol) {
    BoundReport r{check_q_bound(bundle, x, p, a, b, window, epsilon), std::nullopt};
    if (p == 2.0) r.i_bound = check_i_bound(bundle, x, p, a, window, epsilon);
    return r;
}

}  // namespace gsde
