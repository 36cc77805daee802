#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gsde/calculus.hpp"
#include "gsde/ensemble.hpp"
#include "gsde/error.hpp"
#include "gsde/parallel.hpp"
#include "gsde/random.hpp"
#include "gsde/time_grid.hpp"

namespace gsde {

/// The omega handle passed to coefficients: which sample is being evaluated.
struct ScenarioContext {
    std::size_t scenario = 0;
    std::size_t path = 0;
    std::size_t node = 0;
};

/// Read-only view of the law argument: the candidate X_u across all
/// scenarios and paths, with E[xi] (per component) and ||xi||_{L2} cached.
class LawView {
public:
    explicit LawView(Ensemble samples) : samples_(std::move(samples)) {
        require(samples_.kind() == EnsembleKind::RandomVariable, "LawView: needs a random variable");
        upper_mean_.resize(samples_.dim());
        for (std::size_t c = 0; c < samples_.dim(); ++c) {
            upper_mean_[c] = upper_expectation_of(samples_.scenarios(), samples_.paths(),
                                                  [&](std::size_t s, std::size_t p) { return samples_.at(s, p, 0, c); })
                                 .value;
        }
        l2_norm_ = lp_norm(samples_, 2.0);
    }

    const Ensemble& samples() const noexcept { return samples_; }
    std::size_t dim() const noexcept { return samples_.dim(); }
    double upper_mean(std::size_t c = 0) const { return upper_mean_.at(c); }
    double l2_norm() const noexcept { return l2_norm_; }

    /// E[phi(xi)] for phi: R^d -> R.
    template <typename Phi>
    double expect(Phi&& phi) const {
        return upper_expectation_of(samples_.scenarios(), samples_.paths(),
                                    [&](std::size_t s, std::size_t p) { return phi(samples_.state(s, p)); })
            .value;
    }

private:
    Ensemble samples_;
    std::vector<double> upper_mean_;
    double l2_norm_ = 0.0;
};

/// Writes the coefficient value at (t, x, law, omega) into out.
using CoefficientFn =
    std::function<void(double t, std::span<const double> x, const LawView& law, const ScenarioContext& ctx, std::span<double> out)>;

/// Concave modulus of continuity with rho(0) = 0.
struct Rho {
    enum class Kind { Linear, LogOsgood, Table };
    Kind kind = Kind::Linear;
    double c = 1.0;
    std::vector<std::pair<double, double>> table;  // (r, rho(r)), r ascending, first point (0, 0)

    static Rho linear(double c) { return Rho{Kind::Linear, c, {}}; }
    /// c r ln(1/r) for r < 1/e, held at c/e beyond.
    static Rho log_osgood(double c) { return Rho{Kind::LogOsgood, c, {}}; }
    static Rho from_table(std::vector<std::pair<double, double>> points) {
        require(points.size() >= 2, "Rho table needs at least two points");
        require(points.front().first == 0.0 && points.front().second == 0.0, "Rho table must start at (0, 0)");
        for (std::size_t i = 1; i < points.size(); ++i)
            require(points[i].first > points[i - 1].first, "Rho table abscissae must increase");
        return Rho{Kind::Table, 1.0, std::move(points)};
    }

    double operator()(double r) const {
        if (r <= 0.0) return 0.0;
        switch (kind) {
        case Kind::Linear:
            return c * r;
        case Kind::LogOsgood:
            return r < 1.0 / std::numbers::e ? c * r * std::log(1.0 / r) : c / std::numbers::e;
        case Kind::Table: {
            auto it = std::upper_bound(table.begin(), table.end(), r,
                                       [](double v, const auto& pt) { return v < pt.first; });
            if (it == table.end()) it = std::prev(table.end());
            const auto& hi = *it;
            const auto& lo = *std::prev(it);
            const double w = (r - lo.first) / (hi.first - lo.first);
            return lo.second + w * (hi.second - lo.second);
        }
        }
        return 0.0;
    }

    bool identically_zero() const {
        if (kind == Kind::Table)
            return std::all_of(table.begin(), table.end(), [](const auto& pt) { return pt.second == 0.0; });
        return c == 0.0;
    }
};

/// Regularity data (kappa, K, rho1, rho2) of the continuity and growth bounds.
struct OsgoodData {
    std::function<double(double)> kappa = [](double) { return 0.0; };
    /// K as a constant or as a process ensemble K_s(omega).
    std::variant<double, std::shared_ptr<const Ensemble>> K = 0.0;
    Rho rho1 = Rho::linear(1.0);
    Rho rho2 = Rho::linear(1.0);

    static std::function<double(double)> constant(double v) {
        return [v](double) { return v; };
    }

    double K_at(const ScenarioContext& ctx) const {
        if (const double* k = std::get_if<double>(&K)) return *k;
        const auto& proc = *std::get<std::shared_ptr<const Ensemble>>(K);
        return proc.at(ctx.scenario % proc.scenarios(), ctx.path % proc.paths(), std::min(ctx.node, proc.nodes() - 1));
    }

    std::vector<double> kappa_table(const TimeGrid& grid) const {
        std::vector<double> out(grid.node_count());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = kappa(grid.node(k));
        return out;
    }

    /// E[K_u] on the grid nodes.
    std::vector<double> expected_K(const TimeGrid& grid) const {
        std::vector<double> out(grid.node_count());
        if (const double* k = std::get_if<double>(&K)) {
            std::fill(out.begin(), out.end(), *k);
            return out;
        }
        const auto& proc = *std::get<std::shared_ptr<const Ensemble>>(K);
        for (std::size_t k = 0; k < out.size(); ++k) {
            const std::size_t node = std::min(k, proc.nodes() - 1);
            out[k] = upper_expectation_of(proc.scenarios(), proc.paths(),
                                          [&](std::size_t s, std::size_t p) { return proc.at(s, p, node); })
                         .value;
        }
        return out;
    }

    /// gamma(u) = E[K_u] + kappa(u).
    std::vector<double> gamma_table(const TimeGrid& grid) const {
        auto g = expected_K(grid);
        const auto kap = kappa_table(grid);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += kap[k];
        return g;
    }
};

/// Coefficients (b, h, g) of the mean-field G-SDE. An empty function is zero.
/// h is stored with index (k * n + i) * n + j and g with k * n + i; h need not
/// be symmetric in (i, j).
struct CoefficientSet {
    std::string name = "custom";
    std::size_t d = 1;
    std::size_t n = 1;
    CoefficientFn b;
    CoefficientFn h;
    CoefficientFn g;
    OsgoodData osgood;

    std::size_t b_size() const noexcept { return d; }
    std::size_t h_size() const noexcept { return d * n * n; }
    std::size_t g_size() const noexcept { return d * n; }
};

/// Coefficient outputs over all (scenario, path) at one node.
struct CoefficientValues {
    Ensemble b;  // dim d
    Ensemble h;  // dim d*n*n
    Ensemble g;  // dim d*n
};

namespace detail {
inline void check_finite(std::span<const double> v, const char* which, std::size_t node) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NonFiniteError(std::string("coefficient ") + which + " returned a non-finite value at time index " +
                                 std::to_string(node));
        }
    }
}

inline void apply(const CoefficientFn& f, double t, std::span<const double> x, const LawView& law,
                  const ScenarioContext& ctx, std::span<double> out, const char* which) {
    std::fill(out.begin(), out.end(), 0.0);
    if (f) f(t, x, law, ctx, out);
    check_finite(out, which, ctx.node);
}
}  // namespace detail

/// Pointwise sweep of (b, h, g) over every (scenario, path) with a shared law.
inline CoefficientValues evaluate(const CoefficientSet& c, const TimeGrid& grid, std::size_t node,
                                  const Ensemble& state, const LawView& law) {
    require(node < grid.node_count(), "evaluate: node index outside the grid");
    require(state.kind() == EnsembleKind::RandomVariable && state.dim() == c.d,
            "evaluate: state must be a random variable with d components");
    const double t = grid.node(node);
    const std::size_t S = state.scenarios();
    const std::size_t P = state.paths();
    CoefficientValues out{Ensemble::random_variable(S, P, c.b_size()), Ensemble::random_variable(S, P, c.h_size()),
                          Ensemble::random_variable(S, P, c.g_size())};
    parallel_for(S * P, [&](std::size_t idx) {
        const std::size_t s = idx / P;
        const std::size_t p = idx % P;
        const ScenarioContext ctx{s, p, node};
        const auto x = state.state(s, p);
        detail::apply(c.b, t, x, law, ctx, out.b.state(s, p), "b");
        detail::apply(c.h, t, x, law, ctx, out.h.state(s, p), "h");
        detail::apply(c.g, t, x, law, ctx, out.g.state(s, p), "g");
    });
    return out;
}

// ---------------------------------------------------------------------------
// Regularity diagnostics

enum class DivergenceStatus { Divergent, Inconclusive, Convergent };

inline const char* to_string(DivergenceStatus s) {
    switch (s) {
    case DivergenceStatus::Divergent: return "divergent";
    case DivergenceStatus::Inconclusive: return "inconclusive";
    case DivergenceStatus::Convergent: return "convergent";
    }
    return "?";
}

/// int_delta^1 dr / (rho1(r) + rho2(r)), via r = e^{-y} and Simpson's rule in y.
inline double rho_reciprocal_integral(const Rho& rho1, const Rho& rho2, double delta) {
    const double y_max = std::log(1.0 / delta);
    const std::size_t n = 4000;
    const double h = y_max / static_cast<double>(n);
    auto f = [&](double y) {
        const double r = std::exp(-y);
        const double denom = rho1(r) + rho2(r);
        return denom > 0.0 ? r / denom : std::numeric_limits<double>::infinity();
    };
    double acc = f(0.0) + f(y_max);
    for (std::size_t i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(h * static_cast<double>(i));
    return acc * h / 3.0;
}

/// Numerical look at int_0^1 dr / (rho1 + rho2) = +inf. The truncated
/// integral is evaluated at delta = 1e-100, 1e-200, 1e-300: it must pass the
/// threshold or keep growing at a sustained rate.
inline DivergenceStatus check_divergence(const Rho& rho1, const Rho& rho2, double threshold = 5.0) {
    if (rho1.identically_zero() && rho2.identically_zero()) return DivergenceStatus::Divergent;
    const double i1 = rho_reciprocal_integral(rho1, rho2, 1e-100);
    const double i2 = rho_reciprocal_integral(rho1, rho2, 1e-200);
    const double i3 = rho_reciprocal_integral(rho1, rho2, 1e-300);
    if (!std::isfinite(i3) || i3 > threshold) return DivergenceStatus::Divergent;
    const double late = i3 - i2;
    const double early = i2 - i1;
    if (late <= 1e-6 * std::max(1.0, i3)) return DivergenceStatus::Convergent;
    if (late >= 0.3 * early) return DivergenceStatus::Divergent;
    return DivergenceStatus::Inconclusive;
}

/// rho(0) = 0, nondecreasing and concave on [0, r_max] by finite differences.
inline bool check_concave_increasing(const Rho& rho, double r_max = 10.0, std::size_t samples = 400) {
    if (rho(0.0) != 0.0) return false;
    const double h = r_max / static_cast<double>(samples);
    double prev = rho(0.0);
    double prev_slope = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i <= samples; ++i) {
        const double v = rho(h * static_cast<double>(i));
        const double slope = (v - prev) / h;
        const double tol = 1e-9 * std::max(1.0, std::abs(slope));
        if (slope < -tol || slope > prev_slope + tol) return false;
        prev = v;
        prev_slope = slope;
    }
    return true;
}

struct RegularityReport {
    double continuity_worst_ratio = 0.0;
    double growth_worst_ratio = 0.0;
    std::string continuity_worst_component;
    std::string growth_worst_component;
    double continuity_worst_distance = 0.0;  // ||x - y|| at the worst sample
    bool rho_shape_ok = true;
    DivergenceStatus divergence = DivergenceStatus::Divergent;
    bool in_assumption = true;
    std::vector<std::string> warnings;
};

inline void to_json(nlohmann::json& j, const RegularityReport& r) {
    j = nlohmann::json{{"continuity_worst_ratio", r.continuity_worst_ratio},
                       {"growth_worst_ratio", r.growth_worst_ratio},
                       {"continuity_worst_component", r.continuity_worst_component},
                       {"growth_worst_component", r.growth_worst_component},
                       {"rho_shape_ok", r.rho_shape_ok},
                       {"divergence", to_string(r.divergence)},
                       {"in_assumption", r.in_assumption},
                       {"warnings", r.warnings}};
}

namespace detail {
inline Ensemble random_law(std::size_t d, CounterStream& stream) {
    const std::size_t S = 2;
    const std::size_t P = 32;
    const double shift = 3.0 * (stream.uniform() - 0.5);
    const double scale = std::exp(4.0 * (stream.uniform() - 0.5));
    Ensemble e = Ensemble::random_variable(S, P, d);
    for (double& v : e.values()) v = shift + scale * stream.normal();
    return e;
}

/// Log-uniform magnitude in [1e-6, 10] with random sign.
inline double random_point(CounterStream& stream) {
    const double mag = std::exp(std::log(1e-6) + stream.uniform() * (std::log(10.0) - std::log(1e-6)));
    return stream.uniform() < 0.5 ? -mag : mag;
}

inline double safe_ratio(double lhs, double rhs) {
    if (lhs <= 0.0) return 0.0;
    if (rhs <= 0.0) return std::numeric_limits<double>::infinity();
    return lhs / rhs;
}
}  // namespace detail

/// Samples (s, x, y, xi, eta) and reports the worst violation ratio of the
/// continuity and growth inequalities for every component of b, h and g.
/// A ratio above 1 + epsilon flags the coefficient as out-of-assumption.
inline RegularityReport verify_osgood(const CoefficientSet& c, const TimeGrid& grid, std::size_t sample_count,
                                      std::uint64_t seed, double epsilon = Constants::epsilon_tol) {
    RegularityReport rep;
    const auto& od = c.osgood;
    rep.rho_shape_ok = check_concave_increasing(od.rho1) && check_concave_increasing(od.rho2);
    rep.divergence = check_divergence(od.rho1, od.rho2);
    if (!rep.rho_shape_ok) rep.warnings.push_back("rho1/rho2 not increasing-concave with rho(0) = 0");
    if (rep.divergence == DivergenceStatus::Inconclusive)
        rep.warnings.push_back("divergence of int 1/(rho1 + rho2) is numerically inconclusive");
    if (rep.divergence == DivergenceStatus::Convergent)
        rep.warnings.push_back("int 1/(rho1 + rho2) appears to converge: not an Osgood modulus");

    struct Part {
        const char* name;
        const CoefficientFn* fn;
        std::size_t size;
    };
    const Part parts[] = {{"b", &c.b, c.b_size()}, {"h", &c.h, c.h_size()}, {"g", &c.g, c.g_size()}};
    std::vector<double> x(c.d), y(c.d);
    for (std::size_t i = 0; i < sample_count; ++i) {
        CounterStream stream(seed, static_cast<std::uint32_t>(i), 0x05600Du, 0u);
        const std::size_t node = static_cast<std::size_t>(stream.next_u64() % grid.node_count());
        const double t = grid.node(node);
        // Mix independent pairs with near-coincident pairs to probe the modulus at 0.
        const bool close = stream.uniform() < 0.5;
        for (std::size_t k = 0; k < c.d; ++k) {
            x[k] = detail::random_point(stream);
            y[k] = close ? x[k] + 1e-3 * detail::random_point(stream) : detail::random_point(stream);
        }
        Ensemble xi = detail::random_law(c.d, stream);
        Ensemble eta = stream.uniform() < 0.5 ? xi : detail::random_law(c.d, stream);
        const LawView law_x(xi);
        const LawView law_y(std::move(eta));
        const double law_dist_sq = std::pow(lp_norm(law_x.samples() - law_y.samples(), 2.0), 2.0);
        double state_dist_sq = 0.0;
        for (std::size_t k = 0; k < c.d; ++k) state_dist_sq += (x[k] - y[k]) * (x[k] - y[k]);
        const ScenarioContext ctx{0, 0, node};
        const double kappa = od.kappa(t);
        const double K = od.K_at(ctx);
        const double cont_rhs = kappa * od.rho1(state_dist_sq) + K * od.rho2(law_dist_sq);
        const double growth_rhs = kappa * squared_norm(x) + K * (1.0 + law_x.l2_norm() * law_x.l2_norm());

        for (const auto& part : parts) {
            if (!*part.fn) continue;
            std::vector<double> fx(part.size, 0.0), fy(part.size, 0.0);
            (*part.fn)(t, x, law_x, ctx, fx);
            (*part.fn)(t, y, law_y, ctx, fy);
            for (std::size_t q = 0; q < part.size; ++q) {
                const double diff = fx[q] - fy[q];
                const double cr = detail::safe_ratio(diff * diff, cont_rhs);
                if (cr > rep.continuity_worst_ratio) {
                    rep.continuity_worst_ratio = cr;
                    rep.continuity_worst_component = std::string(part.name) + "[" + std::to_string(q) + "]";
                    rep.continuity_worst_distance = std::sqrt(state_dist_sq);
                }
                const double gr = detail::safe_ratio(fx[q] * fx[q], growth_rhs);
                if (gr > rep.growth_worst_ratio) {
                    rep.growth_worst_ratio = gr;
                    rep.growth_worst_component = std::string(part.name) + "[" + std::to_string(q) + "]";
                }
            }
        }
    }
    if (rep.continuity_worst_ratio > 1.0 + epsilon)
        rep.warnings.push_back("continuity bound violated by " + rep.continuity_worst_component);
    if (rep.growth_worst_ratio > 1.0 + epsilon)
        rep.warnings.push_back("growth bound violated by " + rep.growth_worst_component);
    rep.in_assumption = rep.continuity_worst_ratio <= 1.0 + epsilon && rep.growth_worst_ratio <= 1.0 + epsilon &&
                        rep.rho_shape_ok && rep.divergence != DivergenceStatus::Convergent;
    return rep;
}

// ---------------------------------------------------------------------------
// Distribution-lifted coefficients and the d1 metric

/// The sublinear distribution F_xi: phi -> E[phi(xi)].
class DistributionView {
public:
    explicit DistributionView(const LawView& law) : law_(&law) {}

    template <typename Phi>
    double operator()(Phi&& phi) const {
        return law_->expect(std::forward<Phi>(phi));
    }

    /// F_xi applied to the coordinate projection y -> y_c (served from the cache).
    double mean(std::size_t c = 0) const { return law_->upper_mean(c); }
    std::size_t dim() const noexcept { return law_->dim(); }

private:
    const LawView* law_;
};

/// One scalar component f~(t, x, F) of a distribution-dependent coefficient.
using DistributionFn = std::function<double(double t, std::span<const double> x, const DistributionView& F)>;

/// f(t, x, xi, omega) := f~(t, x, F_xi). The result ignores omega.
inline CoefficientFn lift_distribution_coefficient(std::vector<DistributionFn> components) {
    require(!components.empty(), "lift_distribution_coefficient: no components");
    return [components = std::move(components)](double t, std::span<const double> x, const LawView& law,
                                                const ScenarioContext&, std::span<double> out) {
        require(out.size() == components.size(), "lifted coefficient: component count mismatch");
        const DistributionView F(law);
        for (std::size_t i = 0; i < components.size(); ++i) out[i] = components[i] ? components[i](t, x, F) : 0.0;
    };
}

/// Lipschitz test function used by the d1 estimator.
struct TestFunction {
    enum class Kind { Projection, Hinge, Absolute, SoftPlus };
    Kind kind = Kind::Projection;
    std::vector<double> direction;  // u
    double center = 0.0;            // c
    double slope = 1.0;             // s
    double width = 1.0;             // softplus sharpness w

    /// Lipschitz constant |s| * ||u||.
    double lipschitz() const { return std::abs(slope) * euclidean_norm(direction); }

    double operator()(std::span<const double> y) const {
        double z = -center;
        for (std::size_t i = 0; i < direction.size(); ++i) z += direction[i] * y[i];
        switch (kind) {
        case Kind::Projection: return slope * z;
        case Kind::Hinge: return slope * std::max(0.0, z);
        case Kind::Absolute: return slope * std::abs(z);
        case Kind::SoftPlus: {
            const double wz = width * z;
            const double sp = wz > 30.0 ? wz : std::log1p(std::exp(wz));
            return slope * sp / width;
        }
        }
        return 0.0;
    }
};

/// Coordinate projections +-e_k plus random ridges, hinges and soft-plus
/// functions with unit directions, slopes in [-1, 1] and centers drawn
/// uniformly over the pooled projections (so the family ignores pool order).
inline std::vector<TestFunction> make_test_family(std::size_t d, std::size_t family_size, std::uint64_t seed,
                                                  std::span<const Ensemble* const> pool) {
    std::vector<TestFunction> family;
    for (std::size_t k = 0; k < d; ++k) {
        family.push_back({TestFunction::Kind::Projection, basis_vector(d, k), 0.0, 1.0, 1.0});
        family.push_back({TestFunction::Kind::Projection, basis_vector(d, k), 0.0, -1.0, 1.0});
    }
    for (std::size_t i = 0; family.size() < std::max(family_size, 2 * d); ++i) {
        CounterStream stream(seed, static_cast<std::uint32_t>(i), 0xD1u, 0u);
        TestFunction f;
        const auto pick = stream.next_u64() % 4;
        f.kind = pick == 0 ? TestFunction::Kind::Projection
                 : pick == 1 ? TestFunction::Kind::Hinge
                 : pick == 2 ? TestFunction::Kind::Absolute
                             : TestFunction::Kind::SoftPlus;
        f.direction.resize(d);
        for (auto& u : f.direction) u = stream.normal();
        const double norm = euclidean_norm(f.direction);
        for (auto& u : f.direction) u = norm > 0.0 ? u / norm : 1.0 / std::sqrt(static_cast<double>(d));
        f.slope = 2.0 * stream.uniform() - 1.0;
        f.width = std::exp(3.0 * (stream.uniform() - 0.5));
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const Ensemble* src : pool)
            for (std::size_t s = 0; s < src->scenarios(); ++s)
                for (std::size_t p = 0; p < src->paths(); ++p) {
                    double proj = 0.0;
                    for (std::size_t k = 0; k < d; ++k) proj += f.direction[k] * src->at(s, p, 0, k);
                    lo = std::min(lo, proj);
                    hi = std::max(hi, proj);
                }
        f.center = lo + stream.uniform() * (hi - lo);
        family.push_back(std::move(f));
    }
    return family;
}

/// Lower estimate of d1(F_xi, F_eta) = sup over 1-Lipschitz phi of |F_xi(phi) - F_eta(phi)|,
/// with the sup taken over the given family.
inline double d1_distance(const Ensemble& xi, const Ensemble& eta, std::span<const TestFunction> family) {
    require(xi.kind() == EnsembleKind::RandomVariable && eta.kind() == EnsembleKind::RandomVariable,
            "d1_distance: needs random variables");
    require(xi.dim() == eta.dim(), "d1_distance: dimension mismatch");
    for (const auto& f : family) {
        require(f.direction.size() == xi.dim(), "d1_distance: test function dimension mismatch");
        require(f.lipschitz() <= 1.0 + 1e-12, "d1_distance: test function Lipschitz constant exceeds 1");
    }
    const LawView lx(xi);
    const LawView ly(eta);
    double best = 0.0;
    for (const auto& f : family) best = std::max(best, std::abs(lx.expect(f) - ly.expect(f)));
    return best;
}

inline double d1_distance(const Ensemble& xi, const Ensemble& eta, std::size_t family_size, std::uint64_t seed) {
    const Ensemble* pool[] = {&xi, &eta};
    const auto family = make_test_family(xi.dim(), family_size, seed, pool);
    return d1_distance(xi, eta, family);
}

}  // namespace gsde
