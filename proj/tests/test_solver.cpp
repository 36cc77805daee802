#include <gtest/gtest.h>

#include <cmath>

#include "gsde/families.hpp"
#include "gsde/solver.hpp"

using namespace gsde;

namespace {
GBMBundle make_bundle(const UncertaintySet& set, std::size_t steps, std::size_t paths, double T = 1.0) {
    const TimeGrid grid(0.0, T, steps);
    return simulate(build_controls(set, grid, strategy::ConstantVertices{}, set.size()), paths, set.dimension(), 42);
}

SolverConfig config_for(const GBMBundle& b, double tol = 1e-6, std::size_t iters = 40) {
    SolverConfig cfg;
    cfg.grid = b.grid();
    cfg.paths = b.paths();
    cfg.picard_tol = tol;
    cfg.max_iterations = iters;
    return cfg;
}

// Classical RK4 integration of q' = K (E[K] + gamma q), q(0) = K |xi|^2.
double rk4_q(double kcal, double gamma, double ek, double q0, double T, int n) {
    double q = q0;
    const double h = T / n;
    auto f = [&](double y) { return kcal * (ek + gamma * y); };
    for (int i = 0; i < n; ++i) {
        const double k1 = f(q), k2 = f(q + 0.5 * h * k1), k3 = f(q + 0.5 * h * k2), k4 = f(q + h * k3);
        q += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return q;
}
}  // namespace

TEST(KappaConstant, ScalarUnitVolatility) {
    // (2 + 1 + 1)(1 + 1 + 1 + 4) = 28.
    EXPECT_DOUBLE_EQ(kappa_constant(UncertaintySet::scalar(1.0), 1.0), 28.0);
}

TEST(KappaConstant, ZeroVolatility) {
    // (2 + 1 + 1)(1 + 1) = 8.
    EXPECT_DOUBLE_EQ(kappa_constant(UncertaintySet::scalar(0.0), 1.0), 8.0);
}

TEST(QBound, ConstantRatesMatchOde) {
    const TimeGrid grid(0.0, 1.0, 64);
    const double kcal = 0.7, g = 0.4, ek = 1.3, xi2 = 2.0;
    const auto q = q_bound(xi2, std::vector<double>(65, g), std::vector<double>(65, ek), kcal, grid);
    for (std::size_t k : {16u, 32u, 64u})
        EXPECT_NEAR(q.values[k], rk4_q(kcal, g, ek, kcal * xi2, grid.node(k), 4000), 1e-8);
}

TEST(QBound, ZeroGammaIsLinear) {
    const TimeGrid grid(0.0, 2.0, 10);
    const auto q = q_bound(1.0, std::vector<double>(11, 0.0), std::vector<double>(11, 3.0), 2.0, grid);
    EXPECT_NEAR(q.values.back(), 2.0 * (1.0 + 3.0 * 2.0), 1e-12);
}

TEST(PhiApply, ZeroCoefficientsReturnXi) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 8, 10);
    const auto xi = Ensemble::random_variable(2, 10, 1, 1.5);
    const auto X = xi.extend_constant(b.grid());
    const auto out = phi_apply(xi, X, X, families::zero(1), b);
    for (std::size_t k = 0; k <= 8; ++k) EXPECT_EQ(out.at(1, 3, k), 1.5);
}

TEST(PhiApply, ConstantDiffusionIsScaledB) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 8, 10);
    const auto xi = Ensemble::random_variable(2, 10);
    const auto X = xi.extend_constant(b.grid());
    const auto out = phi_apply(xi, X, X, families::linear_meanfield(1, 0.0, 0.0, 2.0), b);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t k = 0; k <= 8; ++k) EXPECT_NEAR(out.at(s, 4, k), 2.0 * b.B.at(s, 4, k), 1e-12);
}

TEST(PhiApply, QvCoefficientIntegratesAgainstQv) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 8, 3);
    const auto xi = Ensemble::random_variable(2, 3);
    const auto X = xi.extend_constant(b.grid());
    const auto out = phi_apply(xi, X, X, families::linear_meanfield(1, 0.0, 0.0, 0.0, 1.0), b);
    for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(out.at(s, 0, 8), b.qv_at(s, 8, 0, 0), 1e-12);
}

TEST(PhiApply, ShapeMismatchRejected) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 8, 10);
    const auto xi = Ensemble::random_variable(2, 9);
    EXPECT_THROW(phi_apply(xi, xi.extend_constant(b.grid()), xi.extend_constant(b.grid()), families::zero(1), b),
                 ContractViolation);
}

TEST(Picard, ZeroCoefficientsConvergeImmediately) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 8, 10);
    const auto xi = Ensemble::random_variable(2, 10, 1, 0.7);
    const auto [sol, rep] = picard_solve(xi, families::zero(1), b, config_for(b));
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.iterations_used, 1u);
    EXPECT_EQ(sol.at(0, 0, 8), 0.7);
}

TEST(Picard, LinearMeanFieldMatchesDiscreteExponential) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 64, 20);
    const auto xi = Ensemble::random_variable(2, 20, 1, 1.0);
    const auto [sol, rep] = picard_solve(xi, families::linear_meanfield(1), b, config_for(b, 1e-10, 60));
    EXPECT_TRUE(rep.converged);
    EXPECT_NEAR(sol.at(0, 0, 64), std::pow(1.0 + 1.0 / 64.0, 64), 1e-8);
    EXPECT_TRUE(rep.q_violations.empty());
}

TEST(Picard, GrowthAndContinuityChecksPass) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 16, 50);
    const auto c = families::osgood_log(1, 1.0, 0.3);
    const auto xi = Ensemble::random_variable(2, 50, 1, 0.2);
    const auto eta = Ensemble::random_variable(2, 50, 1, 0.25);
    const auto X = Ensemble::process_from(2, 50, b.grid(), 1, [&](auto s, auto p, auto k, auto) { return 0.2 + b.B.at(s, p, k); });
    const auto Y = xi.extend_constant(b.grid());
    EXPECT_TRUE(check_phi_growth(xi, X, Y, c, b, 0.05).pass);
    EXPECT_TRUE(check_phi_continuity(xi, X, Y, eta, Y, X, c, b, 0.05).pass);
}

TEST(Picard, UniquenessProbeAgrees) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 32, 20);
    const auto xi = Ensemble::random_variable(2, 20, 1, 1.0);
    const auto rep = uniqueness_probe(xi, families::linear_meanfield(1, 1.0, 0.0, 0.2), b, config_for(b, 1e-6, 60),
                                      {{Perturbation::Kind::Offset, 3.0}, {Perturbation::Kind::ScaledB, 2.0}});
    EXPECT_TRUE(rep.pass) << rep.max_pairwise_gap << " vs " << rep.threshold;
}

TEST(Picard, SummaryCsvHeader) {
    const auto b = make_bundle(UncertaintySet::interval(0.5, 1.0), 4, 5);
    const auto xi = Ensemble::random_variable(2, 5, 1, 1.0);
    const auto [sol, rep] = picard_solve(xi, families::zero(1), b, config_for(b));
    const auto csv = solution_summary_csv(sol, rep);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "node_time,mean_upper,mean_lower,second_moment_upper,h2_running,picard_iterations");
}
