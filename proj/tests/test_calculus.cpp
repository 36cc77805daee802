#include <gtest/gtest.h>

#include <cmath>

#include "gsde/calculus.hpp"
#include "gsde/random.hpp"

using namespace gsde;

namespace {
Ensemble random_rv(std::size_t S, std::size_t P, std::uint64_t seed, std::uint32_t tag) {
    Ensemble x = Ensemble::random_variable(S, P);
    CounterStream st(seed, tag, 0, 0);
    const double shift = 3.0 * st.normal();
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t p = 0; p < P; ++p) x.at(s, p) = shift + (1.0 + s) * st.normal();
    return x;
}

GBMBundle bundle(std::size_t steps, std::size_t paths, double lo = 0.5, double hi = 1.0) {
    const TimeGrid grid(0.0, 1.0, steps);
    return simulate(build_controls(UncertaintySet::interval(lo, hi), grid, strategy::ConstantVertices{}, 2), paths, 1, 5);
}
}  // namespace

TEST(UpperExpectation, MaxOverScenarioMeans) {
    const auto x = Ensemble::random_variable(2, 2, 1, std::vector<double>{1.0, 3.0, -1.0, 0.0});
    const auto v = upper_expectation(x);
    EXPECT_DOUBLE_EQ(v.value, 2.0);
    EXPECT_EQ(v.argmax_scenario, 0u);
    EXPECT_DOUBLE_EQ(lower_expectation(x), -0.5);
}

TEST(UpperExpectation, RejectsProcesses) {
    const auto x = Ensemble::process(1, 1, TimeGrid(0.0, 1.0, 2));
    EXPECT_THROW(upper_expectation(x), ContractViolation);
}

TEST(UpperExpectation, AxiomsOnRandomEnsembles) {
    for (std::uint32_t trial = 0; trial < 50; ++trial) {
        const std::size_t S = 1 + trial % 6, P = 16 + 7 * trial;
        const auto x = random_rv(S, P, 3, trial);
        const auto y = random_rv(S, P, 4, trial);
        const double ex = upper_expectation(x).value, ey = upper_expectation(y).value;
        const double scale = 1e-10 * (1.0 + std::abs(ex) + std::abs(ey));
        const auto bigger = x.map([](double v) { return v + std::abs(v) * 0.1 + 0.01; });
        EXPECT_LE(ex, upper_expectation(bigger).value + scale);
        EXPECT_LE(upper_expectation(x + y).value, ex + ey + scale);
        EXPECT_NEAR(upper_expectation(x.map([](double v) { return 2.5 * v; })).value, 2.5 * ex, scale * 2.5);
        EXPECT_NEAR(upper_expectation(x.map([](double v) { return v - 4.0; })).value, ex - 4.0, scale + 4e-10);
        EXPECT_LE(lower_expectation(x), ex + scale);
    }
}

TEST(Norms, LpOfConstant) {
    const auto x = Ensemble::random_variable(3, 5, 1, -2.0);
    EXPECT_NEAR(lp_norm(x, 1.0), 2.0, 1e-15);
    EXPECT_NEAR(lp_norm(x, 3.0), 2.0, 1e-14);
}

TEST(Norms, MpAndH2OfConstantProcess) {
    const TimeGrid grid(0.0, 2.0, 8);
    const auto x = Ensemble::process(2, 3, grid, 1, 3.0);
    EXPECT_NEAR(mp_norm(x, 2.0), 3.0 * std::sqrt(2.0), 1e-13);
    EXPECT_NEAR(h2_norm(x), 3.0, 1e-14);
    EXPECT_NEAR(mp_norm(x, 2.0, Window{0.5, 1.0}), 3.0 * std::sqrt(0.5), 1e-13);
}

TEST(Norms, RunningSupIsNondecreasing) {
    const auto b = bundle(32, 50);
    const auto run = running_sup_second_moment(b.B);
    for (std::size_t k = 1; k < run.size(); ++k) EXPECT_GE(run[k], run[k - 1]);
    EXPECT_EQ(run[0], 0.0);
}

TEST(Integrals, ItoOfOneIsTerminalValue) {
    const auto b = bundle(16, 10);
    const std::vector<double> e{1.0};
    const auto one = Ensemble::process(2, 10, b.grid(), 1, 1.0);
    const auto I = ito_integral(one, b, e, full_window(b.grid()));
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t p = 0; p < 10; ++p) EXPECT_NEAR(I.at(s, p), b.B.at(s, p, 16), 1e-12);
}

TEST(Integrals, QvOfOneIsSigmaSquaredT) {
    const auto b = bundle(16, 3);
    const std::vector<double> e{1.0};
    const auto one = Ensemble::process(2, 3, b.grid(), 1, 1.0);
    const auto Q = qv_integral(one, b, e, e, full_window(b.grid()));
    EXPECT_NEAR(upper_expectation(Q).value, 1.0, 1e-12);
    EXPECT_NEAR(lower_expectation(Q), 0.25, 1e-12);
}

TEST(Integrals, PolarizationMatchesDirect) {
    const TimeGrid grid(0.0, 1.0, 12);
    const auto set = UncertaintySet::diagonal_box({0.5, 0.2}, {1.0, 1.5});
    const auto b = simulate(build_controls(set, grid, strategy::ConstantVertices{}, 4), 6, 2, 3);
    const std::vector<double> a{0.3, -1.1}, c{1.4, 0.7};
    const auto x = Ensemble::process_from(4, 6, grid, 1, [&](auto s, auto p, auto k, auto) { return b.B.at(s, p, k, 0) + 0.1 * k; });
    const auto direct = qv_integral(x, b, a, c, full_window(grid));
    const auto polar = qv_integral_polarized(x, b, a, c, full_window(grid));
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t p = 0; p < 6; ++p)
            EXPECT_NEAR(direct.at(s, p), polar.at(s, p), 1e-10 * (1.0 + std::abs(direct.at(s, p))));
}

TEST(Integrals, LebesgueOfRamp) {
    const TimeGrid grid(0.0, 1.0, 4);
    const auto x = Ensemble::process_from(1, 1, grid, 1, [&](auto, auto, auto k, auto) { return grid.node(k); });
    EXPECT_NEAR(lebesgue_integral(x, full_window(grid)).at(0, 0), (0.0 + 0.25 + 0.5 + 0.75) * 0.25, 1e-15);
}

TEST(Integrals, OffGridWindowRejected) {
    const auto b = bundle(4, 2);
    const std::vector<double> e{1.0};
    const auto one = Ensemble::process(2, 2, b.grid(), 1, 1.0);
    EXPECT_THROW(ito_integral(one, b, e, Window{0.1, 0.5}), ContractViolation);
}

TEST(BoundLemmas, QBoundHoldsForConstants) {
    const auto b = bundle(32, 100);
    const std::vector<double> e{1.0};
    const auto x = Ensemble::process(2, 100, b.grid(), 1, 2.0);
    for (double p : {1.0, 2.0, 3.0}) EXPECT_TRUE(check_q_bound(b, x, p, e, e, full_window(b.grid())).pass);
}

TEST(BoundLemmas, IBoundOnlyForPTwo) {
    const auto b = bundle(8, 20);
    const std::vector<double> e{1.0};
    const auto x = Ensemble::process(2, 20, b.grid(), 1, 1.0);
    EXPECT_THROW(check_i_bound(b, x, 3.0, e, full_window(b.grid())), ContractViolation);
    EXPECT_FALSE(check_bound_lemmas(b, x, 1.0, e, e, full_window(b.grid())).i_bound.has_value());
    EXPECT_TRUE(check_bound_lemmas(b, x, 2.0, e, e, full_window(b.grid())).i_bound.has_value());
}

TEST(BoundLemmas, ViolationDetectedWhenSetUnderstated) {
    // The lattice runs at sigma = 1, but the bound is evaluated with sigma_bar = 0.5.
    const TimeGrid grid(0.0, 1.0, 16);
    auto b = simulate(build_controls(UncertaintySet::scalar(1.0), grid, strategy::ConstantVertices{}, 1), 50, 1, 2);
    b.lattice.set = UncertaintySet::scalar(0.5);
    const std::vector<double> e{1.0};
    const auto x = Ensemble::process(1, 50, grid, 1, 1.0);
    EXPECT_FALSE(check_q_bound(b, x, 1.0, e, e, full_window(grid)).pass);
}
