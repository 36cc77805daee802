#include <gtest/gtest.h>

#include <cmath>

#include "gsde/families.hpp"
#include "gsde/oracles.hpp"

using namespace gsde;

namespace {
double gheat(double lo, double hi, std::function<double(double)> phi, std::size_t space_steps = 400) {
    oracle::GHeatConfig cfg;
    cfg.sigma_low = lo;
    cfg.sigma_high = hi;
    cfg.space_steps = space_steps;
    cfg.payoff = std::move(phi);
    return oracle::gheat_expectation(cfg).value;
}
}  // namespace

TEST(GHeat, OddPayoffIsZero) { EXPECT_NEAR(gheat(0.5, 1.0, [](double x) { return x; }), 0.0, 1e-10); }

TEST(GHeat, ConvexSaturatesHigh) { EXPECT_NEAR(gheat(0.5, 1.0, [](double x) { return x * x; }), 1.0, 1e-3); }

TEST(GHeat, ConcaveSaturatesLow) { EXPECT_NEAR(gheat(0.5, 1.0, [](double x) { return -x * x; }), -0.25, 1e-3); }

TEST(GHeat, SingletonIsClassicalHeat) {
    // E[max(B_1, 0)] with sigma = 0.8 is 0.8 / sqrt(2 pi).
    EXPECT_NEAR(gheat(0.8, 0.8, [](double x) { return std::max(x, 0.0); }, 800), 0.8 / std::sqrt(2.0 * M_PI), 2e-3);
}

TEST(GHeat, CflViolationIsConfigError) {
    oracle::GHeatConfig cfg;
    cfg.time_steps = 10;
    cfg.payoff = [](double x) { return x; };
    EXPECT_THROW(oracle::gheat_expectation(cfg), ConfigError);
}

TEST(ClassicalMkv, ZeroCoefficientsKeepXi) {
    const TimeGrid grid(0.0, 1.0, 8);
    const auto xi = Ensemble::random_variable(1, 10, 1, 2.0);
    const auto X = oracle::classical_mkv_solve(xi, families::zero(1), Matrix::Identity(1, 1), grid, 10, 1);
    for (std::size_t k = 0; k <= 8; ++k) EXPECT_EQ(X.at(0, 3, k), 2.0);
}

TEST(ClassicalMkv, MeanFieldDriftGivesExponential) {
    const TimeGrid grid(0.0, 1.0, 200);
    const auto xi = Ensemble::random_variable(1, 50, 1, 1.0);
    const auto X = oracle::classical_mkv_solve(xi, families::linear_meanfield(1), Matrix::Identity(1, 1), grid, 50, 1);
    EXPECT_NEAR(X.at(0, 0, 200), std::exp(1.0), 0.01);
}

TEST(ClassicalMkv, GeometricSecondMoment) {
    const TimeGrid grid(0.0, 1.0, 100);
    const std::size_t P = 40000;
    const auto xi = Ensemble::random_variable(1, P, 1, 1.0);
    const auto X = oracle::classical_mkv_solve(xi, families::geometric(1), Matrix::Identity(1, 1), grid, P, 3);
    double m2 = 0.0, m4 = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        const double v = X.at(0, p, 100);
        m2 += v * v;
        m4 += v * v * v * v;
    }
    m2 /= P;
    m4 /= P;
    const double se = std::sqrt((m4 - m2 * m2) / P);
    // Euler gives (1 + dt)^n exactly in expectation.
    EXPECT_NEAR(m2, std::pow(1.01, 100), 5.0 * se);
}

TEST(ClassicalMkv, RequiresSingleScenario) {
    const TimeGrid grid(0.0, 1.0, 4);
    const auto xi = Ensemble::random_variable(2, 4);
    EXPECT_THROW(oracle::classical_mkv_solve(xi, families::zero(1), Matrix::Identity(1, 1), grid, 4, 1), ContractViolation);
}
