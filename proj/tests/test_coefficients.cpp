#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gsde/coefficients.hpp"
#include "gsde/families.hpp"

using namespace gsde;

namespace {
Ensemble two_scenario_law() {
    // Scenario means 1.0 and 2.5.
    return Ensemble::random_variable(2, 2, 1, std::vector<double>{0.0, 2.0, 2.0, 3.0});
}
}  // namespace

TEST(Evaluate, LinearMeanFieldDriftUsesUpperMean) {
    const TimeGrid grid(0.0, 1.0, 4);
    const auto c = families::linear_meanfield(1, 2.0, -1.0, 0.3);
    const auto law = two_scenario_law();
    const LawView view(law);
    const auto v = evaluate(c, grid, 1, law, view);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t p = 0; p < 2; ++p) {
            EXPECT_DOUBLE_EQ(v.b.at(s, p), 2.0 * 2.5 - law.at(s, p));
            EXPECT_DOUBLE_EQ(v.g.at(s, p), 0.3);
            EXPECT_DOUBLE_EQ(v.h.at(s, p), 0.0);
        }
}

TEST(Evaluate, NonFiniteNamesCoefficientAndNode) {
    const TimeGrid grid(0.0, 1.0, 4);
    CoefficientSet c;
    c.g = [](double, std::span<const double>, const LawView&, const ScenarioContext&, std::span<double> out) {
        out[0] = std::numeric_limits<double>::quiet_NaN();
    };
    const auto law = two_scenario_law();
    try {
        evaluate(c, grid, 3, law, LawView(law));
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("coefficient g"), std::string::npos);
        EXPECT_NE(msg.find("time index 3"), std::string::npos);
    }
}

TEST(Rho, LogOsgoodShapeAndCap) {
    const auto r = Rho::log_osgood(2.0);
    EXPECT_DOUBLE_EQ(r(0.0), 0.0);
    EXPECT_NEAR(r(0.01), 2.0 * 0.01 * std::log(100.0), 1e-15);
    EXPECT_NEAR(r(5.0), 2.0 / std::numbers::e, 1e-15);
    EXPECT_TRUE(check_concave_increasing(r));
}

TEST(Rho, DivergenceOfOsgoodModuli) {
    EXPECT_EQ(check_divergence(Rho::linear(1.0), Rho::linear(0.0)), DivergenceStatus::Divergent);
    EXPECT_EQ(check_divergence(Rho::linear(50.0), Rho::linear(50.0)), DivergenceStatus::Divergent);
    EXPECT_EQ(check_divergence(Rho::log_osgood(4.0), Rho::linear(0.0)), DivergenceStatus::Divergent);
}

TEST(Rho, TableMustStartAtOrigin) {
    EXPECT_DOUBLE_EQ(Rho::from_table({{0.0, 0.0}, {1.0, 2.0}})(0.5), 1.0);
}

TEST(VerifyOsgood, BuiltInFamiliesSatisfyTheirData) {
    const TimeGrid grid(0.0, 1.0, 8);
    for (const auto& c : {families::linear_meanfield(1, 1.0, 0.5, 0.2, 0.1), families::geometric(1, 0.1, 0.4),
                          families::osgood_log(1, 1.5, 0.2), families::sun_lifted(1, 0.7, 0.3),
                          families::custom_table(1, {-1.0, 0.0, 2.0}, {0.5, 0.0, 1.0}, {0.1, 0.2, 0.2})}) {
        const auto rep = verify_osgood(c, grid, 3000, 17);
        EXPECT_TRUE(rep.in_assumption) << c.name << " worst continuity ratio " << rep.continuity_worst_ratio;
    }
}

TEST(VerifyOsgood, SquareRootDriftFlagged) {
    const TimeGrid grid(0.0, 1.0, 8);
    auto c = families::zero(1);
    c.name = "sqrt";
    c.b = [](double, std::span<const double> x, const LawView&, const ScenarioContext&, std::span<double> out) {
        out[0] = std::copysign(std::sqrt(std::abs(x[0])), x[0]);
    };
    c.osgood.kappa = OsgoodData::constant(1.0);
    c.osgood.K = 1.0;
    c.osgood.rho1 = Rho::linear(1.0);
    c.osgood.rho2 = Rho::linear(0.0);
    const auto rep = verify_osgood(c, grid, 3000, 17);
    EXPECT_FALSE(rep.in_assumption);
    EXPECT_GT(rep.continuity_worst_ratio, 1.02);
    EXPECT_FALSE(rep.warnings.empty());
}

TEST(Lift, SunFormMatchesHandCoded) {
    const TimeGrid grid(0.0, 1.0, 4);
    const double theta = 0.7;
    const auto c = families::sun_lifted(1, theta, 0.0);
    const auto law = two_scenario_law();
    const LawView view(law);
    const auto v = evaluate(c, grid, 0, law, view);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t p = 0; p < 2; ++p) EXPECT_NEAR(v.b.at(s, p), -theta * (law.at(s, p) - 2.5), 1e-12);
}

TEST(Lift, DistributionViewEvaluatesTestFunctions) {
    const auto law = two_scenario_law();
    const LawView view(law);
    const DistributionView F(view);
    EXPECT_DOUBLE_EQ(F.mean(), 2.5);
    // E[x^2]: scenario 0 gives 2, scenario 1 gives 6.5.
    EXPECT_DOUBLE_EQ(F([](std::span<const double> y) { return y[0] * y[0]; }), 6.5);
}

TEST(D1, ConstantShiftIsExact) {
    const auto zero = Ensemble::random_variable(3, 4);
    for (double c : {-3.0, 0.25, 7.0}) {
        const auto shifted = Ensemble::random_variable(3, 4, 1, c);
        EXPECT_NEAR(d1_distance(zero, shifted, 32, 1), std::abs(c), 1e-12);
    }
}

TEST(D1, IdenticalLawsHaveZeroDistance) {
    const auto x = two_scenario_law();
    EXPECT_EQ(d1_distance(x, x, 32, 1), 0.0);
}

TEST(D1, BoundedByL1AndSymmetric) {
    for (std::uint32_t t = 0; t < 30; ++t) {
        CounterStream st(99, t, 0, 0);
        auto x = Ensemble::random_variable(2, 64), y = Ensemble::random_variable(2, 64);
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t p = 0; p < 64; ++p) {
                x.at(s, p) = st.normal();
                y.at(s, p) = 0.5 * st.normal() + st.uniform();
            }
        const double d = d1_distance(x, y, 48, t);
        EXPECT_LE(d, lp_norm(x - y, 1.0) * (1.0 + 1e-12));
        EXPECT_DOUBLE_EQ(d, d1_distance(y, x, 48, t));
    }
}

TEST(D1, RejectsSteepTestFunction) {
    const auto x = two_scenario_law();
    std::vector<TestFunction> fam{{TestFunction::Kind::Projection, {1.0}, 0.0, 2.0, 1.0}};
    EXPECT_THROW(d1_distance(x, x, fam), ContractViolation);
}
