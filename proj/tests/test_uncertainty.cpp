#include <gtest/gtest.h>

#include "gsde/uncertainty.hpp"

using namespace gsde;

TEST(UncertaintySet, IntervalSigmaBarAndUnder) {
    const auto set = UncertaintySet::interval(0.5, 1.0);
    const std::vector<double> e{1.0};
    EXPECT_DOUBLE_EQ(sigma_bar(set, e, e), 1.0);
    EXPECT_DOUBLE_EQ(sigma_under(set, e), 0.5);
    EXPECT_EQ(set.size(), 2u);
}

TEST(UncertaintySet, DegenerateIntervalHasOneGenerator) {
    EXPECT_EQ(UncertaintySet::interval(0.7, 0.7).size(), 1u);
    EXPECT_EQ(UncertaintySet::interval(0.5, 1.0, 5).size(), 5u);
}

TEST(UncertaintySet, SigmaBarScalesWithDirection) {
    const auto set = UncertaintySet::interval(0.5, 1.0);
    const std::vector<double> a{3.0};
    EXPECT_DOUBLE_EQ(sigma_bar(set, a, a), 3.0);
}

TEST(UncertaintySet, DiagonalBoxCorners) {
    const auto set = UncertaintySet::diagonal_box({0.5, 1.0}, {1.0, 2.0});
    EXPECT_EQ(set.size(), 4u);
    EXPECT_EQ(set.dimension(), 2u);
    const auto e0 = basis_vector(2, 0), e1 = basis_vector(2, 1);
    EXPECT_DOUBLE_EQ(sigma_bar(set, e0, e0), 1.0);
    EXPECT_DOUBLE_EQ(sigma_bar(set, e1, e1), 2.0);
    EXPECT_DOUBLE_EQ(sigma_bar(set, e0, e1), 0.0);
    EXPECT_DOUBLE_EQ(sigma_under(set, e1), 1.0);
}

TEST(UncertaintySet, SigmaBarCauchySchwarz) {
    const auto set = UncertaintySet::diagonal_box({0.3, 0.6}, {1.1, 1.7});
    const std::vector<double> a{0.4, -1.2}, b{2.0, 0.5};
    EXPECT_LE(sigma_bar(set, a, b) * sigma_bar(set, a, b), sigma_bar(set, a, a) * sigma_bar(set, b, b) + 1e-12);
}

TEST(UncertaintySet, RejectsNonPsd) {
    Matrix m(2, 2);
    m << 1.0, 2.0, 2.0, 1.0;
    EXPECT_THROW(UncertaintySet::singleton(m), ContractViolation);
    EXPECT_THROW(UncertaintySet::interval(1.0, 0.5), ContractViolation);
}

TEST(Controls, ConstantVerticesOnePerGenerator) {
    const TimeGrid grid(0.0, 1.0, 8);
    const auto lat = build_controls(UncertaintySet::interval(0.5, 1.0), grid, strategy::ConstantVertices{}, 2);
    ASSERT_EQ(lat.scenarios(), 2u);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NE(lat.sigma(0, k)(0, 0), lat.sigma(1, k)(0, 0));
}

TEST(Controls, ExhaustiveCountsAllSequences) {
    const TimeGrid grid(0.0, 1.0, 3);
    const auto lat = build_controls(UncertaintySet::interval(0.5, 1.0), grid, strategy::Exhaustive{100}, 100);
    EXPECT_EQ(lat.scenarios(), 8u);
}

TEST(Controls, ExhaustiveOverflowRejected) {
    const TimeGrid grid(0.0, 1.0, 64);
    EXPECT_THROW(build_controls(UncertaintySet::interval(0.5, 1.0), grid, strategy::Exhaustive{1000}, 1000),
                 LatticeTooLarge);
}

TEST(Controls, BudgetBelowGeneratorsRejected) {
    const TimeGrid grid(0.0, 1.0, 4);
    EXPECT_THROW(build_controls(UncertaintySet::interval(0.5, 1.0, 4), grid, strategy::ConstantVertices{}, 2),
                 ContractViolation);
}

TEST(Controls, RandomSwitchingStaysInSet) {
    const TimeGrid grid(0.0, 1.0, 16);
    const auto set = UncertaintySet::interval(0.5, 1.0);
    const auto lat = build_controls(set, grid, strategy::RandomSwitching{3, 2}, 5);
    EXPECT_EQ(lat.scenarios(), 5u);
    for (std::size_t s = 0; s < lat.scenarios(); ++s)
        for (std::size_t k = 0; k < 16; ++k) {
            const double v = lat.sigma(s, k)(0, 0);
            EXPECT_TRUE(v == 0.5 || v == 1.0);
        }
}
