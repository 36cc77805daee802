#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gsde/calculus.hpp"
#include "gsde/parallel.hpp"
#include "gsde/sampler.hpp"

using namespace gsde;

namespace {
GBMBundle interval_bundle(std::size_t steps, std::size_t paths, std::uint64_t seed = 42) {
    const TimeGrid grid(0.0, 1.0, steps);
    return simulate(build_controls(UncertaintySet::interval(0.5, 1.0), grid, strategy::ConstantVertices{}, 2), paths, 1,
                    seed);
}
}  // namespace

TEST(Sampler, StartsAtZero) {
    const auto b = interval_bundle(8, 16);
    for (std::size_t s = 0; s < b.scenarios(); ++s)
        for (std::size_t p = 0; p < b.paths(); ++p) EXPECT_EQ(b.B.at(s, p, 0), 0.0);
}

TEST(Sampler, AnalyticQvIsSigmaSquaredTimesTime) {
    const auto b = interval_bundle(10, 4);
    const std::vector<double> e{1.0};
    for (std::size_t s = 0; s < b.scenarios(); ++s) {
        const double sig = b.lattice.sigma(s, 0)(0, 0);
        for (std::size_t k = 0; k <= 10; ++k) EXPECT_NEAR(b.qv_form(s, k, e, e), sig * sig * 0.1 * k, 1e-14);
    }
}

TEST(Sampler, TerminalVarianceMatchesVolatility) {
    const auto b = interval_bundle(4, 40000);
    for (std::size_t s = 0; s < b.scenarios(); ++s) {
        const double sig = b.lattice.sigma(s, 0)(0, 0);
        double m2 = 0.0;
        for (std::size_t p = 0; p < b.paths(); ++p) m2 += b.B.at(s, p, 4) * b.B.at(s, p, 4);
        m2 /= static_cast<double>(b.paths());
        EXPECT_NEAR(m2, sig * sig, 5.0 * sig * sig * std::sqrt(2.0 / 40000.0));
    }
}

TEST(Sampler, IndependentOfThreadCount) {
    set_thread_count(1);
    const auto a = interval_bundle(16, 64, 9);
    set_thread_count(4);
    const auto b = interval_bundle(16, 64, 9);
    set_thread_count(0);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t p = 0; p < 64; ++p)
            for (std::size_t k = 0; k <= 16; ++k) ASSERT_EQ(a.B.at(s, p, k), b.B.at(s, p, k));
}

TEST(Sampler, EmpiricalQvConvergesToAnalytic) {
    const auto b = interval_bundle(512, 200);
    const std::vector<double> e{1.0};
    const Ensemble q = empirical_qv(b, e);
    for (std::size_t s = 0; s < 2; ++s) {
        double err = 0.0;
        for (std::size_t p = 0; p < 200; ++p) err += std::abs(q.at(s, p, 512) - b.qv_form(s, 512, e, e));
        EXPECT_LT(err / 200.0, 5.0 * std::sqrt(1.0 / 512.0));
    }
}

TEST(Sampler, BundleRoundTrip) {
    const auto b = interval_bundle(6, 5);
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_bundle(ss, b);
    const auto r = read_bundle(ss);
    EXPECT_EQ(r.seed, b.seed);
    EXPECT_EQ(r.grid(), b.grid());
    ASSERT_EQ(r.scenarios(), b.scenarios());
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t p = 0; p < 5; ++p)
            for (std::size_t k = 0; k <= 6; ++k) {
                EXPECT_EQ(r.B.at(s, p, k), b.B.at(s, p, k));
                EXPECT_EQ(r.qv_at(s, k, 0, 0), b.qv_at(s, k, 0, 0));
            }
}

TEST(Sampler, CorruptBundleRejected) {
    std::stringstream ss("not a bundle at all");
    EXPECT_ANY_THROW(read_bundle(ss));
}
