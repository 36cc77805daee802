#include <gtest/gtest.h>

#include <cmath>

#include "gsde/random.hpp"

using gsde::CounterStream;
using gsde::Philox4x32;

TEST(Philox, KnownAnswerZero) {
    const auto out = Philox4x32::bijection({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto out = Philox4x32::bijection({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto out = Philox4x32::bijection({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(CounterStream, SameCoordinatesSameStream) {
    CounterStream a(42, 1, 2, 3), b(42, 1, 2, 3);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(CounterStream, DifferentCoordinatesDiffer) {
    CounterStream a(42, 1, 2, 3), b(42, 1, 2, 4), c(43, 1, 2, 3);
    const auto x = a.next_u64();
    EXPECT_NE(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
}

TEST(CounterStream, UniformInOpenUnitInterval) {
    CounterStream s(7, 0, 0, 0);
    for (int i = 0; i < 10000; ++i) {
        const double u = s.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(CounterStream, NormalMoments) {
    CounterStream s(11, 0, 0, 0);
    const int n = 200000;
    double m = 0.0, v = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        m += z;
        v += z * z;
    }
    m /= n;
    v /= n;
    EXPECT_NEAR(m, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(v, 1.0, 5.0 * std::sqrt(2.0 / n));
}
