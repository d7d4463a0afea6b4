#include <bundlechoice/rng.hpp>

#include <gtest/gtest.h>

#include <set>

using bundlechoice::RngStream;
using bundlechoice::philox4x32_10;

// Known-answer vectors from the Random123 distribution (kat_vectors, philox4x32_10).
TEST(Philox, KnownAnswerZero) {
    const auto out = philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
    const auto out = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto out = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(RngStream, ReplayIsBitIdentical) {
    RngStream a(42, 7), b(42, 7);
    for (int k = 0; k < 1000; ++k) {
        ASSERT_EQ(a.next_u64(), b.next_u64());
    }
    RngStream c = RngStream(42, 7).substream(3, 9);
    RngStream d = RngStream(42, 7).substream(3, 9);
    for (int k = 0; k < 100; ++k) ASSERT_EQ(c.normal(), d.normal());
}

TEST(RngStream, DistinctStreamsDiffer) {
    std::set<std::uint64_t> first;
    for (std::uint32_t s = 0; s < 64; ++s) first.insert(RngStream(1, s).next_u64());
    for (std::uint32_t a = 0; a < 64; ++a) first.insert(RngStream(1, 0).substream(a + 1, 0).next_u64());
    EXPECT_EQ(first.size(), 128u);
}

TEST(RngStream, UniformIsOpenAndCentered) {
    RngStream rng(5, 0);
    double sum = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double u = rng.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(RngStream, UniformIntCoversRange) {
    RngStream rng(9, 0);
    std::array<int, 6> counts{};
    for (int k = 0; k < 60000; ++k) {
        const auto v = rng.uniform_int(1, 6);
        ASSERT_GE(v, 1);
        ASSERT_LE(v, 6);
        ++counts[static_cast<std::size_t>(v - 1)];
    }
    for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}
