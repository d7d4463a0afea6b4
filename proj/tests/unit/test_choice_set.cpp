#include <bundlechoice/choice_set.hpp>
#include <bundlechoice/rng.hpp>

#include <gtest/gtest.h>

#include <set>

using namespace bundlechoice;

TEST(ChoiceSet, TwoGoods) {
    const auto cs = enumerate_choice_set(2);
    ASSERT_EQ(cs.size(), 4);
    EXPECT_EQ(cs.bundle(0), Bundle{});
    EXPECT_EQ(cs.bundle(1), (Bundle{0}));
    EXPECT_EQ(cs.bundle(2), (Bundle{1}));
    EXPECT_EQ(cs.bundle(3), (Bundle{0, 1}));
}

TEST(ChoiceSet, ThreeGoodsPaperOrder) {
    const auto cs = enumerate_choice_set(3);
    const std::vector<Bundle> expected{{}, {0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}};
    EXPECT_EQ(cs.bundles(), expected);
    EXPECT_EQ(cs.inside(), 7);
}

TEST(ChoiceSet, OneGood) {
    const auto cs = enumerate_choice_set(1);
    ASSERT_EQ(cs.size(), 2);
    EXPECT_EQ(cs.bundle(1), (Bundle{0}));
    EXPECT_EQ(cs.pair_count(), 0);
}

TEST(ChoiceSet, LimitsEnforced) {
    EXPECT_THROW(enumerate_choice_set(0), ConfigError);
    EXPECT_THROW(enumerate_choice_set(8), ConfigError);
    EXPECT_NO_THROW(enumerate_choice_set(7));
}

TEST(ChoiceSet, BijectionOntoPowerSet) {
    for (int J = 1; J <= 7; ++J) {
        const auto cs = enumerate_choice_set(J);
        std::set<unsigned> masks;
        std::size_t prev_size = 0;
        for (int r = 0; r < cs.size(); ++r) {
            unsigned m = 0;
            const auto& b = cs.bundle(r);
            EXPECT_GE(b.size(), prev_size);  // sizes nondecreasing
            prev_size = b.size();
            for (std::size_t k = 1; k < b.size(); ++k) EXPECT_LT(b[k - 1], b[k]);
            for (int j : b) m |= 1u << j;
            masks.insert(m);
            EXPECT_EQ(cs.index_of(b), r);
        }
        EXPECT_EQ(masks.size(), std::size_t{1} << J);
    }
}

TEST(ChoiceSet, LexicographicWithinSize) {
    const auto cs = enumerate_choice_set(5);
    for (int r = 2; r < cs.size(); ++r) {
        if (cs.bundle(r).size() == cs.bundle(r - 1).size()) EXPECT_LT(cs.bundle(r - 1), cs.bundle(r));
    }
}

TEST(MembershipMatrix, ThreeGoods) {
    const auto m = membership_matrix(enumerate_choice_set(3));
    Eigen::MatrixXd expected(7, 3);
    expected << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1;
    EXPECT_EQ(m, expected);
}

TEST(MembershipMatrix, SmallCases) {
    EXPECT_EQ(membership_matrix(enumerate_choice_set(1)), Eigen::MatrixXd::Ones(1, 1));
    Eigen::MatrixXd two(3, 2);
    two << 1, 0, 0, 1, 1, 1;
    EXPECT_EQ(membership_matrix(enumerate_choice_set(2)), two);
}

TEST(MembershipMatrix, RowsReproduceBundles) {
    const auto cs = enumerate_choice_set(6);
    const auto m = membership_matrix(cs);
    for (int r = 1; r < cs.size(); ++r) {
        EXPECT_EQ(m.row(r - 1).sum(), static_cast<double>(cs.bundle(r).size()));
        for (int j = 0; j < 6; ++j) EXPECT_EQ(m(r - 1, j) == 1.0, cs.contains(r, j));
    }
}

TEST(PairMembership, CountsPairs) {
    const auto cs = enumerate_choice_set(4);
    const auto m = pair_membership_matrix(cs);
    for (int r = 1; r < cs.size(); ++r) {
        const auto k = static_cast<double>(cs.bundle(r).size());
        EXPECT_EQ(m.row(r - 1).sum(), k * (k - 1) / 2);
    }
}

TEST(Labels, RoundTrip) {
    const auto cs = enumerate_choice_set(3);
    EXPECT_EQ(cs.label(0), "");
    EXPECT_EQ(cs.label(5), "1+3");
    for (int r = 0; r < cs.size(); ++r) EXPECT_EQ(cs.parse_label(cs.label(r)), r);
    EXPECT_EQ(cs.parse_label("3+1"), 5);
    EXPECT_THROW((void)cs.parse_label("4"), DataError);
    EXPECT_THROW((void)cs.parse_label("1+1"), DataError);
    EXPECT_THROW((void)cs.parse_label("x"), DataError);
}

TEST(ArgmaxChoice, Basics) {
    EXPECT_EQ(argmax_choice(std::vector<double>{0, 3, 1, 2}), 1);
    EXPECT_EQ(argmax_choice(std::vector<double>{2, 2, 2, 2}), 0);
    EXPECT_THROW(argmax_choice(std::vector<double>{0, std::nan(""), 1, 2}), NumericError);
}

TEST(ArgmaxChoice, MatchesLinearScan) {
    RngStream rng(3, streams::test);
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> u(8);
        for (auto& v : u) v = rng.normal();
        int best = 0;
        for (int r = 1; r < 8; ++r) {
            if (u[static_cast<std::size_t>(r)] > u[static_cast<std::size_t>(best)]) best = r;
        }
        ASSERT_EQ(argmax_choice(u), best);
    }
}
