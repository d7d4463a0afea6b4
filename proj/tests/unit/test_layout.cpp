#include "test_support.hpp"

#include <bundlechoice/design.hpp>
#include <bundlechoice/layout.hpp>
#include <bundlechoice/loadings.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace bundlechoice;
using bctest::random_matrix;
using bctest::random_panel;
using bctest::random_vector;

namespace {

int slot(const ParamLayout& l, const std::string& name) {
    const auto& n = l.names();
    const auto it = std::find(n.begin(), n.end(), name);
    if (it == n.end()) throw std::runtime_error("no slot " + name);
    return static_cast<int>(it - n.begin());
}

// J = 2, both priced, z = (1, x), one bundle covariate (intercept).
PanelData two_good_panel(double p1, double p2, double x1, double x2) {
    PanelShape s{2, 2, {2, 2}, {1}, {}};
    ObservationRow r;
    r.individual = 1;
    r.period = 1;
    r.prices = {p1, p2};
    r.z = {{1.0, x1}, {1.0, x2}};
    r.w = {{1.0}};
    return PanelData(s, {r});
}

} // namespace

TEST(Layout, SharedPriceSlotAndNames) {
    const auto d = random_panel(3, 3, 2, 1, true, 1);
    const ParamLayout l(d.shape(), true, SharingSpec{});
    EXPECT_EQ(l.names().front(), "p_*");
    for (int j = 0; j < 3; ++j) EXPECT_EQ(*l.price_slot(j), 0);
    // 1 shared α + 3 goods × 2 z + 3 pairs × 1 w + 3 × 3 zp
    EXPECT_EQ(l.dim(), 1 + 6 + 3 + 9);
    EXPECT_EQ(l.first_stage_rows(), 3);
    const ParamLayout exo(d.shape(), false, SharingSpec{});
    EXPECT_EQ(exo.first_stage_rows(), 0);
    EXPECT_EQ(exo.dim(), 1 + 6 + 3);
}

TEST(Layout, UnsharedAndGroupedSlots) {
    const auto d = random_panel(2, 2, 2, 1, false, 1);
    SharingSpec none;
    none.utility = {};
    const ParamLayout l(d.shape(), false, none);
    EXPECT_EQ(l.dim(), 2 * 3 + 1);
    EXPECT_NE(*l.price_slot(0), *l.price_slot(1));
    SharingSpec grouped;
    grouped.utility = {"p"};
    grouped.groups = {{"z_1_2", "z_2_2"}};
    const ParamLayout g(d.shape(), false, grouped);
    EXPECT_EQ(g.dim(), 1 + 2 + 1 + 1);
    SharingSpec bad;
    bad.groups = {{"z_1_2", "w_1_2_1"}};
    EXPECT_THROW(ParamLayout(d.shape(), false, bad), ConfigError);
}

TEST(MeanUtility, OutsideOptionIsZero) {
    const auto d = random_panel(3, 3, 3, 2, true, 4);
    const ParamLayout l(d.shape(), true, SharingSpec{});
    RngStream rng(1, 2);
    const Eigen::VectorXd theta = random_vector(l.dim(), rng);
    for (std::size_t o = 0; o < d.observations(); ++o) EXPECT_EQ(mean_utility(l, d, o, theta, 0), 0.0);
}

TEST(MeanUtility, HandArithmetic) {
    // z = (p=1, 1, x=0), θ_1 = (α=-1, β0=1, β1=0.2) gives -1 + 1 + 0 = 0.
    const auto d = two_good_panel(1.0, 2.0, 0.0, 1.0);
    const ParamLayout l(d.shape(), false, SharingSpec{});
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(l.dim());
    theta[slot(l, "p_*")] = -1.0;
    theta[slot(l, "z_1_1")] = 1.0;
    theta[slot(l, "z_1_2")] = 0.2;
    theta[slot(l, "z_2_1")] = 0.5;
    theta[slot(l, "z_2_2")] = 0.3;
    theta[slot(l, "w_1_2_1")] = 2.0;
    EXPECT_DOUBLE_EQ(mean_utility(l, d, 0, theta, 1), 0.0);
    const double u2 = -2.0 + 0.5 + 0.3;
    EXPECT_DOUBLE_EQ(mean_utility(l, d, 0, theta, 2), u2);
    EXPECT_DOUBLE_EQ(mean_utility(l, d, 0, theta, 3), 0.0 + u2 + 2.0);
}

TEST(MeanUtility, AdditiveOverMembersAndPairs) {
    const auto d = random_panel(4, 3, 5, 2, false, 8);
    const ParamLayout l(d.shape(), false, SharingSpec{});
    const auto& cs = l.choice_set();
    RngStream rng(3, 3);
    const Eigen::VectorXd theta = random_vector(l.dim(), rng);
    std::vector<double> eq(static_cast<std::size_t>(l.equation_rows()));
    for (std::size_t o = 0; o < d.observations(); ++o) {
        l.equation_values(d, o, theta, eq);
        for (int r = 1; r < cs.size(); ++r) {
            double expect = 0.0;
            for (int j : cs.bundle(r)) expect += mean_utility(l, d, o, theta, cs.index_of({j}));
            for (int q : cs.pairs_in(r)) expect += eq[static_cast<std::size_t>(4 + q)];
            EXPECT_NEAR(mean_utility(l, d, o, theta, r), expect, 1e-12);
        }
    }
}

TEST(DesignBlocks, PairRowSumsPricesInSharedColumn) {
    const auto d = random_panel(3, 3, 1, 1, true, 12);
    const ParamLayout l(d.shape(), true, SharingSpec{});
    const auto b = build_design_blocks(l, d, 0);
    const int r12 = l.choice_set().index_of({0, 1});
    EXPECT_DOUBLE_EQ(b.z(r12 - 1, *l.price_slot(0)), d.price(0, 0) + d.price(0, 1));
    EXPECT_DOUBLE_EQ(b.z(r12 - 1, slot(l, "z_1_1")), 1.0);
    EXPECT_EQ(b.h.rows(), 7 + 3);
    EXPECT_EQ(b.i_nu.rows(), 10);
    EXPECT_EQ(b.i_nu.cols(), 6);
    // The lower-left and upper-right blocks of h are empty.
    EXPECT_EQ(b.h.bottomLeftCorner(3, l.theta_p_begin()).norm(), 0.0);
    EXPECT_EQ(b.h.topRightCorner(7, l.theta_p_dim()).norm(), 0.0);
    EXPECT_EQ(b.zp.rows(), 3);
}

TEST(DesignBlocks, SingleGood) {
    const auto d = random_panel(1, 1, 1, 1, false, 2);
    const ParamLayout l(d.shape(), false, SharingSpec{});
    const auto b = build_design_blocks(l, d, 0);
    EXPECT_EQ(b.z.rows(), 1);
    EXPECT_EQ(b.z.cols(), l.theta_dim());
    EXPECT_EQ(b.w.cols(), 0);
}

TEST(DesignBlocks, DesignTimesThetaEqualsLoopMeans) {
    for (bool endo : {false, true}) {
        const auto d = random_panel(3, 2, 6, 3, endo, 21, true);
        const ParamLayout l(d.shape(), endo, SharingSpec{});
        RngStream rng(7, 7);
        const Eigen::VectorXd theta = random_vector(l.dim(), rng);
        const StackedSystem sys(l, d);
        const Eigen::VectorXd stacked = sys.apply_h(theta);
        const Eigen::MatrixXd dense = sys.dense_h();
        ASSERT_EQ(dense.rows(), sys.row_count());
        EXPECT_LT((dense * theta - stacked).cwiseAbs().maxCoeff(), 1e-12);
        for (std::size_t o = 0; o < d.observations(); ++o) {
            const auto off = sys.row_offset(o);
            for (int r = 1; r <= 7; ++r) EXPECT_NEAR(stacked[off + r - 1], mean_utility(l, d, o, theta, r), 1e-12);
            for (int k = 0; k < l.first_stage_rows(); ++k) {
                double fs = 0.0;
                const auto& slots = l.first_stage_slots(k);
                for (std::size_t c = 0; c < slots.size(); ++c) fs += theta[slots[c]] * d.zp(o, k)[c];
                EXPECT_NEAR(stacked[off + 7 + k], fs, 1e-12);
            }
        }
        EXPECT_LT((sys.cross_product() - dense.transpose() * dense).cwiseAbs().maxCoeff(), 1e-9);
        const Eigen::VectorXd v = random_vector(sys.row_count(), rng);
        EXPECT_LT((sys.apply_h_transpose(v) - dense.transpose() * v).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(StackedSystem, RowCountForUnbalancedPanel) {
    const auto d = random_panel(2, 2, 10, 4, true, 33, true);
    const ParamLayout l(d.shape(), true, SharingSpec{});
    const StackedSystem sys(l, d);
    EXPECT_EQ(sys.row_count(), static_cast<Eigen::Index>(d.observations()) * (3 + 2));
}

// --------------------------------------------------------------- H_Λ, H_f

class Duality : public ::testing::TestWithParam<ErrorStructure> {};

TEST_P(Duality, HfLambdaEqualsHLambdaF) {
    const auto d = random_panel(3, 2, 9, 4, true, 40, true);
    const ParamLayout l(d.shape(), true, SharingSpec{});
    const StackedSystem sys(l, d);
    const int K = 5;
    const int L = 3;
    RngStream rng(2, 9);
    std::vector<Mask> masks;
    Mask m = Mask::Ones(K, L);
    m(0, 2) = 0;
    m(4, 0) = 0;
    masks.push_back(m);
    const auto loadings = make_loading_layout(GetParam(), K, L, d.periods(), masks);
    const Eigen::VectorXd lambda = random_vector(loadings.free_count(), rng);
    const Eigen::MatrixXd f = random_matrix(static_cast<Eigen::Index>(d.individuals()), L, rng);
    const Eigen::VectorXd a = sys.apply_h_f(loadings, f, lambda);
    const Eigen::VectorXd b = sys.apply_h_lambda(loadings, lambda, f);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
    // Masked entries are identically zero in the matrices.
    for (const auto& mat : loadings.matrices(lambda)) {
        EXPECT_EQ(mat(0, 2), 0.0);
        EXPECT_EQ(mat(4, 0), 0.0);
    }
    // Block form agrees too.
    const auto mats = loadings.matrices(lambda);
    for (std::size_t i = 0; i < d.individuals(); ++i) {
        const Eigen::MatrixXd hl = sys.h_lambda_block(i, [&](int t) -> const Eigen::MatrixXd& {
            return mats[static_cast<std::size_t>(loadings.block_of_period(t))];
        });
        const Eigen::VectorXd via_block = hl * f.row(static_cast<Eigen::Index>(i)).transpose();
        const auto rows = hl.rows();
        EXPECT_LT((via_block - b.segment(sys.row_offset(d.begin(i)), rows)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

INSTANTIATE_TEST_SUITE_P(Structures, Duality, ::testing::Values(ErrorStructure::factor, ErrorStructure::time_varying_factor));

TEST(HLambda, ZeroCasesAndDimensions) {
    const auto d = random_panel(2, 2, 3, 2, true, 5);
    const ParamLayout l(d.shape(), true, SharingSpec{});
    const StackedSystem sys(l, d);
    const auto loadings = make_loading_layout(ErrorStructure::time_varying_factor, 4, 2, d.periods(), {});
    RngStream rng(1, 1);
    const Eigen::MatrixXd f = random_matrix(3, 2, rng);
    EXPECT_EQ(sys.apply_h_lambda(loadings, Eigen::VectorXd::Zero(loadings.free_count()), f).norm(), 0.0);
    const Eigen::VectorXd lambda = random_vector(loadings.free_count(), rng);
    EXPECT_EQ(sys.h_f_block(0, loadings, Eigen::MatrixXd::Zero(3, 2)).norm(), 0.0);
    const auto mats = loadings.matrices(lambda);
    const Eigen::MatrixXd hl = sys.h_lambda_block(0, [&](int t) -> const Eigen::MatrixXd& { return mats[static_cast<std::size_t>(t)]; });
    EXPECT_EQ(hl.rows(), 2 * (3 + 2));
    EXPECT_EQ(hl.cols(), 2);
}

TEST(HF, SingleObservationHandExpansion) {
    const auto d = random_panel(2, 1, 1, 1, true, 6);
    const ParamLayout l(d.shape(), true, SharingSpec{});
    const StackedSystem sys(l, d);
    const auto loadings = make_loading_layout(ErrorStructure::factor, 3, 1, 1, {});
    Eigen::MatrixXd f(1, 1);
    f << 1.7;
    const Eigen::MatrixXd hf = sys.h_f_block(0, loadings, f);
    ASSERT_EQ(hf.cols(), 3);
    for (int j = 0; j < 3; ++j) EXPECT_LT((hf.col(j) - 1.7 * sys.mapping().col(j)).norm(), 1e-15);
}

TEST(Loadings, MaskRules) {
    EXPECT_THROW(make_loading_layout(ErrorStructure::factor, 3, 2, 2, {Mask::Ones(3, 2), Mask::Zero(3, 2)}), ConfigError);
    EXPECT_THROW(make_loading_layout(ErrorStructure::factor, 3, 2, 1, {Mask::Ones(2, 2)}), ConfigError);
    const auto tv = make_loading_layout(ErrorStructure::time_varying_factor, 3, 2, 4, {Mask::Ones(3, 2)});
    EXPECT_EQ(tv.blocks(), 4);
    EXPECT_EQ(tv.free_count(), 24);
    Mask empty = Mask::Ones(3, 2);
    empty.col(1).setZero();
    const auto e = make_loading_layout(ErrorStructure::factor, 3, 2, 1, {empty});
    EXPECT_EQ(e.empty_columns(), std::vector<int>{1});
    EXPECT_EQ(e.column_free_count(1), 0);
}

// ------------------------------------------------------------------ Ω

TEST(Omega, ZeroLoadingsGiveIdentity) {
    const ChoiceSet cs(3);
    const auto map = mapping_matrix(cs, 3);
    EXPECT_TRUE(joint_error_covariance(map, Eigen::MatrixXd::Zero(6, 2)).isIdentity(0.0));
}

TEST(Omega, TriFactorExampleMatchesPrintedMatrix) {
    const ChoiceSet cs(2);
    const auto map = mapping_matrix(cs, 2);
    const double l11 = 0.7, l12 = -0.4, l21 = 1.3, l23 = 0.25, l32 = -0.9, l43 = 0.6;
    Eigen::MatrixXd lam(4, 3);
    lam << l11, l12, 0, l21, 0, l23, 0, l32, 0, 0, 0, l43;
    const Eigen::MatrixXd om = joint_error_covariance(map, lam);
    Eigen::MatrixXd printed(5, 5);
    printed << l11 * l11 + l12 * l12 + 1, 0, 0, 0, 0,                                                 //
        l11 * l21, l21 * l21 + l23 * l23 + 1, 0, 0, 0,                                                  //
        l11 * l11 + l11 * l21 + l12 * l12, l11 * l21 + l21 * l21 + l23 * l23,
        (l11 + l21) * (l11 + l21) + l12 * l12 + l23 * l23 + 1, 0, 0,                                    //
        l12 * l32, 0, l12 * l32, l32 * l32 + 1, 0,                                                      //
        0, l23 * l43, l23 * l43, 0, l43 * l43 + 1;
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c <= r; ++c) {
            EXPECT_NEAR(om(r, c), printed(r, c), 1e-14) << r << "," << c;
            EXPECT_EQ(om(r, c), om(c, r));
        }
    }
}

TEST(Omega, EigenvaluesAtLeastOne) {
    RngStream rng(4, 4);
    const ChoiceSet cs(3);
    const auto map = mapping_matrix(cs, 2);
    for (int k = 0; k < 20; ++k) {
        const Eigen::MatrixXd om = joint_error_covariance(map, random_matrix(5, 3, rng));
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(om).eigenvalues();
        EXPECT_GE(ev.minCoeff(), 1.0 - 1e-10);
    }
}

TEST(Omega, IntertemporalBlocksFaConstantTvfaVarying) {
    RngStream rng(5, 5);
    const ChoiceSet cs(2);
    const auto map = mapping_matrix(cs, 2);
    const Eigen::MatrixXd fixed = random_matrix(4, 2, rng);
    const auto fa = joint_error_covariance(map, std::vector<Eigen::MatrixXd>{fixed, fixed, fixed});
    const auto n = map.rows();
    EXPECT_LT((fa.block(0, n, n, n) - fa.block(0, 2 * n, n, n)).norm(), 1e-14);
    EXPECT_LT((fa.block(0, n, n, n) - fa.block(n, 2 * n, n, n)).norm(), 1e-14);
    const auto tv = joint_error_covariance(map, std::vector<Eigen::MatrixXd>{random_matrix(4, 2, rng), random_matrix(4, 2, rng),
                                                                             random_matrix(4, 2, rng)});
    EXPECT_GT((tv.block(0, n, n, n) - tv.block(0, 2 * n, n, n)).norm(), 1e-3);
    const auto re = joint_error_covariance_re(map, Eigen::MatrixXd::Identity(4, 4), 2);
    EXPECT_EQ(re(0, n), map.row(0).squaredNorm());
}

TEST(Omega, MonteCarloCovarianceMatchesAnalytic) {
    const ChoiceSet cs(2);
    const auto map = mapping_matrix(cs, 2);
    Eigen::MatrixXd lam(4, 3);
    lam << 0.7, -0.4, 0, 1.3, 0, 0.25, 0, -0.9, 0, 0, 0, 0.6;
    const Eigen::MatrixXd om = joint_error_covariance(map, lam);
    const int n = 200000;
    RngStream rng(77, 1);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(5, 5);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(5, 5);
    Eigen::VectorXd f(3), e(5);
    for (int k = 0; k < n; ++k) {
        for (int l = 0; l < 3; ++l) f[l] = rng.normal();
        for (int r = 0; r < 5; ++r) e[r] = rng.normal();
        const Eigen::VectorXd x = map * (lam * f) + e;
        const Eigen::MatrixXd xx = x * x.transpose();
        sum += xx;
        sum2 += xx.cwiseProduct(xx);
    }
    const Eigen::MatrixXd mean = sum / n;
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
            const double se = std::sqrt((sum2(r, c) / n - mean(r, c) * mean(r, c)) / n);
            EXPECT_LT(std::abs(mean(r, c) - om(r, c)), 4.0 * se) << r << "," << c;
        }
    }
}

// ----------------------------------------------------- covariance summary

namespace {

double entry(const std::vector<CovarianceEntry>& es, const std::string& what, const std::string& label) {
    for (const auto& e : es) {
        if (e.description == what && e.label == label) return e.value;
    }
    throw std::runtime_error("missing " + what + " " + label);
}

} // namespace

TEST(CovarianceSummary, FaSingleFactorTasteCovariance) {
    Eigen::MatrixXd lam(4, 1);
    lam << 1.0, 1.0, 0.5, -0.5;
    const auto es = covariance_summary(2, 2, {lam});
    EXPECT_DOUBLE_EQ(entry(es, "unobserved tastes", "j1=1,j2=2"), 1.0);
    EXPECT_DOUBLE_EQ(entry(es, "utility error variance", "j=1"), 2.0);
    EXPECT_DOUBLE_EQ(entry(es, "regressor endogeneity", "j1=1,j2=1"), 0.5);
    EXPECT_DOUBLE_EQ(entry(es, "regressor endogeneity", "j1=2,j2=2"), -0.5);
    EXPECT_DOUBLE_EQ(entry(es, "reduced form error variance", "j=2"), 1.25);
    EXPECT_DOUBLE_EQ(entry(es, "ER error correlation", "j1=1,j2=2"), -0.25);
    EXPECT_DOUBLE_EQ(entry(es, "intertemporal tastes", "j=1,t1!=t2"), 1.0);
}

TEST(CovarianceSummary, TvfaOrthogonalPeriodsHaveNoIntertemporalCovariance) {
    Eigen::MatrixXd a(2, 2), b(2, 2);
    a << 1, 0, 0, 1;
    b << 0, 1, 1, 0;  // row j of Λ_1 orthogonal to row j of Λ_2
    const auto es = covariance_summary(1, 1, {a, b});
    EXPECT_DOUBLE_EQ(entry(es, "intertemporal tastes", "j=1,t1=1,t2=2"), 0.0);
    EXPECT_DOUBLE_EQ(entry(es, "ER intertemporal", "j=1,t1=1,t2=2"), 0.0);
    EXPECT_DOUBLE_EQ(entry(es, "utility error variance", "j=1,t=2"), 2.0);
}

TEST(CovarianceSummary, ReadsSigmaForRandomEffects) {
    Eigen::MatrixXd s(3, 3);
    s << 2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.1;
    const auto es = covariance_summary_re(2, 1, s);
    EXPECT_DOUBLE_EQ(entry(es, "unobserved tastes", "j1=1,j2=2"), 0.3);
    EXPECT_DOUBLE_EQ(entry(es, "regressor endogeneity", "j1=2,j2=1"), -0.2);
    EXPECT_DOUBLE_EQ(entry(es, "utility error variance", "j=2"), 2.5);
    EXPECT_DOUBLE_EQ(entry(es, "intertemporal tastes", "j=2,t1!=t2"), 1.5);
}
