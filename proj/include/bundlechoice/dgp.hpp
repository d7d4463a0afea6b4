#ifndef BUNDLECHOICE_DGP_HPP
#define BUNDLECHOICE_DGP_HPP

#include "choice_set.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "layout.hpp"
#include "panel.hpp"
#include "predict.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace bundlechoice {

/// Simulation design. Utility covariates of good j are (1, x1_i, x2_i) plus
/// its price; bundle covariates of each pair are (w̃_i, 1); first-stage
/// covariates of priced good j are (1, market price p_jt, instrument z_ijt,
/// x1_i, x2_i). Variances (not standard deviations) are given for the
/// covariate laws.
struct DgpConfig {
    std::size_t individuals = 1000;
    int periods = 12;
    int goods = 3;
    int priced = 3;
    double alpha = -1.0;
    std::vector<std::vector<double>> beta{{1.0, 0.2, 0.1}, {2.0, 0.2, 0.1}, {2.0, 0.1, 0.05}};
    double gamma_common = 0.05;
    std::vector<double> gamma_pair{2.0, 0.0, -1.0};
    std::vector<std::vector<double>> theta_p{{0.0, 1.0, 0.5, 0.0, 0.01}, {0.0, 1.0, 0.5, 0.0, 0.0}, {0.0, 1.0, 0.5, 0.0, -0.01}};
    std::vector<double> fixed_loading{1.0, 0.0, -1.0, 1.0, 0.0, -1.0};
    int random_factors = 1;     // loading columns drawn from N(0, I)
    bool time_varying = true;   // redraw the random columns every period
    double loading_scale = 1.0; // 0 removes the factor channel
    double x1_mean = 10.0;
    double x1_var = 0.7225;
    double x2_mean = 10.0;
    double x2_var = 36.0;
    std::vector<double> market_price_mean{7.0, 6.0, 5.0};
    std::vector<double> market_price_var{0.04, 0.01, 0.01};
    int family_size_max = 6;
    std::uint64_t seed = 1;
    std::uint32_t trial = 0;

    [[nodiscard]] int rows() const noexcept { return goods + priced; }
    [[nodiscard]] int factors() const noexcept { return 1 + random_factors; }

    /// Defaults for J goods: the three-good values, cycled for other J.
    static DgpConfig for_goods(int J, int priced_goods = -1) {
        DgpConfig c;
        if (J == 3 && (priced_goods < 0 || priced_goods == 3)) return c;
        const DgpConfig base;
        c.goods = J;
        c.priced = priced_goods < 0 ? J : priced_goods;
        c.beta.clear();
        for (int j = 0; j < J; ++j) c.beta.push_back(base.beta[static_cast<std::size_t>(j % 3)]);
        c.gamma_pair.clear();
        for (int q = 0; q < J * (J - 1) / 2; ++q) c.gamma_pair.push_back(base.gamma_pair[static_cast<std::size_t>(q % 3)]);
        c.theta_p.clear();
        c.market_price_mean.clear();
        c.market_price_var.clear();
        for (int k = 0; k < c.priced; ++k) {
            c.theta_p.push_back(base.theta_p[static_cast<std::size_t>(k % 3)]);
            c.market_price_mean.push_back(base.market_price_mean[static_cast<std::size_t>(k % 3)]);
            c.market_price_var.push_back(base.market_price_var[static_cast<std::size_t>(k % 3)]);
        }
        c.fixed_loading.clear();
        const double pattern[3] = {1.0, 0.0, -1.0};
        for (int j = 0; j < J; ++j) c.fixed_loading.push_back(pattern[j % 3]);
        for (int k = 0; k < c.priced; ++k) c.fixed_loading.push_back(pattern[k % 3]);
        return c;
    }

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("dgp: " + m); };
        if (goods < 1 || goods > kMaxGoods) fail("goods must be in [1, 7]");
        if (priced < 0 || priced > goods) fail("priced must be in [0, goods]");
        if (individuals < 1) fail("individuals must be positive");
        if (periods < 1) fail("periods must be positive");
        if (static_cast<int>(beta.size()) != goods) fail("beta needs one vector per good");
        for (const auto& b : beta) {
            if (b.size() != 3) fail("each beta vector has 3 entries (intercept, x1, x2)");
        }
        if (static_cast<int>(gamma_pair.size()) != goods * (goods - 1) / 2) fail("gamma_pair needs one value per good pair");
        if (static_cast<int>(theta_p.size()) != priced) fail("theta_p needs one vector per priced good");
        for (const auto& t : theta_p) {
            if (t.size() != 5) fail("each theta_p vector has 5 entries (intercept, market price, instrument, x1, x2)");
        }
        if (static_cast<int>(fixed_loading.size()) != rows()) fail("fixed_loading needs goods + priced entries");
        if (random_factors < 0) fail("random_factors must be nonnegative");
        if (static_cast<int>(market_price_mean.size()) != priced || static_cast<int>(market_price_var.size()) != priced) {
            fail("market price laws need one entry per priced good");
        }
        for (double v : market_price_var) {
            if (!(v >= 0.0)) fail("market price variances must be nonnegative");
        }
        if (!(x1_var >= 0.0) || !(x2_var > 0.0)) fail("covariate variances must be nonnegative (x2 positive)");
        if (family_size_max < 1) fail("family_size_max must be positive");
    }
};

/// Parameter sharing used by simulated panels: one price coefficient and one
/// bundle-effect slope on w̃.
inline SharingSpec dgp_sharing() {
    SharingSpec s;
    s.utility = {"p"};
    s.bundle = {"w1"};
    return s;
}

struct DgpTruth {
    Eigen::VectorXd theta;               // in the layout of dgp_sharing(), endogenous
    std::vector<std::string> theta_names;
    std::vector<Eigen::MatrixXd> loadings;  // per period, (J + J_p) × L
    Eigen::MatrixXd factors;             // N × L
};

struct SimulatedPanel {
    PanelData data;
    DgpTruth truth;
};

inline PanelShape dgp_shape(const DgpConfig& cfg) {
    PanelShape s;
    s.goods = cfg.goods;
    s.priced = cfg.priced;
    s.z_dims.assign(static_cast<std::size_t>(cfg.goods), 3);
    s.w_dims.assign(static_cast<std::size_t>(cfg.goods * (cfg.goods - 1) / 2), 2);
    s.zp_dims.assign(static_cast<std::size_t>(cfg.priced), 5);
    return s;
}

/// True Θ laid out for `layout` (which must use dgp_sharing()).
inline Eigen::VectorXd dgp_theta(const DgpConfig& cfg, const ParamLayout& layout) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.dim());
    const ChoiceSet& cs = layout.choice_set();
    for (int j = 0; j < cfg.goods; ++j) {
        const auto& slots = layout.utility_slots(j);
        std::size_t c = 0;
        if (j < cfg.priced) theta[slots[c++]] = cfg.alpha;
        for (int k = 0; k < 3; ++k) theta[slots[c++]] = cfg.beta[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    }
    for (int q = 0; q < cs.pair_count(); ++q) {
        const auto& slots = layout.bundle_slots(q);
        theta[slots[0]] = cfg.gamma_common;
        theta[slots[1]] = cfg.gamma_pair[static_cast<std::size_t>(q)];
    }
    for (int k = 0; k < layout.first_stage_rows(); ++k) {
        const auto& slots = layout.first_stage_slots(k);
        for (int c = 0; c < 5; ++c) theta[slots[static_cast<std::size_t>(c)]] = cfg.theta_p[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
    }
    return theta;
}

inline SimulatedPanel simulate_dataset(const DgpConfig& cfg) {
    cfg.validate();
    const int J = cfg.goods;
    const int P = cfg.priced;
    const int K = cfg.rows();
    const int L = cfg.factors();
    const int T = cfg.periods;
    const ChoiceSet cs(J);
    const RngStream root(cfg.seed, streams::for_trial(streams::dgp, cfg.trial));
    constexpr std::uint32_t kPeriodItem = 0xFFFFFFFFu;

    SimulatedPanel out;
    auto& truth = out.truth;
    std::vector<std::vector<double>> market(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        RngStream rng = root.substream(kPeriodItem, static_cast<std::uint32_t>(cfg.time_varying ? t : 0));
        Eigen::MatrixXd lam(K, L);
        for (int j = 0; j < K; ++j) lam(j, 0) = cfg.fixed_loading[static_cast<std::size_t>(j)];
        for (int l = 1; l < L; ++l) {
            for (int j = 0; j < K; ++j) lam(j, l) = rng.normal();
        }
        truth.loadings.push_back(cfg.loading_scale * lam);
        RngStream prices = root.substream(kPeriodItem - 1, static_cast<std::uint32_t>(t));
        for (int k = 0; k < P; ++k) {
            market[static_cast<std::size_t>(t)].push_back(cfg.market_price_mean[static_cast<std::size_t>(k)] +
                                                          std::sqrt(cfg.market_price_var[static_cast<std::size_t>(k)]) * prices.normal());
        }
    }

    const auto N = cfg.individuals;
    truth.factors.resize(static_cast<Eigen::Index>(N), L);
    std::vector<ObservationRow> rows;
    rows.reserve(N * static_cast<std::size_t>(T));
    std::vector<double> util(static_cast<std::size_t>(cs.size()));
    for (std::size_t i = 0; i < N; ++i) {
        RngStream ind = root.substream(static_cast<std::uint32_t>(i), 0);
        Eigen::VectorXd f(L);
        for (int l = 0; l < L; ++l) f[l] = ind.normal();
        truth.factors.row(static_cast<Eigen::Index>(i)) = f.transpose();
        const double x1 = cfg.x1_mean + std::sqrt(cfg.x1_var) * ind.normal();
        const double x2 = draw_truncated_normal(cfg.x2_mean, std::sqrt(cfg.x2_var), 0.0,
                                                std::numeric_limits<double>::infinity(), ind);
        const auto family = static_cast<double>(ind.uniform_int(1, cfg.family_size_max));
        for (int t = 0; t < T; ++t) {
            RngStream rng = root.substream(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t + 1));
            const Eigen::VectorXd nu = truth.loadings[static_cast<std::size_t>(t)] * f;
            ObservationRow row;
            row.individual = static_cast<std::int64_t>(i + 1);
            row.period = t + 1;
            for (int k = 0; k < P; ++k) {
                const double z = rng.normal();
                const std::vector<double> zp{1.0, market[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)], z, x1, x2};
                double p = nu[J + k] + rng.normal();
                for (int c = 0; c < 5; ++c) p += cfg.theta_p[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] * zp[static_cast<std::size_t>(c)];
                row.prices.push_back(p);
                row.zp.push_back(zp);
            }
            std::vector<double> good(static_cast<std::size_t>(J));
            for (int j = 0; j < J; ++j) {
                const auto& b = cfg.beta[static_cast<std::size_t>(j)];
                row.z.push_back({1.0, x1, x2});
                good[static_cast<std::size_t>(j)] = b[0] + b[1] * x1 + b[2] * x2 + nu[j] +
                                                    (j < P ? cfg.alpha * row.prices[static_cast<std::size_t>(j)] : 0.0);
            }
            for (int q = 0; q < cs.pair_count(); ++q) row.w.push_back({family, 1.0});
            for (int r = 0; r < cs.size(); ++r) {
                double v = 0.0;
                for (int j : cs.bundle(r)) v += good[static_cast<std::size_t>(j)];
                for (int q : cs.pairs_in(r)) v += cfg.gamma_common * family + cfg.gamma_pair[static_cast<std::size_t>(q)];
                util[static_cast<std::size_t>(r)] = v + rng.normal();
            }
            row.choice = argmax_choice(util);
            rows.push_back(std::move(row));
        }
    }
    out.data = PanelData(dgp_shape(cfg), std::move(rows));
    const ParamLayout layout(dgp_shape(cfg), true, dgp_sharing());
    truth.theta = dgp_theta(cfg, layout);
    truth.theta_names = layout.names();
    return out;
}

/// Elasticities at the true parameters of one simulated panel, averaged over
/// `reps` predictive replications (conditioning on the realized factors).
inline ElasticityTable true_elasticities(const SimulatedPanel& sim, std::size_t reps, PredictOptions opts = {}) {
    const ParamLayout layout(sim.data.shape(), true, dgp_sharing());
    FixedSource source({sim.truth.theta, sim.truth.loadings, sim.truth.factors}, reps);
    return PredictiveEngine(layout, sim.data, source, opts).elasticities();
}

inline ElasticityTable true_elasticities(const DgpConfig& cfg, std::size_t reps, PredictOptions opts = {}) {
    return true_elasticities(simulate_dataset(cfg), reps, opts);
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_DGP_HPP
