#ifndef BUNDLECHOICE_TEST_SUPPORT_HPP
#define BUNDLECHOICE_TEST_SUPPORT_HPP

#include <bundlechoice/choice_set.hpp>
#include <bundlechoice/dgp.hpp>
#include <bundlechoice/panel.hpp>
#include <bundlechoice/rng.hpp>

#include <Eigen/Dense>

#include <vector>

namespace bctest {

using namespace bundlechoice;

/// Panel with random covariates and random (not model-generated) choices.
/// Drops a pseudo-random subset of periods when `unbalanced`.
inline PanelData random_panel(int J, int P, std::size_t N, int T, bool instruments, std::uint64_t seed,
                              bool unbalanced = false, int z_dim = 2, int w_dim = 1, int zp_dim = 3) {
    PanelShape s;
    s.goods = J;
    s.priced = P;
    s.z_dims.assign(static_cast<std::size_t>(J), z_dim);
    s.w_dims.assign(static_cast<std::size_t>(J * (J - 1) / 2), w_dim);
    if (instruments) s.zp_dims.assign(static_cast<std::size_t>(P), zp_dim);
    const ChoiceSet cs(J);
    RngStream rng(seed, 99);
    std::vector<ObservationRow> rows;
    for (std::size_t i = 0; i < N; ++i) {
        for (int t = 0; t < T; ++t) {
            if (unbalanced && t > 0 && rng.uniform() < 0.3) continue;
            ObservationRow row;
            row.individual = static_cast<std::int64_t>(i + 1);
            row.period = 2000 + t;
            row.choice = rng.uniform_int(0, cs.size() - 1);
            for (int k = 0; k < P; ++k) row.prices.push_back(1.0 + rng.uniform());
            for (int j = 0; j < J; ++j) {
                std::vector<double> z{1.0};
                for (int c = 1; c < z_dim; ++c) z.push_back(rng.normal());
                row.z.push_back(z);
            }
            for (int q = 0; q < cs.pair_count(); ++q) {
                std::vector<double> w{1.0};
                for (int c = 1; c < w_dim; ++c) w.push_back(rng.normal());
                row.w.push_back(w);
            }
            if (instruments) {
                for (int k = 0; k < P; ++k) {
                    std::vector<double> zp{1.0};
                    for (int c = 1; c < zp_dim; ++c) zp.push_back(rng.normal());
                    row.zp.push_back(zp);
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return PanelData(std::move(s), std::move(rows));
}

inline Eigen::VectorXd random_vector(Eigen::Index n, RngStream& rng, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = scale * rng.normal();
    return v;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng, double scale = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index x = 0; x < r; ++x) {
        for (Eigen::Index y = 0; y < c; ++y) m(x, y) = scale * rng.normal();
    }
    return m;
}

/// Small simulated panel from the default design.
inline SimulatedPanel small_dgp(std::size_t N, int T, std::uint64_t seed = 3, int J = 3) {
    DgpConfig c = DgpConfig::for_goods(J);
    c.individuals = N;
    c.periods = T;
    c.seed = seed;
    return simulate_dataset(c);
}

} // namespace bctest

#endif // BUNDLECHOICE_TEST_SUPPORT_HPP
