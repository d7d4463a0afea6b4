#ifndef BUNDLECHOICE_CHAIN_HPP
#define BUNDLECHOICE_CHAIN_HPP

#include "error.hpp"
#include "loadings.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace bundlechoice {

/// Everything needed to interpret (and re-run) a stored chain.
struct ChainInfo {
    ErrorStructure structure = ErrorStructure::factor;
    bool endogenous = false;
    int goods = 0;
    int first_stage_rows = 0;
    int factors = 0;       // L; for RE the ν dimension J + J_p
    int periods = 0;
    std::size_t individuals = 0;
    std::vector<Mask> masks;  // one per loading block (empty for RE)
    std::uint64_t seed = 0;
    int burn_in = 0;
    int draws = 0;
    int thin = 1;
    std::string spec_hash;
    std::string data_hash;
    double wall_seconds = 0.0;  // not serialized: it would break bit-identical reruns
    std::vector<std::string> theta_names;
    std::vector<std::string> loading_names;

    [[nodiscard]] int rows() const noexcept { return goods + first_stage_rows; }
    [[nodiscard]] bool random_effects() const noexcept { return structure == ErrorStructure::random_effects; }
};

struct PosteriorChain {
    ChainInfo info;
    Eigen::MatrixXd theta;     // draws × dim(Θ)
    Eigen::MatrixXd loadings;  // draws × free loadings, or draws × vech(Σ) for RE
    Eigen::MatrixXd factors;   // draws × (N·L), row-major per individual; empty when not stored
    std::vector<std::uint64_t> sweeps;

    [[nodiscard]] Eigen::Index draws() const noexcept { return theta.rows(); }
    [[nodiscard]] bool has_factors() const noexcept { return factors.cols() > 0 && factors.rows() == theta.rows(); }

    /// Loading matrices of draw d, one per block. RE chains store ν_i as the
    /// factors, so their loading matrix is the identity.
    [[nodiscard]] std::vector<Eigen::MatrixXd> loading_matrices(Eigen::Index d) const {
        if (info.random_effects()) return {Eigen::MatrixXd::Identity(info.rows(), info.rows())};
        const LoadingLayout layout(info.rows(), info.factors, info.masks);
        return layout.matrices(loadings.row(d).transpose());
    }

    /// Structural covariance of draw d: Σ for RE, Λ_b Λ_b' of block b otherwise.
    [[nodiscard]] Eigen::MatrixXd structural_covariance(Eigen::Index d, int block = 0) const {
        if (info.random_effects()) return unvech(loadings.row(d).transpose(), info.rows());
        const auto mats = loading_matrices(d);
        const auto& l = mats.at(static_cast<std::size_t>(block));
        return l * l.transpose();
    }

    [[nodiscard]] Eigen::MatrixXd factor_matrix(Eigen::Index d) const {
        if (!has_factors()) throw UsageError("chain does not store factor draws");
        const auto n = static_cast<Eigen::Index>(info.individuals);
        Eigen::MatrixXd out(n, info.factors);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index l = 0; l < info.factors; ++l) out(i, l) = factors(d, i * info.factors + l);
        }
        return out;
    }

    static Eigen::VectorXd vech(const Eigen::MatrixXd& m) {
        const auto k = m.rows();
        Eigen::VectorXd out(k * (k + 1) / 2);
        Eigen::Index c = 0;
        for (Eigen::Index col = 0; col < k; ++col) {
            for (Eigen::Index row = col; row < k; ++row) out[c++] = m(row, col);
        }
        return out;
    }

    static Eigen::MatrixXd unvech(const Eigen::VectorXd& v, int k) {
        Eigen::MatrixXd out(k, k);
        Eigen::Index c = 0;
        for (int col = 0; col < k; ++col) {
            for (int row = col; row < k; ++row) {
                out(row, col) = v[c];
                out(col, row) = v[c++];
            }
        }
        return out;
    }
};

inline std::vector<std::string> loading_names(const ChainInfo& info) {
    std::vector<std::string> out;
    if (info.random_effects()) {
        for (int col = 0; col < info.rows(); ++col) {
            for (int row = col; row < info.rows(); ++row) {
                out.push_back("sigma[" + std::to_string(row + 1) + "," + std::to_string(col + 1) + "]");
            }
        }
        return out;
    }
    const LoadingLayout layout(info.rows(), info.factors, info.masks);
    for (const auto& e : layout.entries()) {
        std::string name = "lambda[";
        if (layout.blocks() > 1) name += "t=" + std::to_string(e.block + 1) + ",";
        name += "j=" + std::to_string(e.row + 1) + ",l=" + std::to_string(e.col + 1) + "]";
        out.push_back(std::move(name));
    }
    return out;
}

struct SummaryRow {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double q500 = 0.0;
    double q975 = 0.0;
    double split_rhat = std::numeric_limits<double>::quiet_NaN();
};

/// Linear-interpolation quantile of sorted data (type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw UsageError("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Split-R̂ from one chain cut into halves; NaN with fewer than 4 draws.
inline double split_rhat(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size() / 2;
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::VectorXd a = x.head(n);
    const Eigen::VectorXd b = x.segment(n, n).eval();
    const double ma = a.mean();
    const double mb = b.mean();
    const double va = (a.array() - ma).square().sum() / static_cast<double>(n - 1);
    const double vb = (b.array() - mb).square().sum() / static_cast<double>(n - 1);
    const double w = 0.5 * (va + vb);
    const double grand = 0.5 * (ma + mb);
    const double between = static_cast<double>(n) * ((ma - grand) * (ma - grand) + (mb - grand) * (mb - grand));
    if (w == 0.0) return between == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (static_cast<double>(n - 1) / static_cast<double>(n)) * w + between / static_cast<double>(n);
    return std::sqrt(var_plus / w);
}

inline std::vector<SummaryRow> summarize(const Eigen::MatrixXd& draws, const std::vector<std::string>& names) {
    if (draws.rows() == 0) throw UsageError("cannot summarize an empty chain");
    if (static_cast<Eigen::Index>(names.size()) != draws.cols()) throw UsageError("summary names do not match columns");
    std::vector<SummaryRow> out;
    out.reserve(names.size());
    const auto n = static_cast<double>(draws.rows());
    for (Eigen::Index c = 0; c < draws.cols(); ++c) {
        const Eigen::VectorXd x = draws.col(c);
        SummaryRow row;
        row.name = names[static_cast<std::size_t>(c)];
        row.mean = x.mean();
        row.sd = draws.rows() > 1 ? std::sqrt((x.array() - row.mean).square().sum() / (n - 1.0)) : 0.0;
        std::vector<double> sorted(x.data(), x.data() + x.size());
        std::sort(sorted.begin(), sorted.end());
        row.q025 = sorted_quantile(sorted, 0.025);
        row.q500 = sorted_quantile(sorted, 0.5);
        row.q975 = sorted_quantile(sorted, 0.975);
        row.split_rhat = split_rhat(x);
        out.push_back(std::move(row));
    }
    return out;
}

/// Summaries of Θ followed by the loadings (or Σ).
inline std::vector<SummaryRow> summarize(const PosteriorChain& chain) {
    auto rows = summarize(chain.theta, chain.info.theta_names);
    if (chain.loadings.cols() > 0) {
        auto more = summarize(chain.loadings, chain.info.loading_names);
        rows.insert(rows.end(), more.begin(), more.end());
    }
    return rows;
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_CHAIN_HPP
