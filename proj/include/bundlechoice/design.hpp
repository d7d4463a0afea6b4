#ifndef BUNDLECHOICE_DESIGN_HPP
#define BUNDLECHOICE_DESIGN_HPP

#include "choice_set.hpp"
#include "error.hpp"
#include "layout.hpp"
#include "loadings.hpp"
#include "panel.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace bundlechoice {

/// Per-observation design of the stacked system y*_it = h_it Θ + I_ν ν_it + ε_it.
struct DesignBlocks {
    Eigen::MatrixXd z;     // R × dim(θ)
    Eigen::MatrixXd w;     // R × dim(γ)
    Eigen::MatrixXd zp;    // J_p × dim(θ^p)
    Eigen::MatrixXd h;     // (R + J_p) × dim(Θ)
    Eigen::MatrixXd i_nu;  // (R + J_p) × (J + J_p)
};

inline DesignBlocks build_design_blocks(const ParamLayout& layout, const PanelData& data, std::size_t o) {
    layout.check_compatible(data);
    if (o >= data.observations()) throw DataError("observation index out of range");
    const auto& cs = layout.choice_set();
    const int R = cs.inside();
    const int J = layout.goods();
    const int Jp = layout.first_stage_rows();
    DesignBlocks d;
    d.h = Eigen::MatrixXd::Zero(R + Jp, layout.dim());
    for (int r = 1; r <= R; ++r) {
        auto add = [&](int slot, double v) { d.h(r - 1, slot) += v; };
        for (int j : cs.bundle(r)) layout.for_each_term(data, o, j, add);
        for (int q : cs.pairs_in(r)) layout.for_each_term(data, o, J + q, add);
    }
    for (int k = 0; k < Jp; ++k) {
        layout.for_each_term(data, o, J + layout.pair_count() + k, [&](int slot, double v) { d.h(R + k, slot) += v; });
    }
    d.z = d.h.topLeftCorner(R, layout.theta_dim());
    d.w = d.h.block(0, layout.gamma_begin(), R, layout.gamma_dim());
    d.zp = d.h.bottomRightCorner(Jp, layout.theta_p_dim());
    d.i_nu = mapping_matrix(cs, Jp);
    return d;
}

/// Rows of the stacked system, ordered (individual, period, equation row)
/// with bundle rows before first-stage rows. Nothing global is materialized;
/// the operators below work block by block.
class StackedSystem {
public:
    StackedSystem(const ParamLayout& layout, const PanelData& data) : layout_{&layout}, data_{&data} {
        layout.check_compatible(data);
        const auto& cs = layout.choice_set();
        const int R = cs.inside();
        const int J = layout.goods();
        const int P = layout.pair_count();
        const int Jp = layout.first_stage_rows();
        rows_per_obs_ = R + Jp;
        incidence_ = Eigen::MatrixXd::Zero(R + Jp, J + P + Jp);
        incidence_.topLeftCorner(R, J) = membership_matrix(cs);
        incidence_.block(0, J, R, P) = pair_membership_matrix(cs);
        incidence_.bottomRightCorner(Jp, Jp).setIdentity();
        mapping_ = mapping_matrix(cs, Jp);
        eq_rows_.resize(static_cast<std::size_t>(J + P + Jp));
        for (int e = 0; e < J + P + Jp; ++e) {
            for (int r = 0; r < R + Jp; ++r) {
                if (incidence_(r, e) != 0.0) eq_rows_[static_cast<std::size_t>(e)].push_back(r);
            }
        }
    }

    [[nodiscard]] const ParamLayout& layout() const noexcept { return *layout_; }
    [[nodiscard]] const PanelData& data() const noexcept { return *data_; }
    [[nodiscard]] int rows_per_observation() const noexcept { return rows_per_obs_; }
    [[nodiscard]] Eigen::Index row_count() const noexcept {
        return static_cast<Eigen::Index>(data_->observations()) * rows_per_obs_;
    }
    [[nodiscard]] Eigen::Index row_offset(std::size_t o) const noexcept {
        return static_cast<Eigen::Index>(o) * rows_per_obs_;
    }
    /// A = blockdiag([I_ν^u | pair incidence], I_{J_p}) so that h_it = A E_it.
    [[nodiscard]] const Eigen::MatrixXd& incidence() const noexcept { return incidence_; }
    [[nodiscard]] const Eigen::MatrixXd& mapping() const noexcept { return mapping_; }
    /// Stacked rows touched by equation row e (goods, pairs, first stage).
    [[nodiscard]] const std::vector<int>& rows_of_equation(int e) const { return eq_rows_.at(static_cast<std::size_t>(e)); }

    /// g = A' v for one observation's rows.
    void incidence_transpose(std::span<const double> v, std::span<double> g) const {
        for (std::size_t e = 0; e < eq_rows_.size(); ++e) {
            double acc = 0.0;
            for (int r : eq_rows_[e]) acc += v[static_cast<std::size_t>(r)];
            g[e] = acc;
        }
    }

    /// Σ_o h_o' h_o, accumulated from the sparse equation-level terms.
    [[nodiscard]] Eigen::MatrixXd cross_product(std::size_t first = 0, std::size_t last = SIZE_MAX) const {
        const Eigen::MatrixXd ata = incidence_.transpose() * incidence_;
        const int E = static_cast<int>(eq_rows_.size());
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(layout_->dim(), layout_->dim());
        std::vector<std::vector<std::pair<int, double>>> terms(static_cast<std::size_t>(E));
        last = std::min(last, data_->observations());
        for (std::size_t o = first; o < last; ++o) {
            for (int e = 0; e < E; ++e) {
                auto& t = terms[static_cast<std::size_t>(e)];
                t.clear();
                layout_->for_each_term(*data_, o, e, [&](int slot, double v) { t.emplace_back(slot, v); });
            }
            for (int a = 0; a < E; ++a) {
                for (int b = 0; b < E; ++b) {
                    const double wgt = ata(a, b);
                    if (wgt == 0.0) continue;
                    for (const auto& [sa, va] : terms[static_cast<std::size_t>(a)]) {
                        for (const auto& [sb, vb] : terms[static_cast<std::size_t>(b)]) out(sa, sb) += wgt * va * vb;
                    }
                }
            }
        }
        return out;
    }

    /// H_zw Θ, stacked.
    [[nodiscard]] Eigen::VectorXd apply_h(const Eigen::VectorXd& theta) const {
        Eigen::VectorXd out(row_count());
        std::vector<double> eq(static_cast<std::size_t>(layout_->equation_rows()));
        for (std::size_t o = 0; o < data_->observations(); ++o) {
            layout_->equation_values(*data_, o, theta, eq);
            Eigen::Map<const Eigen::VectorXd> e(eq.data(), static_cast<Eigen::Index>(eq.size()));
            out.segment(row_offset(o), rows_per_obs_) = incidence_ * e;
        }
        return out;
    }

    /// H_zw' v for a stacked vector v.
    [[nodiscard]] Eigen::VectorXd apply_h_transpose(const Eigen::VectorXd& v) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(layout_->dim());
        std::vector<double> g(eq_rows_.size());
        for (std::size_t o = 0; o < data_->observations(); ++o) {
            incidence_transpose({v.data() + row_offset(o), static_cast<std::size_t>(rows_per_obs_)}, g);
            layout_->add_transpose_product(*data_, o, g, out);
        }
        return out;
    }

    /// Dense H_zw; only for small instances and tests.
    [[nodiscard]] Eigen::MatrixXd dense_h() const {
        Eigen::MatrixXd out(row_count(), layout_->dim());
        for (std::size_t o = 0; o < data_->observations(); ++o) {
            out.middleRows(row_offset(o), rows_per_obs_) = build_design_blocks(*layout_, *data_, o).h;
        }
        return out;
    }

    /// Block i of H_Λ = I_ν,i^T Λ: T_i (R + J_p) × L. `lambda_of_period(t)`
    /// returns Λ_t (J + J_p) × L.
    template <class LambdaOf>
    [[nodiscard]] Eigen::MatrixXd h_lambda_block(std::size_t i, LambdaOf&& lambda_of_period) const {
        const auto b = data_->begin(i);
        const auto n = static_cast<Eigen::Index>(data_->periods_of(i));
        Eigen::MatrixXd out;
        for (Eigen::Index k = 0; k < n; ++k) {
            const Eigen::MatrixXd& lam = lambda_of_period(data_->period(b + static_cast<std::size_t>(k)));
            if (lam.rows() != mapping_.cols()) throw ConfigError("loading rows do not match J + J_p");
            if (k == 0) out.resize(n * rows_per_obs_, lam.cols());
            out.middleRows(k * rows_per_obs_, rows_per_obs_) = mapping_ * lam;
        }
        return out;
    }

    /// H_Λ f with f stacked as an N × L matrix.
    [[nodiscard]] Eigen::VectorXd apply_h_lambda(const LoadingLayout& loadings, const Eigen::VectorXd& lambda,
                                                 const Eigen::MatrixXd& f) const {
        const auto mats = loadings.matrices(lambda);
        check_factors(f, loadings.factors());
        Eigen::VectorXd out(row_count());
        for (std::size_t o = 0; o < data_->observations(); ++o) {
            const auto& lam = mats[static_cast<std::size_t>(loadings.block_of_period(data_->period(o)))];
            out.segment(row_offset(o), rows_per_obs_) =
                mapping_ * (lam * f.row(static_cast<Eigen::Index>(data_->individual(o))).transpose());
        }
        return out;
    }

    /// Block i of H_f: T_i (R + J_p) × (free loadings). Column k belongs to
    /// free entry (b, j, l) and holds f_il I_ν[:, j] on rows of periods in block b.
    [[nodiscard]] Eigen::MatrixXd h_f_block(std::size_t i, const LoadingLayout& loadings, const Eigen::MatrixXd& f) const {
        check_factors(f, loadings.factors());
        const auto b0 = data_->begin(i);
        const auto n = static_cast<Eigen::Index>(data_->periods_of(i));
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n * rows_per_obs_, loadings.free_count());
        const auto& entries = loadings.entries();
        for (Eigen::Index k = 0; k < n; ++k) {
            const int blk = loadings.block_of_period(data_->period(b0 + static_cast<std::size_t>(k)));
            for (int c = loadings.block_offset(blk); c < loadings.block_offset(blk + 1); ++c) {
                const auto& e = entries[static_cast<std::size_t>(c)];
                out.block(k * rows_per_obs_, c, rows_per_obs_, 1) =
                    f(static_cast<Eigen::Index>(i), e.col) * mapping_.col(e.row);
            }
        }
        return out;
    }

    /// H_f λ, stacked.
    [[nodiscard]] Eigen::VectorXd apply_h_f(const LoadingLayout& loadings, const Eigen::MatrixXd& f,
                                            const Eigen::VectorXd& lambda) const {
        loadings.check(lambda);
        Eigen::VectorXd out(row_count());
        for (std::size_t i = 0; i < data_->individuals(); ++i) {
            const auto rows = static_cast<Eigen::Index>(data_->periods_of(i)) * rows_per_obs_;
            out.segment(row_offset(data_->begin(i)), rows) = h_f_block(i, loadings, f) * lambda;
        }
        return out;
    }

private:
    void check_factors(const Eigen::MatrixXd& f, int factors) const {
        if (f.rows() != static_cast<Eigen::Index>(data_->individuals()) || f.cols() != factors) {
            throw ConfigError("factor matrix must be N x L");
        }
    }

    const ParamLayout* layout_;
    const PanelData* data_;
    int rows_per_obs_ = 0;
    Eigen::MatrixXd incidence_;
    Eigen::MatrixXd mapping_;
    std::vector<std::vector<int>> eq_rows_;
};

} // namespace bundlechoice

#endif // BUNDLECHOICE_DESIGN_HPP
