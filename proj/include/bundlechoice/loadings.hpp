#ifndef BUNDLECHOICE_LOADINGS_HPP
#define BUNDLECHOICE_LOADINGS_HPP

#include "choice_set.hpp"
#include "error.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace bundlechoice {

enum class ErrorStructure { random_effects, factor, time_varying_factor };

inline const char* to_string(ErrorStructure s) {
    switch (s) {
        case ErrorStructure::random_effects: return "RE";
        case ErrorStructure::factor: return "FA";
        case ErrorStructure::time_varying_factor: return "TVFA";
    }
    return "?";
}

using Mask = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Free loadings λ: for each period block b (one block for FA, one per period
/// for TV-FA), the entries of vec(Λ_b) (column-major) whose mask entry is 1.
class LoadingLayout {
public:
    struct Entry {
        int block;
        int row;
        int col;
    };

    LoadingLayout() = default;

    /// `masks` holds one K×L mask per block.
    LoadingLayout(int rows, int factors, std::vector<Mask> masks) : rows_{rows}, factors_{factors}, masks_{std::move(masks)} {
        if (rows < 1 || factors < 1) throw ConfigError("loading matrix needs at least one row and one factor");
        if (masks_.empty()) throw ConfigError("loading layout needs at least one period block");
        column_counts_.assign(static_cast<std::size_t>(factors), 0);
        for (int b = 0; b < blocks(); ++b) {
            const auto& m = masks_[static_cast<std::size_t>(b)];
            if (m.rows() != rows || m.cols() != factors) {
                throw ConfigError("loading mask must be " + std::to_string(rows) + "x" + std::to_string(factors));
            }
            block_offset_.push_back(static_cast<int>(entries_.size()));
            for (int l = 0; l < factors; ++l) {
                for (int j = 0; j < rows; ++j) {
                    if (m(j, l) != 0 && m(j, l) != 1) throw ConfigError("loading mask entries must be 0 or 1");
                    if (m(j, l) == 1) {
                        entries_.push_back({b, j, l});
                        ++column_counts_[static_cast<std::size_t>(l)];
                    }
                }
            }
        }
        block_offset_.push_back(static_cast<int>(entries_.size()));
    }

    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] int factors() const noexcept { return factors_; }
    [[nodiscard]] int blocks() const noexcept { return static_cast<int>(masks_.size()); }
    [[nodiscard]] int free_count() const noexcept { return static_cast<int>(entries_.size()); }
    [[nodiscard]] int block_offset(int b) const { return block_offset_.at(static_cast<std::size_t>(b)); }
    [[nodiscard]] int block_free_count(int b) const { return block_offset(b + 1) - block_offset(b); }
    [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }
    [[nodiscard]] const Mask& mask(int b) const { return masks_.at(static_cast<std::size_t>(b)); }
    [[nodiscard]] const std::vector<Mask>& masks() const noexcept { return masks_; }
    /// Number of free loadings in factor column l, summed over blocks.
    [[nodiscard]] int column_free_count(int l) const { return column_counts_.at(static_cast<std::size_t>(l)); }

    /// Block index of period t (FA has a single block).
    [[nodiscard]] int block_of_period(int t) const { return blocks() == 1 ? 0 : t; }

    [[nodiscard]] std::vector<Eigen::MatrixXd> matrices(const Eigen::VectorXd& lambda) const {
        check(lambda);
        std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(blocks()), Eigen::MatrixXd::Zero(rows_, factors_));
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const auto& e = entries_[k];
            out[static_cast<std::size_t>(e.block)](e.row, e.col) = lambda[static_cast<Eigen::Index>(k)];
        }
        return out;
    }

    [[nodiscard]] Eigen::VectorXd vectorize(const std::vector<Eigen::MatrixXd>& mats) const {
        if (static_cast<int>(mats.size()) != blocks()) throw ConfigError("wrong number of loading blocks");
        Eigen::VectorXd out(free_count());
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const auto& e = entries_[k];
            out[static_cast<Eigen::Index>(k)] = mats[static_cast<std::size_t>(e.block)](e.row, e.col);
        }
        return out;
    }

    /// Factor columns that have no free loading anywhere.
    [[nodiscard]] std::vector<int> empty_columns() const {
        std::vector<int> out;
        for (int l = 0; l < factors_; ++l) {
            if (column_free_count(l) == 0) out.push_back(l);
        }
        return out;
    }

    void check(const Eigen::VectorXd& lambda) const {
        if (lambda.size() != free_count()) {
            throw ConfigError("loading vector has " + std::to_string(lambda.size()) + " entries, mask frees " +
                              std::to_string(free_count()));
        }
    }

private:
    int rows_ = 0;
    int factors_ = 0;
    std::vector<Mask> masks_;
    std::vector<Entry> entries_;
    std::vector<int> block_offset_;
    std::vector<int> column_counts_;
};

/// Build the loading layout for a structure. `masks` may be empty (all free),
/// hold one mask (replicated per period for TV-FA), or one per period (TV-FA).
inline LoadingLayout make_loading_layout(ErrorStructure structure, int rows, int factors, int periods,
                                         const std::vector<Mask>& masks) {
    if (structure == ErrorStructure::random_effects) throw ConfigError("random-effects models have no loadings");
    std::vector<Mask> resolved;
    if (masks.empty()) {
        resolved.push_back(Mask::Ones(rows, factors));
    } else if (masks.size() == 1) {
        resolved.push_back(masks.front());
    } else {
        if (structure == ErrorStructure::factor) {
            for (const auto& m : masks) {
                if (m != masks.front()) throw ConfigError("FA loading mask must be constant over periods");
            }
            resolved.push_back(masks.front());
        } else {
            if (static_cast<int>(masks.size()) != periods) {
                throw ConfigError("TV-FA needs one mask, or one mask per period (" + std::to_string(periods) + ")");
            }
            resolved = masks;
        }
    }
    if (structure == ErrorStructure::time_varying_factor && resolved.size() == 1) {
        resolved.assign(static_cast<std::size_t>(periods), resolved.front());
    }
    return LoadingLayout(rows, factors, std::move(resolved));
}

/// I_ν = blockdiag(I_ν^u, I_{J_p}): (R + J_p) × (J + J_p).
inline Eigen::MatrixXd mapping_matrix(const ChoiceSet& cs, int first_stage_rows) {
    const int R = cs.inside();
    const int J = cs.goods();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(R + first_stage_rows, J + first_stage_rows);
    out.topLeftCorner(R, J) = membership_matrix(cs);
    out.bottomRightCorner(first_stage_rows, first_stage_rows).setIdentity();
    return out;
}

/// Ω_t = I_ν Λ_t Λ_t' I_ν' + I.
inline Eigen::MatrixXd joint_error_covariance(const Eigen::MatrixXd& mapping, const Eigen::MatrixXd& lambda) {
    if (lambda.rows() != mapping.cols()) throw ConfigError("loading rows do not match the mapping matrix");
    const Eigen::MatrixXd u = mapping * lambda;
    Eigen::MatrixXd out = u * u.transpose();
    out.diagonal().array() += 1.0;
    return out;
}

/// Ω_i over the periods of one individual: block (s, t) is I_ν Λ_s Λ_t' I_ν'
/// plus I on the diagonal blocks. `lambdas` lists Λ for each observed period.
inline Eigen::MatrixXd joint_error_covariance(const Eigen::MatrixXd& mapping, const std::vector<Eigen::MatrixXd>& lambdas) {
    const auto n = mapping.rows();
    const auto T = static_cast<Eigen::Index>(lambdas.size());
    Eigen::MatrixXd u(n * T, lambdas.empty() ? 0 : lambdas.front().cols());
    for (Eigen::Index t = 0; t < T; ++t) {
        if (lambdas[static_cast<std::size_t>(t)].rows() != mapping.cols()) {
            throw ConfigError("loading rows do not match the mapping matrix");
        }
        u.middleRows(t * n, n) = mapping * lambdas[static_cast<std::size_t>(t)];
    }
    Eigen::MatrixXd out = u * u.transpose();
    out.diagonal().array() += 1.0;
    return out;
}

/// Random-effects analogue: ν_i ~ N(0, Σ) constant over periods.
inline Eigen::MatrixXd joint_error_covariance_re(const Eigen::MatrixXd& mapping, const Eigen::MatrixXd& sigma, int periods) {
    const auto n = mapping.rows();
    const Eigen::MatrixXd block = mapping * sigma * mapping.transpose();
    Eigen::MatrixXd out(n * periods, n * periods);
    for (int s = 0; s < periods; ++s) {
        for (int t = 0; t < periods; ++t) out.block(s * n, t * n, n, n) = block;
    }
    out.diagonal().array() += 1.0;
    return out;
}

struct CovarianceEntry {
    std::string description;
    std::string label;
    double value = 0.0;
};

namespace detail {

// `cross(s, t)` is cov(ν_s, ν_t) over the J + J_p structural rows.
inline std::vector<CovarianceEntry> covariance_entries(int goods, int first_stage_rows, int periods, bool time_varying,
                                                       const std::function<Eigen::MatrixXd(int, int)>& cross) {
    std::vector<CovarianceEntry> out;
    const int J = goods;
    const int Jp = first_stage_rows;
    auto tag = [&](int t) { return time_varying ? ",t=" + std::to_string(t + 1) : std::string{}; };
    const int n_t = time_varying ? periods : 1;
    auto J1 = [](int j) { return std::to_string(j + 1); };
    for (int t = 0; t < n_t; ++t) {
        const Eigen::MatrixXd c = cross(t, t);
        for (int j = 0; j < J; ++j) out.push_back({"utility error variance", "j=" + J1(j) + tag(t), 1.0 + c(j, j)});
        for (int a = 0; a < J; ++a) {
            for (int b = a + 1; b < J; ++b) {
                out.push_back({"unobserved tastes", "j1=" + J1(a) + ",j2=" + J1(b) + tag(t), c(a, b)});
            }
        }
        for (int a = 0; a < J; ++a) {
            for (int b = 0; b < Jp; ++b) {
                out.push_back({"regressor endogeneity", "j1=" + J1(a) + ",j2=" + J1(b) + tag(t), c(a, J + b)});
            }
        }
        for (int j = 0; j < Jp; ++j) {
            out.push_back({"reduced form error variance", "j=" + J1(j) + tag(t), 1.0 + c(J + j, J + j)});
        }
        for (int a = 0; a < Jp; ++a) {
            for (int b = a + 1; b < Jp; ++b) {
                out.push_back({"ER error correlation", "j1=" + J1(a) + ",j2=" + J1(b) + tag(t), c(J + a, J + b)});
            }
        }
    }
    auto intertemporal = [&](const char* what, int offset, int count) {
        for (int j = 0; j < count; ++j) {
            if (!time_varying) {
                out.push_back({what, "j=" + J1(j) + ",t1!=t2", cross(0, 0)(offset + j, offset + j)});
                continue;
            }
            for (int s = 0; s < periods; ++s) {
                for (int t = s + 1; t < periods; ++t) {
                    out.push_back({what, "j=" + J1(j) + ",t1=" + J1(s) + ",t2=" + J1(t), cross(s, t)(offset + j, offset + j)});
                }
            }
        }
    };
    intertemporal("intertemporal tastes", 0, J);
    intertemporal("ER intertemporal", J, Jp);
    return out;
}

} // namespace detail

/// Named covariance elements for FA (one Λ) or TV-FA (Λ_t per period).
inline std::vector<CovarianceEntry> covariance_summary(int goods, int first_stage_rows, const std::vector<Eigen::MatrixXd>& lambdas) {
    if (lambdas.empty()) throw ConfigError("covariance summary needs at least one loading matrix");
    for (const auto& l : lambdas) {
        if (l.rows() != goods + first_stage_rows) throw ConfigError("loading rows must equal J + J_p");
    }
    const bool tv = lambdas.size() > 1;
    return detail::covariance_entries(goods, first_stage_rows, static_cast<int>(lambdas.size()), tv, [&](int s, int t) {
        return Eigen::MatrixXd(lambdas[static_cast<std::size_t>(s)] * lambdas[static_cast<std::size_t>(t)].transpose());
    });
}

/// Random-effects version: entries read directly from Σ.
inline std::vector<CovarianceEntry> covariance_summary_re(int goods, int first_stage_rows, const Eigen::MatrixXd& sigma) {
    if (sigma.rows() != goods + first_stage_rows || sigma.cols() != sigma.rows()) {
        throw ConfigError("RE covariance must be (J + J_p) square");
    }
    return detail::covariance_entries(goods, first_stage_rows, 1, false, [&](int, int) { return sigma; });
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_LOADINGS_HPP
