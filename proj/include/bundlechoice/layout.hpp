#ifndef BUNDLECHOICE_LAYOUT_HPP
#define BUNDLECHOICE_LAYOUT_HPP

#include "choice_set.hpp"
#include "error.hpp"
#include "panel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bundlechoice {

/// Which coefficient slots are shared across equations.
///
/// `utility` holds covariate labels shared by every good equation: "p" for the
/// price, "z<k>" for the k-th z covariate (one-based). `bundle` uses "w<k>"
/// and `first_stage` uses "zp<k>". `groups` ties arbitrary CSV columns
/// together (e.g. {"z_1_2", "z_3_2"}); a group may not span blocks.
struct SharingSpec {
    std::vector<std::string> utility{"p"};
    std::vector<std::string> bundle{};
    std::vector<std::string> first_stage{};
    std::vector<std::vector<std::string>> groups{};

    friend bool operator==(const SharingSpec&, const SharingSpec&) = default;
};

enum class Block { utility, bundle, first_stage };

/// Column name of a utility covariate: c = 0 is the price for priced goods.
inline std::string utility_column(const PanelShape& s, int j, int c) {
    if (j < s.priced) {
        if (c == 0) return "p_" + std::to_string(j + 1);
        --c;
    }
    return "z_" + std::to_string(j + 1) + "_" + std::to_string(c + 1);
}

inline std::string bundle_column(const ChoiceSet& cs, int q, int c) {
    const auto [a, b] = cs.pairs()[static_cast<std::size_t>(q)];
    return "w_" + std::to_string(a + 1) + "_" + std::to_string(b + 1) + "_" + std::to_string(c + 1);
}

inline std::string first_stage_column(int k, int c) {
    return "zp_" + std::to_string(k + 1) + "_" + std::to_string(c + 1);
}

/// Flattened parameter vector Θ = (θ', γ', θ^p')' after sharing.
class ParamLayout {
public:
    ParamLayout() = default;

    ParamLayout(const PanelShape& shape, bool endogenous, const SharingSpec& sharing)
        : shape_{shape}, cs_{shape.goods}, endogenous_{endogenous} {
        if (endogenous_ && !shape.has_instruments()) {
            throw ConfigError("endogenous model requires instrument (zp_*) columns in the data");
        }
        if (endogenous_ && shape.priced < 1) throw ConfigError("endogenous model requires at least one priced good");
        build(sharing);
    }

    [[nodiscard]] const PanelShape& shape() const noexcept { return shape_; }
    [[nodiscard]] const ChoiceSet& choice_set() const noexcept { return cs_; }
    [[nodiscard]] bool endogenous() const noexcept { return endogenous_; }
    [[nodiscard]] int goods() const noexcept { return shape_.goods; }
    [[nodiscard]] int pair_count() const noexcept { return shape_.pair_count(); }
    /// First-stage equations in the model: J_p when endogenous, else 0.
    [[nodiscard]] int first_stage_rows() const noexcept { return endogenous_ ? shape_.priced : 0; }
    /// Equation-level rows: goods, pairs, first-stage.
    [[nodiscard]] int equation_rows() const noexcept { return goods() + pair_count() + first_stage_rows(); }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(names_.size()); }
    [[nodiscard]] int theta_dim() const noexcept { return gamma_begin_; }
    [[nodiscard]] int gamma_dim() const noexcept { return theta_p_begin_ - gamma_begin_; }
    [[nodiscard]] int theta_p_dim() const noexcept { return dim() - theta_p_begin_; }
    [[nodiscard]] int gamma_begin() const noexcept { return gamma_begin_; }
    [[nodiscard]] int theta_p_begin() const noexcept { return theta_p_begin_; }

    [[nodiscard]] const std::vector<int>& utility_slots(int j) const { return utility_slots_.at(static_cast<std::size_t>(j)); }
    [[nodiscard]] const std::vector<int>& bundle_slots(int q) const { return bundle_slots_.at(static_cast<std::size_t>(q)); }
    [[nodiscard]] const std::vector<int>& first_stage_slots(int k) const { return first_stage_slots_.at(static_cast<std::size_t>(k)); }
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }

    /// Θ slot multiplying the price of good j in its utility, if any.
    [[nodiscard]] std::optional<int> price_slot(int j) const {
        if (j >= shape_.priced) return std::nullopt;
        return utility_slots(j).front();
    }

    /// Calls f(slot, value) for every nonzero-capable term of equation row e
    /// of observation o (rows: goods, pairs, first stage).
    template <class F>
    void for_each_term(const PanelData& data, std::size_t o, int e, F&& f) const {
        const int J = goods();
        const int P = pair_count();
        if (e < J) {
            const auto& slots = utility_slots(e);
            std::size_t c = 0;
            if (e < shape_.priced) f(slots[c++], data.price(o, e));
            for (double v : data.z(o, e)) f(slots[c++], v);
        } else if (e < J + P) {
            const auto& slots = bundle_slots(e - J);
            std::size_t c = 0;
            for (double v : data.w(o, e - J)) f(slots[c++], v);
        } else {
            const auto& slots = first_stage_slots(e - J - P);
            std::size_t c = 0;
            for (double v : data.zp(o, e - J - P)) f(slots[c++], v);
        }
    }

    /// Equation-level values E_o Θ: good utilities, pair effects, first-stage means.
    void equation_values(const PanelData& data, std::size_t o, const Eigen::Ref<const Eigen::VectorXd>& theta,
                         std::span<double> out) const {
        for (int e = 0; e < equation_rows(); ++e) {
            double acc = 0.0;
            for_each_term(data, o, e, [&](int slot, double v) { acc += theta[slot] * v; });
            out[static_cast<std::size_t>(e)] = acc;
        }
    }

    /// Accumulates E_o' g into out (length dim()).
    void add_transpose_product(const PanelData& data, std::size_t o, std::span<const double> g,
                               Eigen::Ref<Eigen::VectorXd> out) const {
        for (int e = 0; e < equation_rows(); ++e) {
            const double ge = g[static_cast<std::size_t>(e)];
            if (ge == 0.0) continue;
            for_each_term(data, o, e, [&](int slot, double v) { out[slot] += v * ge; });
        }
    }

    void check_compatible(const PanelData& data) const {
        if (!(data.shape().goods == shape_.goods && data.shape().priced == shape_.priced &&
              data.shape().z_dims == shape_.z_dims && data.shape().w_dims == shape_.w_dims &&
              (!endogenous_ || data.shape().zp_dims == shape_.zp_dims))) {
            throw DataError("panel covariate dimensions do not match the parameter layout");
        }
    }

private:
    void build(const SharingSpec& sharing) {
        const int J = shape_.goods;
        std::map<std::string, std::string> group_of;  // column -> group key
        std::map<std::string, Block> group_block;
        auto column_block = [&](const std::string& col) -> std::optional<Block> {
            for (int j = 0; j < J; ++j) {
                const int n = (j < shape_.priced ? 1 : 0) + shape_.z_dims[static_cast<std::size_t>(j)];
                for (int c = 0; c < n; ++c) {
                    if (utility_column(shape_, j, c) == col) return Block::utility;
                }
            }
            for (int q = 0; q < shape_.pair_count(); ++q) {
                for (int c = 0; c < shape_.w_dims[static_cast<std::size_t>(q)]; ++c) {
                    if (bundle_column(cs_, q, c) == col) return Block::bundle;
                }
            }
            for (int k = 0; k < first_stage_rows(); ++k) {
                for (int c = 0; c < shape_.zp_dims[static_cast<std::size_t>(k)]; ++c) {
                    if (first_stage_column(k, c) == col) return Block::first_stage;
                }
            }
            return std::nullopt;
        };
        for (std::size_t g = 0; g < sharing.groups.size(); ++g) {
            const std::string key = "group" + std::to_string(g + 1);
            std::optional<Block> blk;
            for (const auto& col : sharing.groups[g]) {
                const auto b = column_block(col);
                if (!b) throw ConfigError("sharing group references unknown column '" + col + "'");
                if (blk && *blk != *b) throw ConfigError("sharing group " + std::to_string(g + 1) + " spans several equation blocks");
                blk = b;
                if (!group_of.emplace(col, key).second) throw ConfigError("column '" + col + "' appears in two sharing groups");
            }
        }
        auto check_labels = [](const std::vector<std::string>& labels, const std::string& prefix, bool allow_p) {
            for (const auto& l : labels) {
                if (allow_p && l == "p") continue;
                bool ok = l.size() > prefix.size() && l.compare(0, prefix.size(), prefix) == 0 &&
                          std::all_of(l.begin() + static_cast<std::ptrdiff_t>(prefix.size()), l.end(),
                                      [](char ch) { return ch >= '0' && ch <= '9'; });
                if (!ok) throw ConfigError("invalid shared covariate label '" + l + "'");
            }
        };
        check_labels(sharing.utility, "z", true);
        check_labels(sharing.bundle, "w", false);
        check_labels(sharing.first_stage, "zp", false);
        auto has = [](const std::vector<std::string>& v, const std::string& s) {
            return std::find(v.begin(), v.end(), s) != v.end();
        };

        std::map<std::string, int> shared_slot;
        auto assign = [&](const std::string& column, const std::string& common_key) {
            std::string key;
            std::string name = column;
            if (auto it = group_of.find(column); it != group_of.end()) {
                key = it->second;
                name = it->second;
            } else if (!common_key.empty()) {
                key = common_key;
                name = common_key;
            }
            if (!key.empty()) {
                if (auto it = shared_slot.find(key); it != shared_slot.end()) return it->second;
                shared_slot.emplace(key, dim());
            }
            names_.push_back(name);
            return dim() - 1;
        };

        utility_slots_.resize(static_cast<std::size_t>(J));
        for (int j = 0; j < J; ++j) {
            const bool priced = j < shape_.priced;
            const int n = (priced ? 1 : 0) + shape_.z_dims[static_cast<std::size_t>(j)];
            for (int c = 0; c < n; ++c) {
                std::string common;
                if (priced && c == 0) {
                    if (has(sharing.utility, "p")) common = "p_*";
                } else {
                    const int k = c - (priced ? 1 : 0) + 1;
                    if (has(sharing.utility, "z" + std::to_string(k))) common = "z_*_" + std::to_string(k);
                }
                utility_slots_[static_cast<std::size_t>(j)].push_back(assign(utility_column(shape_, j, c), common));
            }
        }
        gamma_begin_ = dim();
        bundle_slots_.resize(static_cast<std::size_t>(shape_.pair_count()));
        for (int q = 0; q < shape_.pair_count(); ++q) {
            for (int c = 0; c < shape_.w_dims[static_cast<std::size_t>(q)]; ++c) {
                const std::string common = has(sharing.bundle, "w" + std::to_string(c + 1)) ? "w_*_" + std::to_string(c + 1) : "";
                bundle_slots_[static_cast<std::size_t>(q)].push_back(assign(bundle_column(cs_, q, c), common));
            }
        }
        theta_p_begin_ = dim();
        first_stage_slots_.resize(static_cast<std::size_t>(first_stage_rows()));
        for (int k = 0; k < first_stage_rows(); ++k) {
            for (int c = 0; c < shape_.zp_dims[static_cast<std::size_t>(k)]; ++c) {
                const std::string common = has(sharing.first_stage, "zp" + std::to_string(c + 1)) ? "zp_*_" + std::to_string(c + 1) : "";
                first_stage_slots_[static_cast<std::size_t>(k)].push_back(assign(first_stage_column(k, c), common));
            }
        }
        for (const auto& [col, key] : group_of) {
            if (!shared_slot.contains(key)) throw ConfigError("sharing group column '" + col + "' is not used by the model");
        }
    }

    PanelShape shape_;
    ChoiceSet cs_{1};
    bool endogenous_ = false;
    std::vector<std::vector<int>> utility_slots_, bundle_slots_, first_stage_slots_;
    std::vector<std::string> names_;
    int gamma_begin_ = 0;
    int theta_p_begin_ = 0;
};

/// Θ split into its three blocks.
struct EquationParams {
    Eigen::VectorXd theta;
    Eigen::VectorXd gamma;
    Eigen::VectorXd theta_p;

    static EquationParams split(const ParamLayout& layout, const Eigen::VectorXd& flat) {
        if (flat.size() != layout.dim()) throw DataError("parameter vector length does not match the layout");
        return {flat.head(layout.theta_dim()), flat.segment(layout.gamma_begin(), layout.gamma_dim()),
                flat.tail(layout.theta_p_dim())};
    }

    [[nodiscard]] Eigen::VectorXd flatten() const {
        Eigen::VectorXd out(theta.size() + gamma.size() + theta_p.size());
        out << theta, gamma, theta_p;
        return out;
    }
};

/// Deterministic utility of bundle r at observation o (no ν, no ε).
inline double mean_utility(const ParamLayout& layout, const PanelData& data, std::size_t o,
                           const Eigen::Ref<const Eigen::VectorXd>& theta, int r) {
    if (theta.size() != layout.dim()) throw DataError("parameter vector length does not match the layout");
    const auto& cs = layout.choice_set();
    if (r < 0 || r >= cs.size()) throw DataError("bundle index outside the choice set");
    if (r == 0) return 0.0;
    double total = 0.0;
    for (int j : cs.bundle(r)) {
        layout.for_each_term(data, o, j, [&](int slot, double v) { total += theta[slot] * v; });
    }
    for (int q : cs.pairs_in(r)) {
        layout.for_each_term(data, o, layout.goods() + q, [&](int slot, double v) { total += theta[slot] * v; });
    }
    return total;
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_LAYOUT_HPP
