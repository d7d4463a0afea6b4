#ifndef BUNDLECHOICE_PANEL_HPP
#define BUNDLECHOICE_PANEL_HPP

#include "choice_set.hpp"
#include "error.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bundlechoice {

/// Covariate dimensions shared by every observation of a panel.
///
/// Goods 1..priced carry an observed price. The utility covariate vector of a
/// priced good is (price, z...); the price is stored once, separately from z,
/// so counterfactual price changes touch one number.
struct PanelShape {
    int goods = 0;
    int priced = 0;
    std::vector<int> z_dims;   // per good, excluding the price
    std::vector<int> w_dims;   // per good pair, in ChoiceSet::pairs() order
    std::vector<int> zp_dims;  // per priced good; empty when no instruments

    [[nodiscard]] bool has_instruments() const noexcept { return !zp_dims.empty(); }
    [[nodiscard]] int pair_count() const noexcept { return static_cast<int>(w_dims.size()); }

    friend bool operator==(const PanelShape&, const PanelShape&) = default;
};

/// One (individual, period) row before it is placed in a panel.
struct ObservationRow {
    std::int64_t individual = 0;
    std::int64_t period = 0;
    int choice = 0;
    std::vector<double> prices;
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> zp;
};

/// Unbalanced panel of bundle choices. Observations are stored sorted by
/// (individual, period) in one flat buffer with fixed per-block offsets.
class PanelData {
public:
    PanelData() = default;

    PanelData(PanelShape shape, std::vector<ObservationRow> rows) : shape_{std::move(shape)} {
        validate_shape();
        choice_set_size_ = 1 << shape_.goods;
        build_offsets();
        std::sort(rows.begin(), rows.end(), [](const ObservationRow& a, const ObservationRow& b) {
            return std::pair{a.individual, a.period} < std::pair{b.individual, b.period};
        });
        std::map<std::int64_t, int> period_rank;
        for (const auto& row : rows) period_rank.emplace(row.period, 0);
        int next = 0;
        for (auto& [label, rank] : period_rank) {
            rank = next++;
            period_labels_.push_back(label);
        }
        values_.reserve(rows.size() * static_cast<std::size_t>(stride_));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& row = rows[k];
            if (k > 0 && rows[k - 1].individual == row.individual && rows[k - 1].period == row.period) {
                throw DataError("duplicate observation for individual " + std::to_string(row.individual) +
                                ", period " + std::to_string(row.period));
            }
            if (individual_ids_.empty() || individual_ids_.back() != row.individual) {
                individual_ids_.push_back(row.individual);
                begin_.push_back(choices_.size());
            }
            append(row, period_rank.at(row.period));
        }
        begin_.push_back(choices_.size());
    }

    [[nodiscard]] const PanelShape& shape() const noexcept { return shape_; }
    [[nodiscard]] int goods() const noexcept { return shape_.goods; }
    [[nodiscard]] int priced() const noexcept { return shape_.priced; }
    [[nodiscard]] bool has_instruments() const noexcept { return shape_.has_instruments(); }

    [[nodiscard]] std::size_t individuals() const noexcept { return individual_ids_.size(); }
    [[nodiscard]] std::size_t observations() const noexcept { return choices_.size(); }
    /// Number of distinct periods across the whole panel.
    [[nodiscard]] int periods() const noexcept { return static_cast<int>(period_labels_.size()); }

    [[nodiscard]] std::size_t begin(std::size_t i) const { return begin_.at(i); }
    [[nodiscard]] std::size_t end(std::size_t i) const { return begin_.at(i + 1); }
    [[nodiscard]] std::size_t periods_of(std::size_t i) const { return end(i) - begin(i); }
    [[nodiscard]] std::size_t max_periods_per_individual() const {
        std::size_t best = 0;
        for (std::size_t i = 0; i < individuals(); ++i) best = std::max(best, periods_of(i));
        return best;
    }

    [[nodiscard]] std::int64_t individual_id(std::size_t i) const { return individual_ids_.at(i); }
    [[nodiscard]] std::int64_t period_label(int t) const { return period_labels_.at(static_cast<std::size_t>(t)); }

    [[nodiscard]] std::size_t individual(std::size_t o) const { return owners_[o]; }
    [[nodiscard]] int period(std::size_t o) const { return periods_[o]; }
    [[nodiscard]] int choice(std::size_t o) const { return choices_[o]; }

    [[nodiscard]] double price(std::size_t o, int k) const { return values_[o * stride_ + static_cast<std::size_t>(k)]; }
    [[nodiscard]] std::span<const double> prices(std::size_t o) const { return block(o, 0, shape_.priced); }
    [[nodiscard]] std::span<const double> z(std::size_t o, int j) const {
        return block(o, z_offset_[static_cast<std::size_t>(j)], shape_.z_dims[static_cast<std::size_t>(j)]);
    }
    [[nodiscard]] std::span<const double> w(std::size_t o, int q) const {
        return block(o, w_offset_[static_cast<std::size_t>(q)], shape_.w_dims[static_cast<std::size_t>(q)]);
    }
    [[nodiscard]] std::span<const double> zp(std::size_t o, int k) const {
        return block(o, zp_offset_[static_cast<std::size_t>(k)], shape_.zp_dims[static_cast<std::size_t>(k)]);
    }

    void set_price(std::size_t o, int k, double value) { values_[o * stride_ + static_cast<std::size_t>(k)] = value; }
    [[nodiscard]] double& z_ref(std::size_t o, int j, int c) {
        return values_[o * stride_ + static_cast<std::size_t>(z_offset_[static_cast<std::size_t>(j)] + c)];
    }
    [[nodiscard]] double& w_ref(std::size_t o, int q, int c) {
        return values_[o * stride_ + static_cast<std::size_t>(w_offset_[static_cast<std::size_t>(q)] + c)];
    }

    /// Reconstruct a row (for serialization and tests).
    [[nodiscard]] ObservationRow row(std::size_t o) const {
        ObservationRow out;
        out.individual = individual_id(individual(o));
        out.period = period_label(period(o));
        out.choice = choice(o);
        out.prices.assign(prices(o).begin(), prices(o).end());
        for (int j = 0; j < shape_.goods; ++j) out.z.emplace_back(z(o, j).begin(), z(o, j).end());
        for (int q = 0; q < shape_.pair_count(); ++q) out.w.emplace_back(w(o, q).begin(), w(o, q).end());
        for (int k = 0; k < static_cast<int>(shape_.zp_dims.size()); ++k) out.zp.emplace_back(zp(o, k).begin(), zp(o, k).end());
        return out;
    }

    /// Same panel without first-stage instruments.
    [[nodiscard]] PanelData without_instruments() const {
        PanelShape s = shape_;
        s.zp_dims.clear();
        std::vector<ObservationRow> rows;
        rows.reserve(observations());
        for (std::size_t o = 0; o < observations(); ++o) {
            rows.push_back(row(o));
            rows.back().zp.clear();
        }
        return PanelData(std::move(s), std::move(rows));
    }

    /// Keep the first `n` individuals (in id order).
    [[nodiscard]] PanelData head(std::size_t n) const {
        n = std::min(n, individuals());
        std::vector<ObservationRow> rows;
        for (std::size_t o = 0; o < (n == 0 ? 0 : end(n - 1)); ++o) rows.push_back(row(o));
        return PanelData(shape_, std::move(rows));
    }

private:
    void validate_shape() {
        if (shape_.goods < 1 || shape_.goods > kMaxGoods) throw DataError("panel: goods must be in [1, 7]");
        if (shape_.priced < 0 || shape_.priced > shape_.goods) throw DataError("panel: priced goods must be in [0, J]");
        if (static_cast<int>(shape_.z_dims.size()) != shape_.goods) throw DataError("panel: z dims must list every good");
        const int pairs = shape_.goods * (shape_.goods - 1) / 2;
        if (static_cast<int>(shape_.w_dims.size()) != pairs) throw DataError("panel: w dims must list every good pair");
        if (!shape_.zp_dims.empty() && static_cast<int>(shape_.zp_dims.size()) != shape_.priced) {
            throw DataError("panel: instrument dims must list every priced good");
        }
        for (const auto* dims : {&shape_.z_dims, &shape_.w_dims, &shape_.zp_dims}) {
            for (int d : *dims) {
                if (d < 0) throw DataError("panel: negative covariate dimension");
            }
        }
    }

    void build_offsets() {
        int offset = shape_.priced;
        for (int d : shape_.z_dims) {
            z_offset_.push_back(offset);
            offset += d;
        }
        for (int d : shape_.w_dims) {
            w_offset_.push_back(offset);
            offset += d;
        }
        for (int d : shape_.zp_dims) {
            zp_offset_.push_back(offset);
            offset += d;
        }
        stride_ = static_cast<std::size_t>(offset);
    }

    static void check_block(const std::vector<double>& v, int expected, const char* what, const ObservationRow& row) {
        if (static_cast<int>(v.size()) != expected) {
            throw DataError(std::string("covariate length mismatch in ") + what + " for individual " +
                            std::to_string(row.individual) + ", period " + std::to_string(row.period));
        }
    }

    void append(const ObservationRow& row, int period_index) {
        if (row.choice < 0 || row.choice >= choice_set_size_) throw DataError("choice index outside the choice set");
        check_block(row.prices, shape_.priced, "prices", row);
        if (static_cast<int>(row.z.size()) != shape_.goods || static_cast<int>(row.w.size()) != shape_.pair_count() ||
            row.zp.size() != shape_.zp_dims.size()) {
            throw DataError("observation block count does not match the panel shape");
        }
        values_.insert(values_.end(), row.prices.begin(), row.prices.end());
        for (std::size_t j = 0; j < row.z.size(); ++j) {
            check_block(row.z[j], shape_.z_dims[j], "z", row);
            values_.insert(values_.end(), row.z[j].begin(), row.z[j].end());
        }
        for (std::size_t q = 0; q < row.w.size(); ++q) {
            check_block(row.w[q], shape_.w_dims[q], "w", row);
            values_.insert(values_.end(), row.w[q].begin(), row.w[q].end());
        }
        for (std::size_t k = 0; k < row.zp.size(); ++k) {
            check_block(row.zp[k], shape_.zp_dims[k], "zp", row);
            values_.insert(values_.end(), row.zp[k].begin(), row.zp[k].end());
        }
        choices_.push_back(row.choice);
        periods_.push_back(period_index);
        owners_.push_back(individual_ids_.size() - 1);
    }

    [[nodiscard]] std::span<const double> block(std::size_t o, int offset, int len) const {
        return {values_.data() + o * stride_ + static_cast<std::size_t>(offset), static_cast<std::size_t>(len)};
    }

    PanelShape shape_;
    int choice_set_size_ = 0;
    std::vector<int> z_offset_, w_offset_, zp_offset_;
    std::size_t stride_ = 0;
    std::vector<double> values_;
    std::vector<int> choices_;
    std::vector<int> periods_;
    std::vector<std::size_t> owners_;
    std::vector<std::int64_t> individual_ids_;
    std::vector<std::size_t> begin_;
    std::vector<std::int64_t> period_labels_;
};

} // namespace bundlechoice

#endif // BUNDLECHOICE_PANEL_HPP
