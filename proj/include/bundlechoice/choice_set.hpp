#ifndef BUNDLECHOICE_CHOICE_SET_HPP
#define BUNDLECHOICE_CHOICE_SET_HPP

#include "error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bundlechoice {

inline constexpr int kMaxGoods = 7;

/// A bundle is a sorted list of zero-based good indices.
using Bundle = std::vector<int>;

/// The full choice set over J goods: every subset, ordered by size and then
/// lexicographically, so index 0 is the empty bundle (outside option), then
/// singletons, pairs, triples, ..., and finally the bundle of all goods.
class ChoiceSet {
public:
    explicit ChoiceSet(int goods) : goods_{goods} {
        if (goods < 1 || goods > kMaxGoods) {
            throw ConfigError("number of goods must be in [1, " + std::to_string(kMaxGoods) +
                              "], got " + std::to_string(goods));
        }
        bundles_.push_back({});
        for (int size = 1; size <= goods; ++size) append_combinations(size);
        for (int a = 0; a < goods; ++a) {
            for (int b = a + 1; b < goods; ++b) pairs_.emplace_back(a, b);
        }
        pair_index_.assign(static_cast<std::size_t>(goods * goods), -1);
        for (std::size_t q = 0; q < pairs_.size(); ++q) {
            pair_index_[static_cast<std::size_t>(pairs_[q].first * goods + pairs_[q].second)] = static_cast<int>(q);
        }
        contains_.assign(bundles_.size() * static_cast<std::size_t>(goods), 0);
        for (std::size_t r = 0; r < bundles_.size(); ++r) {
            for (int j : bundles_[r]) contains_[r * static_cast<std::size_t>(goods) + static_cast<std::size_t>(j)] = 1;
            bundle_pairs_.emplace_back();
            for (std::size_t x = 0; x < bundles_[r].size(); ++x) {
                for (std::size_t y = x + 1; y < bundles_[r].size(); ++y) {
                    bundle_pairs_.back().push_back(pair_index(bundles_[r][x], bundles_[r][y]));
                }
            }
        }
    }

    [[nodiscard]] int goods() const noexcept { return goods_; }
    /// Number of bundles including the outside option: 2^J.
    [[nodiscard]] int size() const noexcept { return static_cast<int>(bundles_.size()); }
    /// Number of inside options R = 2^J - 1.
    [[nodiscard]] int inside() const noexcept { return size() - 1; }
    [[nodiscard]] int pair_count() const noexcept { return static_cast<int>(pairs_.size()); }

    [[nodiscard]] const Bundle& bundle(int r) const { return bundles_.at(static_cast<std::size_t>(r)); }
    [[nodiscard]] const std::vector<Bundle>& bundles() const noexcept { return bundles_; }
    [[nodiscard]] const std::vector<std::pair<int, int>>& pairs() const noexcept { return pairs_; }
    /// Indices into pairs() of every good pair inside bundle r.
    [[nodiscard]] const std::vector<int>& pairs_in(int r) const { return bundle_pairs_.at(static_cast<std::size_t>(r)); }

    [[nodiscard]] bool contains(int r, int good) const noexcept {
        return contains_[static_cast<std::size_t>(r) * static_cast<std::size_t>(goods_) + static_cast<std::size_t>(good)] != 0;
    }

    [[nodiscard]] int pair_index(int a, int b) const {
        if (a > b) std::swap(a, b);
        if (a < 0 || b >= goods_ || a == b) throw ConfigError("invalid good pair");
        return pair_index_[static_cast<std::size_t>(a * goods_ + b)];
    }

    /// Index of a bundle given its member goods (any order, zero-based).
    [[nodiscard]] int index_of(Bundle members) const {
        std::sort(members.begin(), members.end());
        const auto it = std::find(bundles_.begin(), bundles_.end(), members);
        if (it == bundles_.end()) throw DataError("bundle is not in the choice set");
        return static_cast<int>(it - bundles_.begin());
    }

    /// "1+3" style label with one-based goods; empty string for the outside option.
    [[nodiscard]] std::string label(int r) const {
        std::string out;
        for (int j : bundle(r)) {
            if (!out.empty()) out += '+';
            out += std::to_string(j + 1);
        }
        return out;
    }

    [[nodiscard]] int parse_label(const std::string& text) const {
        Bundle members;
        std::size_t start = 0;
        while (start < text.size()) {
            const auto end = text.find('+', start);
            const std::string token = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
            int good = 0;
            try {
                std::size_t used = 0;
                good = std::stoi(token, &used);
                if (used != token.size()) throw std::invalid_argument(token);
            } catch (const std::exception&) {
                throw DataError("invalid bundle label '" + text + "'");
            }
            if (good < 1 || good > goods_) throw DataError("bundle label '" + text + "' names an unknown good");
            members.push_back(good - 1);
            if (end == std::string::npos) break;
            start = end + 1;
        }
        std::sort(members.begin(), members.end());
        if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
            throw DataError("bundle label '" + text + "' repeats a good");
        }
        return index_of(members);
    }

private:
    void append_combinations(int size) {
        Bundle current(static_cast<std::size_t>(size));
        for (int k = 0; k < size; ++k) current[static_cast<std::size_t>(k)] = k;
        for (;;) {
            bundles_.push_back(current);
            int k = size - 1;
            while (k >= 0 && current[static_cast<std::size_t>(k)] == goods_ - size + k) --k;
            if (k < 0) return;
            ++current[static_cast<std::size_t>(k)];
            for (int m = k + 1; m < size; ++m) current[static_cast<std::size_t>(m)] = current[static_cast<std::size_t>(m - 1)] + 1;
        }
    }

    int goods_;
    std::vector<Bundle> bundles_;
    std::vector<std::pair<int, int>> pairs_;
    std::vector<int> pair_index_;
    std::vector<char> contains_;
    std::vector<std::vector<int>> bundle_pairs_;
};

inline ChoiceSet enumerate_choice_set(int goods) { return ChoiceSet(goods); }

/// R x J incidence of goods in inside bundles (row r-1 is bundle r).
inline Eigen::MatrixXd membership_matrix(const ChoiceSet& cs) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cs.inside(), cs.goods());
    for (int r = 1; r < cs.size(); ++r) {
        for (int j : cs.bundle(r)) m(r - 1, j) = 1.0;
    }
    return m;
}

/// R x P incidence of good pairs in inside bundles.
inline Eigen::MatrixXd pair_membership_matrix(const ChoiceSet& cs) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cs.inside(), cs.pair_count());
    for (int r = 1; r < cs.size(); ++r) {
        for (int q : cs.pairs_in(r)) m(r - 1, q) = 1.0;
    }
    return m;
}

/// Index of the largest utility; ties go to the lowest index.
inline int argmax_choice(std::span<const double> utilities) {
    if (utilities.empty()) throw NumericError("argmax over an empty utility vector");
    int best = 0;
    for (std::size_t r = 0; r < utilities.size(); ++r) {
        if (std::isnan(utilities[r])) throw NumericError("argmax: utility vector contains NaN");
        if (utilities[r] > utilities[static_cast<std::size_t>(best)]) best = static_cast<int>(r);
    }
    return best;
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_CHOICE_SET_HPP
