#ifndef BUNDLECHOICE_PANEL_CSV_HPP
#define BUNDLECHOICE_PANEL_CSV_HPP

#include "choice_set.hpp"
#include "error.hpp"
#include "io_util.hpp"
#include "panel.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bundlechoice {

/// Long-format panel CSV: one row per (individual, period) with columns
/// i, t, choice, p_<j>, z_<j>_<k>, w_<j1>_<j2>_<k>, zp_<j>_<k>. The choice is
/// the sorted one-based good list joined by '+', empty for the outside option.
inline std::vector<std::string> panel_columns(const PanelShape& s) {
    std::vector<std::string> cols{"i", "t", "choice"};
    for (int k = 0; k < s.priced; ++k) cols.push_back("p_" + std::to_string(k + 1));
    for (int j = 0; j < s.goods; ++j) {
        for (int c = 0; c < s.z_dims[static_cast<std::size_t>(j)]; ++c) {
            cols.push_back("z_" + std::to_string(j + 1) + "_" + std::to_string(c + 1));
        }
    }
    const ChoiceSet cs(s.goods);
    for (int q = 0; q < s.pair_count(); ++q) {
        const auto [a, b] = cs.pairs()[static_cast<std::size_t>(q)];
        for (int c = 0; c < s.w_dims[static_cast<std::size_t>(q)]; ++c) {
            cols.push_back("w_" + std::to_string(a + 1) + "_" + std::to_string(b + 1) + "_" + std::to_string(c + 1));
        }
    }
    for (int k = 0; k < static_cast<int>(s.zp_dims.size()); ++k) {
        for (int c = 0; c < s.zp_dims[static_cast<std::size_t>(k)]; ++c) {
            cols.push_back("zp_" + std::to_string(k + 1) + "_" + std::to_string(c + 1));
        }
    }
    return cols;
}

inline std::string write_panel_csv(const PanelData& data) {
    const auto cols = panel_columns(data.shape());
    const ChoiceSet cs(data.goods());
    std::string out;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (c > 0) out += ',';
        out += cols[c];
    }
    out += '\n';
    for (std::size_t o = 0; o < data.observations(); ++o) {
        out += std::to_string(data.individual_id(data.individual(o)));
        out += ',';
        out += std::to_string(data.period_label(data.period(o)));
        out += ',';
        out += cs.label(data.choice(o));
        auto put = [&](std::span<const double> v) {
            for (double x : v) {
                out += ',';
                out += format_double(x);
            }
        };
        put(data.prices(o));
        for (int j = 0; j < data.goods(); ++j) put(data.z(o, j));
        for (int q = 0; q < data.shape().pair_count(); ++q) put(data.w(o, q));
        for (int k = 0; k < static_cast<int>(data.shape().zp_dims.size()); ++k) put(data.zp(o, k));
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    for (auto& f : out) {
        if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
    }
    return out;
}

// Parses "<prefix><a>_<b>..." into its integer parts; empty on mismatch.
inline std::vector<int> column_indices(std::string_view name, std::string_view prefix, std::size_t parts) {
    if (name.substr(0, prefix.size()) != prefix) return {};
    name.remove_prefix(prefix.size());
    std::vector<int> out;
    while (!name.empty()) {
        const auto pos = name.find('_');
        const auto token = name.substr(0, pos);
        std::int64_t v = 0;
        if (!parse_int64(token, v) || v < 1 || v > 1000000) return {};
        out.push_back(static_cast<int>(v));
        if (pos == std::string_view::npos) break;
        name.remove_prefix(pos + 1);
    }
    if (out.size() != parts) return {};
    return out;
}

} // namespace detail

/// Parses a panel CSV. `goods` overrides the number of goods inferred from
/// the column names.
inline PanelData read_panel_csv(std::string_view text, std::optional<int> goods = std::nullopt,
                                const std::string& source = "panel") {
    auto fail = [&](std::size_t line, const std::string& msg) -> DataError {
        return DataError(source + ":" + std::to_string(line) + ": " + msg);
    };
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start < text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            auto line = text.substr(start, end - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            start = end + 1;
        }
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw fail(1, "empty file: a header row is required");
    if (lines[0].size() >= 3 && static_cast<unsigned char>(lines[0][0]) == 0xEF) lines[0].remove_prefix(3);  // BOM
    const auto header = detail::split_csv_line(lines[0]);

    enum class Kind { id, period, choice, price, z, w, zp };
    struct Col {
        Kind kind;
        std::vector<int> idx;
    };
    std::vector<Col> cols;
    std::map<std::string, int> seen;
    int max_good = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name(header[c]);
        if (!seen.emplace(name, static_cast<int>(c)).second) throw fail(1, "duplicate column '" + name + "'");
        Col col{};
        if (name == "i") {
            col.kind = Kind::id;
        } else if (name == "t") {
            col.kind = Kind::period;
        } else if (name == "choice") {
            col.kind = Kind::choice;
        } else if (auto v = detail::column_indices(name, "zp_", 2); !v.empty()) {
            col = {Kind::zp, v};
        } else if (auto v2 = detail::column_indices(name, "p_", 1); !v2.empty()) {
            col = {Kind::price, v2};
            max_good = std::max(max_good, v2[0]);
        } else if (auto v3 = detail::column_indices(name, "z_", 2); !v3.empty()) {
            col = {Kind::z, v3};
            max_good = std::max(max_good, v3[0]);
        } else if (auto v4 = detail::column_indices(name, "w_", 3); !v4.empty()) {
            col = {Kind::w, v4};
            if (v4[0] >= v4[1]) throw fail(1, "bundle column '" + name + "' must name goods in increasing order");
            max_good = std::max(max_good, v4[1]);
        } else {
            throw fail(1, "unknown column '" + name + "'");
        }
        cols.push_back(col);
    }
    for (const char* req : {"i", "t", "choice"}) {
        if (!seen.contains(req)) throw fail(1, std::string("missing required column '") + req + "'");
    }
    const int J = goods.value_or(max_good);
    if (J < 1 || J > kMaxGoods) throw fail(1, "number of goods must be in [1, 7] (got " + std::to_string(J) + ")");
    if (max_good > J) throw fail(1, "columns reference good " + std::to_string(max_good) + " but goods = " + std::to_string(J));
    const ChoiceSet cs(J);

    // Block dimensions, requiring contiguous covariate numbering from 1.
    PanelShape shape;
    shape.goods = J;
    std::vector<std::vector<int>> zk(static_cast<std::size_t>(J)), wk(static_cast<std::size_t>(cs.pair_count())), zpk;
    std::vector<int> prices;
    for (const auto& c : cols) {
        switch (c.kind) {
            case Kind::price: prices.push_back(c.idx[0]); break;
            case Kind::z: zk[static_cast<std::size_t>(c.idx[0] - 1)].push_back(c.idx[1]); break;
            case Kind::w: wk[static_cast<std::size_t>(cs.pair_index(c.idx[0] - 1, c.idx[1] - 1))].push_back(c.idx[2]); break;
            case Kind::zp:
                if (static_cast<int>(zpk.size()) < c.idx[0]) zpk.resize(static_cast<std::size_t>(c.idx[0]));
                zpk[static_cast<std::size_t>(c.idx[0] - 1)].push_back(c.idx[1]);
                break;
            default: break;
        }
    }
    auto contiguous = [&](std::vector<int> v, const std::string& what) {
        std::sort(v.begin(), v.end());
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (v[k] != static_cast<int>(k) + 1) throw fail(1, what + " columns must be numbered 1..n without gaps");
        }
        return static_cast<int>(v.size());
    };
    shape.priced = contiguous(prices, "price");
    for (int j = 0; j < J; ++j) shape.z_dims.push_back(contiguous(zk[static_cast<std::size_t>(j)], "z_" + std::to_string(j + 1)));
    for (int q = 0; q < cs.pair_count(); ++q) shape.w_dims.push_back(contiguous(wk[static_cast<std::size_t>(q)], "w pair"));
    if (!zpk.empty()) {
        if (static_cast<int>(zpk.size()) != shape.priced) throw fail(1, "instrument columns zp_<j>_* must exist for every priced good");
        for (std::size_t k = 0; k < zpk.size(); ++k) {
            if (zpk[k].empty()) throw fail(1, "instrument columns missing for good " + std::to_string(k + 1));
            shape.zp_dims.push_back(contiguous(zpk[k], "zp_" + std::to_string(k + 1)));
        }
    }

    std::vector<ObservationRow> rows;
    rows.reserve(lines.size() - 1);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto fields = detail::split_csv_line(lines[ln]);
        if (fields.size() != header.size()) {
            throw fail(ln + 1, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        ObservationRow row;
        row.prices.assign(static_cast<std::size_t>(shape.priced), 0.0);
        for (int j = 0; j < J; ++j) row.z.emplace_back(static_cast<std::size_t>(shape.z_dims[static_cast<std::size_t>(j)]), 0.0);
        for (int q = 0; q < cs.pair_count(); ++q) row.w.emplace_back(static_cast<std::size_t>(shape.w_dims[static_cast<std::size_t>(q)]), 0.0);
        for (int d : shape.zp_dims) row.zp.emplace_back(static_cast<std::size_t>(d), 0.0);
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto& col = cols[c];
            const auto f = fields[c];
            if (col.kind == Kind::id || col.kind == Kind::period) {
                std::int64_t v = 0;
                if (!parse_int64(f, v)) throw fail(ln + 1, "column '" + std::string(header[c]) + "': not an integer: '" + std::string(f) + "'");
                (col.kind == Kind::id ? row.individual : row.period) = v;
                continue;
            }
            if (col.kind == Kind::choice) {
                try {
                    row.choice = cs.parse_label(std::string(f));
                } catch (const DataError& e) {
                    throw fail(ln + 1, e.what());
                }
                continue;
            }
            double v = 0.0;
            if (!parse_double(f, v) || !std::isfinite(v)) {
                throw fail(ln + 1, "column '" + std::string(header[c]) + "': not a finite number: '" + std::string(f) + "'");
            }
            switch (col.kind) {
                case Kind::price: row.prices[static_cast<std::size_t>(col.idx[0] - 1)] = v; break;
                case Kind::z: row.z[static_cast<std::size_t>(col.idx[0] - 1)][static_cast<std::size_t>(col.idx[1] - 1)] = v; break;
                case Kind::w:
                    row.w[static_cast<std::size_t>(cs.pair_index(col.idx[0] - 1, col.idx[1] - 1))][static_cast<std::size_t>(col.idx[2] - 1)] = v;
                    break;
                case Kind::zp: row.zp[static_cast<std::size_t>(col.idx[0] - 1)][static_cast<std::size_t>(col.idx[1] - 1)] = v; break;
                default: break;
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw fail(1, "no observations");
    return PanelData(std::move(shape), std::move(rows));
}

inline PanelData read_panel_csv_file(const std::filesystem::path& path, std::optional<int> goods = std::nullopt) {
    return read_panel_csv(read_file(path), goods, path.string());
}

/// Content hash of a panel (over its canonical CSV form).
inline std::string panel_hash(const PanelData& data) { return hash_text(write_panel_csv(data)); }

} // namespace bundlechoice

#endif // BUNDLECHOICE_PANEL_CSV_HPP
