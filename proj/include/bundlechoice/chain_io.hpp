#ifndef BUNDLECHOICE_CHAIN_IO_HPP
#define BUNDLECHOICE_CHAIN_IO_HPP

#include "chain.hpp"
#include "config.hpp"
#include "error.hpp"
#include "io_util.hpp"
#include "sampler.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace bundlechoice {

// Binary layout shared by chain and state files:
//   magic line, one JSON header line, then float64 little-endian matrices,
//   row-major, in the order the header lists them under "blocks".

namespace detail {

inline void append_doubles(std::string& out, const double* v, std::size_t n) {
    const auto start = out.size();
    out.resize(start + n * sizeof(double));
    char* dst = out.data() + start;
    for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v[k]);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        std::memcpy(dst + k * sizeof(double), &bits, sizeof bits);
    }
}

template <class M>
void append_matrix(std::string& out, const M& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    append_doubles(out, rm.data(), static_cast<std::size_t>(rm.size()));
}

class BodyReader {
public:
    BodyReader(std::string_view body, std::string source) : body_{body}, source_{std::move(source)} {}

    template <class M>
    void read(M& m, Eigen::Index rows, Eigen::Index cols) {
        const auto n = static_cast<std::size_t>(rows * cols);
        if (pos_ + n * sizeof(double) > body_.size()) throw DataError(source_ + ": truncated body");
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
        for (std::size_t k = 0; k < n; ++k) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, body_.data() + pos_ + k * sizeof(double), sizeof bits);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            rm.data()[k] = std::bit_cast<double>(bits);
        }
        pos_ += n * sizeof(double);
        m = rm;
    }

    void finish() const {
        if (pos_ != body_.size()) throw DataError(source_ + ": trailing bytes after the body");
    }

private:
    std::string_view body_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::pair<Json, std::string_view> split_container(std::string_view text, std::string_view magic, const std::string& source) {
    if (text.substr(0, magic.size()) != magic) throw DataError(source + ": not a " + std::string(magic.substr(0, magic.size() - 1)) + " file");
    text.remove_prefix(magic.size());
    const auto nl = text.find('\n');
    if (nl == std::string_view::npos) throw DataError(source + ": missing header line");
    Json header;
    try {
        header = Json::parse(text.substr(0, nl));
    } catch (const Json::exception& e) {
        throw DataError(source + ": malformed header: " + e.what());
    }
    return {header, text.substr(nl + 1)};
}

template <class T>
T header_value(const Json& h, const char* key, const std::string& source) {
    try {
        return h.at(key).get<T>();
    } catch (const Json::exception&) {
        throw DataError(source + ": header field '" + key + "' is missing or has the wrong type");
    }
}

inline Json masks_to_json(const std::vector<Mask>& masks) {
    Json out = Json::array();
    for (const auto& m : masks) {
        Json rows = Json::array();
        for (Eigen::Index x = 0; x < m.rows(); ++x) {
            Json row = Json::array();
            for (Eigen::Index y = 0; y < m.cols(); ++y) row.push_back(m(x, y));
            rows.push_back(row);
        }
        out.push_back(rows);
    }
    return out;
}

inline std::vector<Mask> masks_from_json(const Json& j) {
    std::vector<Mask> out;
    for (const auto& rows : j) {
        const auto r = static_cast<Eigen::Index>(rows.size());
        const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
        Mask m(r, c);
        for (Eigen::Index x = 0; x < r; ++x) {
            for (Eigen::Index y = 0; y < c; ++y) m(x, y) = rows[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)].get<int>();
        }
        out.push_back(m);
    }
    return out;
}

} // namespace detail

inline constexpr std::string_view kChainMagic = "BCCHAIN1\n";
inline constexpr std::string_view kStateMagic = "BCSTATE1\n";

/// A chain together with the model spec that produced it.
struct StoredChain {
    PosteriorChain chain;
    ModelSpec spec;
};

inline std::string serialize_chain(const StoredChain& s) {
    const auto& c = s.chain;
    const auto& info = c.info;
    Json h{{"format", 1},
           {"structure", to_string(info.structure)},
           {"endogenous", info.endogenous},
           {"goods", info.goods},
           {"first_stage_rows", info.first_stage_rows},
           {"factors", info.factors},
           {"periods", info.periods},
           {"individuals", info.individuals},
           {"masks", detail::masks_to_json(info.masks)},
           {"seed", info.seed},
           {"burn_in", info.burn_in},
           {"draws", info.draws},
           {"thin", info.thin},
           {"spec_hash", info.spec_hash},
           {"data_hash", info.data_hash},
           {"theta_names", info.theta_names},
           {"loading_names", info.loading_names},
           {"sweeps", c.sweeps},
           {"spec", to_json(s.spec)},
           {"blocks",
            {{{"name", "theta"}, {"rows", c.theta.rows()}, {"cols", c.theta.cols()}},
             {{"name", "loadings"}, {"rows", c.loadings.rows()}, {"cols", c.loadings.cols()}},
             {{"name", "factors"}, {"rows", c.factors.rows()}, {"cols", c.factors.cols()}}}}};
    std::string out(kChainMagic);
    out += h.dump();
    out += '\n';
    detail::append_matrix(out, c.theta);
    detail::append_matrix(out, c.loadings);
    detail::append_matrix(out, c.factors);
    return out;
}

namespace detail {

inline StoredChain deserialize_chain_unchecked(std::string_view text, const std::string& source) {
    const auto [h, body] = detail::split_container(text, kChainMagic, source);
    StoredChain s;
    auto& info = s.chain.info;
    using detail::header_value;
    if (header_value<int>(h, "format", source) != 1) throw DataError(source + ": unsupported chain format version");
    info.structure = detail::parse_structure(header_value<std::string>(h, "structure", source), source);
    info.endogenous = header_value<bool>(h, "endogenous", source);
    info.goods = header_value<int>(h, "goods", source);
    info.first_stage_rows = header_value<int>(h, "first_stage_rows", source);
    info.factors = header_value<int>(h, "factors", source);
    info.periods = header_value<int>(h, "periods", source);
    info.individuals = header_value<std::size_t>(h, "individuals", source);
    try {
        info.masks = detail::masks_from_json(h.at("masks"));
    } catch (const Json::exception&) {
        throw DataError(source + ": malformed masks");
    }
    info.seed = header_value<std::uint64_t>(h, "seed", source);
    info.burn_in = header_value<int>(h, "burn_in", source);
    info.draws = header_value<int>(h, "draws", source);
    info.thin = header_value<int>(h, "thin", source);
    info.spec_hash = header_value<std::string>(h, "spec_hash", source);
    info.data_hash = header_value<std::string>(h, "data_hash", source);
    info.theta_names = header_value<std::vector<std::string>>(h, "theta_names", source);
    info.loading_names = header_value<std::vector<std::string>>(h, "loading_names", source);
    s.chain.sweeps = header_value<std::vector<std::uint64_t>>(h, "sweeps", source);
    try {
        s.spec = model_from_json(h.at("spec"), source + ":spec");
    } catch (const ConfigError& e) {
        throw DataError(e.what());
    } catch (const Json::exception&) {
        throw DataError(source + ": header lacks the model spec");
    }
    detail::BodyReader reader(body, source);
    const auto& blocks = h.at("blocks");
    if (!blocks.is_array() || blocks.size() != 3) throw DataError(source + ": expected three body blocks");
    Eigen::MatrixXd* targets[3] = {&s.chain.theta, &s.chain.loadings, &s.chain.factors};
    for (std::size_t b = 0; b < 3; ++b) {
        const auto rows = header_value<Eigen::Index>(blocks[b], "rows", source);
        const auto cols = header_value<Eigen::Index>(blocks[b], "cols", source);
        if (rows < 0 || cols < 0) throw DataError(source + ": negative block dimension");
        reader.read(*targets[b], rows, cols);
    }
    reader.finish();
    const auto n = s.chain.theta.rows();
    if (s.chain.loadings.rows() != n || static_cast<Eigen::Index>(s.chain.sweeps.size()) != n ||
        (s.chain.factors.cols() > 0 && s.chain.factors.rows() != n)) {
        throw DataError(source + ": block row counts disagree");
    }
    if (static_cast<Eigen::Index>(info.theta_names.size()) != s.chain.theta.cols() ||
        static_cast<Eigen::Index>(info.loading_names.size()) != s.chain.loadings.cols()) {
        throw DataError(source + ": parameter names do not match the stored columns");
    }
    return s;
}

} // namespace detail

inline StoredChain deserialize_chain(std::string_view text, const std::string& source = "chain") {
    try {
        return detail::deserialize_chain_unchecked(text, source);
    } catch (const Json::exception& e) {
        throw DataError(source + ": malformed header: " + e.what());
    }
}

inline void write_chain_file(const std::filesystem::path& path, const StoredChain& s) { write_file(path, serialize_chain(s)); }

inline StoredChain read_chain_file(const std::filesystem::path& path) {
    return deserialize_chain(read_file(path), path.string());
}

// ------------------------------------------------------------------- state

/// Sampler state checkpoint. `model_hash` ties it to the spec and seed.
struct StoredState {
    ParameterState state;
    std::string model_hash;
    std::string data_hash;
};

inline std::string serialize_state(const StoredState& s) {
    const auto& st = s.state;
    Json h{{"format", 1},
           {"sweep", st.sweep},
           {"model_hash", s.model_hash},
           {"data_hash", s.data_hash},
           {"blocks",
            {{{"name", "u"}, {"rows", st.u.rows()}, {"cols", st.u.cols()}},
             {{"name", "theta"}, {"rows", st.theta.size()}, {"cols", 1}},
             {{"name", "lambda"}, {"rows", st.lambda.size()}, {"cols", 1}},
             {{"name", "f"}, {"rows", st.f.rows()}, {"cols", st.f.cols()}},
             {{"name", "sigma"}, {"rows", st.sigma.rows()}, {"cols", st.sigma.cols()}}}}};
    std::string out(kStateMagic);
    out += h.dump();
    out += '\n';
    detail::append_matrix(out, st.u);
    detail::append_matrix(out, Eigen::MatrixXd(st.theta));
    detail::append_matrix(out, Eigen::MatrixXd(st.lambda));
    detail::append_matrix(out, st.f);
    detail::append_matrix(out, st.sigma);
    return out;
}

namespace detail {

inline StoredState deserialize_state_unchecked(std::string_view text, const std::string& source) {
    const auto [h, body] = detail::split_container(text, kStateMagic, source);
    using detail::header_value;
    if (header_value<int>(h, "format", source) != 1) throw DataError(source + ": unsupported state format version");
    StoredState s;
    s.state.sweep = header_value<std::uint64_t>(h, "sweep", source);
    s.model_hash = header_value<std::string>(h, "model_hash", source);
    s.data_hash = header_value<std::string>(h, "data_hash", source);
    const auto& blocks = h.at("blocks");
    if (!blocks.is_array() || blocks.size() != 5) throw DataError(source + ": expected five body blocks");
    auto dims = [&](std::size_t b) {
        return std::pair{header_value<Eigen::Index>(blocks[b], "rows", source), header_value<Eigen::Index>(blocks[b], "cols", source)};
    };
    detail::BodyReader reader(body, source);
    Eigen::MatrixXd tmp;
    auto [ur, uc] = dims(0);
    reader.read(tmp, ur, uc);
    s.state.u = tmp;
    reader.read(tmp, dims(1).first, 1);
    s.state.theta = tmp.col(0);
    reader.read(tmp, dims(2).first, 1);
    s.state.lambda = tmp.rows() > 0 ? Eigen::VectorXd(tmp.col(0)) : Eigen::VectorXd();
    auto [fr, fc] = dims(3);
    reader.read(s.state.f, fr, fc);
    auto [sr, sc] = dims(4);
    reader.read(s.state.sigma, sr, sc);
    reader.finish();
    return s;
}

} // namespace detail

inline StoredState deserialize_state(std::string_view text, const std::string& source = "state") {
    try {
        return detail::deserialize_state_unchecked(text, source);
    } catch (const Json::exception& e) {
        throw DataError(source + ": malformed header: " + e.what());
    }
}

inline void write_state_file(const std::filesystem::path& path, const StoredState& s) { write_file(path, serialize_state(s)); }

inline StoredState read_state_file(const std::filesystem::path& path) {
    return deserialize_state(read_file(path), path.string());
}

// ----------------------------------------------------------------- summary

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "parameter,mean,sd,q2.5,q50,q97.5,split_rhat\n";
    for (const auto& r : rows) {
        if (r.name.find(',') != std::string::npos) {
            out += '"' + r.name + '"';
        } else {
            out += r.name;
        }
        for (double v : {r.mean, r.sd, r.q025, r.q500, r.q975, r.split_rhat}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_CHAIN_IO_HPP
