#ifndef BUNDLECHOICE_CONFIG_HPP
#define BUNDLECHOICE_CONFIG_HPP

#include "dgp.hpp"
#include "error.hpp"
#include "io_util.hpp"
#include "model_spec.hpp"
#include "predict.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bundlechoice {

using Json = nlohmann::json;

namespace detail {

/// Reads the members of one JSON object, remembering which keys were used so
/// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_{j}, path_{std::move(path)} {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    [[nodiscard]] bool has(const std::string& key) {
        used_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    [[nodiscard]] std::string at(const std::string& key) const { return path_ + "." + key; }

    [[nodiscard]] const Json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        out = convert<T>(j_.at(key), at(key));
    }

    template <class T>
    [[nodiscard]] T required(const std::string& key) {
        if (!has(key)) throw ConfigError(at(key) + ": required key is missing");
        return convert<T>(j_.at(key), at(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!used_.contains(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
        }
    }

    template <class T>
    static T convert(const Json& v, const std::string& where) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
                const auto s = v.get<std::int64_t>();
                if (s < 0) throw ConfigError(where + ": expected a nonnegative integer");
                return static_cast<T>(s);
            } else {
                const auto s = v.get<std::int64_t>();
                if (s < std::numeric_limits<T>::min() || s > std::numeric_limits<T>::max()) {
                    throw ConfigError(where + ": integer out of range");
                }
                return static_cast<T>(s);
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(where + ": expected a number");
            return v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(where + ": expected a string");
            return v.get<std::string>();
        } else {
            // std::vector<U>
            if (!v.is_array()) throw ConfigError(where + ": expected an array");
            T out;
            for (std::size_t k = 0; k < v.size(); ++k) {
                out.push_back(convert<typename T::value_type>(v[k], where + "[" + std::to_string(k) + "]"));
            }
            return out;
        }
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline ErrorStructure parse_structure(const std::string& s, const std::string& where) {
    if (s == "RE") return ErrorStructure::random_effects;
    if (s == "FA") return ErrorStructure::factor;
    if (s == "TVFA" || s == "TV-FA") return ErrorStructure::time_varying_factor;
    throw ConfigError(where + ": structure must be RE, FA or TVFA (got '" + s + "')");
}

} // namespace detail

// ---------------------------------------------------------------- model spec

inline McmcSettings mcmc_from_json(const Json& j, McmcSettings m = {}, const std::string& path = "mcmc") {
    detail::ObjectReader r(j, path);
    r.get("burn_in", m.burn_in);
    r.get("draws", m.draws);
    r.get("thin", m.thin);
    r.get("seed", m.seed);
    r.get("store_factors", m.store_factors);
    r.finish();
    return m;
}

inline Json to_json(const McmcSettings& m) {
    return Json{{"burn_in", m.burn_in}, {"draws", m.draws}, {"thin", m.thin}, {"seed", m.seed}, {"store_factors", m.store_factors}};
}

inline ModelSpec model_from_json(const Json& j, const std::string& path = "model") {
    ModelSpec spec;
    detail::ObjectReader r(j, path);
    if (r.has("structure")) spec.structure = detail::parse_structure(r.required<std::string>("structure"), r.at("structure"));
    r.get("endogenous", spec.endogenous);
    r.get("factors", spec.factors);
    if (r.has("masks")) {
        const auto masks = r.required<std::vector<std::vector<std::vector<int>>>>("masks");
        for (std::size_t b = 0; b < masks.size(); ++b) {
            const auto& m = masks[b];
            const auto where = r.at("masks") + "[" + std::to_string(b) + "]";
            if (m.empty() || m[0].empty()) throw ConfigError(where + ": mask must be a nonempty rows x factors matrix");
            Mask mask(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
            for (std::size_t x = 0; x < m.size(); ++x) {
                if (m[x].size() != m[0].size()) throw ConfigError(where + ": ragged mask rows");
                for (std::size_t y = 0; y < m[x].size(); ++y) {
                    if (m[x][y] != 0 && m[x][y] != 1) throw ConfigError(where + ": mask entries must be 0 or 1");
                    mask(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = m[x][y];
                }
            }
            spec.masks.push_back(mask);
        }
    }
    if (r.has("sharing")) {
        detail::ObjectReader s(r.raw("sharing"), r.at("sharing"));
        s.get("utility", spec.sharing.utility);
        s.get("bundle", spec.sharing.bundle);
        s.get("first_stage", spec.sharing.first_stage);
        s.get("groups", spec.sharing.groups);
        s.finish();
    }
    if (r.has("priors")) {
        detail::ObjectReader p(r.raw("priors"), r.at("priors"));
        auto& pr = spec.priors;
        p.get("theta_mean", pr.theta_mean);
        p.get("theta_variance", pr.theta_variance);
        p.get("loading_variance", pr.loading_variance);
        p.get("gig_p", pr.gig_p);
        p.get("gig_a", pr.gig_a);
        p.get("gig_b", pr.gig_b);
        if (p.has("re_df")) pr.re_df = p.required<double>("re_df");
        p.get("re_scale", pr.re_scale);
        p.finish();
    }
    if (r.has("theta_mode")) {
        const auto m = r.required<std::string>("theta_mode");
        if (m == "conditional") {
            spec.theta_mode = ThetaMode::conditional;
        } else if (m == "marginalized") {
            spec.theta_mode = ThetaMode::marginalized;
        } else {
            throw ConfigError(r.at("theta_mode") + ": expected 'conditional' or 'marginalized'");
        }
    }
    r.get("marginal_block_cap", spec.marginal_block_cap);
    r.get("sign_switch", spec.sign_switch);
    r.get("boost", spec.boost);
    if (r.has("mcmc")) spec.mcmc = mcmc_from_json(r.raw("mcmc"), spec.mcmc, r.at("mcmc"));
    r.finish();
    return spec;
}

inline Json to_json(const ModelSpec& s) {
    Json masks = Json::array();
    for (const auto& m : s.masks) {
        Json rows = Json::array();
        for (Eigen::Index x = 0; x < m.rows(); ++x) {
            Json row = Json::array();
            for (Eigen::Index y = 0; y < m.cols(); ++y) row.push_back(m(x, y));
            rows.push_back(row);
        }
        masks.push_back(rows);
    }
    Json priors{{"theta_mean", s.priors.theta_mean},
                {"theta_variance", s.priors.theta_variance},
                {"loading_variance", s.priors.loading_variance},
                {"gig_p", s.priors.gig_p},
                {"gig_a", s.priors.gig_a},
                {"gig_b", s.priors.gig_b},
                {"re_scale", s.priors.re_scale}};
    if (s.priors.re_df) priors["re_df"] = *s.priors.re_df;
    return Json{{"structure", to_string(s.structure)},
                {"endogenous", s.endogenous},
                {"factors", s.factors},
                {"masks", masks},
                {"sharing",
                 {{"utility", s.sharing.utility},
                  {"bundle", s.sharing.bundle},
                  {"first_stage", s.sharing.first_stage},
                  {"groups", s.sharing.groups}}},
                {"priors", priors},
                {"theta_mode", s.theta_mode == ThetaMode::conditional ? "conditional" : "marginalized"},
                {"marginal_block_cap", s.marginal_block_cap},
                {"sign_switch", s.sign_switch},
                {"boost", s.boost},
                {"mcmc", to_json(s.mcmc)}};
}

/// Hash of everything that determines the chain's target and its random
/// numbers; the run length is excluded so that a chain can be extended.
inline std::string model_hash(const ModelSpec& s) {
    Json j = to_json(s);
    j["mcmc"].erase("burn_in");
    j["mcmc"].erase("draws");
    j["mcmc"].erase("thin");
    j["mcmc"].erase("store_factors");
    return hash_text(j.dump());
}

/// Hash of the full spec including run lengths.
inline std::string spec_hash(const ModelSpec& s) { return hash_text(to_json(s).dump()); }

// ----------------------------------------------------------------------- dgp

inline DgpConfig dgp_from_json(const Json& j, const std::string& path = "dgp") {
    detail::ObjectReader r(j, path);
    int goods = 3;
    int priced = -1;
    r.get("goods", goods);
    r.get("priced", priced);
    if (goods < 1 || goods > kMaxGoods) throw ConfigError(r.at("goods") + ": must be in [1, 7]");
    if (priced > goods) throw ConfigError(r.at("priced") + ": cannot exceed goods");
    DgpConfig c = DgpConfig::for_goods(goods, priced);
    r.get("individuals", c.individuals);
    r.get("periods", c.periods);
    r.get("alpha", c.alpha);
    r.get("beta", c.beta);
    r.get("gamma_common", c.gamma_common);
    r.get("gamma_pair", c.gamma_pair);
    r.get("theta_p", c.theta_p);
    r.get("fixed_loading", c.fixed_loading);
    r.get("random_factors", c.random_factors);
    r.get("time_varying", c.time_varying);
    r.get("loading_scale", c.loading_scale);
    r.get("x1_mean", c.x1_mean);
    r.get("x1_var", c.x1_var);
    r.get("x2_mean", c.x2_mean);
    r.get("x2_var", c.x2_var);
    r.get("market_price_mean", c.market_price_mean);
    r.get("market_price_var", c.market_price_var);
    r.get("family_size_max", c.family_size_max);
    r.get("seed", c.seed);
    r.get("trial", c.trial);
    r.finish();
    c.validate();
    return c;
}

inline Json to_json(const DgpConfig& c) {
    return Json{{"individuals", c.individuals},
                {"periods", c.periods},
                {"goods", c.goods},
                {"priced", c.priced},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"gamma_common", c.gamma_common},
                {"gamma_pair", c.gamma_pair},
                {"theta_p", c.theta_p},
                {"fixed_loading", c.fixed_loading},
                {"random_factors", c.random_factors},
                {"time_varying", c.time_varying},
                {"loading_scale", c.loading_scale},
                {"x1_mean", c.x1_mean},
                {"x1_var", c.x1_var},
                {"x2_mean", c.x2_mean},
                {"x2_var", c.x2_var},
                {"market_price_mean", c.market_price_mean},
                {"market_price_var", c.market_price_var},
                {"family_size_max", c.family_size_max},
                {"seed", c.seed},
                {"trial", c.trial}};
}

// ------------------------------------------------------------------ predict

inline Scenario scenario_from_json(const Json& j, const std::string& path) {
    Scenario sc;
    detail::ObjectReader r(j, path);
    sc.label = r.required<std::string>("label");
    r.get("price_multipliers", sc.price_multipliers);
    if (r.has("overrides")) {
        const Json& arr = r.raw("overrides");
        if (!arr.is_array()) throw ConfigError(r.at("overrides") + ": expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            detail::ObjectReader o(arr[k], r.at("overrides") + "[" + std::to_string(k) + "]");
            CovariateOverride ov;
            ov.column = o.required<std::string>("column");
            const auto op = o.has("op") ? o.required<std::string>("op") : std::string("set");
            if (op == "set") {
                ov.op = CovariateOverride::Op::set;
            } else if (op == "scale") {
                ov.op = CovariateOverride::Op::scale;
            } else if (op == "add") {
                ov.op = CovariateOverride::Op::add;
            } else {
                throw ConfigError(o.at("op") + ": expected set, scale or add");
            }
            ov.value = o.required<double>("value");
            o.finish();
            sc.overrides.push_back(ov);
        }
    }
    r.finish();
    for (double m : sc.price_multipliers) {
        if (!(m > 0.0)) throw ConfigError(path + ".price_multipliers: multipliers must be positive");
    }
    return sc;
}

struct PredictSettings {
    PredictOptions options;
    std::size_t max_draws = 200;
    bool elasticities = true;
    std::vector<Scenario> scenarios;
};

inline PredictSettings predict_from_json(const Json& j, const std::string& path = "predict") {
    PredictSettings s;
    detail::ObjectReader r(j, path);
    r.get("seed", s.options.seed);
    r.get("common_random_numbers", s.options.common_random_numbers);
    r.get("step", s.options.step);
    r.get("max_draws", s.max_draws);
    r.get("elasticities", s.elasticities);
    if (r.has("scenarios")) {
        const Json& arr = r.raw("scenarios");
        if (!arr.is_array()) throw ConfigError(r.at("scenarios") + ": expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            s.scenarios.push_back(scenario_from_json(arr[k], r.at("scenarios") + "[" + std::to_string(k) + "]"));
        }
    }
    r.finish();
    if (!(s.options.step > 0.0 && s.options.step < 1.0)) throw ConfigError(path + ".step: must lie in (0, 1)");
    if (s.max_draws < 1) throw ConfigError(path + ".max_draws: must be positive");
    return s;
}

// -------------------------------------------------------------------- study

struct StudyModel {
    std::string name;
    ModelSpec spec;
};

struct StudySettings {
    std::size_t trials = 10;
    std::vector<std::size_t> sizes{500};
    std::vector<StudyModel> models;
    std::size_t truth_reps = 20;
    std::size_t max_draws = 200;
    PredictOptions predict;
    std::uint64_t seed = 1;
};

inline StudySettings study_from_json(const Json& j, const std::string& path = "study") {
    StudySettings s;
    detail::ObjectReader r(j, path);
    r.get("trials", s.trials);
    r.get("sizes", s.sizes);
    r.get("truth_reps", s.truth_reps);
    r.get("max_draws", s.max_draws);
    r.get("seed", s.seed);
    std::optional<McmcSettings> shared_mcmc;
    if (r.has("mcmc")) shared_mcmc = mcmc_from_json(r.raw("mcmc"), McmcSettings{}, r.at("mcmc"));
    if (r.has("predict")) {
        detail::ObjectReader p(r.raw("predict"), r.at("predict"));
        p.get("common_random_numbers", s.predict.common_random_numbers);
        p.get("step", s.predict.step);
        p.finish();
    }
    const Json& arr = r.raw("models");
    if (!arr.is_array() || arr.empty()) throw ConfigError(r.at("models") + ": expected a nonempty array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const auto where = r.at("models") + "[" + std::to_string(k) + "]";
        detail::ObjectReader m(arr[k], where);
        StudyModel sm;
        sm.name = m.required<std::string>("name");
        sm.spec = model_from_json(m.raw("model"), m.at("model"));
        if (shared_mcmc && !arr[k]["model"].contains("mcmc")) sm.spec.mcmc = *shared_mcmc;
        m.finish();
        s.models.push_back(std::move(sm));
    }
    r.finish();
    if (s.trials < 1) throw ConfigError(path + ".trials: must be positive");
    if (s.sizes.empty()) throw ConfigError(path + ".sizes: must be nonempty");
    for (auto n : s.sizes) {
        if (n < 1) throw ConfigError(path + ".sizes: sizes must be positive");
    }
    if (s.truth_reps < 1 || s.max_draws < 1) throw ConfigError(path + ": truth_reps and max_draws must be positive");
    return s;
}

// --------------------------------------------------------------- run config

/// The declarative document every subcommand reads. Relative paths are
/// resolved against the directory of the config file.
struct RunConfig {
    std::filesystem::path base_dir;
    std::optional<std::filesystem::path> data;
    std::optional<int> goods;
    std::optional<std::filesystem::path> chain;
    std::optional<std::filesystem::path> resume;
    std::optional<std::filesystem::path> out;
    std::optional<int> threads;
    std::optional<ModelSpec> model;
    std::optional<DgpConfig> dgp;
    std::optional<PredictSettings> predict;
    std::optional<StudySettings> study;
    std::uint64_t seed = 1;
    bool seed_given = false;
    Json document;  // the parsed input, for hashing

    [[nodiscard]] std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : base_dir / p;
    }
};

inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    c.base_dir = base_dir;
    c.document = j;
    detail::ObjectReader r(j, "config");
    if (r.has("data")) c.data = r.required<std::string>("data");
    if (r.has("goods")) c.goods = r.required<int>("goods");
    if (r.has("chain")) c.chain = r.required<std::string>("chain");
    if (r.has("resume")) c.resume = r.required<std::string>("resume");
    if (r.has("out")) c.out = r.required<std::string>("out");
    if (r.has("threads")) {
        c.threads = r.required<int>("threads");
        if (*c.threads < 0) throw ConfigError("config.threads: must be nonnegative (0 means all cores)");
    }
    if (r.has("seed")) {
        c.seed = r.required<std::uint64_t>("seed");
        c.seed_given = true;
    }
    if (r.has("model")) c.model = model_from_json(r.raw("model"), "config.model");
    if (r.has("dgp")) c.dgp = dgp_from_json(r.raw("dgp"), "config.dgp");
    if (r.has("predict")) c.predict = predict_from_json(r.raw("predict"), "config.predict");
    if (r.has("study")) c.study = study_from_json(r.raw("study"), "config.study");
    r.finish();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_CONFIG_HPP
