#ifndef BUNDLECHOICE_MODEL_SPEC_HPP
#define BUNDLECHOICE_MODEL_SPEC_HPP

#include "error.hpp"
#include "layout.hpp"
#include "loadings.hpp"
#include "panel.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bundlechoice {

enum class ThetaMode { conditional, marginalized };

struct Priors {
    double theta_mean = 0.0;       // m_Θ (broadcast)
    double theta_variance = 100.0; // V_Θ = v I
    double loading_variance = 1.0; // σ²_λ
    double gig_p = 1.0;
    double gig_a = 1.0;
    double gig_b = 1.0;
    std::optional<double> re_df;   // default J + J_p + 2
    double re_scale = 1.0;         // S0 = s I

    friend bool operator==(const Priors&, const Priors&) = default;
};

struct McmcSettings {
    int burn_in = 10000;
    int draws = 10000;
    int thin = 1;
    std::uint64_t seed = 1;
    bool store_factors = true;

    friend bool operator==(const McmcSettings&, const McmcSettings&) = default;
};

struct ModelSpec {
    ErrorStructure structure = ErrorStructure::time_varying_factor;
    bool endogenous = true;
    int factors = 0;  // 0: use the guideline value
    std::vector<Mask> masks;
    SharingSpec sharing;
    Priors priors;
    ThetaMode theta_mode = ThetaMode::conditional;
    int marginal_block_cap = 512;
    bool sign_switch = true;
    bool boost = true;
    McmcSettings mcmc;
};

/// Table-style guideline: FA uses ceil((K + 1) / 2) factors for K = J + J_p
/// structural rows, TV-FA two more. RE has no factors.
inline int recommended_factors(ErrorStructure s, int goods, int first_stage_rows) {
    const int k = goods + first_stage_rows;
    const int fa = (k + 2) / 2;
    switch (s) {
        case ErrorStructure::random_effects: return 0;
        case ErrorStructure::factor: return fa;
        case ErrorStructure::time_varying_factor: return fa + 2;
    }
    return fa;
}

/// Guideline bounds [low, high]: at least the rank needed to reproduce
/// the free covariance parameters of the FA surrogate, at most K.
struct FactorBounds {
    int low;
    int high;
};

inline FactorBounds factor_bounds(ErrorStructure s, int goods, int first_stage_rows) {
    const int rec = recommended_factors(s, goods, first_stage_rows);
    const int k = goods + first_stage_rows;
    if (s == ErrorStructure::time_varying_factor) return {rec - 2, std::max(rec, k)};
    return {rec, std::max(rec, k)};
}

/// Checks a spec against a panel; returns warnings, throws ConfigError on
/// hard inconsistencies.
inline std::vector<std::string> validate_spec(const ModelSpec& spec, const PanelData& data) {
    std::vector<std::string> warnings;
    if (spec.endogenous) {
        if (data.priced() < 1) throw ConfigError("Endo variant requires at least one priced good (p_* columns)");
        if (!data.has_instruments()) throw ConfigError("Endo variant requires instrument columns (zp_*) in the data");
    } else if (data.has_instruments()) {
        warnings.emplace_back("Exo variant: instrument columns are ignored");
    }
    const int jp = spec.endogenous ? data.priced() : 0;
    const int k = data.goods() + jp;
    const auto& mc = spec.mcmc;
    if (mc.burn_in < 0 || mc.draws < 0) throw ConfigError("burn_in and draws must be nonnegative");
    if (mc.thin < 1) throw ConfigError("thin must be at least 1");
    const auto& p = spec.priors;
    if (!(p.theta_variance > 0.0)) throw ConfigError("theta prior variance must be positive");
    if (!(p.loading_variance > 0.0)) throw ConfigError("loading prior variance must be positive");
    if (!(p.gig_a >= 0.0 && p.gig_b >= 0.0) || (p.gig_a == 0.0 && p.gig_b == 0.0) ||
        (p.gig_b == 0.0 && p.gig_p <= 0.0) || (p.gig_a == 0.0 && p.gig_p >= 0.0)) {
        throw ConfigError("GIG working prior (p, a, b) is outside the GIG domain");
    }
    if (spec.marginal_block_cap < 1) throw ConfigError("marginal_block_cap must be positive");
    if (spec.structure == ErrorStructure::random_effects) {
        if (!spec.masks.empty()) throw ConfigError("RE variant takes no loading mask");
        const double df = p.re_df.value_or(k + 2.0);
        if (!(df > k - 1.0)) throw ConfigError("RE inverse-Wishart df must exceed J + J_p - 1");
        if (!(p.re_scale > 0.0)) throw ConfigError("RE inverse-Wishart scale must be positive");
        return warnings;
    }
    const int L = spec.factors > 0 ? spec.factors : recommended_factors(spec.structure, data.goods(), jp);
    if (spec.factors < 0) throw ConfigError("factor count must be nonnegative");
    const auto bounds = factor_bounds(spec.structure, data.goods(), jp);
    if (L < bounds.low || L > bounds.high) {
        warnings.push_back("factor count " + std::to_string(L) + " is outside the guideline range [" +
                           std::to_string(bounds.low) + ", " + std::to_string(bounds.high) + "] for this model");
    }
    const auto layout = make_loading_layout(spec.structure, k, L, data.periods(), spec.masks);
    for (int l : layout.empty_columns()) {
        warnings.push_back("factor " + std::to_string(l + 1) + " has no free loadings");
    }
    return warnings;
}

inline int resolved_factors(const ModelSpec& spec, int goods, int first_stage_rows) {
    if (spec.structure == ErrorStructure::random_effects) return goods + first_stage_rows;
    return spec.factors > 0 ? spec.factors : recommended_factors(spec.structure, goods, first_stage_rows);
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_MODEL_SPEC_HPP
