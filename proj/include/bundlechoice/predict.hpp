#ifndef BUNDLECHOICE_PREDICT_HPP
#define BUNDLECHOICE_PREDICT_HPP

#include "chain.hpp"
#include "choice_set.hpp"
#include "error.hpp"
#include "layout.hpp"
#include "panel.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace bundlechoice {

/// One parameter set for prediction: Θ, per-block loadings, and N × L factors.
struct PredictiveDraw {
    Eigen::VectorXd theta;
    std::vector<Eigen::MatrixXd> loadings;
    Eigen::MatrixXd factors;
};

class ParameterSource {
public:
    virtual ~ParameterSource() = default;
    [[nodiscard]] virtual std::size_t size() const = 0;
    [[nodiscard]] virtual PredictiveDraw draw(std::size_t d) const = 0;
    [[nodiscard]] virtual int block_of_period(int t) const = 0;
};

/// Known parameters repeated `reps` times (each repetition gets fresh ε).
class FixedSource final : public ParameterSource {
public:
    FixedSource(PredictiveDraw params, std::size_t reps) : params_{std::move(params)}, reps_{reps} {}
    [[nodiscard]] std::size_t size() const override { return reps_; }
    [[nodiscard]] PredictiveDraw draw(std::size_t) const override { return params_; }
    [[nodiscard]] int block_of_period(int t) const override { return params_.loadings.size() == 1 ? 0 : t; }

private:
    PredictiveDraw params_;
    std::size_t reps_;
};

/// Posterior draws of a chain, optionally thinned to at most `max_draws`
/// evenly spaced draws. Chains without stored factors fall back to prior
/// factor draws (f ~ N(0, I); RE: ν ~ N(0, Σ)).
class ChainSource final : public ParameterSource {
public:
    explicit ChainSource(const PosteriorChain& chain, std::size_t max_draws = 0, std::uint64_t seed = 1)
        : chain_{&chain}, seed_{seed} {
        const auto total = static_cast<std::size_t>(chain.draws());
        const std::size_t n = (max_draws == 0 || max_draws >= total) ? total : max_draws;
        for (std::size_t k = 0; k < n; ++k) index_.push_back(k * total / n);
    }

    [[nodiscard]] std::size_t size() const override { return index_.size(); }
    [[nodiscard]] int block_of_period(int t) const override {
        return chain_->info.random_effects() || chain_->info.masks.size() == 1 ? 0 : t;
    }
    [[nodiscard]] PredictiveDraw draw(std::size_t k) const override {
        const auto d = static_cast<Eigen::Index>(index_.at(k));
        PredictiveDraw out;
        out.theta = chain_->theta.row(d).transpose();
        out.loadings = chain_->loading_matrices(d);
        if (chain_->has_factors()) {
            out.factors = chain_->factor_matrix(d);
            return out;
        }
        const auto& info = chain_->info;
        RngStream rng = RngStream(seed_, streams::predict + 0x00F00000u).substream(static_cast<std::uint32_t>(d), 0);
        out.factors.resize(static_cast<Eigen::Index>(info.individuals), info.factors);
        for (Eigen::Index i = 0; i < out.factors.rows(); ++i) {
            for (Eigen::Index l = 0; l < out.factors.cols(); ++l) out.factors(i, l) = rng.normal();
        }
        if (info.random_effects()) {
            const Eigen::MatrixXd root = Eigen::LLT<Eigen::MatrixXd>(chain_->structural_covariance(d)).matrixL();
            out.factors = (out.factors * root.transpose()).eval();
        }
        return out;
    }

private:
    const PosteriorChain* chain_;
    std::uint64_t seed_;
    std::vector<std::size_t> index_;
};

struct CovariateOverride {
    enum class Op { set, scale, add };
    std::string column;
    Op op = Op::set;
    double value = 0.0;
};

struct Scenario {
    std::string label = "baseline";
    std::vector<double> price_multipliers;  // per priced good; empty means 1
    std::vector<CovariateOverride> overrides;
};

/// Copy of the panel with the scenario's prices and covariates imposed.
/// Prices are set directly; the first stage is not re-solved.
inline PanelData apply_scenario(const PanelData& data, const Scenario& sc) {
    const int P = data.priced();
    if (!sc.price_multipliers.empty() && static_cast<int>(sc.price_multipliers.size()) != P) {
        throw UsageError("scenario '" + sc.label + "' lists " + std::to_string(sc.price_multipliers.size()) +
                         " price multipliers, the data have " + std::to_string(P) + " priced goods");
    }
    for (double m : sc.price_multipliers) {
        if (!(m > 0.0) || !std::isfinite(m)) throw UsageError("scenario '" + sc.label + "': price multipliers must be positive");
    }
    PanelData out = data;
    const ChoiceSet cs(data.goods());
    auto apply = [](double& v, const CovariateOverride& ov) {
        switch (ov.op) {
            case CovariateOverride::Op::set: v = ov.value; break;
            case CovariateOverride::Op::scale: v *= ov.value; break;
            case CovariateOverride::Op::add: v += ov.value; break;
        }
    };
    for (std::size_t o = 0; o < out.observations(); ++o) {
        for (int k = 0; k < static_cast<int>(sc.price_multipliers.size()); ++k) {
            out.set_price(o, k, data.price(o, k) * sc.price_multipliers[static_cast<std::size_t>(k)]);
        }
    }
    for (const auto& ov : sc.overrides) {
        bool found = false;
        for (int k = 0; k < P && !found; ++k) {
            if (ov.column == "p_" + std::to_string(k + 1)) {
                found = true;
                for (std::size_t o = 0; o < out.observations(); ++o) {
                    double v = out.price(o, k);
                    apply(v, ov);
                    out.set_price(o, k, v);
                }
            }
        }
        for (int j = 0; j < data.goods() && !found; ++j) {
            for (int c = 0; c < data.shape().z_dims[static_cast<std::size_t>(j)] && !found; ++c) {
                if (ov.column == "z_" + std::to_string(j + 1) + "_" + std::to_string(c + 1)) {
                    found = true;
                    for (std::size_t o = 0; o < out.observations(); ++o) apply(out.z_ref(o, j, c), ov);
                }
            }
        }
        for (int q = 0; q < cs.pair_count() && !found; ++q) {
            for (int c = 0; c < data.shape().w_dims[static_cast<std::size_t>(q)] && !found; ++c) {
                if (ov.column == bundle_column(cs, q, c)) {
                    found = true;
                    for (std::size_t o = 0; o < out.observations(); ++o) apply(out.w_ref(o, q, c), ov);
                }
            }
        }
        if (!found) throw UsageError("scenario '" + sc.label + "' overrides unknown column '" + ov.column + "'");
    }
    return out;
}

struct PredictOptions {
    std::uint64_t seed = 1;
    bool common_random_numbers = true;
    double step = 0.05;
    int threads = 1;
};

/// Per-draw shares: rows are draws; bundle columns include the outside option.
struct ShareDraws {
    Eigen::MatrixXd bundles;  // draws × 2^J
    Eigen::MatrixXd goods;    // draws × J
};

struct ShareTable {
    Eigen::VectorXd bundles;
    Eigen::VectorXd bundles_sd;
    Eigen::VectorXd goods;
    Eigen::VectorXd goods_sd;
    std::size_t draws = 0;
};

struct ElasticityTable {
    Eigen::MatrixXd goods;       // priced goods × J
    Eigen::MatrixXd goods_se;
    Eigen::MatrixXd bundles;     // priced goods × R (inside bundles)
    Eigen::MatrixXd bundles_se;
    Eigen::MatrixXi undefined_goods;    // draws with a zero baseline share, per cell
    Eigen::MatrixXi undefined_bundles;
    std::vector<std::string> diagnostics;
    std::size_t draws = 0;
};

/// Posterior-predictive simulation of bundle choices.
class PredictiveEngine {
public:
    PredictiveEngine(const ParamLayout& layout, const PanelData& data, const ParameterSource& source, PredictOptions opts = {})
        : layout_{&layout}, data_{&data}, source_{&source}, opts_{opts}, cs_{data.goods()} {
        layout.check_compatible(data);
        if (!(opts_.step > 0.0 && opts_.step < 1.0)) throw UsageError("elasticity step must be in (0, 1)");
    }

    /// Shares for every draw under a scenario.
    [[nodiscard]] ShareDraws share_draws(const Scenario& sc = {}) const {
        const PanelData cf = apply_scenario(*data_, sc);
        const auto D = source_->size();
        ShareDraws out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), cs_.size()),
                       Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), cs_.goods())};
        parallel_for(D, resolve_threads(opts_.threads), [&](std::size_t d) {
            const auto params = checked_draw(d);
            std::vector<long> counts(static_cast<std::size_t>(cs_.size()), 0);
            std::vector<double> util;
            for (std::size_t i = 0; i < cf.individuals(); ++i) {
                RngStream rng = noise_stream(0, d, i);
                for (std::size_t o = cf.begin(i); o < cf.end(i); ++o) {
                    base_utilities(cf, params, o, rng, util);
                    ++counts[static_cast<std::size_t>(argmax_choice(util))];
                }
            }
            fill_shares(counts, out, static_cast<Eigen::Index>(d));
        });
        return out;
    }

    [[nodiscard]] ShareTable shares(const Scenario& sc = {}) const {
        const auto d = share_draws(sc);
        ShareTable t;
        t.draws = static_cast<std::size_t>(d.bundles.rows());
        auto col_mean_sd = [](const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
            mean = m.colwise().mean().transpose();
            sd = Eigen::VectorXd::Zero(m.cols());
            if (m.rows() > 1) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) {
                    sd[c] = std::sqrt((m.col(c).array() - mean[c]).square().sum() / static_cast<double>(m.rows() - 1));
                }
            }
        };
        if (t.draws == 0) throw UsageError("prediction needs at least one parameter draw");
        col_mean_sd(d.bundles, t.bundles, t.bundles_sd);
        col_mean_sd(d.goods, t.goods, t.goods_sd);
        return t;
    }

    /// Two-sided ±step price elasticities, averaged over draws.
    [[nodiscard]] ElasticityTable elasticities() const {
        const int P = data_->priced();
        const int J = cs_.goods();
        const int R = cs_.inside();
        if (P == 0) throw UsageError("price elasticities need at least one priced good");
        std::vector<long> nonpositive(static_cast<std::size_t>(P), 0);
        for (std::size_t o = 0; o < data_->observations(); ++o) {
            for (int k = 0; k < P; ++k) {
                if (!std::isfinite(data_->price(o, k))) throw DataError("non-finite price in observation " + std::to_string(o));
                if (!(data_->price(o, k) > 0.0)) ++nonpositive[static_cast<std::size_t>(k)];
            }
        }
        const auto D = source_->size();
        if (D == 0) throw UsageError("prediction needs at least one parameter draw");
        // evaluation 0: baseline; 1 + 2k: good k lowered; 2 + 2k: good k raised
        const int evals = 1 + 2 * P;
        std::vector<std::vector<long>> counts(D);
        parallel_for(D, resolve_threads(opts_.threads), [&](std::size_t d) {
            const auto params = checked_draw(d);
            std::vector<long> c(static_cast<std::size_t>(evals * cs_.size()), 0);
            std::vector<double> util, shifted(static_cast<std::size_t>(cs_.size()));
            std::vector<double> slope(static_cast<std::size_t>(P));
            for (int k = 0; k < P; ++k) slope[static_cast<std::size_t>(k)] = params.theta[*layout_->price_slot(k)];
            for (std::size_t i = 0; i < data_->individuals(); ++i) {
                std::vector<RngStream> rngs;
                const int streams_needed = opts_.common_random_numbers ? 1 : evals;
                for (int e = 0; e < streams_needed; ++e) rngs.push_back(noise_stream(static_cast<std::uint32_t>(e), d, i));
                for (std::size_t o = data_->begin(i); o < data_->end(i); ++o) {
                    base_utilities(*data_, params, o, rngs[0], util);
                    ++c[static_cast<std::size_t>(argmax_choice(util))];
                    for (int e = 1; e < evals; ++e) {
                        const int k = (e - 1) / 2;
                        const double sign = (e % 2 == 1) ? -1.0 : 1.0;
                        if (!opts_.common_random_numbers) base_utilities(*data_, params, o, rngs[static_cast<std::size_t>(e)], util);
                        const double delta = slope[static_cast<std::size_t>(k)] * data_->price(o, k) * sign * opts_.step;
                        for (int r = 0; r < cs_.size(); ++r) {
                            shifted[static_cast<std::size_t>(r)] = util[static_cast<std::size_t>(r)] + (cs_.contains(r, k) ? delta : 0.0);
                        }
                        ++c[static_cast<std::size_t>(e * cs_.size() + argmax_choice(shifted))];
                    }
                }
            }
            counts[d] = std::move(c);
        });

        ElasticityTable t;
        t.draws = D;
        for (int k = 0; k < P; ++k) {
            if (nonpositive[static_cast<std::size_t>(k)] > 0) {
                t.diagnostics.push_back("good " + std::to_string(k + 1) + ": " + std::to_string(nonpositive[static_cast<std::size_t>(k)]) +
                                        " observations with nonpositive price (scaled as observed)");
            }
        }
        t.goods = Eigen::MatrixXd::Zero(P, J);
        t.goods_se = Eigen::MatrixXd::Zero(P, J);
        t.bundles = Eigen::MatrixXd::Zero(P, R);
        t.bundles_se = Eigen::MatrixXd::Zero(P, R);
        t.undefined_goods = Eigen::MatrixXi::Zero(P, J);
        t.undefined_bundles = Eigen::MatrixXi::Zero(P, R);
        const double n_obs = static_cast<double>(data_->observations());
        const double width = 2.0 * opts_.step;
        auto bundle_share = [&](const std::vector<long>& c, int e, int r) {
            return static_cast<double>(c[static_cast<std::size_t>(e * cs_.size() + r)]) / n_obs;
        };
        auto good_share = [&](const std::vector<long>& c, int e, int j) {
            double s = 0.0;
            for (int r = 1; r < cs_.size(); ++r) {
                if (cs_.contains(r, j)) s += bundle_share(c, e, r);
            }
            return s;
        };
        // Welford accumulation over draws per cell.
        auto accumulate = [&](auto&& share, int cols, Eigen::MatrixXd& mean, Eigen::MatrixXd& se, Eigen::MatrixXi& undefined,
                              const std::string& what, int col_offset) {
            for (int k = 0; k < P; ++k) {
                for (int col = 0; col < cols; ++col) {
                    double m = 0.0, m2 = 0.0;
                    long n = 0;
                    for (std::size_t d = 0; d < D; ++d) {
                        const double base = share(counts[d], 0, col + col_offset);
                        if (base <= 0.0) {
                            ++undefined(k, col);
                            continue;
                        }
                        const double e = (share(counts[d], 2 + 2 * k, col + col_offset) -
                                          share(counts[d], 1 + 2 * k, col + col_offset)) / base / width;
                        ++n;
                        const double delta = e - m;
                        m += delta / static_cast<double>(n);
                        m2 += delta * (e - m);
                    }
                    if (n == 0) {
                        mean(k, col) = std::numeric_limits<double>::quiet_NaN();
                        se(k, col) = std::numeric_limits<double>::quiet_NaN();
                        t.diagnostics.push_back(what + " elasticity (" + std::to_string(k + 1) + "," +
                                                std::to_string(col + 1) + ") undefined: baseline share is 0 in every draw");
                        continue;
                    }
                    mean(k, col) = m;
                    se(k, col) = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
                    if (undefined(k, col) > 0) {
                        t.diagnostics.push_back(what + " elasticity (" + std::to_string(k + 1) + "," + std::to_string(col + 1) +
                                                "): " + std::to_string(undefined(k, col)) +
                                                " draws with zero baseline share were skipped");
                    }
                }
            }
        };
        accumulate(good_share, J, t.goods, t.goods_se, t.undefined_goods, "good", 0);
        accumulate(bundle_share, R, t.bundles, t.bundles_se, t.undefined_bundles, "bundle", 1);
        return t;
    }

private:
    [[nodiscard]] PredictiveDraw checked_draw(std::size_t d) const {
        auto p = source_->draw(d);
        if (p.theta.size() != layout_->dim()) throw DataError("parameter draw does not match the model layout");
        if (p.factors.rows() != static_cast<Eigen::Index>(data_->individuals())) {
            throw DataError("parameter draw has factors for " + std::to_string(p.factors.rows()) +
                            " individuals, the panel has " + std::to_string(data_->individuals()));
        }
        for (const auto& l : p.loadings) {
            if (l.rows() < cs_.goods() || l.cols() != p.factors.cols()) throw DataError("loading matrix has the wrong shape");
        }
        return p;
    }

    [[nodiscard]] RngStream noise_stream(std::uint32_t eval, std::size_t d, std::size_t i) const {
        return RngStream(opts_.seed, streams::predict + eval).substream(static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(i));
    }

    /// Full utilities (mean + ν + ε) of every bundle at observation o.
    void base_utilities(const PanelData& data, const PredictiveDraw& p, std::size_t o, RngStream& rng,
                        std::vector<double>& util) const {
        const int J = cs_.goods();
        const int E = layout_->equation_rows();
        std::vector<double>& eq = scratch_eq();
        eq.resize(static_cast<std::size_t>(E));
        layout_->equation_values(data, o, p.theta, eq);
        const auto block = static_cast<std::size_t>(source_->block_of_period(data.period(o)));
        const auto& lam = p.loadings.at(block < p.loadings.size() ? block : 0);
        const auto i = static_cast<Eigen::Index>(data.individual(o));
        for (int j = 0; j < J; ++j) eq[static_cast<std::size_t>(j)] += lam.row(j).dot(p.factors.row(i));
        util.assign(static_cast<std::size_t>(cs_.size()), 0.0);
        for (int r = 1; r < cs_.size(); ++r) {
            double v = 0.0;
            for (int j : cs_.bundle(r)) v += eq[static_cast<std::size_t>(j)];
            for (int q : cs_.pairs_in(r)) v += eq[static_cast<std::size_t>(J + q)];
            util[static_cast<std::size_t>(r)] = v;
        }
        for (auto& v : util) v += rng.normal();
    }

    static std::vector<double>& scratch_eq() {
        thread_local std::vector<double> eq;
        return eq;
    }

    void fill_shares(const std::vector<long>& counts, ShareDraws& out, Eigen::Index d) const {
        const double n = static_cast<double>(data_->observations());
        for (int r = 0; r < cs_.size(); ++r) {
            out.bundles(d, r) = static_cast<double>(counts[static_cast<std::size_t>(r)]) / n;
            for (int j : cs_.bundle(r)) out.goods(d, j) += out.bundles(d, r);
        }
    }

    const ParamLayout* layout_;
    const PanelData* data_;
    const ParameterSource* source_;
    PredictOptions opts_;
    ChoiceSet cs_;
};

} // namespace bundlechoice

#endif // BUNDLECHOICE_PREDICT_HPP
