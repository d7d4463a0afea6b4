#ifndef BUNDLECHOICE_SAMPLER_HPP
#define BUNDLECHOICE_SAMPLER_HPP

#include "chain.hpp"
#include "design.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "layout.hpp"
#include "loadings.hpp"
#include "model_spec.hpp"
#include "panel.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bundlechoice {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Current state of the chain. For RE, `f` holds ν_i (N × (J + J_p)) and
/// `sigma` its covariance; `lambda` is empty.
struct ParameterState {
    std::uint64_t sweep = 0;
    RowMatrix u;  // observations × 2^J, column 0 is the outside option
    Eigen::VectorXd theta;
    Eigen::VectorXd lambda;
    Eigen::MatrixXd f;
    Eigen::MatrixXd sigma;
};

struct ChainResult {
    PosteriorChain chain;
    ParameterState final_state;
};

/// Gibbs sampler for the bundle-choice model. Holds references to the data;
/// the panel must outlive the sampler.
class GibbsSampler {
public:
    static constexpr std::size_t kChunk = 32;  // individuals per reduction chunk

    enum Step : std::uint32_t {
        kLatent = 1,
        kTheta = 2,
        kFactors = 3,
        kSign = 4,
        kBoost = 5,
        kLoadings = 6,
        kCovariance = 7,
        kInitLoadings = 8,
        kInitFactors = 9,
    };

    GibbsSampler(const PanelData& data, ModelSpec spec, int threads = 1)
        : data_{data},
          spec_{std::move(spec)},
          layout_{data.shape(), spec_.endogenous, spec_.sharing},
          system_{layout_, data},
          cs_{data.goods()},
          threads_{resolve_threads(threads)} {
        warnings_ = validate_spec(spec_, data);
        J_ = layout_.goods();
        P_ = layout_.pair_count();
        Jp_ = layout_.first_stage_rows();
        K_ = J_ + Jp_;
        R_ = cs_.inside();
        L_ = resolved_factors(spec_, J_, Jp_);
        if (!random_effects()) loadings_ = make_loading_layout(spec_.structure, K_, L_, data.periods(), spec_.masks);
        gram_ = system_.mapping().transpose() * system_.mapping();
        incidence_mapping_ = system_.incidence().transpose() * system_.mapping();
        plan_ = ChunkPlan{data.individuals(), kChunk};
        std::vector<Eigen::MatrixXd> partial(plan_.count());
        parallel_for(plan_.count(), threads_, [&](std::size_t c) {
            partial[c] = system_.cross_product(data_.begin(plan_.begin(c)), data_.begin(plan_.begin(c)) + observations_in(c));
        });
        hth_ = Eigen::MatrixXd::Zero(layout_.dim(), layout_.dim());
        for (const auto& m : partial) hth_ += m;
        prior_precision_ = Eigen::VectorXd::Constant(layout_.dim(), 1.0 / spec_.priors.theta_variance);
        prior_linear_ = prior_precision_ * spec_.priors.theta_mean;
        Eigen::MatrixXd q = hth_;
        q.diagonal() += prior_precision_;
        conditional_factor_ = PrecisionFactor(q, "equation-parameter precision");
        if (spec_.theta_mode == ThetaMode::marginalized) check_block_cap();
    }

    GibbsSampler(const GibbsSampler&) = delete;
    GibbsSampler& operator=(const GibbsSampler&) = delete;

    [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const PanelData& data() const noexcept { return data_; }
    [[nodiscard]] const ParamLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] const LoadingLayout& loadings() const noexcept { return loadings_; }
    [[nodiscard]] const StackedSystem& system() const noexcept { return system_; }
    [[nodiscard]] const ChoiceSet& choice_set() const noexcept { return cs_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    [[nodiscard]] int factors() const noexcept { return L_; }
    [[nodiscard]] int structural_rows() const noexcept { return K_; }
    [[nodiscard]] int threads() const noexcept { return threads_; }
    void set_threads(int n) { threads_ = resolve_threads(n); }
    [[nodiscard]] bool random_effects() const noexcept { return spec_.structure == ErrorStructure::random_effects; }
    /// H'H, constant for a given panel.
    [[nodiscard]] const Eigen::MatrixXd& cross_product() const noexcept { return hth_; }

    /// Per-block loading matrices of a state; RE uses Λ = I.
    [[nodiscard]] std::vector<Eigen::MatrixXd> loading_matrices(const ParameterState& s) const {
        if (random_effects()) return {Eigen::MatrixXd::Identity(K_, K_)};
        return loadings_.matrices(s.lambda);
    }
    [[nodiscard]] int block_of_period(int t) const { return random_effects() ? 0 : loadings_.block_of_period(t); }

    /// Structural errors ν_it = Λ_t f_i.
    [[nodiscard]] Eigen::VectorXd nu(const ParameterState& s, const std::vector<Eigen::MatrixXd>& lam, std::size_t o) const {
        const auto& l = lam[static_cast<std::size_t>(block_of_period(data_.period(o)))];
        return l * s.f.row(static_cast<Eigen::Index>(data_.individual(o))).transpose();
    }

    /// Means of the inside-bundle utilities, including ν, for observation o.
    void bundle_means(const ParameterState& s, const std::vector<Eigen::MatrixXd>& lam, std::size_t o,
                      std::vector<double>& eq, std::vector<double>& mu) const {
        eq.resize(static_cast<std::size_t>(layout_.equation_rows()));
        layout_.equation_values(data_, o, s.theta, eq);
        const Eigen::VectorXd v = nu(s, lam, o);
        for (int j = 0; j < J_; ++j) eq[static_cast<std::size_t>(j)] += v[j];
        mu.assign(static_cast<std::size_t>(R_ + 1), 0.0);
        for (int e = 0; e < J_ + P_; ++e) {
            for (int r : system_.rows_of_equation(e)) mu[static_cast<std::size_t>(r + 1)] += eq[static_cast<std::size_t>(e)];
        }
    }

    /// Θ = 0, small random loadings, prior factors, and latent utilities that
    /// already respect the observed choices.
    [[nodiscard]] ParameterState initial_state() const {
        ParameterState s;
        s.sweep = 0;
        s.theta = Eigen::VectorXd::Zero(layout_.dim());
        const auto N = static_cast<Eigen::Index>(data_.individuals());
        if (random_effects()) {
            s.sigma = spec_.priors.re_scale * Eigen::MatrixXd::Identity(K_, K_);
        } else {
            RngStream rng = stream(0, 0, kInitLoadings);
            s.lambda.resize(loadings_.free_count());
            for (Eigen::Index k = 0; k < s.lambda.size(); ++k) s.lambda[k] = 0.1 * rng.normal();
        }
        s.f.resize(N, L_);
        for (Eigen::Index i = 0; i < N; ++i) {
            RngStream rng = stream(0, static_cast<std::uint32_t>(i), kInitFactors);
            for (int l = 0; l < L_; ++l) s.f(i, l) = rng.normal();
        }
        s.u.resize(static_cast<Eigen::Index>(data_.observations()), R_ + 1);
        const auto lam = loading_matrices(s);
        std::vector<double> eq, mu;
        for (std::size_t o = 0; o < data_.observations(); ++o) {
            bundle_means(s, lam, o, eq, mu);
            const int y = data_.choice(o);
            double best = -std::numeric_limits<double>::infinity();
            for (int r = 0; r <= R_; ++r) {
                s.u(static_cast<Eigen::Index>(o), r) = mu[static_cast<std::size_t>(r)];
                if (r != y) best = std::max(best, mu[static_cast<std::size_t>(r)]);
            }
            s.u(static_cast<Eigen::Index>(o), y) = best + 1.0;
        }
        step_latent_utilities(s);
        return s;
    }

    // ---- Step 1 -------------------------------------------------------------
    void step_latent_utilities(ParameterState& s) const {
        const auto lam = loading_matrices(s);
        parallel_for(plan_.count(), threads_, [&](std::size_t c) {
            std::vector<double> eq, mu;
            for (std::size_t i = plan_.begin(c); i < plan_.end(c); ++i) {
                RngStream rng = stream(s.sweep, static_cast<std::uint32_t>(i), kLatent);
                for (std::size_t o = data_.begin(i); o < data_.end(i); ++o) {
                    bundle_means(s, lam, o, eq, mu);
                    auto row = s.u.row(static_cast<Eigen::Index>(o));
                    const int y = data_.choice(o);
                    for (int r = 0; r <= R_; ++r) {
                        const double m = mu[static_cast<std::size_t>(r)];
                        if (r == y) {
                            double best = -std::numeric_limits<double>::infinity();
                            for (int q = 0; q <= R_; ++q) {
                                if (q != y) best = std::max(best, row[q]);
                            }
                            row[r] = draw_truncated_normal(m, 1.0, best, std::numeric_limits<double>::infinity(), rng);
                        } else {
                            row[r] = draw_truncated_normal(m, 1.0, -std::numeric_limits<double>::infinity(), row[y], rng);
                        }
                    }
                }
            }
        });
    }

    /// y*_o = (u_1..u_R, p_1..p_Jp).
    void stacked_target(const ParameterState& s, std::size_t o, std::vector<double>& y) const {
        y.resize(static_cast<std::size_t>(R_ + Jp_));
        for (int r = 0; r < R_; ++r) y[static_cast<std::size_t>(r)] = s.u(static_cast<Eigen::Index>(o), r + 1);
        for (int k = 0; k < Jp_; ++k) y[static_cast<std::size_t>(R_ + k)] = data_.price(o, k);
    }

    // ---- Step 2 -------------------------------------------------------------
    void step_theta(ParameterState& s) const {
        const bool marginal = spec_.theta_mode == ThetaMode::marginalized;
        if (marginal) check_block_cap();
        auto lam = loading_matrices(s);
        // Ω = I_ν Σ I_ν' + I for RE: use the Cholesky factor as the loading.
        if (marginal && random_effects()) lam = {Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(s.sigma).matrixL())};
        const auto dim = layout_.dim();
        std::vector<Eigen::VectorXd> part_lin(plan_.count());
        std::vector<Eigen::MatrixXd> part_corr(marginal ? plan_.count() : 0);
        parallel_for(plan_.count(), threads_, [&](std::size_t c) {
            Eigen::VectorXd lin = Eigen::VectorXd::Zero(dim);
            Eigen::MatrixXd corr;
            if (marginal) corr = Eigen::MatrixXd::Zero(dim, dim);
            std::vector<double> y, g(static_cast<std::size_t>(layout_.equation_rows()));
            std::vector<double> col(g.size());
            for (std::size_t i = plan_.begin(c); i < plan_.end(c); ++i) {
                Eigen::MatrixXd htu, utu;
                Eigen::VectorXd uty;
                if (marginal) {
                    htu = Eigen::MatrixXd::Zero(dim, L_);
                    utu = Eigen::MatrixXd::Zero(L_, L_);
                    uty = Eigen::VectorXd::Zero(L_);
                }
                for (std::size_t o = data_.begin(i); o < data_.end(i); ++o) {
                    stacked_target(s, o, y);
                    if (!marginal) {
                        const Eigen::VectorXd v = nu(s, lam, o);
                        for (int r = 0; r < R_; ++r) {
                            for (int j : cs_.bundle(r + 1)) y[static_cast<std::size_t>(r)] -= v[j];
                        }
                        for (int k = 0; k < Jp_; ++k) y[static_cast<std::size_t>(R_ + k)] -= v[J_ + k];
                    }
                    system_.incidence_transpose(y, g);
                    layout_.add_transpose_product(data_, o, g, lin);
                    if (marginal) {
                        const auto& l = lam[static_cast<std::size_t>(block_of_period(data_.period(o)))];
                        Eigen::VectorXd nuy(K_);
                        for (int j = 0; j < J_; ++j) nuy[j] = g[static_cast<std::size_t>(j)];
                        for (int k = 0; k < Jp_; ++k) nuy[J_ + k] = g[static_cast<std::size_t>(J_ + P_ + k)];
                        uty += l.transpose() * nuy;
                        utu += l.transpose() * gram_ * l;
                        const Eigen::MatrixXd x = incidence_mapping_ * l;
                        for (int f = 0; f < L_; ++f) {
                            for (std::size_t e = 0; e < col.size(); ++e) col[e] = x(static_cast<Eigen::Index>(e), f);
                            layout_.add_transpose_product(data_, o, col, htu.col(f));
                        }
                    }
                }
                if (marginal) {
                    Eigen::MatrixXd inner = utu;
                    inner.diagonal().array() += 1.0;
                    Eigen::LLT<Eigen::MatrixXd> llt(inner);
                    const Eigen::MatrixXd c_htu = llt.solve(htu.transpose());
                    lin -= c_htu.transpose() * uty;
                    corr.noalias() += htu * c_htu;
                }
            }
            part_lin[c] = std::move(lin);
            if (marginal) part_corr[c] = std::move(corr);
        });
        Eigen::VectorXd lin = prior_linear_;
        for (const auto& p : part_lin) lin += p;
        RngStream rng = stream(s.sweep, 0, kTheta);
        if (!marginal) {
            s.theta = conditional_factor_.draw(lin, rng);
            return;
        }
        Eigen::MatrixXd q = hth_;
        q.diagonal() += prior_precision_;
        for (const auto& p : part_corr) q -= p;
        q = 0.5 * (q + q.transpose()).eval();
        s.theta = PrecisionFactor(q, "marginalized equation-parameter precision").draw(lin, rng);
    }

    /// I_ν' (y*_o − h_o Θ): K entries (goods then first stage).
    void projected_residual(const ParameterState& s, std::size_t o, std::vector<double>& y, std::vector<double>& eq,
                            std::vector<double>& g, Eigen::Ref<Eigen::VectorXd> out) const {
        stacked_target(s, o, y);
        eq.resize(static_cast<std::size_t>(layout_.equation_rows()));
        layout_.equation_values(data_, o, s.theta, eq);
        for (int e = 0; e < layout_.equation_rows(); ++e) {
            for (int r : system_.rows_of_equation(e)) y[static_cast<std::size_t>(r)] -= eq[static_cast<std::size_t>(e)];
        }
        g.resize(eq.size());
        system_.incidence_transpose(y, g);
        for (int j = 0; j < J_; ++j) out[j] = g[static_cast<std::size_t>(j)];
        for (int k = 0; k < Jp_; ++k) out[J_ + k] = g[static_cast<std::size_t>(J_ + P_ + k)];
    }

    // ---- Step 3 -------------------------------------------------------------
    void step_factors(ParameterState& s) const {
        const auto lam = loading_matrices(s);
        std::vector<Eigen::MatrixXd> lgl;
        for (const auto& l : lam) lgl.push_back(l.transpose() * gram_ * l);
        Eigen::MatrixXd prior = Eigen::MatrixXd::Identity(L_, L_);
        if (random_effects()) prior = PrecisionFactor(s.sigma, "RE covariance").covariance();
        parallel_for(plan_.count(), threads_, [&](std::size_t c) {
            std::vector<double> y, eq, g;
            Eigen::VectorXd res(K_);
            for (std::size_t i = plan_.begin(c); i < plan_.end(c); ++i) {
                Eigen::MatrixXd q = prior;
                Eigen::VectorXd lin = Eigen::VectorXd::Zero(L_);
                for (std::size_t o = data_.begin(i); o < data_.end(i); ++o) {
                    const auto b = static_cast<std::size_t>(block_of_period(data_.period(o)));
                    q += lgl[b];
                    projected_residual(s, o, y, eq, g, res);
                    lin.noalias() += lam[b].transpose() * res;
                }
                RngStream rng = stream(s.sweep, static_cast<std::uint32_t>(i), kFactors);
                s.f.row(static_cast<Eigen::Index>(i)) = PrecisionFactor(q, "factor precision").draw(lin, rng).transpose();
            }
        });
    }

    // ---- Step 4 -------------------------------------------------------------
    void step_sign_switch(ParameterState& s) const {
        if (random_effects()) return;
        for (int l = 0; l < L_; ++l) {
            RngStream rng = stream(s.sweep, static_cast<std::uint32_t>(l), kSign);
            if (rng.uniform() < 0.5) flip_factor(s, l);
        }
    }

    void flip_factor(ParameterState& s, int l) const {
        s.f.col(l) *= -1.0;
        const auto& entries = loadings_.entries();
        for (std::size_t k = 0; k < entries.size(); ++k) {
            if (entries[k].col == l) s.lambda[static_cast<Eigen::Index>(k)] = -s.lambda[static_cast<Eigen::Index>(k)];
        }
    }

    // ---- Step 5 -------------------------------------------------------------
    /// Posterior shape parameter of the working-parameter draw for factor l.
    [[nodiscard]] double boost_shape(int l) const {
        return spec_.priors.gig_p + 0.5 * loadings_.column_free_count(l) - 0.5 * static_cast<double>(data_.individuals());
    }

    void step_mda_boost(ParameterState& s) const {
        if (random_effects()) return;
        const auto& pr = spec_.priors;
        const auto& entries = loadings_.entries();
        for (int l = 0; l < L_; ++l) {
            RngStream rng = stream(s.sweep, static_cast<std::uint32_t>(l), kBoost);
            double ll = 0.0;
            for (std::size_t k = 0; k < entries.size(); ++k) {
                if (entries[k].col == l) ll += s.lambda[static_cast<Eigen::Index>(k)] * s.lambda[static_cast<Eigen::Index>(k)];
            }
            const double ff = s.f.col(l).squaredNorm();
            const double psi = with_context("GIG working prior", [&] { return draw_gig(pr.gig_p, pr.gig_a, pr.gig_b, rng); });
            const double a_bar = pr.gig_a + ll / (psi * pr.loading_variance);
            const double b_bar = pr.gig_b + psi * ff;
            const double psi_new = with_context("GIG working conditional (check the GIG hyperparameters)",
                                                [&] { return draw_gig(boost_shape(l), a_bar, b_bar, rng); });
            rescale_factor(s, l, psi, psi_new);
        }
    }

    void rescale_factor(ParameterState& s, int l, double psi, double psi_new) const {
        if (psi_new == psi) return;
        const double up = std::sqrt(psi_new / psi);
        const double down = std::sqrt(psi / psi_new);
        const auto& entries = loadings_.entries();
        for (std::size_t k = 0; k < entries.size(); ++k) {
            if (entries[k].col == l) s.lambda[static_cast<Eigen::Index>(k)] *= up;
        }
        s.f.col(l) *= down;
    }

    // ---- Step 6 -------------------------------------------------------------
    void step_loadings(ParameterState& s) const {
        if (random_effects()) return;
        const int B = loadings_.blocks();
        struct Partial {
            std::vector<Eigen::MatrixXd> ff;  // Σ f_i f_i' per block
            std::vector<Eigen::MatrixXd> rf;  // Σ (I_ν' ỹ_o) f_i' per block
        };
        std::vector<Partial> parts(plan_.count());
        parallel_for(plan_.count(), threads_, [&](std::size_t c) {
            Partial p{std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(B), Eigen::MatrixXd::Zero(L_, L_)),
                      std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(B), Eigen::MatrixXd::Zero(K_, L_))};
            std::vector<double> y, eq, g;
            Eigen::VectorXd res(K_);
            for (std::size_t i = plan_.begin(c); i < plan_.end(c); ++i) {
                const Eigen::RowVectorXd fi = s.f.row(static_cast<Eigen::Index>(i));
                for (std::size_t o = data_.begin(i); o < data_.end(i); ++o) {
                    const auto b = static_cast<std::size_t>(loadings_.block_of_period(data_.period(o)));
                    p.ff[b].noalias() += fi.transpose() * fi;
                    projected_residual(s, o, y, eq, g, res);
                    p.rf[b].noalias() += res * fi;
                }
            }
            parts[c] = std::move(p);
        });
        const auto& entries = loadings_.entries();
        const double prior = 1.0 / spec_.priors.loading_variance;
        for (int b = 0; b < B; ++b) {
            Eigen::MatrixXd ff = Eigen::MatrixXd::Zero(L_, L_);
            Eigen::MatrixXd rf = Eigen::MatrixXd::Zero(K_, L_);
            for (const auto& p : parts) {
                ff += p.ff[static_cast<std::size_t>(b)];
                rf += p.rf[static_cast<std::size_t>(b)];
            }
            const int off = loadings_.block_offset(b);
            const int n = loadings_.block_free_count(b);
            if (n == 0) continue;
            Eigen::MatrixXd q(n, n);
            Eigen::VectorXd lin(n);
            for (int x = 0; x < n; ++x) {
                const auto& ex = entries[static_cast<std::size_t>(off + x)];
                lin[x] = rf(ex.row, ex.col);
                for (int z = 0; z < n; ++z) {
                    const auto& ez = entries[static_cast<std::size_t>(off + z)];
                    q(x, z) = ff(ex.col, ez.col) * gram_(ex.row, ez.row);
                }
                q(x, x) += prior;
            }
            RngStream rng = stream(s.sweep, static_cast<std::uint32_t>(b), kLoadings);
            s.lambda.segment(off, n) = PrecisionFactor(q, "loading precision").draw(lin, rng);
        }
    }

    // ---- RE covariance ----------------------------------------------------
    void step_re_covariance(ParameterState& s) const {
        if (!random_effects()) return;
        const double df0 = spec_.priors.re_df.value_or(K_ + 2.0);
        Eigen::MatrixXd scale = spec_.priors.re_scale * Eigen::MatrixXd::Identity(K_, K_);
        scale.noalias() += s.f.transpose() * s.f;
        RngStream rng = stream(s.sweep, 0, kCovariance);
        s.sigma = draw_inverse_wishart(df0 + static_cast<double>(data_.individuals()), scale, rng);
    }

    /// One full sweep in the fixed order 1, 2, 3, 4, 5, 6 (RE: 1, 2, 3, Σ).
    void sweep(ParameterState& s) const {
        ++s.sweep;
        const std::string at = "sweep " + std::to_string(s.sweep) + ", step ";
        with_context(at + "1 (latent utilities)", [&] { step_latent_utilities(s); });
        with_context(at + "2 (equation parameters)", [&] { step_theta(s); });
        with_context(at + "3 (factors)", [&] { step_factors(s); });
        if (random_effects()) {
            with_context(at + "RE covariance", [&] { step_re_covariance(s); });
            return;
        }
        if (spec_.sign_switch) with_context(at + "4 (sign switch)", [&] { step_sign_switch(s); });
        if (spec_.boost) with_context(at + "5 (marginal data augmentation)", [&] { step_mda_boost(s); });
        with_context(at + "6 (loadings)", [&] { step_loadings(s); });
        if (!s.theta.allFinite() || !s.f.allFinite() || !s.lambda.allFinite()) {
            throw NumericError(at + "end: non-finite parameter values");
        }
    }

    [[nodiscard]] ChainInfo chain_info() const {
        ChainInfo info;
        info.structure = spec_.structure;
        info.endogenous = spec_.endogenous;
        info.goods = J_;
        info.first_stage_rows = Jp_;
        info.factors = L_;
        info.periods = data_.periods();
        info.individuals = data_.individuals();
        if (!random_effects()) info.masks = loadings_.masks();
        info.seed = spec_.mcmc.seed;
        info.burn_in = spec_.mcmc.burn_in;
        info.draws = spec_.mcmc.draws;
        info.thin = spec_.mcmc.thin;
        info.theta_names = layout_.names();
        info.loading_names = loading_names(info);
        return info;
    }

    using Progress = std::function<void(std::uint64_t sweep, std::uint64_t total)>;

    /// Runs burn-in plus draws. A resumed state continues at its sweep count,
    /// so a run split at any sweep reproduces the straight run exactly.
    [[nodiscard]] ChainResult run(std::optional<ParameterState> resume = std::nullopt, const Progress& progress = {}) const {
        const auto start = std::chrono::steady_clock::now();
        ParameterState s = resume ? std::move(*resume) : initial_state();
        check_state(s);
        const auto& mc = spec_.mcmc;
        const std::uint64_t total = static_cast<std::uint64_t>(mc.burn_in) + static_cast<std::uint64_t>(mc.draws);
        std::vector<std::uint64_t> kept;
        for (std::uint64_t k = static_cast<std::uint64_t>(mc.burn_in) + mc.thin; k <= total; k += static_cast<std::uint64_t>(mc.thin)) {
            if (k > s.sweep) kept.push_back(k);
        }
        ChainResult out;
        out.chain.info = chain_info();
        const auto n = static_cast<Eigen::Index>(kept.size());
        const auto nl = random_effects() ? K_ * (K_ + 1) / 2 : loadings_.free_count();
        out.chain.theta.resize(n, layout_.dim());
        out.chain.loadings.resize(n, nl);
        if (mc.store_factors) out.chain.factors.resize(n, static_cast<Eigen::Index>(data_.individuals()) * L_);
        Eigen::Index row = 0;
        while (s.sweep < total) {
            sweep(s);
            if (row < n && kept[static_cast<std::size_t>(row)] == s.sweep) {
                out.chain.theta.row(row) = s.theta.transpose();
                out.chain.loadings.row(row) = random_effects() ? PosteriorChain::vech(s.sigma).transpose() : s.lambda.transpose();
                if (mc.store_factors) {
                    for (Eigen::Index i = 0; i < s.f.rows(); ++i) {
                        out.chain.factors.row(row).segment(i * L_, L_) = s.f.row(i);
                    }
                }
                out.chain.sweeps.push_back(s.sweep);
                ++row;
            }
            if (progress) progress(s.sweep, total);
        }
        out.chain.info.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.final_state = std::move(s);
        return out;
    }

    void check_state(const ParameterState& s) const {
        const bool ok = s.theta.size() == layout_.dim() && s.u.rows() == static_cast<Eigen::Index>(data_.observations()) &&
                        s.u.cols() == R_ + 1 && s.f.rows() == static_cast<Eigen::Index>(data_.individuals()) &&
                        s.f.cols() == L_ &&
                        (random_effects() ? (s.sigma.rows() == K_ && s.sigma.cols() == K_)
                                          : s.lambda.size() == loadings_.free_count());
        if (!ok) throw ConfigError("sampler state does not match the model dimensions");
    }

    /// Max over the per-individual block dimension (R + J_p) T_i.
    [[nodiscard]] std::size_t marginal_block_dimension() const {
        return static_cast<std::size_t>(R_ + Jp_) * data_.max_periods_per_individual();
    }

private:
    [[nodiscard]] RngStream stream(std::uint64_t sweep, std::uint32_t item, std::uint32_t step) const {
        return RngStream(spec_.mcmc.seed, streams::chain)
            .substream(item, static_cast<std::uint32_t>(sweep * 16u + step));
    }

    [[nodiscard]] std::size_t observations_in(std::size_t c) const {
        return data_.end(plan_.end(c) - 1) - data_.begin(plan_.begin(c));
    }

    void check_block_cap() const {
        const auto d = marginal_block_dimension();
        if (d > static_cast<std::size_t>(spec_.marginal_block_cap)) {
            throw ConfigError("marginalized equation-parameter sampler: per-individual block dimension " +
                              std::to_string(d) + " exceeds the cap of " + std::to_string(spec_.marginal_block_cap) +
                              "; use theta_mode=conditional or raise marginal_block_cap");
        }
    }

    const PanelData& data_;
    ModelSpec spec_;
    ParamLayout layout_;
    StackedSystem system_;
    ChoiceSet cs_;
    LoadingLayout loadings_;
    int threads_ = 1;
    std::vector<std::string> warnings_;
    int J_ = 0, P_ = 0, Jp_ = 0, K_ = 0, R_ = 0, L_ = 0;
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd incidence_mapping_;
    ChunkPlan plan_;
    Eigen::MatrixXd hth_;
    Eigen::VectorXd prior_precision_;
    Eigen::VectorXd prior_linear_;
    PrecisionFactor conditional_factor_;
};

} // namespace bundlechoice

#endif // BUNDLECHOICE_SAMPLER_HPP
