#ifndef BUNDLECHOICE_STUDY_HPP
#define BUNDLECHOICE_STUDY_HPP

#include "config.hpp"
#include "dgp.hpp"
#include "io_util.hpp"
#include "parallel.hpp"
#include "predict.hpp"
#include "sampler.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace bundlechoice {

/// Outcome of one (size, trial, model) fit.
struct TrialRecord {
    std::size_t size = 0;
    std::size_t trial = 0;
    std::string model;
    bool ok = false;
    std::string error;
    Eigen::MatrixXd truth;      // priced × J
    Eigen::MatrixXd estimate;   // posterior-mean elasticities
    double alpha_mean = std::numeric_limits<double>::quiet_NaN();
    double alpha_sd = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

/// RMSE over successful trials for one (model, size) cell.
struct RmseCell {
    std::string model;
    std::size_t size = 0;
    std::size_t trials_ok = 0;
    std::size_t trials_failed = 0;
    Eigen::MatrixXd rmse;     // priced × J
    Eigen::MatrixXd rmse_se;  // delta-method Monte-Carlo standard error
    std::size_t alpha_covered = 0;  // |mean - α| ≤ 3 sd
};

struct StudyResult {
    std::vector<TrialRecord> records;
    std::vector<RmseCell> cells;
    Eigen::MatrixXd mean_truth;  // averaged over all truths computed
    bool any_failed = false;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    Fnv1a h;
    h.update(&seed, sizeof seed);
    h.update(&a, sizeof a);
    h.update(&b, sizeof b);
    return h.value();
}

/// Index of the price coefficient of good 1, if the layout has one.
inline std::optional<Eigen::Index> alpha_slot(const ParamLayout& layout) {
    if (auto s = layout.price_slot(0)) return static_cast<Eigen::Index>(*s);
    return std::nullopt;
}

} // namespace detail

using StudyProgress = std::function<void(const TrialRecord&)>;

/// Simulates `trials` panels per size, fits every model, and scores the
/// posterior-mean elasticities against the truth of each panel.
inline StudyResult run_study(const DgpConfig& base, const StudySettings& st, int threads = 1,
                             const StudyProgress& progress = {}) {
    struct Task {
        std::size_t size_index;
        std::size_t trial;
        std::size_t model;
    };
    const std::size_t S = st.sizes.size();
    const std::size_t M = st.models.size();
    // Truths first: one per (size, trial), shared by all models.
    std::vector<SimulatedPanel> panels;
    std::vector<Eigen::MatrixXd> truths(S * st.trials);
    std::vector<DgpConfig> cfgs;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < st.trials; ++k) {
            DgpConfig c = base;
            c.individuals = st.sizes[s];
            c.seed = st.seed;
            // Sizes share trial streams so a smaller panel is not a prefix of a larger one.
            c.trial = static_cast<std::uint32_t>(s * 100000 + k);
            cfgs.push_back(c);
        }
    }
    panels.reserve(cfgs.size());
    for (const auto& c : cfgs) panels.push_back(simulate_dataset(c));
    const int pool = resolve_threads(threads);
    parallel_for(panels.size(), pool, [&](std::size_t x) {
        PredictOptions opts = st.predict;
        opts.seed = detail::mix_seed(st.seed, x, 0xACE);
        opts.threads = 1;
        truths[x] = true_elasticities(panels[x], st.truth_reps, opts).goods;
    });

    std::vector<Task> tasks;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < st.trials; ++k) {
            for (std::size_t m = 0; m < M; ++m) tasks.push_back({s, k, m});
        }
    }
    std::vector<TrialRecord> records(tasks.size());
    std::mutex report;
    parallel_for(tasks.size(), pool, [&](std::size_t x) {
        const auto& task = tasks[x];
        const auto p = task.size_index * st.trials + task.trial;
        const auto& sim = panels[p];
        TrialRecord rec;
        rec.size = st.sizes[task.size_index];
        rec.trial = task.trial;
        rec.model = st.models[task.model].name;
        rec.truth = truths[p];
        const auto start = std::chrono::steady_clock::now();
        try {
            ModelSpec spec = st.models[task.model].spec;
            spec.mcmc.seed = detail::mix_seed(st.seed, p, task.model + 1);
            spec.mcmc.store_factors = true;
            const PanelData data = spec.endogenous ? sim.data : sim.data.without_instruments();
            const GibbsSampler sampler(data, spec, 1);
            const auto result = sampler.run();
            const auto& chain = result.chain;
            if (chain.draws() == 0) throw UsageError("model '" + rec.model + "' keeps no draws");
            if (const auto a = detail::alpha_slot(sampler.layout())) {
                const Eigen::VectorXd col = chain.theta.col(*a);
                rec.alpha_mean = col.mean();
                rec.alpha_sd = chain.draws() > 1
                                   ? std::sqrt((col.array() - rec.alpha_mean).square().sum() / static_cast<double>(chain.draws() - 1))
                                   : 0.0;
            }
            PredictOptions opts = st.predict;
            opts.seed = detail::mix_seed(st.seed, p, 0xE1A5 + task.model);
            opts.threads = 1;
            const ChainSource source(chain, st.max_draws, opts.seed);
            rec.estimate = PredictiveEngine(sampler.layout(), data, source, opts).elasticities().goods;
            rec.ok = rec.estimate.allFinite();
            if (!rec.ok) rec.error = "non-finite elasticity estimate";
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (progress) {
            std::lock_guard lock(report);
            progress(rec);
        }
        records[x] = std::move(rec);
    });

    StudyResult out;
    out.mean_truth = Eigen::MatrixXd::Zero(truths.front().rows(), truths.front().cols());
    for (const auto& t : truths) out.mean_truth += t;
    out.mean_truth /= static_cast<double>(truths.size());
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t s = 0; s < S; ++s) {
            RmseCell cell;
            cell.model = st.models[m].name;
            cell.size = st.sizes[s];
            const auto rows = out.mean_truth.rows();
            const auto cols = out.mean_truth.cols();
            Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(rows, cols);
            Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(rows, cols);
            for (std::size_t x = 0; x < tasks.size(); ++x) {
                if (tasks[x].model != m || tasks[x].size_index != s) continue;
                const auto& r = records[x];
                if (!r.ok) {
                    ++cell.trials_failed;
                    continue;
                }
                ++cell.trials_ok;
                const Eigen::MatrixXd sq = (r.estimate - r.truth).array().square().matrix();
                sum += sq;
                sum2 += sq.array().square().matrix();
                if (std::isfinite(r.alpha_mean) && std::abs(r.alpha_mean - base.alpha) <= 3.0 * r.alpha_sd) ++cell.alpha_covered;
            }
            const double n = static_cast<double>(cell.trials_ok);
            cell.rmse = Eigen::MatrixXd::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
            cell.rmse_se = cell.rmse;
            if (cell.trials_ok > 0) {
                const Eigen::MatrixXd mse = sum / n;
                cell.rmse = mse.array().sqrt().matrix();
                for (Eigen::Index a = 0; a < rows; ++a) {
                    for (Eigen::Index b = 0; b < cols; ++b) {
                        const double var = cell.trials_ok > 1 ? (sum2(a, b) / n - mse(a, b) * mse(a, b)) * n / (n - 1.0) : 0.0;
                        cell.rmse_se(a, b) = cell.rmse(a, b) > 0.0 ? std::sqrt(std::max(var, 0.0) / n) / (2.0 * cell.rmse(a, b)) : 0.0;
                    }
                }
            }
            out.any_failed = out.any_failed || cell.trials_failed > 0;
            out.cells.push_back(std::move(cell));
        }
    }
    out.records = std::move(records);
    return out;
}

/// Long-format RMSE table: one row per (model, size, j, k).
inline std::string study_rmse_csv(const StudyResult& r) {
    std::string out = "model,N,price_good,good,rmse,rmse_se,trials_ok,trials_failed\n";
    for (const auto& c : r.cells) {
        for (Eigen::Index a = 0; a < c.rmse.rows(); ++a) {
            for (Eigen::Index b = 0; b < c.rmse.cols(); ++b) {
                out += c.model + "," + std::to_string(c.size) + "," + std::to_string(a + 1) + "," + std::to_string(b + 1) + "," +
                       format_double(c.rmse(a, b)) + "," + format_double(c.rmse_se(a, b)) + "," + std::to_string(c.trials_ok) + "," +
                       std::to_string(c.trials_failed) + "\n";
            }
        }
    }
    return out;
}

inline std::string study_trials_csv(const StudyResult& r) {
    std::string out = "model,N,trial,ok,alpha_mean,alpha_sd,e11_truth,e11_estimate,error\n";
    for (const auto& t : r.records) {
        const bool has = t.ok && t.estimate.size() > 0;
        out += t.model + "," + std::to_string(t.size) + "," + std::to_string(t.trial + 1) + "," + (t.ok ? "1" : "0") + "," +
               format_double(t.alpha_mean) + "," + format_double(t.alpha_sd) + "," +
               format_double(t.truth.size() > 0 ? t.truth(0, 0) : std::nan("")) + "," +
               format_double(has ? t.estimate(0, 0) : std::nan("")) + ",";
        std::string err = t.error;
        for (auto& ch : err) {
            if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
        }
        out += err + "\n";
    }
    return out;
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_STUDY_HPP
