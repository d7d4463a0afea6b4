// Command-line front end: simulate, estimate, predict, mc-study.

#include <bundlechoice.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace bc = bundlechoice;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string command;
    fs::path config;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    std::optional<int> threads;
    bool quiet = false;
};

void log(const Options& opt, const std::string& msg) {
    if (!opt.quiet) std::cerr << "[bundlechoice] " << msg << "\n";
}

/// Writes output files and collects their hashes for the manifest.
class OutputDir {
public:
    explicit OutputDir(fs::path dir) : dir_{std::move(dir)} {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw bc::IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }

    void write(const std::string& name, const std::string& content) {
        bc::write_file(dir_ / name, content);
        hashes_[name] = bc::hash_text(content);
    }

    [[nodiscard]] const fs::path& path() const noexcept { return dir_; }
    [[nodiscard]] const std::map<std::string, std::string>& hashes() const noexcept { return hashes_; }

private:
    fs::path dir_;
    std::map<std::string, std::string> hashes_;
};

void write_manifest(OutputDir& out, const Options& opt, const bc::RunConfig& cfg, std::uint64_t seed, int threads,
                    const bc::Json& extra = bc::Json::object()) {
    bc::Json m{{"command", opt.command},
               {"version", bc::kVersion},
               {"config", cfg.document},
               {"config_hash", bc::hash_text(cfg.document.dump())},
               {"seed", seed},
               {"seed_override", opt.seed.has_value()},
               {"threads", threads},
               {"outputs", out.hashes()}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    bc::write_file(out.path() / "manifest.json", m.dump(2) + "\n");
}

fs::path output_dir(const Options& opt, const bc::RunConfig& cfg) {
    if (opt.out) return *opt.out;
    if (cfg.out) return cfg.resolve(*cfg.out);
    return "out";
}

int thread_count(const Options& opt, const bc::RunConfig& cfg) {
    return bc::resolve_threads(opt.threads ? *opt.threads : cfg.threads.value_or(1));
}

template <class T>
const T& need(const std::optional<T>& v, const char* key, const std::string& command) {
    if (!v) throw bc::ConfigError("'" + command + "' requires the config key '" + key + "'");
    return *v;
}

bc::PanelData load_panel(const bc::RunConfig& cfg, const std::string& command) {
    return bc::read_panel_csv_file(cfg.resolve(need(cfg.data, "data", command)), cfg.goods);
}

std::string matrix_json_rows(const Eigen::MatrixXd& m, bc::Json& out) {
    out = bc::Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        bc::Json row = bc::Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (std::isfinite(m(r, c))) {
                row.push_back(m(r, c));
            } else {
                row.push_back(nullptr);
            }
        }
        out.push_back(row);
    }
    return {};
}

bc::Json matrix_json(const Eigen::MatrixXd& m) {
    bc::Json j;
    matrix_json_rows(m, j);
    return j;
}

// ----------------------------------------------------------------- simulate

int cmd_simulate(const Options& opt, const bc::RunConfig& cfg) {
    bc::DgpConfig dgp = need(cfg.dgp, "dgp", opt.command);
    if (opt.seed) dgp.seed = *opt.seed;
    const int threads = thread_count(opt, cfg);
    log(opt, "simulating N=" + std::to_string(dgp.individuals) + ", T=" + std::to_string(dgp.periods) +
                 ", J=" + std::to_string(dgp.goods) + ", seed=" + std::to_string(dgp.seed));
    const auto sim = bc::simulate_dataset(dgp);
    OutputDir out(output_dir(opt, cfg));
    out.write("panel.csv", bc::write_panel_csv(sim.data));
    bc::Json theta = bc::Json::object();
    for (std::size_t k = 0; k < sim.truth.theta_names.size(); ++k) {
        theta[sim.truth.theta_names[k]] = sim.truth.theta[static_cast<Eigen::Index>(k)];
    }
    bc::Json loadings = bc::Json::array();
    for (const auto& l : sim.truth.loadings) loadings.push_back(matrix_json(l));
    const bc::Json truth{{"dgp", bc::to_json(dgp)},
                         {"alpha", dgp.alpha},
                         {"theta", theta},
                         {"theta_order", sim.truth.theta_names},
                         {"loadings", loadings},
                         {"factors", matrix_json(sim.truth.factors)}};
    out.write("truth.json", truth.dump(2) + "\n");
    write_manifest(out, opt, cfg, dgp.seed, threads,
                   {{"rows", sim.data.observations()}, {"data_hash", bc::panel_hash(sim.data)}});
    log(opt, "wrote " + std::to_string(sim.data.observations()) + " rows to " + (out.path() / "panel.csv").string());
    return 0;
}

// ----------------------------------------------------------------- estimate

int cmd_estimate(const Options& opt, const bc::RunConfig& cfg) {
    bc::ModelSpec spec = need(cfg.model, "model", opt.command);
    if (opt.seed) spec.mcmc.seed = *opt.seed;
    const int threads = thread_count(opt, cfg);
    const bc::PanelData full = load_panel(cfg, opt.command);
    const std::string data_hash = bc::panel_hash(full);
    std::optional<bc::PanelData> stripped;
    if (!spec.endogenous && full.has_instruments()) {
        log(opt, "notice: Exo model, so the instrument columns (zp_*) are ignored");
        stripped = full.without_instruments();
    }
    const bc::PanelData& data = stripped ? *stripped : full;
    const bc::GibbsSampler sampler(data, spec, threads);
    for (const auto& w : sampler.warnings()) {
        if (w.find("instrument") == std::string::npos) log(opt, "warning: " + w);
    }
    std::optional<bc::ParameterState> resume;
    const std::string mhash = bc::model_hash(spec);
    if (cfg.resume) {
        auto st = bc::read_state_file(cfg.resolve(*cfg.resume));
        if (st.model_hash != mhash) {
            throw bc::ConfigError("resume state was produced by a different model spec or seed (hash " + st.model_hash +
                                  ", expected " + mhash + ")");
        }
        if (st.data_hash != data_hash) throw bc::DataError("resume state was produced from different data");
        if (st.state.sweep > static_cast<std::uint64_t>(spec.mcmc.burn_in) + static_cast<std::uint64_t>(spec.mcmc.draws)) {
            throw bc::ConfigError("resume state is already past burn_in + draws");
        }
        log(opt, "resuming at sweep " + std::to_string(st.state.sweep));
        resume = std::move(st.state);
    }
    const std::uint64_t total = static_cast<std::uint64_t>(spec.mcmc.burn_in) + static_cast<std::uint64_t>(spec.mcmc.draws);
    log(opt, std::string("estimating ") + bc::to_string(spec.structure) + (spec.endogenous ? "-Endo" : "-Exo") +
                 " with L=" + std::to_string(sampler.factors()) + ", " + std::to_string(total) + " sweeps, " +
                 std::to_string(threads) + " thread(s)");
    std::uint64_t next_report = 0;
    const auto start = std::chrono::steady_clock::now();
    auto result = sampler.run(std::move(resume), [&](std::uint64_t s, std::uint64_t n) {
        if (s < next_report && s != n) return;
        next_report = s + std::max<std::uint64_t>(1, n / 10);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char buf[96];
        std::snprintf(buf, sizeof buf, "sweep %llu/%llu (%.1fs)", static_cast<unsigned long long>(s),
                      static_cast<unsigned long long>(n), secs);
        log(opt, buf);
    });
    auto& chain = result.chain;
    chain.info.spec_hash = bc::spec_hash(spec);
    chain.info.data_hash = data_hash;
    OutputDir out(output_dir(opt, cfg));
    out.write("chain.bcc", bc::serialize_chain({chain, spec}));
    out.write("state.bcs", bc::serialize_state({result.final_state, mhash, data_hash}));
    if (chain.draws() > 0) {
        out.write("summary.csv", bc::summary_csv(bc::summarize(chain)));
    } else {
        log(opt, "no draws kept, so no summary is written");
    }
    write_manifest(out, opt, cfg, spec.mcmc.seed, threads,
                   {{"data_hash", data_hash},
                    {"spec_hash", chain.info.spec_hash},
                    {"model_hash", mhash},
                    {"draws", chain.draws()},
                    {"resumed_from_sweep", cfg.resume ? bc::Json(chain.sweeps.empty() ? 0 : chain.sweeps.front()) : bc::Json(nullptr)}});
    log(opt, "kept " + std::to_string(chain.draws()) + " draws in " + std::to_string(chain.info.wall_seconds) + "s");
    return 0;
}

// ------------------------------------------------------------------ predict

std::string share_rows(const std::string& label, const bc::ChoiceSet& cs, const bc::ShareTable& t) {
    std::string out;
    for (int r = 0; r < cs.size(); ++r) {
        out += label + ",bundle," + (r == 0 ? std::string("outside") : cs.label(r)) + "," + bc::format_double(t.bundles[r]) + "," +
               bc::format_double(t.bundles_sd[r]) + "\n";
    }
    for (int j = 0; j < cs.goods(); ++j) {
        out += label + ",good," + std::to_string(j + 1) + "," + bc::format_double(t.goods[j]) + "," + bc::format_double(t.goods_sd[j]) + "\n";
    }
    return out;
}

int cmd_predict(const Options& opt, const bc::RunConfig& cfg) {
    const auto chain_path = cfg.resolve(need(cfg.chain, "chain", opt.command));
    const bc::StoredChain stored = bc::read_chain_file(chain_path);
    const auto& chain = stored.chain;
    const bc::PanelData full = load_panel(cfg, opt.command);
    const std::string data_hash = bc::panel_hash(full);
    if (data_hash != chain.info.data_hash) {
        throw bc::DataError("refusing to predict: the data hash " + data_hash + " differs from the chain's " +
                            chain.info.data_hash + " (the chain was estimated on another panel)");
    }
    if (bc::spec_hash(stored.spec) != chain.info.spec_hash) {
        throw bc::DataError("refusing to predict: the chain header is inconsistent (spec hash mismatch)");
    }
    if (cfg.model) {
        bc::ModelSpec expected = *cfg.model;
        if (bc::spec_hash(expected) != chain.info.spec_hash) {
            throw bc::ConfigError("refusing to predict: the config's model spec hashes to " + bc::spec_hash(expected) +
                                  " but the chain was produced by spec " + chain.info.spec_hash);
        }
    }
    if (chain.draws() == 0) throw bc::UsageError("the chain holds no draws");
    bc::PredictSettings ps = cfg.predict.value_or(bc::PredictSettings{});
    if (opt.seed) ps.options.seed = *opt.seed;
    const int threads = thread_count(opt, cfg);
    ps.options.threads = threads;
    const bc::PanelData data = stored.spec.endogenous ? full : full.without_instruments();
    const bc::ParamLayout layout(data.shape(), stored.spec.endogenous, stored.spec.sharing);
    if (layout.names() != chain.info.theta_names) throw bc::DataError("chain parameters do not match the panel's layout");
    const bc::ChainSource source(chain, ps.max_draws, ps.options.seed);
    const bc::PredictiveEngine engine(layout, data, source, ps.options);
    const bc::ChoiceSet cs(data.goods());
    log(opt, "predicting with " + std::to_string(source.size()) + " posterior draws");

    OutputDir out(output_dir(opt, cfg));
    std::string shares = "scenario,level,item,share,sd\n";
    bc::Json sj = bc::Json::object();
    auto add = [&](const bc::Scenario& sc) {
        const auto t = engine.shares(sc);
        shares += share_rows(sc.label, cs, t);
        sj[sc.label] = {{"bundles", std::vector<double>(t.bundles.data(), t.bundles.data() + t.bundles.size())},
                        {"goods", std::vector<double>(t.goods.data(), t.goods.data() + t.goods.size())}};
    };
    add(bc::Scenario{});
    for (const auto& sc : ps.scenarios) {
        if (sc.label == "baseline") throw bc::ConfigError("scenario label 'baseline' is reserved");
        add(sc);
    }
    out.write("shares.csv", shares);
    bc::Json result{{"draws", source.size()}, {"shares", sj}};
    if (ps.elasticities) {
        const auto e = engine.elasticities();
        std::string csv = "level,price_good,item,elasticity,se,undefined_draws\n";
        for (Eigen::Index a = 0; a < e.goods.rows(); ++a) {
            for (Eigen::Index b = 0; b < e.goods.cols(); ++b) {
                csv += "good," + std::to_string(a + 1) + "," + std::to_string(b + 1) + "," + bc::format_double(e.goods(a, b)) + "," +
                       bc::format_double(e.goods_se(a, b)) + "," + std::to_string(e.undefined_goods(a, b)) + "\n";
            }
        }
        for (Eigen::Index a = 0; a < e.bundles.rows(); ++a) {
            for (Eigen::Index b = 0; b < e.bundles.cols(); ++b) {
                csv += "bundle," + std::to_string(a + 1) + "," + cs.label(static_cast<int>(b) + 1) + "," +
                       bc::format_double(e.bundles(a, b)) + "," + bc::format_double(e.bundles_se(a, b)) + "," +
                       std::to_string(e.undefined_bundles(a, b)) + "\n";
            }
        }
        out.write("elasticities.csv", csv);
        std::vector<std::string> labels;
        for (int r = 1; r < cs.size(); ++r) labels.push_back(cs.label(r));
        const bc::Json ej{{"goods", matrix_json(e.goods)},
                          {"goods_se", matrix_json(e.goods_se)},
                          {"bundles", matrix_json(e.bundles)},
                          {"bundles_se", matrix_json(e.bundles_se)},
                          {"bundle_labels", labels},
                          {"step", ps.options.step},
                          {"draws", e.draws},
                          {"diagnostics", e.diagnostics}};
        out.write("elasticities.json", ej.dump(2) + "\n");
        for (const auto& d : e.diagnostics) log(opt, "diagnostic: " + d);
    }
    out.write("predict.json", result.dump(2) + "\n");
    write_manifest(out, opt, cfg, ps.options.seed, threads, {{"data_hash", data_hash}, {"spec_hash", chain.info.spec_hash}});
    return 0;
}

// ----------------------------------------------------------------- mc-study

int cmd_mc_study(const Options& opt, const bc::RunConfig& cfg) {
    bc::StudySettings st = need(cfg.study, "study", opt.command);
    if (opt.seed) st.seed = *opt.seed;
    const bc::DgpConfig dgp = cfg.dgp.value_or(bc::DgpConfig{});
    const int threads = thread_count(opt, cfg);
    log(opt, "study: " + std::to_string(st.trials) + " trial(s) x " + std::to_string(st.sizes.size()) + " size(s) x " +
                 std::to_string(st.models.size()) + " model(s) on " + std::to_string(threads) + " thread(s)");
    const auto result = bc::run_study(dgp, st, threads, [&](const bc::TrialRecord& r) {
        log(opt, r.model + " N=" + std::to_string(r.size) + " trial " + std::to_string(r.trial + 1) +
                     (r.ok ? " done in " + std::to_string(r.seconds) + "s" : " FAILED: " + r.error));
    });
    OutputDir out(output_dir(opt, cfg));
    out.write("rmse.csv", bc::study_rmse_csv(result));
    out.write("trials.csv", bc::study_trials_csv(result));
    bc::Json cells = bc::Json::array();
    std::size_t failed = 0;
    for (const auto& c : result.cells) {
        failed += c.trials_failed;
        cells.push_back({{"model", c.model},
                         {"N", c.size},
                         {"trials_ok", c.trials_ok},
                         {"trials_failed", c.trials_failed},
                         {"alpha_covered", c.alpha_covered},
                         {"rmse", matrix_json(c.rmse)},
                         {"rmse_se", matrix_json(c.rmse_se)}});
    }
    const bc::Json summary{{"complete", !result.any_failed},
                           {"failed_trials", failed},
                           {"mean_truth", matrix_json(result.mean_truth)},
                           {"cells", cells}};
    out.write("study.json", summary.dump(2) + "\n");
    write_manifest(out, opt, cfg, st.seed, threads);
    for (const auto& c : result.cells) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-14s N=%-6zu RMSE(E11)=%.4f (se %.4f)  alpha covered %zu/%zu", c.model.c_str(), c.size,
                      c.rmse(0, 0), c.rmse_se(0, 0), c.alpha_covered, c.trials_ok);
        log(opt, buf);
    }
    if (result.any_failed) log(opt, "warning: " + std::to_string(failed) + " trial fit(s) failed and were excluded");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian bundle-choice demand: simulate, estimate, predict and Monte-Carlo studies"};
    app.require_subcommand(1);
    Options opt;
    const std::map<std::string, int (*)(const Options&, const bc::RunConfig&)> commands{
        {"simulate", cmd_simulate}, {"estimate", cmd_estimate}, {"predict", cmd_predict}, {"mc-study", cmd_mc_study}};
    const std::map<std::string, std::string> help{
        {"simulate", "simulate a synthetic panel from the data-generating process"},
        {"estimate", "run the Gibbs sampler and store the posterior chain"},
        {"predict", "posterior-predictive shares, scenarios and price elasticities"},
        {"mc-study", "Monte-Carlo comparison of models across sample sizes"}};
    std::uint64_t seed = 0;
    std::string out;
    int threads = 0;
    std::string config;
    for (const auto& [name, _] : commands) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--config", config, "JSON run configuration")->required();
        sub->add_option("--seed", seed, "override the configured seed");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--threads", threads, "worker threads (0 = all cores, capped by BUNDLECHOICE_THREADS)");
        sub->add_flag("--quiet", opt.quiet, "suppress progress messages");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    for (auto* sub : app.get_subcommands()) {
        opt.command = sub->get_name();
        if (sub->count("--seed") > 0) opt.seed = seed;
        if (sub->count("--out") > 0) opt.out = out;
        if (sub->count("--threads") > 0) opt.threads = threads;
    }
    opt.config = config;
    try {
        const auto cfg = bc::load_run_config(opt.config);
        return commands.at(opt.command)(opt, cfg);
    } catch (const bc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
