#include <bundlechoice/io_util.hpp>

#include <json.hpp>
#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using bundlechoice::read_file;
using bundlechoice::write_file;
using Json = nlohmann::json;

namespace {

struct Run {
    int code;
    std::string output;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(BC_CLI_PATH) + " " + args + " 2>&1";
    Run r{-1, {}};
    FILE* p = popen(cmd.c_str(), "r");
    if (p == nullptr) return r;
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), static_cast<int>(buf.size()), p) != nullptr) r.output += buf.data();
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("bc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string config(const std::string& name, const Json& j) const {
        write_file(dir / name, j.dump(2));
        return (dir / name).string();
    }

    /// Simulated panel in dir/data.
    void simulate(int N = 12, int T = 2) const {
        const auto c = config("sim.json", {{"dgp", {{"individuals", N}, {"periods", T}, {"seed", 3}}}, {"out", "data"}});
        ASSERT_EQ(cli("simulate --config " + c + " --quiet").code, 0);
    }

    static Json model(bool endo = true, int burn = 5, int draws = 6) {
        return {{"structure", "TVFA"},
                {"endogenous", endo},
                {"sharing", {{"utility", {"p"}}, {"bundle", {"w1"}}}},
                {"mcmc", {{"burn_in", burn}, {"draws", draws}, {"seed", 4}}}};
    }

    fs::path dir;
};

} // namespace

TEST_F(Cli, SimulateWritesFilesDeterministically) {
    const auto c = config("sim.json", {{"dgp", {{"individuals", 10}, {"periods", 2}}}, {"seed", 5}, {"out", "a"}});
    const auto r = cli("simulate --config " + c);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto panel = read_file(dir / "a/panel.csv");
    EXPECT_EQ(std::count(panel.begin(), panel.end(), '\n'), 21);
    const auto truth = Json::parse(read_file(dir / "a/truth.json"));
    EXPECT_EQ(truth["alpha"], -1.0);
    EXPECT_EQ(truth["theta"]["p_*"], -1.0);
    const auto manifest = Json::parse(read_file(dir / "a/manifest.json"));
    EXPECT_EQ(manifest["command"], "simulate");
    EXPECT_TRUE(manifest["outputs"].contains("panel.csv"));
    ASSERT_EQ(cli("simulate --config " + c + " --out " + (dir / "b").string() + " --threads 3 --quiet").code, 0);
    EXPECT_EQ(read_file(dir / "b/panel.csv"), panel);
    EXPECT_EQ(read_file(dir / "b/truth.json"), read_file(dir / "a/truth.json"));
    ASSERT_EQ(cli("simulate --config " + c + " --out " + (dir / "c").string() + " --seed 6 --quiet").code, 0);
    EXPECT_NE(read_file(dir / "c/panel.csv"), panel);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("simulate").code, 2);  // --config is required
    EXPECT_EQ(cli("simulate --config " + (dir / "none.json").string()).code, 5);
    write_file(dir / "bad.json", "{");
    EXPECT_EQ(cli("simulate --config " + (dir / "bad.json").string()).code, 2);
    const auto unknown = cli("simulate --config " + config("u.json", {{"dgp", {{"individual", 3}}}}));
    EXPECT_EQ(unknown.code, 2);
    EXPECT_NE(unknown.output.find("unknown key 'individual'"), std::string::npos) << unknown.output;
    EXPECT_EQ(cli("estimate --config " + config("m.json", {{"data", "x.csv"}})).code, 2);  // no model section
    // Output path below a regular file cannot be created.
    write_file(dir / "blocker", "x");
    EXPECT_EQ(cli("simulate --config " + config("s.json", {{"dgp", {{"individuals", 2}, {"periods", 1}}}}) + " --out " +
                  (dir / "blocker/sub").string())
                  .code,
              5);
}

TEST_F(Cli, MalformedCsvReportsLine) {
    simulate(3, 2);
    auto text = read_file(dir / "data/panel.csv");
    const auto second = text.find('\n', text.find('\n') + 1);
    text.insert(second + 1, "1,7,oops\n");
    write_file(dir / "bad.csv", text);
    const auto r = cli("estimate --config " + config("e.json", {{"data", "bad.csv"}, {"model", model()}}));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.output.find("bad.csv:3:"), std::string::npos) << r.output;
}

TEST_F(Cli, VariantDataMismatch) {
    simulate();
    // Endo on a panel without instruments is a config error.
    auto text = read_file(dir / "data/panel.csv");
    std::string stripped;
    {
        std::istringstream in(text);
        std::string line;
        std::vector<bool> keep;
        bool header = true;
        while (std::getline(in, line)) {
            std::vector<std::string> cells;
            std::string cell;
            std::istringstream ls(line);
            while (std::getline(ls, cell, ',')) cells.push_back(cell);
            if (!line.empty() && line.back() == ',') cells.emplace_back();
            if (header) {
                for (const auto& c : cells) keep.push_back(c.rfind("zp_", 0) != 0);
                header = false;
            }
            std::string out;
            for (std::size_t k = 0; k < cells.size(); ++k) {
                if (!keep[k]) continue;
                if (k > 0) out += ',';
                out += cells[k];
            }
            stripped += out + "\n";
        }
    }
    write_file(dir / "noinst.csv", stripped);
    const auto r = cli("estimate --config " + config("e.json", {{"data", "noinst.csv"}, {"model", model()}}));
    EXPECT_EQ(r.code, 2) << r.output;
    EXPECT_NE(r.output.find("instrument"), std::string::npos);
    // Exo on a panel with instruments runs and says so.
    const auto exo = cli("estimate --config " + config("x.json", {{"data", "data/panel.csv"}, {"model", model(false)}, {"out", "exo"}}));
    EXPECT_EQ(exo.code, 0) << exo.output;
    EXPECT_NE(exo.output.find("notice: Exo model"), std::string::npos);
}

TEST_F(Cli, EstimateSmokeAndThreadInvariance) {
    simulate(40, 3);
    const auto c = config("e.json", {{"data", "data/panel.csv"}, {"model", model(true, 10, 10)}});
    const auto one = cli("estimate --config " + c + " --out " + (dir / "t1").string() + " --threads 1");
    ASSERT_EQ(one.code, 0) << one.output;
    ASSERT_EQ(cli("estimate --config " + c + " --out " + (dir / "t4").string() + " --threads 4 --quiet").code, 0);
    EXPECT_EQ(read_file(dir / "t1/chain.bcc"), read_file(dir / "t4/chain.bcc"));
    EXPECT_EQ(read_file(dir / "t1/summary.csv"), read_file(dir / "t4/summary.csv"));
    EXPECT_EQ(read_file(dir / "t1/state.bcs"), read_file(dir / "t4/state.bcs"));
    const auto summary = read_file(dir / "t1/summary.csv");
    EXPECT_EQ(summary.substr(0, summary.find('\n')), "parameter,mean,sd,q2.5,q50,q97.5,split_rhat");
    const auto manifest = Json::parse(read_file(dir / "t1/manifest.json"));
    EXPECT_EQ(manifest["draws"], 10);
    EXPECT_EQ(manifest["threads"], 1);
    // predict is also thread invariant
    const auto p = config("p.json", {{"data", "data/panel.csv"}, {"chain", "t1/chain.bcc"},
                                     {"predict", {{"max_draws", 5}, {"scenarios", {{{"label", "tax"}, {"price_multipliers", {1.2, 1, 1}}}}}}}});
    ASSERT_EQ(cli("predict --config " + p + " --out " + (dir / "p1").string() + " --threads 1 --quiet").code, 0);
    ASSERT_EQ(cli("predict --config " + p + " --out " + (dir / "p3").string() + " --threads 3 --quiet").code, 0);
    for (const char* f : {"shares.csv", "elasticities.csv", "elasticities.json"}) {
        EXPECT_EQ(read_file(dir / "p1" / f), read_file(dir / "p3" / f)) << f;
    }
}

TEST_F(Cli, ResumeContinuesTheChain) {
    simulate(15, 2);
    auto m = model(true, 6, 8);
    const auto straight = config("s.json", {{"data", "data/panel.csv"}, {"model", m}, {"out", "straight"}});
    ASSERT_EQ(cli("estimate --quiet --config " + straight).code, 0);
    m["mcmc"]["draws"] = 3;
    ASSERT_EQ(cli("estimate --quiet --config " + config("a.json", {{"data", "data/panel.csv"}, {"model", m}, {"out", "part"}})).code, 0);
    m["mcmc"]["draws"] = 8;
    const auto rest = cli("estimate --config " + config("b.json", {{"data", "data/panel.csv"}, {"model", m}, {"resume", "part/state.bcs"}, {"out", "rest"}}));
    ASSERT_EQ(rest.code, 0) << rest.output;
    EXPECT_NE(rest.output.find("resuming at sweep 9"), std::string::npos) << rest.output;
    EXPECT_EQ(read_file(dir / "straight/state.bcs"), read_file(dir / "rest/state.bcs"));
    // A different seed is not a continuation.
    m["mcmc"]["seed"] = 99;
    EXPECT_EQ(cli("estimate --quiet --config " + config("c.json", {{"data", "data/panel.csv"}, {"model", m}, {"resume", "part/state.bcs"}, {"out", "x"}})).code, 2);
}

TEST_F(Cli, PredictOutputsAndRefusals) {
    simulate(20, 2);
    ASSERT_EQ(cli("estimate --quiet --config " + config("e.json", {{"data", "data/panel.csv"}, {"model", model()}, {"out", "est"}})).code, 0);
    const Json pred = {{"max_draws", 6}, {"scenarios", {{{"label", "same"}, {"price_multipliers", {1, 1, 1}}},
                                                        {{"label", "tax"}, {"price_multipliers", {1.5, 1, 1}}}}}};
    const auto r = cli("predict --config " + config("p.json", {{"data", "data/panel.csv"}, {"chain", "est/chain.bcc"}, {"predict", pred}, {"out", "pr"}}));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto e = Json::parse(read_file(dir / "pr/elasticities.json"));
    EXPECT_EQ(e["goods"].size(), 3u);
    EXPECT_EQ(e["goods"][0].size(), 3u);
    EXPECT_EQ(e["bundles"].size(), 3u);
    EXPECT_EQ(e["bundles"][0].size(), 7u);
    const auto shares = read_file(dir / "pr/shares.csv");
    auto share_of = [&](const std::string& prefix) {
        const auto at = shares.find(prefix);
        EXPECT_NE(at, std::string::npos) << prefix;
        const auto start = at + prefix.size();
        return std::stod(shares.substr(start, shares.find(',', start) - start));
    };
    EXPECT_EQ(share_of("\nbaseline,good,1,"), share_of("\nsame,good,1,"));
    EXPECT_LT(share_of("\ntax,good,1,"), share_of("\nbaseline,good,1,"));
    // Different panel: data error.
    const auto other = config("sim2.json", {{"dgp", {{"individuals", 20}, {"periods", 2}, {"seed", 4}}}, {"out", "data2"}});
    ASSERT_EQ(cli("simulate --quiet --config " + other).code, 0);
    const auto d = cli("predict --config " + config("q.json", {{"data", "data2/panel.csv"}, {"chain", "est/chain.bcc"}}));
    EXPECT_EQ(d.code, 3);
    EXPECT_NE(d.output.find("refusing to predict"), std::string::npos);
    // Config naming a different model: config error.
    auto m = model();
    m["priors"] = {{"loading_variance", 2.0}};
    const auto s = cli("predict --config " + config("s.json", {{"data", "data/panel.csv"}, {"chain", "est/chain.bcc"}, {"model", m}}));
    EXPECT_EQ(s.code, 2);
    // "baseline" is reserved.
    const auto b = cli("predict --config " + config("b.json", {{"data", "data/panel.csv"}, {"chain", "est/chain.bcc"},
                                                              {"predict", {{"scenarios", {{{"label", "baseline"}}}}}}}));
    EXPECT_EQ(b.code, 2);
}

TEST_F(Cli, TinyStudy) {
    const Json fa_exo = {{"structure", "FA"}, {"endogenous", false}, {"sharing", {{"utility", {"p"}}, {"bundle", {"w1"}}}}};
    Json models = Json::array();
    models.push_back({{"name", "TVFA-Endo"}, {"model", model()}});
    models.push_back({{"name", "FA-Exo"}, {"model", fa_exo}});
    const Json study = {{"trials", 1},
                        {"sizes", {15}},
                        {"truth_reps", 2},
                        {"max_draws", 3},
                        {"mcmc", {{"burn_in", 3}, {"draws", 3}}},
                        {"models", models}};
    const auto r = cli("mc-study --config " + config("m.json", {{"dgp", {{"periods", 2}}}, {"study", study}, {"out", "st"}}));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto rmse = read_file(dir / "st/rmse.csv");
    EXPECT_EQ(std::count(rmse.begin(), rmse.end(), '\n'), 1 + 2 * 9);
    EXPECT_EQ(rmse.find("nan"), std::string::npos);
    EXPECT_EQ(rmse.find("NaN"), std::string::npos);
    const auto js = Json::parse(read_file(dir / "st/study.json"));
    EXPECT_TRUE(js["complete"].get<bool>());
}
