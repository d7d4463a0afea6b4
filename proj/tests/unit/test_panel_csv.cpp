#include "test_support.hpp"

#include <bundlechoice/panel_csv.hpp>

#include <gtest/gtest.h>

using namespace bundlechoice;
using bctest::random_panel;

namespace {

std::string minimal_header() { return "i,t,choice,p_1,z_1_1,z_2_1,w_1_2_1\n"; }

} // namespace

TEST(Panel, SortsAndIndexesUnbalanced) {
    PanelShape s{2, 1, {1, 1}, {1}, {}};
    std::vector<ObservationRow> rows;
    auto row = [](std::int64_t i, std::int64_t t, int y) {
        ObservationRow r;
        r.individual = i;
        r.period = t;
        r.choice = y;
        r.prices = {1.0};
        r.z = {{1.0}, {2.0}};
        r.w = {{1.0}};
        return r;
    };
    rows.push_back(row(7, 3, 1));
    rows.push_back(row(2, 5, 0));
    rows.push_back(row(7, 1, 3));
    const PanelData d(s, rows);
    EXPECT_EQ(d.individuals(), 2u);
    EXPECT_EQ(d.observations(), 3u);
    EXPECT_EQ(d.periods(), 3);  // labels 1, 3, 5
    EXPECT_EQ(d.individual_id(0), 2);
    EXPECT_EQ(d.periods_of(0), 1u);
    EXPECT_EQ(d.periods_of(1), 2u);
    EXPECT_EQ(d.period_label(d.period(1)), 1);
    EXPECT_EQ(d.choice(1), 3);
    EXPECT_EQ(d.max_periods_per_individual(), 2u);
}

TEST(Panel, RejectsDuplicatesAndBadShapes) {
    PanelShape s{2, 1, {1, 1}, {1}, {}};
    ObservationRow r;
    r.individual = 1;
    r.period = 1;
    r.prices = {1.0};
    r.z = {{1.0}, {2.0}};
    r.w = {{1.0}};
    EXPECT_THROW(PanelData(s, {r, r}), DataError);
    ObservationRow bad = r;
    bad.z = {{1.0, 2.0}, {2.0}};
    EXPECT_THROW(PanelData(s, {bad}), DataError);
    ObservationRow badchoice = r;
    badchoice.choice = 4;
    EXPECT_THROW(PanelData(s, {badchoice}), DataError);
}

TEST(PanelCsv, RoundTripIsByteStable) {
    const auto d = random_panel(3, 2, 25, 4, true, 5, true);
    const std::string a = write_panel_csv(d);
    const auto back = read_panel_csv(a);
    const std::string b = write_panel_csv(back);
    EXPECT_EQ(a, b);
    EXPECT_EQ(panel_hash(d), panel_hash(back));
    ASSERT_EQ(back.observations(), d.observations());
    for (std::size_t o = 0; o < d.observations(); ++o) {
        EXPECT_EQ(back.choice(o), d.choice(o));
        for (int k = 0; k < 2; ++k) EXPECT_EQ(back.price(o, k), d.price(o, k));  // exact
    }
}

TEST(PanelCsv, SimulatedPanelRoundTrip) {
    const auto sim = bctest::small_dgp(30, 3);
    const std::string a = write_panel_csv(sim.data);
    EXPECT_EQ(write_panel_csv(read_panel_csv(a)), a);
    // Header follows the documented schema.
    EXPECT_EQ(a.substr(0, a.find('\n')).substr(0, 33), "i,t,choice,p_1,p_2,p_3,z_1_1,z_1_");
}

TEST(PanelCsv, ChoiceEncoding) {
    const std::string text = minimal_header() + "1,1,,1.5,1,1,0\n1,2,1+2,1.5,1,1,0\n1,3,2,1.5,1,1,0\n";
    const auto d = read_panel_csv(text);
    EXPECT_EQ(d.choice(0), 0);
    EXPECT_EQ(d.choice(1), 3);
    EXPECT_EQ(d.choice(2), 2);
    EXPECT_FALSE(d.has_instruments());
}

TEST(PanelCsv, AcceptsCrlfQuotesAndColumnOrder) {
    const std::string text = "t,i,choice,z_2_1,z_1_1,w_1_2_1,p_1\r\n1,1,\"2+1\",1,1,0,2\r\n";
    const auto d = read_panel_csv(text);
    EXPECT_EQ(d.choice(0), 3);
    EXPECT_EQ(d.price(0, 0), 2.0);
}

TEST(PanelCsv, ErrorsCarryLineNumbers) {
    auto message = [](const std::string& text) {
        try {
            (void)read_panel_csv(text, std::nullopt, "f.csv");
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(minimal_header() + "1,1,,1.5,1,1,0\n1,2,,abc,1,1,0\n").find("f.csv:3"), std::string::npos);
    EXPECT_NE(message(minimal_header() + "1,1,,1.5,1,1\n").find("f.csv:2"), std::string::npos);
    EXPECT_NE(message(minimal_header() + "1,1,4,1.5,1,1,0\n").find("f.csv:2"), std::string::npos);
    EXPECT_NE(message(minimal_header() + "1,x,,1.5,1,1,0\n").find("f.csv:2"), std::string::npos);
    EXPECT_NE(message("i,t,choice,q_1\n1,1,,2\n").find("unknown column"), std::string::npos);
    EXPECT_NE(message("i,t,p_1\n1,1,2\n").find("choice"), std::string::npos);
    EXPECT_NE(message("i,t,choice,z_1_2\n1,1,,2\n").find("without gaps"), std::string::npos);
    EXPECT_NE(message(minimal_header() + "1,1,,nan,1,1,0\n").find("finite"), std::string::npos);
    EXPECT_NE(message(minimal_header()).find("no observations"), std::string::npos);
    EXPECT_NE(message(minimal_header() + "1,1,,1,1,1,0\n1,1,,1,1,1,0\n").find("duplicate"), std::string::npos);
}

TEST(PanelCsv, GoodsOverride) {
    const std::string text = "i,t,choice,z_1_1\n1,1,1+2,1\n";
    EXPECT_THROW((void)read_panel_csv(text), DataError);  // only one good inferred
    const auto d = read_panel_csv(text, 2);
    EXPECT_EQ(d.goods(), 2);
    EXPECT_EQ(d.choice(0), 3);
}

TEST(FormatDouble, ShortestRoundTrip) {
    RngStream rng(1, 1);
    for (int k = 0; k < 10000; ++k) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform_int(-300, 300));
        double back = 0.0;
        ASSERT_TRUE(parse_double(format_double(v), back));
        ASSERT_EQ(back, v);
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(1.0), "1");
}

TEST(Hash, Fnv1aKnownValues) {
    EXPECT_EQ(hash_text(""), "cbf29ce484222325");
    EXPECT_EQ(hash_text("a"), "af63dc4c8601ec8c");
}
