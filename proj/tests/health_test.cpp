#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "medtax/health.hpp"
#include "test_util.hpp"

using namespace medtax;

namespace {

MentionRecord rec(const std::string &user, const std::string &loc, std::vector<std::string> conds) {
    MentionRecord m;
    m.doc_id = user + "-" + std::to_string(conds.size());
    m.user_id = user;
    m.location = loc;
    m.conditions = canonical_conditions(conds);
    return m;
}

// Three states with five mentioning users each. Category {x, y}; c(x) = 0.2, c(y) = 0.5.
//   A: {x} {x,y} {y} {other} {x}
//   B: {x} {other} x4
//   C: {y} {x} {other} x3
std::vector<MentionRecord> fixture() {
    std::vector<MentionRecord> r{
        rec("a1", "A", {"x"}),     rec("a2", "A", {"x", "y"}), rec("a3", "A", {"y"}),
        rec("a4", "A", {"other"}), rec("a5", "A", {"x"}),      rec("b1", "B", {"x"}),
        rec("b2", "B", {"other"}), rec("b3", "B", {"other"}),  rec("b4", "B", {"other"}),
        rec("b5", "B", {"other"}), rec("c1", "C", {"y"}),      rec("c2", "C", {"x"}),
        rec("c3", "C", {"other"}), rec("c4", "C", {"other"}),  rec("c5", "C", {"other"}),
    };
    // A user without a location never counts.
    MentionRecord lost;
    lost.doc_id = "z";
    lost.user_id = "z1";
    lost.conditions = {"x"};
    r.push_back(lost);
    return r;
}

const std::unordered_map<std::string, double> kCentrality{{"x", 0.2}, {"y", 0.5}, {"other", 0.1}};
const CategorySpec kSpec{"cat", {"x", "y"}};

FractionTable fraction(const std::vector<MentionRecord> &r, int rho, Aggregation agg,
                       Denominator den = Denominator::mentioning_users) {
    auto loc = user_locations_from_records(r);
    return category_fraction(r, loc, population_of(r, loc, den), kSpec, kCentrality, {rho, agg, den});
}

FractionTable table(std::map<std::string, double> values) {
    FractionTable ft;
    ft.category_id = "t";
    ft.values = std::move(values);
    return ft;
}

} // namespace

TEST(Fraction, RhoZeroIsFractionOfMentioningUsers) {
    auto ft = fraction(fixture(), 0, Aggregation::max);
    EXPECT_EQ(ft.values, (std::map<std::string, double>{{"A", 0.8}, {"B", 0.2}, {"C", 0.4}}));
    EXPECT_EQ(ft.users.at("A"), 5u);
}

TEST(Fraction, RhoOneVariantsMatchHandTable) {
    auto max = fraction(fixture(), 1, Aggregation::max);
    EXPECT_NEAR(max.values.at("A"), (0.2 + 0.5 + 0.5 + 0.0 + 0.2) / 5, 1e-15);
    EXPECT_NEAR(max.values.at("B"), 0.2 / 5, 1e-15);
    EXPECT_NEAR(max.values.at("C"), (0.5 + 0.2) / 5, 1e-15);
    auto sum = fraction(fixture(), 1, Aggregation::sum);
    EXPECT_NEAR(sum.values.at("A"), (0.2 + 0.7 + 0.5 + 0.2) / 5, 1e-15);
    auto mean = fraction(fixture(), 1, Aggregation::mean);
    EXPECT_NEAR(mean.values.at("A"), (0.2 + 0.35 + 0.5 + 0.2) / 5, 1e-15);
}

TEST(Fraction, MaxPicksLargestCentrality) {
    std::vector<MentionRecord> r{rec("u", "L", {"x", "y"})};
    auto loc = user_locations_from_records(r);
    auto ft = category_fraction(r, loc, population_of(r, loc, Denominator::mentioning_users), kSpec,
                                {{"x", 0.02}, {"y", 0.05}}, {1, Aggregation::max, Denominator::mentioning_users});
    EXPECT_DOUBLE_EQ(ft.values.at("L"), 0.05);
}

TEST(Fraction, MissingCentralityCountsAsZero) {
    std::vector<MentionRecord> r{rec("u", "L", {"x"})};
    auto loc = user_locations_from_records(r);
    auto ft = category_fraction(r, loc, population_of(r, loc, Denominator::mentioning_users), kSpec, {},
                                {1, Aggregation::max, Denominator::mentioning_users});
    EXPECT_EQ(ft.values.at("L"), 0.0);
}

TEST(Fraction, AllUsersDenominatorCountsSilentUsers) {
    auto r = fixture();
    r.push_back(rec("a6", "A", {}));
    EXPECT_DOUBLE_EQ(fraction(r, 0, Aggregation::max).values.at("A"), 0.8);
    EXPECT_DOUBLE_EQ(fraction(r, 0, Aggregation::max, Denominator::all_users).values.at("A"), 4.0 / 6.0);
}

TEST(Fraction, EmptyLocationExcludedWithReason) {
    auto r = fixture();
    r.push_back(rec("d1", "D", {}));
    auto ft = fraction(r, 0, Aggregation::max);
    EXPECT_FALSE(ft.values.count("D"));
    EXPECT_EQ(ft.excluded.at("D"), "no users");
}

TEST(Fraction, RejectsBadParameters) {
    auto r = fixture();
    auto loc = user_locations_from_records(r);
    auto pop = population_of(r, loc, Denominator::mentioning_users);
    EXPECT_THROW(category_fraction(r, loc, pop, kSpec, kCentrality, {2, Aggregation::max, {}}), ValidationError);
    EXPECT_THROW(category_fraction(r, loc, pop, {"e", {}}, kCentrality, {}), ValidationError);
}

TEST(Fraction, UniformCentralityReproducesRhoZeroRanking) {
    std::unordered_map<std::string, double> flat{{"x", 0.3}, {"y", 0.3}, {"other", 0.3}};
    auto r = fixture();
    auto loc = user_locations_from_records(r);
    auto pop = population_of(r, loc, Denominator::mentioning_users);
    auto one = category_fraction(r, loc, pop, kSpec, flat, {1, Aggregation::max, {}});
    auto zero = category_fraction(r, loc, pop, kSpec, flat, {0, Aggregation::max, {}});
    for (const auto &[l, v] : zero.values)
        EXPECT_NEAR(one.values.at(l), 0.3 * v, 1e-15);
}

TEST(OutlierFilter, RemovesExtremeLocation) {
    std::map<std::string, double> v;
    for (int i = 0; i < 6; ++i)
        v["s" + std::to_string(i)] = 1.0;
    v["x"] = 100.0;
    auto ft = score_outlier_filter(table(v));
    EXPECT_FALSE(ft.values.count("x"));
    EXPECT_EQ(ft.values.size(), 6u);
    EXPECT_TRUE(ft.excluded.count("x"));
}

TEST(OutlierFilter, AllEqualIsIdentityAndExactTwoSigmaIsKept) {
    auto same = score_outlier_filter(table({{"a", 1}, {"b", 1}, {"c", 1}}));
    EXPECT_EQ(same.values.size(), 3u);
    // Values {-1 x4, 4} have mean 0 and population SD 2, so 4 sits exactly at 2 SD.
    auto edge = score_outlier_filter(table({{"a", -1}, {"b", -1}, {"c", -1}, {"d", -1}, {"e", 4}}));
    EXPECT_TRUE(edge.values.count("e"));
    EXPECT_THROW(score_outlier_filter(table({{"a", 1}, {"b", 2}})), ValidationError);
}

TEST(HealthScore, TwoLocationExample) {
    auto hs = health_score(table({{"A", 0.1}, {"B", 0.3}}));
    EXPECT_NEAR(hs.mu, 0.2, 1e-15);
    EXPECT_NEAR(hs.sigma, 0.1, 1e-15);
    EXPECT_NEAR(hs.score.at("A"), 1.0, 1e-12);
    EXPECT_NEAR(hs.score.at("B"), -1.0, 1e-12);
}

TEST(HealthScore, ZeroSigmaGivesZerosWithWarning) {
    auto hs = health_score(table({{"A", 0.5}, {"B", 0.5}, {"C", 0.5}}));
    for (const auto &[l, h] : hs.score)
        EXPECT_EQ(h, 0.0);
    EXPECT_EQ(hs.warnings.size(), 1u);
    EXPECT_THROW(health_score(table({{"A", 1}})), ValidationError);
}

TEST(HealthScore, StandardizedOnRandomTables) {
    std::mt19937_64 rng(30);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 50; ++t) {
        std::map<std::string, double> v;
        for (int i = 0; i < 40; ++i)
            v["l" + std::to_string(i)] = u(rng);
        auto hs = health_score(score_outlier_filter(table(v)));
        std::vector<double> h;
        for (const auto &[l, x] : hs.score)
            h.push_back(x);
        EXPECT_NEAR(stats::mean(h), 0.0, 1e-9);
        EXPECT_NEAR(stats::population_sd(h), 1.0, 1e-9);
        auto most = std::max_element(hs.fraction.begin(), hs.fraction.end(),
                                     [](auto &a, auto &b) { return a.second < b.second; });
        auto lowest = std::min_element(hs.score.begin(), hs.score.end(),
                                       [](auto &a, auto &b) { return a.second < b.second; });
        EXPECT_EQ(most->first, lowest->first);
    }
}

TEST(HealthScore, FixtureMatchesHandComputation) {
    auto hs = health_score(score_outlier_filter(fraction(fixture(), 0, Aggregation::max)));
    const double mu = (0.8 + 0.2 + 0.4) / 3;
    const double sd = std::sqrt((std::pow(0.8 - mu, 2) + std::pow(0.2 - mu, 2) + std::pow(0.4 - mu, 2)) / 3);
    EXPECT_NEAR(hs.score.at("A"), -(0.8 - mu) / sd, 1e-12);
    EXPECT_NEAR(hs.score.at("B"), -(0.2 - mu) / sd, 1e-12);
    EXPECT_NEAR(hs.score.at("C"), -(0.4 - mu) / sd, 1e-12);
}

TEST(DisLiwc, FrequentStateScoresLower) {
    std::vector<Document> docs;
    UserLocations loc;
    auto add = [&](const std::string &u, const std::string &l, const std::string &text) {
        docs.push_back({u + std::to_string(docs.size()), u, "f", DocumentKind::comment, text});
        loc[u] = l;
    };
    for (int i = 0; i < 4; ++i) {
        add("a" + std::to_string(i), "A", i < 2 ? "my wheezing is back" : "nothing here");
        add("b" + std::to_string(i), "B", i < 1 ? "wheezing today" : "nothing here");
        add("c" + std::to_string(i), "C", i < 1 ? "some wheezing" : "fine");
    }
    Population pop;
    for (const auto &[u, l] : loc)
        pop[l].insert(u);
    Lexicon asthma("asthma"), none("none");
    asthma.add("wheezing");
    none.add("zzz unheard phrase");
    auto out = disliwc_scores(docs, loc, pop, {{"asthma", asthma}, {"none", none}});
    EXPECT_LT(out.at("asthma").score.at("A"), out.at("asthma").score.at("B"));
    for (const auto &[l, h] : out.at("none").score)
        EXPECT_EQ(h, 0.0);
    EXPECT_THROW(disliwc_scores(docs, loc, pop, {}), ValidationError);
}

TEST(ScoresFile, RoundTrip) {
    auto r = fixture();
    r.push_back(rec("d1", "D", {}));
    auto hs = health_score(score_outlier_filter(fraction(r, 1, Aggregation::max)));
    testutil::TempDir dir("scores");
    auto back = read_scores(dir.write("s.tsv", write_scores(hs)));
    EXPECT_EQ(back.score, hs.score);
    EXPECT_EQ(back.fraction, hs.fraction);
    EXPECT_EQ(back.excluded, hs.excluded);
    EXPECT_EQ(back.category_id, "cat");
    EXPECT_EQ(back.rho, 1);
}
