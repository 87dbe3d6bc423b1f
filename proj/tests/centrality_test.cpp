#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "medtax/centrality.hpp"
#include "test_util.hpp"

using namespace medtax;

namespace {

CentralityParams kind(CentralityKind k) {
    CentralityParams p;
    p.kind = k;
    return p;
}

double sum(const std::vector<double> &v) { return std::accumulate(v.begin(), v.end(), 0.0); }

CentralityScores named(std::vector<std::string> names, std::vector<double> values) {
    CentralityScores cs;
    cs.conditions = std::move(names);
    cs.values = std::move(values);
    return cs;
}

} // namespace

TEST(PageRank, ThreeCycleIsUniform) {
    auto cs = centrality(testutil::clique(3));
    for (double v : cs.values)
        EXPECT_NEAR(v, 1.0 / 3.0, 1e-9);
    EXPECT_GT(cs.iterations, 0u);
}

TEST(PageRank, StarMatchesDenseOracle) {
    auto g = testutil::graph(5, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}});
    auto cs = centrality(g);
    auto oracle = testutil::dense_pagerank(g);
    for (std::size_t i = 0; i < 5; ++i)
        EXPECT_NEAR(cs.values[i], oracle[i], 1e-9);
    for (std::size_t i = 1; i < 5; ++i)
        EXPECT_GT(cs.values[0], cs.values[i]);
    EXPECT_NEAR(sum(cs.values), 1.0, 1e-9);
}

TEST(PageRank, RandomWeightedGraphsMatchDenseOracle) {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 5; ++t) {
        auto g = testutil::random_graph(rng, 50, 0.1, 7);
        auto cs = centrality(g);
        auto oracle = testutil::dense_pagerank(g);
        for (std::size_t i = 0; i < g.node_count(); ++i)
            EXPECT_NEAR(cs.values[i], oracle[i], 1e-9);
        EXPECT_NEAR(sum(cs.values), 1.0, 1e-9);
    }
}

TEST(PageRank, InvariantUnderWeightScaling) {
    std::mt19937_64 rng(18);
    auto g = testutil::random_graph(rng, 30, 0.2, 5);
    auto h = g;
    for (auto &e : h.edges)
        e.weight *= 7.5;
    auto a = centrality(g), b = centrality(h);
    for (std::size_t i = 0; i < g.node_count(); ++i)
        EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
}

TEST(PageRank, NonConvergenceCarriesResidual) {
    CentralityParams p;
    p.max_iterations = 1;
    p.tolerance = 1e-300;
    auto g = testutil::graph(3, {{0, 1, 1}, {1, 2, 1}});
    try {
        centrality(g, p);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError &e) {
        EXPECT_GT(e.residual(), 0.0);
    }
}

TEST(Harmonic, PathExample) {
    auto g = testutil::graph(3, {{0, 1, 1}, {1, 2, 1}});
    EXPECT_EQ(centrality(g, kind(CentralityKind::harmonic)).values, (std::vector<double>{1.5, 2.0, 1.5}));
}

TEST(Harmonic, UnreachableContributesNothing) {
    auto g = testutil::graph(4, {{0, 1, 5}, {2, 3, 1}});
    EXPECT_EQ(centrality(g, kind(CentralityKind::harmonic)).values, (std::vector<double>{1, 1, 1, 1}));
}

TEST(Degree, EqualsStrength) {
    std::mt19937_64 rng(19);
    auto g = testutil::random_graph(rng, 20, 0.3, 4);
    auto cs = centrality(g, kind(CentralityKind::degree));
    EXPECT_EQ(cs.values, g.strengths());
    EXPECT_DOUBLE_EQ(sum(cs.values), 2.0 * g.total_weight());
}

TEST(TopCentral, CountContract) {
    std::vector<std::string> names;
    std::vector<double> values;
    for (int i = 0; i < 100; ++i) {
        names.push_back("c" + std::to_string(1000 + i));
        values.push_back(i);
    }
    auto cs = named(names, values);
    auto top = top_central(cs, 0.05);
    EXPECT_EQ(top, (std::vector<std::string>{"c1099", "c1098", "c1097", "c1096", "c1095"}));
    EXPECT_EQ(top_central(cs, 1.0).size(), 100u);
    EXPECT_THROW(top_central(cs, 0.0), ValidationError);
}

TEST(TopCentral, TiesAtCutGoLexicographic) {
    auto cs = named({"d", "b", "c", "a"}, {3, 1, 1, 1});
    EXPECT_EQ(top_central(cs, 0.5), (std::vector<std::string>{"d", "a"}));
}

TEST(TopCentral, NestedInFraction) {
    std::mt19937_64 rng(20);
    std::uniform_int_distribution<int> v(0, 5);
    std::vector<std::string> names;
    std::vector<double> values;
    for (int i = 0; i < 60; ++i) {
        names.push_back("n" + std::to_string(i));
        values.push_back(v(rng));
    }
    auto cs = named(names, values);
    auto prev = top_central(cs, 0.01);
    for (double f : {0.05, 0.1, 0.3, 0.7, 1.0}) {
        auto cur = top_central(cs, f);
        ASSERT_GE(cur.size(), prev.size());
        EXPECT_TRUE(std::equal(prev.begin(), prev.end(), cur.begin()));
        prev = cur;
    }
}

TEST(CentralityFile, RoundTrip) {
    std::mt19937_64 rng(22);
    auto cs = centrality(testutil::random_graph(rng, 15, 0.4));
    testutil::TempDir dir("centrality");
    auto back = read_centrality(dir.write("c.tsv", write_centrality(cs)));
    EXPECT_EQ(back.conditions, cs.conditions);
    EXPECT_EQ(back.values, cs.values);
    EXPECT_EQ(back.iterations, cs.iterations);
    EXPECT_EQ(back.damping, 0.85);
}
