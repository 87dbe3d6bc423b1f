#include <algorithm>
#include <cmath>
#include <random>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "medtax/backbone.hpp"
#include "test_util.hpp"

using namespace medtax;

namespace {

using EdgeKey = std::pair<std::string, std::string>;

std::set<EdgeKey> edge_names(const CooccurrenceGraph &g) {
    std::set<EdgeKey> out;
    for (const auto &e : g.edges)
        out.insert({g.conditions[e.u], g.conditions[e.v]});
    return out;
}

BackboneParams at(double delta) {
    BackboneParams p;
    p.delta = delta;
    return p;
}

// Brute-force null model straight from strengths recomputed per edge.
bool oracle_survives(const CooccurrenceGraph &g, const Edge &e, double delta) {
    double su = 0, sv = 0, t = 0;
    for (const auto &f : g.edges) {
        t += f.weight;
        if (f.u == e.u || f.v == e.u)
            su += f.weight;
        if (f.u == e.v || f.v == e.v)
            sv += f.weight;
    }
    const double mean = su * sv / (2 * t);
    const double var = mean * (1 - su * sv / (4 * t * t));
    return e.weight > mean + delta * std::sqrt(var);
}

} // namespace

TEST(Backbone, UniformK4ThresholdIsHandComputed) {
    auto g = testutil::clique(4);
    // s = 3, 2T = 12: E = 0.75, Var = 0.75 * (1 - 9/144); critical delta = 0.25 / sqrt(Var).
    auto scores = score_edges(g);
    for (const auto &sc : scores) {
        EXPECT_DOUBLE_EQ(sc.expected, 0.75);
        EXPECT_DOUBLE_EQ(sc.variance, 0.75 * (1.0 - 9.0 / 144.0));
    }
    const double critical = 0.25 / std::sqrt(0.75 * (1.0 - 9.0 / 144.0));
    EXPECT_NEAR(critical, 0.2981, 1e-4);
    EXPECT_EQ(noise_corrected_backbone(g, at(critical * 0.999)).graph.edge_count(), 6u);
    auto none = noise_corrected_backbone(g, at(critical * 1.001));
    EXPECT_EQ(none.graph.edge_count(), 0u);
    EXPECT_EQ(none.graph.node_count(), 0u);
    EXPECT_EQ(none.warnings.size(), 1u);
}

TEST(Backbone, PlantedHeavyEdgeSurvives) {
    std::vector<Edge> e;
    for (NodeId i = 0; i < 20; ++i)
        for (NodeId j = i + 1; j < 20; ++j)
            e.push_back({i, j, (i == 0 && j == 1) ? 50.0 : 1.0});
    auto g = testutil::graph(20, e);
    auto bb = noise_corrected_backbone(g, at(2.0));
    auto kept = edge_names(bb.graph);
    EXPECT_TRUE(kept.count({"0", "1"}));
    const std::size_t unit_kept = kept.size() - 1;
    EXPECT_LE(static_cast<double>(unit_kept), 0.1 * static_cast<double>(g.edge_count() - 1));
}

TEST(Backbone, DeltaZeroKeepsEveryEdgeAboveExpectation) {
    // Star: every edge has w = 1 and E = s_c * 1 / 2T = 4/8 < 1.
    auto g = testutil::graph(5, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}});
    auto bb = noise_corrected_backbone(g, at(0.0));
    EXPECT_EQ(bb.graph.edges, g.edges);
    EXPECT_EQ(bb.original_ids, (std::vector<NodeId>{0, 1, 2, 3, 4}));
}

TEST(Backbone, MatchesBruteForceAndIsMonotone) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        auto g = testutil::random_graph(rng, 25, 0.3, 9);
        if (g.edge_count() == 0)
            continue;
        std::set<EdgeKey> prev;
        bool first = true;
        for (double delta : {0.0, 0.5, 1.0, 1.64, 2.0, 3.0}) {
            BackboneParams p = at(delta);
            p.keep_isolates = true;
            auto bb = noise_corrected_backbone(g, p);
            std::set<EdgeKey> expect;
            for (const auto &e : g.edges)
                if (oracle_survives(g, e, delta))
                    expect.insert({g.conditions[e.u], g.conditions[e.v]});
            auto got = edge_names(bb.graph);
            EXPECT_EQ(got, expect);
            if (!first)
                EXPECT_TRUE(std::includes(prev.begin(), prev.end(), got.begin(), got.end()));
            for (const auto &e : bb.graph.edges) {
                auto it = std::find_if(g.edges.begin(), g.edges.end(),
                                       [&](const Edge &f) { return f.u == e.u && f.v == e.v; });
                ASSERT_NE(it, g.edges.end());
                EXPECT_EQ(it->weight, e.weight);
            }
            prev = got;
            first = false;
        }
    }
}

TEST(Backbone, RelabelingInvariant) {
    std::mt19937_64 rng(5);
    auto g = testutil::random_graph(rng, 30, 0.25, 6);
    std::vector<NodeId> perm(g.node_count());
    std::iota(perm.begin(), perm.end(), NodeId{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Edge> moved;
    std::vector<std::string> names(g.node_count());
    for (NodeId i = 0; i < g.node_count(); ++i)
        names[perm[i]] = g.conditions[i];
    for (const auto &e : g.edges)
        moved.push_back({perm[e.u], perm[e.v], e.weight});
    auto h = CooccurrenceGraph::from_edges(g.node_count(), moved, names);
    auto norm = [](std::set<EdgeKey> s) {
        std::set<EdgeKey> out;
        for (auto [a, b] : s)
            out.insert(a < b ? EdgeKey{a, b} : EdgeKey{b, a});
        return out;
    };
    EXPECT_EQ(norm(edge_names(noise_corrected_backbone(g, at(1.0)).graph)),
              norm(edge_names(noise_corrected_backbone(h, at(1.0)).graph)));
}

TEST(Backbone, RejectsBadInput) {
    EXPECT_THROW(noise_corrected_backbone(testutil::clique(3), at(-0.1)), ValidationError);
    EXPECT_THROW(noise_corrected_backbone(testutil::graph(3, {}), at(1.0)), ValidationError);
}

TEST(TuneDelta, PrunesTheSingleWeakestEdge) {
    // Heavy 5-clique plus one pendant edge of weight 1 that sits barely above expectation.
    std::vector<Edge> e;
    for (NodeId i = 0; i < 5; ++i)
        for (NodeId j = i + 1; j < 5; ++j)
            e.push_back({i, j, 10.0 + i + j});
    e.push_back({0, 5, 1.0});
    auto g = testutil::graph(6, e);
    const auto target = g.edge_count() - 1;
    auto tuned = tune_delta(g, target);
    auto scores = score_edges(g);
    EXPECT_GT(tuned.delta, 0.0);
    EXPECT_EQ(surviving_edges(scores, tuned.delta), tuned.achieved_edges);
    // Exhaustive sweep oracle: the count at the returned delta is reachable and within 1%.
    EXPECT_LE(std::abs(static_cast<double>(tuned.achieved_edges) - static_cast<double>(target)),
              0.01 * static_cast<double>(target) + 1.0);
}

TEST(TuneDelta, FullTargetGivesZero) {
    auto g = testutil::graph(5, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}});
    auto tuned = tune_delta(g, g.edge_count());
    EXPECT_EQ(tuned.delta, 0.0);
    EXPECT_EQ(tuned.achieved_edges, g.edge_count());
    EXPECT_TRUE(tuned.within_tolerance);
    EXPECT_THROW(tune_delta(g, 0), ValidationError);
    EXPECT_THROW(tune_delta(g, 5), ValidationError);
}

TEST(TuneDelta, HalvesALargeGraphWithinOnePercent) {
    std::mt19937_64 rng(8);
    std::vector<Edge> e;
    std::uniform_int_distribution<NodeId> node(0, 799);
    std::geometric_distribution<int> w(0.3);
    while (e.size() < 10000) {
        auto a = node(rng), b = node(rng);
        if (a != b)
            e.push_back({a, b, 1.0 + w(rng)});
    }
    auto g = testutil::graph(800, e);
    const auto target = g.edge_count() / 2;
    auto tuned = tune_delta(g, target);
    EXPECT_TRUE(tuned.within_tolerance) << tuned.achieved_edges << " vs " << target;
    EXPECT_EQ(surviving_edges(score_edges(g), tuned.delta), tuned.achieved_edges);
}

TEST(EdgeScores, SideFileHasOneRowPerEdge) {
    auto text = write_edge_scores(score_edges(testutil::clique(4)));
    auto lines = text::split(text, '\n');
    EXPECT_EQ(lines[0], "u\tv\tw\tE\tVar\tscore");
    EXPECT_EQ(lines.size(), 1u + 6u + 1u);
}
