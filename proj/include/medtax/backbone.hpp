#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "io.hpp"

namespace medtax {

struct BackboneParams {
    double delta = 1.64;
    std::optional<std::size_t> target_edges;
    bool keep_isolates = false;
};

/// Null-model statistics of one edge under the strength-preserving model: the observed total
/// 2T is treated as 2T binomial draws of ordered node pairs with p = s_u s_v / (2T)^2.
struct EdgeScore {
    Edge edge;
    double expected = 0.0;
    double variance = 0.0;

    double sd() const { return std::sqrt(variance); }
    /// Distance from the expectation in null standard deviations.
    double z() const { return variance > 0.0 ? (edge.weight - expected) / sd() : 0.0; }
    bool survives(double delta) const { return edge.weight > expected + delta * sd(); }
};

inline std::vector<EdgeScore> score_edges(const CooccurrenceGraph &g) {
    const auto s = g.strengths();
    const double two_t = 2.0 * g.total_weight();
    std::vector<EdgeScore> out;
    out.reserve(g.edge_count());
    for (const auto &e : g.edges) {
        const double prod = s[e.u] * s[e.v];
        const double expected = prod / two_t;
        const double variance = expected * (1.0 - prod / (two_t * two_t));
        out.push_back({e, expected, variance});
    }
    return out;
}

struct BackboneResult {
    CooccurrenceGraph graph;
    /// original_ids[new_id] = id in the input graph (identity when isolates are kept).
    std::vector<NodeId> original_ids;
    std::vector<std::string> warnings;
};

/// Keeps edges whose weight exceeds the null expectation by more than delta null standard
/// deviations. Ties at the threshold are dropped.
inline BackboneResult noise_corrected_backbone(const CooccurrenceGraph &g, const BackboneParams &params) {
    if (!(params.delta >= 0.0))
        throw ValidationError("backbone delta must be non-negative");
    if (g.edge_count() == 0)
        throw ValidationError("backbone needs a graph with at least one edge");
    const auto scores = score_edges(g);
    CooccurrenceGraph kept;
    kept.conditions = g.conditions;
    kept.mention_counts = g.mention_counts;
    for (const auto &sc : scores)
        if (sc.survives(params.delta))
            kept.edges.push_back(sc.edge);

    BackboneResult result;
    if (kept.edges.empty())
        result.warnings.push_back("no edge survives delta = " + io::format_double(params.delta));
    if (params.keep_isolates) {
        result.original_ids.resize(g.node_count());
        std::iota(result.original_ids.begin(), result.original_ids.end(), NodeId{0});
        result.graph = std::move(kept);
        return result;
    }
    std::vector<char> touched(g.node_count(), 0);
    for (const auto &e : kept.edges)
        touched[e.u] = touched[e.v] = 1;
    std::vector<NodeId> keep;
    for (NodeId i = 0; i < g.node_count(); ++i)
        if (touched[i])
            keep.push_back(i);
    auto sub = induced_subgraph(kept, std::move(keep));
    result.graph = std::move(sub.graph);
    result.original_ids = std::move(sub.original_ids);
    return result;
}

inline std::size_t surviving_edges(const std::vector<EdgeScore> &scores, double delta) {
    std::size_t n = 0;
    for (const auto &sc : scores)
        n += sc.survives(delta) ? 1 : 0;
    return n;
}

struct DeltaTuning {
    double delta = 0.0;
    std::size_t achieved_edges = 0;
    std::size_t iterations = 0;
    bool within_tolerance = false;
    std::vector<std::string> warnings;
};

/// Bisection on delta until the surviving edge count is within 1% of `target_edges`, or
/// 40 iterations elapse. Returns the closest count seen when the target is unreachable
/// (several edges sharing one critical delta).
inline DeltaTuning tune_delta(const CooccurrenceGraph &g, std::size_t target_edges) {
    if (target_edges == 0 || target_edges > g.edge_count())
        throw ValidationError("target_edges must lie in (0, |E|]");
    const auto scores = score_edges(g);
    const double tol = 0.01 * static_cast<double>(target_edges);
    auto gap = [&](std::size_t count) {
        return std::abs(static_cast<double>(count) - static_cast<double>(target_edges));
    };

    DeltaTuning best;
    best.delta = 0.0;
    best.achieved_edges = surviving_edges(scores, 0.0);
    if (gap(best.achieved_edges) <= tol || best.achieved_edges < target_edges) {
        best.within_tolerance = gap(best.achieved_edges) <= tol;
        if (!best.within_tolerance)
            best.warnings.push_back("target exceeds the edges surviving at delta = 0");
        return best;
    }

    double lo = 0.0; // count(lo) > target
    double hi = 1.0;
    for (const auto &sc : scores)
        hi = std::max(hi, sc.z() + 1.0);
    for (std::size_t it = 1; it <= 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto count = surviving_edges(scores, mid);
        best.iterations = it;
        if (gap(count) < gap(best.achieved_edges) ||
            (gap(count) == gap(best.achieved_edges) && mid < best.delta)) {
            best.delta = mid;
            best.achieved_edges = count;
        }
        if (gap(count) <= tol) {
            best.within_tolerance = true;
            break;
        }
        if (count > target_edges)
            lo = mid;
        else
            hi = mid;
    }
    if (!best.within_tolerance)
        best.warnings.push_back("closest achievable edge count is " + std::to_string(best.achieved_edges));
    return best;
}

/// Side file with one row per input edge: u v w E Var score.
inline std::string write_edge_scores(const std::vector<EdgeScore> &scores) {
    std::string out = "u\tv\tw\tE\tVar\tscore\n";
    for (const auto &sc : scores) {
        out += std::to_string(sc.edge.u) + "\t" + std::to_string(sc.edge.v) + "\t" +
               io::format_double(sc.edge.weight) + "\t" + io::format_double(sc.expected) + "\t" +
               io::format_double(sc.variance) + "\t" + io::format_double(sc.z()) + "\n";
    }
    return out;
}

} // namespace medtax
