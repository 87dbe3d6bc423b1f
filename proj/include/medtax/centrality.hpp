#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace medtax {

enum class CentralityKind { pagerank, harmonic, degree };

inline const char *to_string(CentralityKind k) {
    switch (k) {
    case CentralityKind::pagerank:
        return "pagerank";
    case CentralityKind::harmonic:
        return "harmonic";
    case CentralityKind::degree:
        return "degree";
    }
    return "?";
}

inline CentralityKind parse_centrality_kind(std::string_view s) {
    if (s == "pagerank")
        return CentralityKind::pagerank;
    if (s == "harmonic")
        return CentralityKind::harmonic;
    if (s == "degree")
        return CentralityKind::degree;
    throw ValidationError("unknown centrality kind '" + std::string(s) + "'");
}

struct CentralityParams {
    CentralityKind kind = CentralityKind::pagerank;
    double damping = 0.85;
    double tolerance = 1e-10;
    std::size_t max_iterations = 200;
    std::size_t threads = 1;
};

struct CentralityScores {
    CentralityKind kind = CentralityKind::pagerank;
    std::vector<std::string> conditions;
    std::vector<double> values;
    double damping = 0.85;
    double tolerance = 1e-10;
    std::size_t iterations = 0;

    /// Condition -> value lookup.
    std::unordered_map<std::string, double> by_condition() const {
        std::unordered_map<std::string, double> out;
        out.reserve(conditions.size());
        for (std::size_t i = 0; i < conditions.size(); ++i)
            out.emplace(conditions[i], values[i]);
        return out;
    }
};

/// Synchronous power iteration on the weight-proportional random walk with uniform
/// teleportation. Dangling nodes (zero strength) redistribute uniformly.
inline std::vector<double> pagerank(const CooccurrenceGraph &g, double damping, double tol,
                                    std::size_t max_iter, std::size_t *iterations = nullptr) {
    const auto n = g.node_count();
    if (n == 0)
        throw ValidationError("pagerank of an empty graph");
    if (!(damping >= 0.0 && damping < 1.0))
        throw ValidationError("damping must lie in [0, 1)");
    Adjacency adj(g);
    const auto s = g.strengths();
    const double nd = static_cast<double>(n);
    std::vector<double> pr(n, 1.0 / nd);
    std::vector<double> next(n);
    double residual = 0.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        double dangling = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (s[i] <= 0.0)
                dangling += pr[i];
        const double base = (1.0 - damping) / nd + damping * dangling / nd;
        for (std::size_t i = 0; i < n; ++i) {
            double in = 0.0;
            for (auto k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k)
                in += pr[adj.targets[k]] * adj.weights[k] / s[adj.targets[k]];
            next[i] = base + damping * in;
        }
        residual = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            residual += std::abs(next[i] - pr[i]);
        pr.swap(next);
        if (residual < tol) {
            if (iterations)
                *iterations = it;
            return pr;
        }
    }
    throw ConvergenceError("pagerank did not converge in " + std::to_string(max_iter) + " iterations", residual);
}

/// Sum of reciprocal hop distances to every reachable node.
inline std::vector<double> harmonic_centrality(const CooccurrenceGraph &g, std::size_t threads = 1) {
    Adjacency adj(g);
    const auto n = g.node_count();
    std::vector<double> out(n, 0.0);
    parallel_for(n, threads, [&](std::size_t src) {
        std::vector<std::uint32_t> dist(n, static_cast<std::uint32_t>(-1));
        std::deque<NodeId> queue{static_cast<NodeId>(src)};
        dist[src] = 0;
        double h = 0.0;
        while (!queue.empty()) {
            auto x = queue.front();
            queue.pop_front();
            for (auto k = adj.offsets[x]; k < adj.offsets[x + 1]; ++k) {
                auto y = adj.targets[k];
                if (dist[y] == static_cast<std::uint32_t>(-1)) {
                    dist[y] = dist[x] + 1;
                    h += 1.0 / dist[y];
                    queue.push_back(y);
                }
            }
        }
        out[src] = h;
    });
    return out;
}

inline CentralityScores centrality(const CooccurrenceGraph &g, const CentralityParams &params = {}) {
    if (g.node_count() == 0)
        throw ValidationError("centrality of an empty graph");
    CentralityScores cs;
    cs.kind = params.kind;
    cs.conditions = g.conditions;
    cs.damping = params.damping;
    cs.tolerance = params.tolerance;
    switch (params.kind) {
    case CentralityKind::pagerank:
        cs.values = pagerank(g, params.damping, params.tolerance, params.max_iterations, &cs.iterations);
        break;
    case CentralityKind::harmonic:
        cs.values = harmonic_centrality(g, params.threads);
        break;
    case CentralityKind::degree:
        cs.values = g.strengths();
        break;
    }
    return cs;
}

/// The ceil(fraction * N) highest-scoring conditions; ties at the cut go to the
/// lexicographically smaller condition. Returned in rank order.
inline std::vector<std::string> top_central(const CentralityScores &scores, double fraction = 0.05) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ValidationError("fraction must lie in (0, 1]");
    const auto n = scores.values.size();
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    k = std::min(std::max<std::size_t>(k, n > 0 ? 1 : 0), n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores.values[a] != scores.values[b])
            return scores.values[a] > scores.values[b];
        return scores.conditions[a] < scores.conditions[b];
    });
    std::vector<std::string> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        out.push_back(scores.conditions[order[i]]);
    return out;
}

inline std::string write_centrality(const CentralityScores &cs) {
    std::string out;
    out += "# kind=" + std::string(to_string(cs.kind)) + "\n";
    out += "# damping=" + io::format_double(cs.damping) + "\n";
    out += "# tol=" + io::format_double(cs.tolerance) + "\n";
    out += "# iterations=" + std::to_string(cs.iterations) + "\n";
    out += "condition\tkind\tvalue\n";
    for (std::size_t i = 0; i < cs.values.size(); ++i)
        out += cs.conditions[i] + "\t" + to_string(cs.kind) + "\t" + io::format_double(cs.values[i]) + "\n";
    return out;
}

inline CentralityScores read_centrality(const std::filesystem::path &path) {
    CentralityScores cs;
    bool header = false;
    for (const auto &line : io::read_lines(path)) {
        if (line.empty())
            continue;
        if (line.front() == '#') {
            auto eq = line.find('=');
            if (eq == std::string::npos)
                continue;
            auto key = text::trim(line.substr(1, eq - 1));
            auto val = line.substr(eq + 1);
            if (key == "kind")
                cs.kind = parse_centrality_kind(val);
            else if (key == "damping")
                cs.damping = io::parse_double(val);
            else if (key == "tol")
                cs.tolerance = io::parse_double(val);
            else if (key == "iterations")
                cs.iterations = static_cast<std::size_t>(io::parse_int(val));
            continue;
        }
        if (!header) {
            header = true;
            continue;
        }
        auto cols = text::split(line, '\t');
        if (cols.size() != 3)
            throw ValidationError(path.string() + ": malformed centrality row");
        cs.conditions.push_back(cols[0]);
        cs.values.push_back(io::parse_double(cols[2]));
    }
    return cs;
}

} // namespace medtax
