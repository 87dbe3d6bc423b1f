#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <tuple>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "ingest.hpp"
#include "io.hpp"

namespace medtax {

using NodeId = std::uint32_t;

struct Edge {
    NodeId u = 0;
    NodeId v = 0;
    double weight = 0.0;

    friend bool operator==(const Edge &, const Edge &) = default;
};

/// Undirected weighted graph with dense node ids 0..N-1, canonical edges (u < v) sorted by
/// (u, v), strictly positive weights and no self-loops.
struct CooccurrenceGraph {
    std::vector<std::string> conditions;
    std::vector<std::int64_t> mention_counts;
    std::vector<Edge> edges;

    std::size_t node_count() const noexcept { return conditions.size(); }
    std::size_t edge_count() const noexcept { return edges.size(); }

    std::vector<double> strengths() const {
        std::vector<double> s(node_count(), 0.0);
        for (const auto &e : edges) {
            s[e.u] += e.weight;
            s[e.v] += e.weight;
        }
        return s;
    }

    double total_weight() const {
        double t = 0.0;
        for (const auto &e : edges)
            t += e.weight;
        return t;
    }

    /// Builds a graph from an arbitrary edge list: orients u < v, sums parallel edges, drops
    /// self-loops and non-positive weights. Nodes are named by their decimal id unless names
    /// are supplied.
    static CooccurrenceGraph from_edges(std::size_t n, std::vector<Edge> raw,
                                        std::vector<std::string> names = {}) {
        CooccurrenceGraph g;
        if (names.empty()) {
            names.reserve(n);
            for (std::size_t i = 0; i < n; ++i)
                names.push_back(std::to_string(i));
        }
        if (names.size() != n)
            throw ValidationError("node name count does not match node count");
        g.conditions = std::move(names);
        g.mention_counts.assign(n, 0);
        for (auto &e : raw) {
            if (e.u >= n || e.v >= n)
                throw ValidationError("edge endpoint out of range");
            if (e.u > e.v)
                std::swap(e.u, e.v);
        }
        std::sort(raw.begin(), raw.end(),
                  [](const Edge &a, const Edge &b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
        for (const auto &e : raw) {
            if (e.u == e.v || !(e.weight > 0.0))
                continue;
            if (!g.edges.empty() && g.edges.back().u == e.u && g.edges.back().v == e.v)
                g.edges.back().weight += e.weight;
            else
                g.edges.push_back(e);
        }
        return g;
    }
};

/// Compressed adjacency for traversal; each undirected edge appears in both endpoint lists.
struct Adjacency {
    std::vector<std::size_t> offsets;
    std::vector<NodeId> targets;
    std::vector<double> weights;

    explicit Adjacency(const CooccurrenceGraph &g) : offsets(g.node_count() + 1, 0) {
        for (const auto &e : g.edges) {
            ++offsets[e.u + 1];
            ++offsets[e.v + 1];
        }
        std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
        targets.resize(offsets.back());
        weights.resize(offsets.back());
        std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
        for (const auto &e : g.edges) {
            targets[fill[e.u]] = e.v;
            weights[fill[e.u]++] = e.weight;
            targets[fill[e.v]] = e.u;
            weights[fill[e.v]++] = e.weight;
        }
    }

    std::size_t degree(NodeId i) const { return offsets[i + 1] - offsets[i]; }
    std::size_t node_count() const { return offsets.size() - 1; }
};

// ---------------------------------------------------------------------------------------------
// Construction

struct CooccurrenceOptions {
    /// Records with more distinct conditions keep only the globally most frequent ones.
    std::size_t max_conditions_per_record = 50;
    std::optional<DocumentKind> kind;
};

/// Accumulates pair counts for one shard of records. Shards merge by summation.
class CooccurrenceCounter {
public:
    void add_pair(NodeId a, NodeId b) {
        if (a > b)
            std::swap(a, b);
        ++counts_[(static_cast<std::uint64_t>(a) << 32) | b];
    }

    void merge(const CooccurrenceCounter &other) {
        for (const auto &[k, c] : other.counts_)
            counts_[k] += c;
    }

    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(counts_.size());
        for (const auto &[k, c] : counts_)
            out.push_back({static_cast<NodeId>(k >> 32), static_cast<NodeId>(k & 0xffffffffu),
                           static_cast<double>(c)});
        std::sort(out.begin(), out.end(),
                  [](const Edge &a, const Edge &b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
        return out;
    }

private:
    std::unordered_map<std::uint64_t, std::int64_t> counts_;
};

/// Co-mention graph with one message as the co-occurrence window. Node ids follow the
/// lexicographic order of condition strings, so the result does not depend on record order.
inline CooccurrenceGraph build_cooccurrence(const std::vector<MentionRecord> &records,
                                            const CooccurrenceOptions &opts = {}) {
    auto selected = [&](const MentionRecord &r) { return !opts.kind || !r.kind || *r.kind == *opts.kind; };

    std::unordered_map<std::string, std::int64_t> counts;
    for (const auto &r : records)
        if (selected(r))
            for (const auto &c : r.conditions)
                ++counts[c];

    CooccurrenceGraph g;
    g.conditions.reserve(counts.size());
    for (const auto &[c, n] : counts)
        g.conditions.push_back(c);
    std::sort(g.conditions.begin(), g.conditions.end());
    std::unordered_map<std::string, NodeId> index;
    index.reserve(g.conditions.size());
    g.mention_counts.reserve(g.conditions.size());
    for (std::size_t i = 0; i < g.conditions.size(); ++i) {
        index.emplace(g.conditions[i], static_cast<NodeId>(i));
        g.mention_counts.push_back(counts[g.conditions[i]]);
    }

    CooccurrenceCounter counter;
    std::vector<NodeId> ids;
    for (const auto &r : records) {
        if (!selected(r) || r.conditions.size() < 2)
            continue;
        ids.clear();
        for (const auto &c : r.conditions)
            ids.push_back(index.at(c));
        if (ids.size() > opts.max_conditions_per_record) {
            std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
                if (g.mention_counts[a] != g.mention_counts[b])
                    return g.mention_counts[a] > g.mention_counts[b];
                return a < b;
            });
            ids.resize(opts.max_conditions_per_record);
        }
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j)
                counter.add_pair(ids[i], ids[j]);
    }
    g.edges = counter.edges();
    return g;
}

// ---------------------------------------------------------------------------------------------
// Sub-graphs

struct Subgraph {
    CooccurrenceGraph graph;
    /// original_ids[new_id] = id in the parent graph.
    std::vector<NodeId> original_ids;
};

/// Induced subgraph on `keep` (any order); new ids follow ascending parent ids.
inline Subgraph induced_subgraph(const CooccurrenceGraph &g, std::vector<NodeId> keep) {
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    constexpr auto none = static_cast<NodeId>(-1);
    std::vector<NodeId> remap(g.node_count(), none);
    Subgraph out;
    for (auto old : keep) {
        remap[old] = static_cast<NodeId>(out.original_ids.size());
        out.original_ids.push_back(old);
        out.graph.conditions.push_back(g.conditions[old]);
        out.graph.mention_counts.push_back(g.mention_counts[old]);
    }
    for (const auto &e : g.edges)
        if (remap[e.u] != none && remap[e.v] != none)
            out.graph.edges.push_back({remap[e.u], remap[e.v], e.weight});
    return out;
}

/// Component label per node; labels are numbered in order of each component's smallest id.
inline std::vector<std::uint32_t> connected_components(const CooccurrenceGraph &g,
                                                       std::size_t *count = nullptr) {
    Adjacency adj(g);
    constexpr auto unseen = static_cast<std::uint32_t>(-1);
    std::vector<std::uint32_t> label(g.node_count(), unseen);
    std::uint32_t next = 0;
    std::vector<NodeId> stack;
    for (NodeId s = 0; s < g.node_count(); ++s) {
        if (label[s] != unseen)
            continue;
        label[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            auto x = stack.back();
            stack.pop_back();
            for (auto k = adj.offsets[x]; k < adj.offsets[x + 1]; ++k) {
                auto y = adj.targets[k];
                if (label[y] == unseen) {
                    label[y] = next;
                    stack.push_back(y);
                }
            }
        }
        ++next;
    }
    if (count)
        *count = next;
    return label;
}

inline bool is_connected(const CooccurrenceGraph &g) {
    std::size_t n = 0;
    connected_components(g, &n);
    return n <= 1;
}

/// Largest connected component; ties go to the component containing the smallest node id.
inline Subgraph giant_component(const CooccurrenceGraph &g) {
    if (g.node_count() == 0)
        return {};
    std::size_t n = 0;
    auto label = connected_components(g, &n);
    std::vector<std::size_t> size(n, 0);
    for (auto l : label)
        ++size[l];
    // Labels are ordered by smallest member id, so the first maximum wins ties.
    auto best = static_cast<std::uint32_t>(std::max_element(size.begin(), size.end()) - size.begin());
    std::vector<NodeId> keep;
    for (NodeId i = 0; i < g.node_count(); ++i)
        if (label[i] == best)
            keep.push_back(i);
    return induced_subgraph(g, std::move(keep));
}

// ---------------------------------------------------------------------------------------------
// Graph file

inline std::string write_graph(const CooccurrenceGraph &g) {
    std::string out;
    out += std::to_string(g.node_count()) + " " + std::to_string(g.edge_count()) + "\n";
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        out += std::to_string(i);
        out += '\t';
        out += g.conditions[i];
        out += '\t';
        out += std::to_string(g.mention_counts[i]);
        out += '\n';
    }
    for (const auto &e : g.edges) {
        out += std::to_string(e.u);
        out += '\t';
        out += std::to_string(e.v);
        out += '\t';
        out += io::format_double(e.weight);
        out += '\n';
    }
    return out;
}

inline CooccurrenceGraph parse_graph(std::string_view content, const std::string &source = "graph") {
    auto lines = text::split(content, '\n');
    if (!lines.empty() && lines.back().empty())
        lines.pop_back();
    auto fail = [&](std::size_t lineno, const std::string &msg) {
        return ValidationError(source + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (lines.empty())
        throw fail(1, "missing header");
    auto header = text::split(lines[0], ' ');
    if (header.size() != 2)
        throw fail(1, "header must be 'N M'");
    const auto n = static_cast<std::size_t>(io::parse_int(header[0], "node count"));
    const auto m = static_cast<std::size_t>(io::parse_int(header[1], "edge count"));
    if (lines.size() != 1 + n + m)
        throw fail(1, "expected " + std::to_string(1 + n + m) + " lines, found " +
                          std::to_string(lines.size()));
    CooccurrenceGraph g;
    g.conditions.reserve(n);
    g.mention_counts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto cols = text::split(lines[1 + i], '\t');
        if (cols.size() != 3 || static_cast<std::size_t>(io::parse_int(cols[0], "node id")) != i)
            throw fail(2 + i, "malformed node line");
        g.conditions.push_back(cols[1]);
        g.mention_counts.push_back(io::parse_int(cols[2], "mention count"));
    }
    g.edges.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        auto cols = text::split(lines[1 + n + k], '\t');
        if (cols.size() != 3)
            throw fail(2 + n + k, "malformed edge line");
        Edge e{static_cast<NodeId>(io::parse_int(cols[0], "u")),
               static_cast<NodeId>(io::parse_int(cols[1], "v")), io::parse_double(cols[2], "weight")};
        if (e.u >= e.v || e.v >= n || !(e.weight > 0.0))
            throw fail(2 + n + k, "edge must satisfy u < v < N and weight > 0");
        if (!g.edges.empty() && std::tie(g.edges.back().u, g.edges.back().v) >= std::tie(e.u, e.v))
            throw fail(2 + n + k, "edges must be sorted and unique");
        g.edges.push_back(e);
    }
    return g;
}

inline CooccurrenceGraph read_graph(const std::filesystem::path &path) {
    return parse_graph(io::read_file(path), path.string());
}

inline std::string write_id_mapping(const Subgraph &sub) {
    std::string out = "new_id\toriginal_id\n";
    for (std::size_t i = 0; i < sub.original_ids.size(); ++i)
        out += std::to_string(i) + "\t" + std::to_string(sub.original_ids[i]) + "\n";
    return out;
}

} // namespace medtax
