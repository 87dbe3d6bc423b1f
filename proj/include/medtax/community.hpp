#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace medtax {

using ModuleId = std::uint32_t;

/// x * log2(x), with the 0 log 0 = 0 convention.
inline double plogp(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

/// Stationary visit rates of the undirected random walk, p_i = s_i / 2T.
inline std::vector<double> visit_rates(const CooccurrenceGraph &g) {
    if (g.edge_count() == 0)
        throw ValidationError("visit rates need a graph with at least one edge");
    if (!is_connected(g))
        throw ValidationError("graph is disconnected; extract the giant component first");
    auto p = g.strengths();
    const double two_t = 2.0 * g.total_weight();
    for (auto &x : p)
        x /= two_t;
    return p;
}

namespace detail {

/// Per-module exit and node flows of a flat partition, in walker-flow units.
struct ModuleFlows {
    std::vector<double> exit;
    std::vector<double> flow;
};

inline ModuleFlows module_flows(const CooccurrenceGraph &g, std::span<const ModuleId> partition) {
    ModuleId modules = 0;
    for (auto m : partition)
        modules = std::max(modules, m + 1);
    ModuleFlows mf{std::vector<double>(modules, 0.0), std::vector<double>(modules, 0.0)};
    const double two_t = 2.0 * g.total_weight();
    if (two_t <= 0.0)
        return mf;
    for (const auto &e : g.edges) {
        const double f = e.weight / two_t;
        mf.flow[partition[e.u]] += f;
        mf.flow[partition[e.v]] += f;
        if (partition[e.u] != partition[e.v]) {
            mf.exit[partition[e.u]] += f;
            mf.exit[partition[e.v]] += f;
        }
    }
    return mf;
}

/// Codebook cost of one module: (q + sum p) * H over {q, p_i}.
inline double module_codebook_bits(double exit, double flow, double sum_plogp_nodes) {
    const double total = exit + flow;
    return plogp(total) - plogp(exit) - sum_plogp_nodes;
}

} // namespace detail

/// Two-level map equation L = q H(Q) + sum_m p_m H(P^m) for an undirected graph, in bits.
/// Module ids need not be dense.
inline double map_equation_codelength(const CooccurrenceGraph &g, std::span<const ModuleId> partition) {
    if (partition.size() != g.node_count())
        throw ValidationError("partition does not cover every node");
    if (g.edge_count() == 0)
        return 0.0;
    const auto mf = detail::module_flows(g, partition);
    double sum_exit = 0.0;
    double sum_plogp_exit = 0.0;
    double sum_plogp_total = 0.0;
    for (std::size_t m = 0; m < mf.exit.size(); ++m) {
        sum_exit += mf.exit[m];
        sum_plogp_exit += plogp(mf.exit[m]);
        sum_plogp_total += plogp(mf.exit[m] + mf.flow[m]);
    }
    double node_term = 0.0;
    const double two_t = 2.0 * g.total_weight();
    for (double s : g.strengths())
        node_term += plogp(s / two_t);
    return plogp(sum_exit) - 2.0 * sum_plogp_exit - node_term + sum_plogp_total;
}

/// Per-module codebook cost within the two-level map equation (the module's share of L,
/// excluding the index codebook).
inline std::vector<double> module_codelengths(const CooccurrenceGraph &g, std::span<const ModuleId> partition) {
    const auto mf = detail::module_flows(g, partition);
    std::vector<double> node_plogp(mf.exit.size(), 0.0);
    const double two_t = 2.0 * g.total_weight();
    if (two_t > 0.0) {
        const auto s = g.strengths();
        for (std::size_t i = 0; i < s.size(); ++i)
            node_plogp[partition[i]] += plogp(s[i] / two_t);
    }
    std::vector<double> out(mf.exit.size());
    for (std::size_t m = 0; m < out.size(); ++m)
        out[m] = detail::module_codebook_bits(mf.exit[m], mf.flow[m], node_plogp[m]);
    return out;
}

/// Three-level (root, module, submodule) map equation. `sub` assigns every node a submodule
/// id that is unique across the whole graph and nested in `top`. A module with a single
/// submodule is coded directly by its leaf codebook, so an unsplit hierarchy scores the same
/// as the flat partition.
inline double hierarchical_codelength(const CooccurrenceGraph &g, std::span<const ModuleId> top,
                                      std::span<const ModuleId> sub) {
    if (top.size() != g.node_count() || sub.size() != g.node_count())
        throw ValidationError("partition does not cover every node");
    if (g.edge_count() == 0)
        return 0.0;
    const auto top_flows = detail::module_flows(g, top);
    const auto sub_flows = detail::module_flows(g, sub);
    std::vector<std::vector<ModuleId>> children(top_flows.exit.size());
    std::vector<char> seen(sub_flows.exit.size(), 0);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (!seen[sub[i]]) {
            seen[sub[i]] = 1;
            children[top[i]].push_back(sub[i]);
        }
    }
    const double two_t = 2.0 * g.total_weight();
    const auto s = g.strengths();
    std::vector<double> top_node_plogp(top_flows.exit.size(), 0.0);
    std::vector<double> sub_node_plogp(sub_flows.exit.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        top_node_plogp[top[i]] += plogp(s[i] / two_t);
        sub_node_plogp[sub[i]] += plogp(s[i] / two_t);
    }

    double index_rate = 0.0;
    double index_plogp = 0.0;
    for (double q : top_flows.exit) {
        index_rate += q;
        index_plogp += plogp(q);
    }
    double bits = plogp(index_rate) - index_plogp;
    for (std::size_t m = 0; m < children.size(); ++m) {
        if (children[m].empty())
            continue;
        if (children[m].size() == 1) {
            bits += detail::module_codebook_bits(top_flows.exit[m], top_flows.flow[m], top_node_plogp[m]);
            continue;
        }
        // Intermediate codebook: exit from m plus entry into each submodule.
        double rate = top_flows.exit[m];
        double pl = plogp(top_flows.exit[m]);
        for (auto c : children[m]) {
            rate += sub_flows.exit[c];
            pl += plogp(sub_flows.exit[c]);
            bits += detail::module_codebook_bits(sub_flows.exit[c], sub_flows.flow[c], sub_node_plogp[c]);
        }
        bits += plogp(rate) - pl;
    }
    return bits;
}

// ---------------------------------------------------------------------------------------------
// Optimizer

namespace detail {

/// Network of units (nodes or aggregated modules) with flow-normalized undirected links.
struct FlowNetwork {
    std::vector<double> flow;
    std::vector<double> exit; // flow leaving the unit along its links
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> targets;
    std::vector<double> link_flow;
    double node_plogp = 0.0; // sum over original nodes of plogp(p_i)

    std::size_t size() const { return flow.size(); }

    static FlowNetwork from_graph(const CooccurrenceGraph &g) {
        FlowNetwork net;
        const auto n = g.node_count();
        const double two_t = 2.0 * g.total_weight();
        Adjacency adj(g);
        net.offsets = adj.offsets;
        net.targets.assign(adj.targets.begin(), adj.targets.end());
        net.link_flow.resize(adj.weights.size());
        net.flow.assign(n, 0.0);
        net.exit.assign(n, 0.0);
        for (std::size_t k = 0; k < adj.weights.size(); ++k)
            net.link_flow[k] = two_t > 0.0 ? adj.weights[k] / two_t : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (auto k = net.offsets[i]; k < net.offsets[i + 1]; ++k)
                net.flow[i] += net.link_flow[k];
            net.exit[i] = net.flow[i];
            net.node_plogp += plogp(net.flow[i]);
        }
        return net;
    }

    /// Collapses units sharing a module (dense ids 0..k-1) into single units.
    FlowNetwork aggregate(std::span<const std::uint32_t> module, std::uint32_t k) const {
        FlowNetwork out;
        out.node_plogp = node_plogp;
        out.flow.assign(k, 0.0);
        out.exit.assign(k, 0.0);
        std::vector<std::vector<std::uint32_t>> members(k);
        for (std::uint32_t u = 0; u < size(); ++u) {
            out.flow[module[u]] += flow[u];
            members[module[u]].push_back(u);
        }
        out.offsets.assign(k + 1, 0);
        std::vector<double> acc(k, 0.0);
        std::vector<std::uint32_t> touched;
        for (std::uint32_t m = 0; m < k; ++m) {
            touched.clear();
            for (auto u : members[m]) {
                for (auto e = offsets[u]; e < offsets[u + 1]; ++e) {
                    auto t = module[targets[e]];
                    if (t == m)
                        continue;
                    if (acc[t] == 0.0)
                        touched.push_back(t);
                    acc[t] += link_flow[e];
                }
            }
            std::sort(touched.begin(), touched.end());
            for (auto t : touched) {
                out.targets.push_back(t);
                out.link_flow.push_back(acc[t]);
                out.exit[m] += acc[t];
                acc[t] = 0.0;
            }
            out.offsets[m + 1] = out.targets.size();
        }
        return out;
    }

    /// Sub-network induced by `units`, renormalized to unit total flow as a standalone graph.
    FlowNetwork induced(std::span<const std::uint32_t> units) const {
        std::vector<std::uint32_t> local(size(), static_cast<std::uint32_t>(-1));
        for (std::uint32_t i = 0; i < units.size(); ++i)
            local[units[i]] = i;
        FlowNetwork out;
        out.offsets.assign(units.size() + 1, 0);
        double total = 0.0;
        for (std::uint32_t i = 0; i < units.size(); ++i) {
            auto u = units[i];
            for (auto e = offsets[u]; e < offsets[u + 1]; ++e) {
                if (local[targets[e]] == static_cast<std::uint32_t>(-1))
                    continue;
                out.targets.push_back(local[targets[e]]);
                out.link_flow.push_back(link_flow[e]);
                total += link_flow[e];
            }
            out.offsets[i + 1] = out.targets.size();
        }
        out.flow.assign(units.size(), 0.0);
        out.exit.assign(units.size(), 0.0);
        for (std::uint32_t i = 0; i < units.size(); ++i) {
            for (auto e = out.offsets[i]; e < out.offsets[i + 1]; ++e) {
                if (total > 0.0)
                    out.link_flow[e] /= total;
                out.flow[i] += out.link_flow[e];
            }
            out.exit[i] = out.flow[i];
            out.node_plogp += plogp(out.flow[i]);
        }
        return out;
    }
};

/// Renumbers module ids to 0..k-1 in order of first appearance; returns k.
inline std::uint32_t compact(std::vector<std::uint32_t> &module) {
    std::vector<std::uint32_t> remap(module.size(), static_cast<std::uint32_t>(-1));
    std::uint32_t next = 0;
    for (auto &m : module) {
        if (remap[m] == static_cast<std::uint32_t>(-1))
            remap[m] = next++;
        m = remap[m];
    }
    return next;
}

/// Greedy unit moves that lower the map equation, with incremental codelength bookkeeping.
class LocalMover {
public:
    static constexpr double min_improvement = 1e-12;

    LocalMover(const FlowNetwork &net, std::vector<std::uint32_t> &module)
        : net_(net), module_(module), exit_(net.size(), 0.0), flow_(net.size(), 0.0),
          members_(net.size(), 0), neighbour_flow_(net.size(), 0.0) {
        for (std::uint32_t u = 0; u < net.size(); ++u) {
            auto m = module_[u];
            flow_[m] += net.flow[u];
            exit_[m] += net.exit[u];
            ++members_[m];
            for (auto e = net.offsets[u]; e < net.offsets[u + 1]; ++e)
                if (module_[net.targets[e]] == m)
                    exit_[m] -= net.link_flow[e];
        }
        for (std::uint32_t m = 0; m < net.size(); ++m) {
            if (members_[m] == 0)
                empty_.push_back(m);
            sum_exit_ += exit_[m];
            sum_plogp_exit_ += plogp(exit_[m]);
            sum_plogp_total_ += plogp(exit_[m] + flow_[m]);
        }
        std::reverse(empty_.begin(), empty_.end());
    }

    double codelength() const {
        return plogp(sum_exit_) - 2.0 * sum_plogp_exit_ + sum_plogp_total_ - net_.node_plogp;
    }

    /// Sweeps units in a fresh random order until a sweep makes no move; returns moves made.
    std::size_t run(std::mt19937_64 &rng, std::size_t max_sweeps = 1000) {
        std::vector<std::uint32_t> order(net_.size());
        std::iota(order.begin(), order.end(), 0u);
        std::size_t total_moves = 0;
        for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng() % i]);
            std::size_t moves = 0;
            for (auto u : order)
                moves += try_move(u) ? 1 : 0;
            total_moves += moves;
            if (moves == 0)
                break;
        }
        return total_moves;
    }

private:
    double delta_for(std::uint32_t u, std::uint32_t from, double w_from, std::uint32_t to, double w_to) const {
        const double pu = net_.flow[u];
        const double eu = net_.exit[u];
        const double old_from_exit = exit_[from];
        const double old_to_exit = exit_[to];
        const double new_from_exit = old_from_exit - eu + 2.0 * w_from;
        const double new_to_exit = old_to_exit + eu - 2.0 * w_to;
        const double new_sum_exit = sum_exit_ - old_from_exit - old_to_exit + new_from_exit + new_to_exit;
        const double d_plogp_exit =
            plogp(new_from_exit) + plogp(new_to_exit) - plogp(old_from_exit) - plogp(old_to_exit);
        const double d_plogp_total = plogp(new_from_exit + flow_[from] - pu) +
                                     plogp(new_to_exit + flow_[to] + pu) -
                                     plogp(old_from_exit + flow_[from]) - plogp(old_to_exit + flow_[to]);
        return plogp(new_sum_exit) - plogp(sum_exit_) - 2.0 * d_plogp_exit + d_plogp_total;
    }

    bool try_move(std::uint32_t u) {
        const auto from = module_[u];
        touched_.clear();
        for (auto e = net_.offsets[u]; e < net_.offsets[u + 1]; ++e) {
            auto m = module_[net_.targets[e]];
            if (neighbour_flow_[m] == 0.0)
                touched_.push_back(m);
            neighbour_flow_[m] += net_.link_flow[e];
        }
        const double w_from = neighbour_flow_[from];
        std::uint32_t best = from;
        double best_delta = -min_improvement;
        // Candidate order is fixed (ascending module id) so ties resolve deterministically.
        std::sort(touched_.begin(), touched_.end());
        for (auto m : touched_) {
            if (m == from)
                continue;
            const double d = delta_for(u, from, w_from, m, neighbour_flow_[m]);
            if (d < best_delta) {
                best_delta = d;
                best = m;
            }
        }
        if (members_[from] > 1 && !empty_.empty()) {
            const auto m = empty_.back();
            const double d = delta_for(u, from, w_from, m, 0.0);
            if (d < best_delta) {
                best_delta = d;
                best = m;
            }
        }
        const double w_to = best == from ? 0.0 : neighbour_flow_[best];
        for (auto m : touched_)
            neighbour_flow_[m] = 0.0;
        if (best == from)
            return false;
        apply(u, from, w_from, best, w_to);
        return true;
    }

    void apply(std::uint32_t u, std::uint32_t from, double w_from, std::uint32_t to, double w_to) {
        const double pu = net_.flow[u];
        const double eu = net_.exit[u];
        sum_exit_ -= exit_[from] + exit_[to];
        sum_plogp_exit_ -= plogp(exit_[from]) + plogp(exit_[to]);
        sum_plogp_total_ -= plogp(exit_[from] + flow_[from]) + plogp(exit_[to] + flow_[to]);
        exit_[from] += -eu + 2.0 * w_from;
        exit_[to] += eu - 2.0 * w_to;
        flow_[from] -= pu;
        flow_[to] += pu;
        if (--members_[from] == 0) {
            exit_[from] = 0.0;
            flow_[from] = 0.0;
            empty_.push_back(from);
        }
        if (members_[to]++ == 0) {
            if (empty_.back() == to)
                empty_.pop_back();
            else
                empty_.erase(std::find(empty_.begin(), empty_.end(), to));
        }
        sum_exit_ += exit_[from] + exit_[to];
        sum_plogp_exit_ += plogp(exit_[from]) + plogp(exit_[to]);
        sum_plogp_total_ += plogp(exit_[from] + flow_[from]) + plogp(exit_[to] + flow_[to]);
        module_[u] = to;
    }

    const FlowNetwork &net_;
    std::vector<std::uint32_t> &module_;
    std::vector<double> exit_;
    std::vector<double> flow_;
    std::vector<std::uint32_t> members_;
    std::vector<std::uint32_t> empty_;
    std::vector<double> neighbour_flow_;
    std::vector<std::uint32_t> touched_;
    double sum_exit_ = 0.0;
    double sum_plogp_exit_ = 0.0;
    double sum_plogp_total_ = 0.0;
};

/// Repeated local moving and aggregation starting from `initial` (one module id per unit
/// of `base`). Returns the module of every base unit, compacted.
inline std::vector<std::uint32_t> coarsen(const FlowNetwork &base, std::vector<std::uint32_t> initial,
                                          std::mt19937_64 &rng) {
    std::vector<std::uint32_t> unit_of(base.size());
    std::iota(unit_of.begin(), unit_of.end(), 0u);
    FlowNetwork net = base;
    std::vector<std::uint32_t> module = std::move(initial);
    compact(module);
    while (true) {
        {
            LocalMover mover(net, module);
            mover.run(rng);
        }
        const auto k = compact(module);
        if (k == net.size())
            break;
        for (auto &u : unit_of)
            u = module[u];
        net = net.aggregate(module, k);
        module.resize(k);
        std::iota(module.begin(), module.end(), 0u);
    }
    for (auto &u : unit_of)
        u = module[u];
    compact(unit_of);
    return unit_of;
}

inline double flat_codelength(const FlowNetwork &net, const std::vector<std::uint32_t> &module) {
    std::vector<std::uint32_t> copy = module;
    LocalMover mover(net, copy);
    return mover.codelength();
}

/// One optimization run: coarsening from singletons followed by alternating node-level
/// (fine) and submodule-level (coarse) re-optimization while either lowers the codelength.
inline std::vector<std::uint32_t> optimize_once(const FlowNetwork &net, std::mt19937_64 &rng) {
    std::vector<std::uint32_t> singles(net.size());
    std::iota(singles.begin(), singles.end(), 0u);
    auto best = coarsen(net, singles, rng);
    double best_len = flat_codelength(net, best);

    for (int round = 0; round < 50; ++round) {
        bool improved = false;

        auto fine = coarsen(net, best, rng);
        double fine_len = flat_codelength(net, fine);
        if (fine_len < best_len - 1e-10) {
            best = std::move(fine);
            best_len = fine_len;
            improved = true;
        }

        // Split every module into submodules, then move submodules between modules.
        const auto k = *std::max_element(best.begin(), best.end()) + 1;
        std::vector<std::vector<std::uint32_t>> members(k);
        for (std::uint32_t u = 0; u < net.size(); ++u)
            members[best[u]].push_back(u);
        std::vector<std::uint32_t> sub(net.size());
        std::uint32_t next_sub = 0;
        for (const auto &mem : members) {
            if (mem.size() == 1) {
                sub[mem[0]] = next_sub++;
                continue;
            }
            auto local_net = net.induced(mem);
            std::vector<std::uint32_t> local_init(mem.size());
            std::iota(local_init.begin(), local_init.end(), 0u);
            auto local = coarsen(local_net, local_init, rng);
            std::uint32_t local_k = 0;
            for (std::size_t i = 0; i < mem.size(); ++i) {
                sub[mem[i]] = next_sub + local[i];
                local_k = std::max(local_k, local[i] + 1);
            }
            next_sub += local_k;
        }
        if (next_sub > k) {
            auto sub_net = net.aggregate(sub, next_sub);
            std::vector<std::uint32_t> sub_module(next_sub);
            for (std::uint32_t u = 0; u < net.size(); ++u)
                sub_module[sub[u]] = best[u];
            {
                LocalMover mover(sub_net, sub_module);
                mover.run(rng);
            }
            compact(sub_module);
            std::vector<std::uint32_t> coarse(net.size());
            for (std::uint32_t u = 0; u < net.size(); ++u)
                coarse[u] = sub_module[sub[u]];
            compact(coarse);
            coarse = coarsen(net, coarse, rng);
            double coarse_len = flat_codelength(net, coarse);
            if (coarse_len < best_len - 1e-10) {
                best = std::move(coarse);
                best_len = coarse_len;
                improved = true;
            }
        }
        if (!improved)
            break;
    }
    return best;
}

/// Renumbers modules by descending size, ties by smallest member id.
inline std::vector<ModuleId> canonical_modules(std::span<const std::uint32_t> module) {
    std::uint32_t k = 0;
    for (auto m : module)
        k = std::max(k, m + 1);
    std::vector<std::size_t> size(k, 0);
    std::vector<std::size_t> first(k, module.size());
    for (std::size_t i = 0; i < module.size(); ++i) {
        ++size[module[i]];
        first[module[i]] = std::min(first[module[i]], i);
    }
    std::vector<std::uint32_t> order;
    for (std::uint32_t m = 0; m < k; ++m)
        if (size[m] > 0)
            order.push_back(m);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        return size[a] != size[b] ? size[a] > size[b] : first[a] < first[b];
    });
    std::vector<ModuleId> rank(k, 0);
    for (std::uint32_t r = 0; r < order.size(); ++r)
        rank[order[r]] = r;
    std::vector<ModuleId> out(module.size());
    for (std::size_t i = 0; i < module.size(); ++i)
        out[i] = rank[module[i]];
    return out;
}

struct FlatResult {
    std::vector<ModuleId> module;
    double codelength = 0.0;
};

/// Best-of-trials flat partition; never worse than the one-module partition.
inline FlatResult best_flat_partition(const CooccurrenceGraph &g, std::uint64_t seed, std::size_t trials,
                                      std::size_t threads) {
    const auto n = g.node_count();
    FlatResult one{std::vector<ModuleId>(n, 0), 0.0};
    if (n <= 1 || g.edge_count() == 0) {
        // Isolated nodes carry no flow; keep them together.
        return one;
    }
    one.codelength = map_equation_codelength(g, one.module);
    const auto net = FlowNetwork::from_graph(g);
    trials = std::max<std::size_t>(1, trials);
    std::vector<FlatResult> results(trials);
    parallel_for(trials, threads, [&](std::size_t t) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        auto module = optimize_once(net, rng);
        auto canon = canonical_modules(module);
        double len = map_equation_codelength(g, canon);
        results[t] = {std::move(canon), len};
    });
    FlatResult best = one;
    for (auto &r : results)
        if (r.codelength < best.codelength)
            best = std::move(r);
    return best;
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Hierarchical partition

struct HierarchicalPartition {
    std::vector<ModuleId> level1;
    /// Submodule ids are unique across the graph and nest inside level1 modules.
    std::vector<ModuleId> level2;
    /// level2_parent[submodule] = level1 module.
    std::vector<ModuleId> level2_parent;
    double level1_codelength = 0.0;
    double level2_codelength = 0.0;

    std::size_t module_count() const {
        return level1.empty() ? 0 : *std::max_element(level1.begin(), level1.end()) + 1;
    }
    std::size_t submodule_count() const { return level2_parent.size(); }
};

struct CommunityOptions {
    std::uint64_t seed = 1;
    std::size_t trials = 10;
    std::size_t threads = 1;
};

/// Two-level partition: level 1 is the best of `trials` map-equation optimizations on the whole
/// graph; level 2 repeats the procedure on the subgraph induced by each level-1 module.
inline HierarchicalPartition detect_communities(const CooccurrenceGraph &g, const CommunityOptions &opts = {}) {
    if (opts.trials == 0)
        throw ValidationError("trials must be positive");
    if (g.node_count() == 0)
        throw ValidationError("cannot cluster an empty graph");
    if (!is_connected(g))
        throw ValidationError("graph is disconnected; extract the giant component first");

    HierarchicalPartition hp;
    auto top = detail::best_flat_partition(g, opts.seed, opts.trials, opts.threads);
    hp.level1 = std::move(top.module);
    hp.level1_codelength = top.codelength;

    const auto k = hp.module_count();
    std::vector<std::vector<NodeId>> members(k);
    for (NodeId i = 0; i < g.node_count(); ++i)
        members[hp.level1[i]].push_back(i);

    std::vector<std::vector<ModuleId>> local(k);
    parallel_for(k, opts.threads, [&](std::size_t m) {
        auto sub = induced_subgraph(g, members[m]);
        auto res = detail::best_flat_partition(sub.graph, derive_seed(opts.seed, 1000003ULL + m), opts.trials, 1);
        local[m] = std::move(res.module);
    });

    hp.level2.assign(g.node_count(), 0);
    ModuleId next = 0;
    for (std::size_t m = 0; m < k; ++m) {
        ModuleId local_k = 0;
        for (std::size_t i = 0; i < members[m].size(); ++i) {
            hp.level2[members[m][i]] = next + local[m][i];
            local_k = std::max(local_k, local[m][i] + 1);
        }
        for (ModuleId s = 0; s < local_k; ++s)
            hp.level2_parent.push_back(static_cast<ModuleId>(m));
        next += local_k;
    }
    hp.level2_codelength = hierarchical_codelength(g, hp.level1, hp.level2);
    return hp;
}

// ---------------------------------------------------------------------------------------------
// Overlaps

struct OverlapMembership {
    NodeId node = 0;
    /// (module, strength); the primary module comes first, the rest by descending strength.
    std::vector<std::pair<ModuleId, double>> modules;
};

/// Membership strength of a node toward module m is the share of its strength on edges into m.
/// A node belongs to every module reaching `threshold`, and always to its own.
inline std::vector<OverlapMembership> assign_overlaps(const CooccurrenceGraph &g, std::span<const ModuleId> level1,
                                                      double threshold = 0.25) {
    if (level1.size() != g.node_count())
        throw ValidationError("partition does not cover every node");
    Adjacency adj(g);
    std::vector<OverlapMembership> out(g.node_count());
    std::map<ModuleId, double> share;
    for (NodeId i = 0; i < g.node_count(); ++i) {
        share.clear();
        double s = 0.0;
        for (auto k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
            share[level1[adj.targets[k]]] += adj.weights[k];
            s += adj.weights[k];
        }
        auto &om = out[i];
        om.node = i;
        const auto primary = level1[i];
        om.modules.emplace_back(primary, s > 0.0 ? share[primary] / s : 1.0);
        std::vector<std::pair<ModuleId, double>> extra;
        for (const auto &[m, w] : share)
            if (m != primary && s > 0.0 && w / s >= threshold)
                extra.emplace_back(m, w / s);
        std::sort(extra.begin(), extra.end(), [](const auto &a, const auto &b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        om.modules.insert(om.modules.end(), extra.begin(), extra.end());
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Taxonomy

struct TaxonomyCluster {
    std::string id; // "3" for level 1, "3.1" for level 2
    ModuleId module = 0;
    std::optional<ModuleId> parent;
    std::vector<std::string> members; // by descending mention count, then lexicographic
    std::vector<std::string> top_terms;
    std::vector<std::string> overlap_members; // secondary members (level 1 only)
    double codelength = 0.0;
    std::string label;
};

struct MultiMembership {
    std::string condition;
    std::vector<std::pair<ModuleId, double>> modules;
};

struct Taxonomy {
    std::vector<TaxonomyCluster> level1;
    std::vector<TaxonomyCluster> level2;
    std::vector<MultiMembership> multi;
    double level1_codelength = 0.0;
    double level2_codelength = 0.0;
    std::size_t top_k = 50;
};

/// `mention_count` descending, ties lexicographic.
inline std::vector<std::string> rank_by_mentions(const CooccurrenceGraph &g, std::vector<NodeId> ids) {
    std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
        if (g.mention_counts[a] != g.mention_counts[b])
            return g.mention_counts[a] > g.mention_counts[b];
        return g.conditions[a] < g.conditions[b];
    });
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (auto i : ids)
        out.push_back(g.conditions[i]);
    return out;
}

inline Taxonomy build_taxonomy(const CooccurrenceGraph &g, const HierarchicalPartition &hp,
                               const std::vector<OverlapMembership> &overlaps, std::size_t k = 50) {
    Taxonomy tax;
    tax.top_k = k;
    tax.level1_codelength = hp.level1_codelength;
    tax.level2_codelength = hp.level2_codelength;
    const auto l1_bits = module_codelengths(g, hp.level1);
    const auto l2_bits = module_codelengths(g, hp.level2);

    auto make = [&](std::vector<std::vector<NodeId>> &groups, const std::vector<double> &bits,
                    std::vector<TaxonomyCluster> &dst, bool sub) {
        std::vector<ModuleId> local_index(hp.module_count(), 0);
        for (ModuleId m = 0; m < groups.size(); ++m) {
            if (groups[m].empty())
                continue;
            TaxonomyCluster c;
            c.module = m;
            if (sub) {
                c.parent = hp.level2_parent[m];
                c.id = std::to_string(*c.parent) + "." + std::to_string(local_index[*c.parent]++);
            } else {
                c.id = std::to_string(m);
            }
            c.members = rank_by_mentions(g, groups[m]);
            c.top_terms.assign(c.members.begin(), c.members.begin() + std::min(k, c.members.size()));
            c.codelength = m < bits.size() ? bits[m] : 0.0;
            dst.push_back(std::move(c));
        }
        std::stable_sort(dst.begin(), dst.end(), [](const auto &a, const auto &b) {
            return a.members.size() != b.members.size() ? a.members.size() > b.members.size() : a.module < b.module;
        });
    };

    std::vector<std::vector<NodeId>> l1(hp.module_count());
    std::vector<std::vector<NodeId>> l2(hp.submodule_count());
    for (NodeId i = 0; i < g.node_count(); ++i) {
        l1[hp.level1[i]].push_back(i);
        l2[hp.level2[i]].push_back(i);
    }
    make(l1, l1_bits, tax.level1, false);
    make(l2, l2_bits, tax.level2, true);

    std::vector<std::vector<NodeId>> secondary(hp.module_count());
    std::vector<NodeId> multi_nodes;
    for (const auto &om : overlaps) {
        if (om.modules.size() < 2)
            continue;
        multi_nodes.push_back(om.node);
        for (std::size_t j = 1; j < om.modules.size(); ++j)
            secondary[om.modules[j].first].push_back(om.node);
    }
    for (auto &c : tax.level1)
        c.overlap_members = rank_by_mentions(g, secondary[c.module]);
    std::sort(multi_nodes.begin(), multi_nodes.end(),
              [&](NodeId a, NodeId b) { return g.conditions[a] < g.conditions[b]; });
    for (auto i : multi_nodes)
        tax.multi.push_back({g.conditions[i], overlaps[i].modules});
    return tax;
}

inline std::string write_partition(const HierarchicalPartition &hp) {
    std::string out;
    for (std::size_t i = 0; i < hp.level1.size(); ++i)
        out += std::to_string(i) + "\t" + std::to_string(hp.level1[i]) + "\t" + std::to_string(hp.level2[i]) + "\n";
    return out;
}

inline HierarchicalPartition read_partition(const std::filesystem::path &path, const CooccurrenceGraph &g) {
    HierarchicalPartition hp;
    auto lines = io::read_lines(path);
    if (lines.size() != g.node_count())
        throw ValidationError(path.string() + ": partition has " + std::to_string(lines.size()) +
                              " rows for a graph of " + std::to_string(g.node_count()) + " nodes");
    hp.level1.resize(lines.size());
    hp.level2.resize(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto cols = text::split(lines[i], '\t');
        if (cols.size() != 3 || static_cast<std::size_t>(io::parse_int(cols[0])) != i)
            throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": malformed partition row");
        hp.level1[i] = static_cast<ModuleId>(io::parse_int(cols[1]));
        hp.level2[i] = static_cast<ModuleId>(io::parse_int(cols[2]));
    }
    std::size_t subs = 0;
    for (auto s : hp.level2)
        subs = std::max<std::size_t>(subs, s + 1);
    hp.level2_parent.assign(subs, 0);
    for (std::size_t i = 0; i < lines.size(); ++i)
        hp.level2_parent[hp.level2[i]] = hp.level1[i];
    hp.level1_codelength = map_equation_codelength(g, hp.level1);
    hp.level2_codelength = hierarchical_codelength(g, hp.level1, hp.level2);
    return hp;
}

inline nlohmann::ordered_json taxonomy_json(const Taxonomy &tax) {
    using json = nlohmann::ordered_json;
    auto cluster = [](const TaxonomyCluster &c) {
        json j;
        j["cluster_id"] = c.id;
        j["size"] = c.members.size();
        j["codelength_bits"] = std::stod(io::format_fixed(c.codelength, 9));
        j["label"] = c.label;
        j["top_terms"] = c.top_terms;
        j["members"] = c.members;
        return j;
    };
    json root;
    root["top_k"] = tax.top_k;
    root["level1_codelength_bits"] = std::stod(io::format_fixed(tax.level1_codelength, 9));
    root["level2_codelength_bits"] = std::stod(io::format_fixed(tax.level2_codelength, 9));
    json clusters = json::array();
    for (const auto &c : tax.level1) {
        auto j = cluster(c);
        j["overlap_members"] = c.overlap_members;
        json subs = json::array();
        for (const auto &s : tax.level2)
            if (s.parent && *s.parent == c.module)
                subs.push_back(cluster(s));
        j["subclusters"] = std::move(subs);
        clusters.push_back(std::move(j));
    }
    root["clusters"] = std::move(clusters);
    json multi = json::array();
    for (const auto &mm : tax.multi) {
        json j;
        j["condition"] = mm.condition;
        json mods = json::array();
        for (const auto &[m, s] : mm.modules)
            mods.push_back(json{{"cluster_id", std::to_string(m)}, {"strength", std::stod(io::format_fixed(s, 9))}});
        j["clusters"] = std::move(mods);
        multi.push_back(std::move(j));
    }
    root["multi_membership"] = std::move(multi);
    return root;
}

inline std::string write_taxonomy(const Taxonomy &tax) { return taxonomy_json(tax).dump(2) + "\n"; }

} // namespace medtax
