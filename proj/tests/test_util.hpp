#pragma once

#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "medtax/graph.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string &tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("medtax-test-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

    std::filesystem::path write(const std::string &name, const std::string &content) const {
        auto p = path_ / name;
        std::filesystem::create_directories(p.parent_path());
        std::ofstream(p, std::ios::binary) << content;
        return p;
    }

  private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline medtax::CooccurrenceGraph graph(std::size_t n, std::vector<medtax::Edge> edges) {
    return medtax::CooccurrenceGraph::from_edges(n, std::move(edges));
}

inline medtax::CooccurrenceGraph clique(std::size_t n, double w = 1.0) {
    std::vector<medtax::Edge> e;
    for (medtax::NodeId i = 0; i < n; ++i)
        for (medtax::NodeId j = i + 1; j < n; ++j)
            e.push_back({i, j, w});
    return graph(n, e);
}

/// k cliques of size s arranged in a ring, consecutive cliques joined by one unit edge.
inline medtax::CooccurrenceGraph ring_of_cliques(std::size_t k, std::size_t s) {
    std::vector<medtax::Edge> e;
    for (std::size_t c = 0; c < k; ++c) {
        const auto base = static_cast<medtax::NodeId>(c * s);
        for (medtax::NodeId i = 0; i < s; ++i)
            for (medtax::NodeId j = i + 1; j < s; ++j)
                e.push_back({base + i, base + j, 1.0});
        if (k > 1 && (k > 2 || c == 0))
            e.push_back({base, static_cast<medtax::NodeId>(((c + 1) % k) * s + 1), 1.0});
    }
    return graph(k * s, e);
}

/// Erdos-Renyi style graph with integer weights in [1, max_w].
inline medtax::CooccurrenceGraph random_graph(std::mt19937_64 &rng, std::size_t n, double p, int max_w = 5) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> w(1, max_w);
    std::vector<medtax::Edge> e;
    for (medtax::NodeId i = 0; i < n; ++i)
        for (medtax::NodeId j = i + 1; j < n; ++j)
            if (u(rng) < p)
                e.push_back({i, j, static_cast<double>(w(rng))});
    return graph(n, e);
}

/// Flat two-level map equation written from the textbook formula, independent of the library.
inline double map_equation_oracle(const medtax::CooccurrenceGraph &g, const std::vector<std::uint32_t> &part) {
    auto pl = [](double x) { return x > 0 ? x * std::log2(x) : 0.0; };
    double two_t = 0;
    std::vector<double> s(g.node_count(), 0.0);
    for (const auto &e : g.edges) {
        two_t += 2 * e.weight;
        s[e.u] += e.weight;
        s[e.v] += e.weight;
    }
    std::map<std::uint32_t, double> exit, flow;
    for (std::size_t i = 0; i < g.node_count(); ++i)
        flow[part[i]] += s[i] / two_t;
    for (const auto &e : g.edges)
        if (part[e.u] != part[e.v]) {
            exit[part[e.u]] += e.weight / two_t;
            exit[part[e.v]] += e.weight / two_t;
        }
    double q = 0, sum_q = 0, sum_qp = 0, nodes = 0;
    for (auto [m, p] : flow) {
        double qm = exit.count(m) ? exit[m] : 0.0;
        q += qm;
        sum_q += pl(qm);
        sum_qp += pl(qm + p);
    }
    for (double x : s)
        nodes += pl(x / two_t);
    return pl(q) - 2 * sum_q - nodes + sum_qp;
}

/// Minimum codelength over every set partition (restricted growth strings).
inline double exhaustive_min_codelength(const medtax::CooccurrenceGraph &g) {
    const auto n = g.node_count();
    std::vector<std::uint32_t> a(n, 0);
    double best = map_equation_oracle(g, a);
    std::function<void(std::size_t, std::uint32_t)> rec = [&](std::size_t i, std::uint32_t k) {
        if (i == n) {
            best = std::min(best, map_equation_oracle(g, a));
            return;
        }
        for (std::uint32_t m = 0; m <= k; ++m) {
            a[i] = m;
            rec(i + 1, std::max(k, m + 1));
        }
    };
    if (n > 1)
        rec(1, 1);
    return best;
}

/// Normalized mutual information, arithmetic-mean normalization; identical trivial partitions give 1.
inline double nmi(const std::vector<std::uint32_t> &a, const std::vector<std::uint32_t> &b) {
    const double n = static_cast<double>(a.size());
    std::map<std::uint32_t, double> ca, cb;
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1;
        cb[b[i]] += 1;
        joint[{a[i], b[i]}] += 1;
    }
    auto h = [&](const std::map<std::uint32_t, double> &c) {
        double x = 0;
        for (auto [k, v] : c)
            x -= v / n * std::log(v / n);
        return x;
    };
    double mi = 0;
    for (auto [k, v] : joint)
        mi += v / n * std::log(v * n / (ca[k.first] * cb[k.second]));
    const double ha = h(ca), hb = h(cb);
    if (ha + hb == 0)
        return 1.0;
    return 2 * mi / (ha + hb);
}

/// Dense power iteration over an explicit transition matrix.
inline std::vector<double> dense_pagerank(const medtax::CooccurrenceGraph &g, double d = 0.85) {
    const auto n = g.node_count();
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (const auto &e : g.edges) {
        w[e.u][e.v] += e.weight;
        w[e.v][e.u] += e.weight;
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[i] += w[i][j];
    std::vector<double> p(n, 1.0 / n), next(n);
    for (int it = 0; it < 5000; ++it) {
        for (std::size_t j = 0; j < n; ++j) {
            double x = (1 - d) / n;
            for (std::size_t i = 0; i < n; ++i)
                x += d * p[i] * (out[i] > 0 ? w[i][j] / out[i] : 1.0 / n);
            next[j] = x;
        }
        double diff = 0;
        for (std::size_t j = 0; j < n; ++j)
            diff += std::abs(next[j] - p[j]);
        p.swap(next);
        if (diff < 1e-15)
            break;
    }
    return p;
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0)
        return 0;
    if (x >= 1)
        return 1;
    if (x > (a + 1) / (a + b + 2))
        return 1 - incomplete_beta(b, a, 1 - x);
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                                  b * std::log1p(-x)) / a;
    const double tiny = 1e-300;
    double f = 1, c = 1, d = 0;
    for (int i = 0; i <= 2000; ++i) {
        const int m = i / 2;
        double num;
        if (i == 0)
            num = 1;
        else if (i % 2 == 0)
            num = m * (b - m) * x / ((a + 2 * m - 1) * (a + 2 * m));
        else
            num = -((a + m) * (a + b + m) * x) / ((a + 2 * m) * (a + 2 * m + 1));
        d = 1 + num * d;
        d = std::abs(d) < tiny ? tiny : d;
        d = 1 / d;
        c = 1 + num / c;
        c = std::abs(c) < tiny ? tiny : c;
        const double cd = c * d;
        f *= cd;
        if (std::abs(1 - cd) < 1e-16)
            break;
    }
    return front * (f - 1);
}

/// Two-sided Student-t tail probability P(|T| > |t|) with df degrees of freedom.
inline double t_two_sided_p(double t, double df) { return incomplete_beta(df / 2, 0.5, df / (df + t * t)); }

} // namespace testutil
