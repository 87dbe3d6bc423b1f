#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "backbone.hpp"
#include "centrality.hpp"
#include "community.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "health.hpp"
#include "inference.hpp"
#include "ingest.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace medtax::pipeline {

inline constexpr const char *version = "1.0.0";

enum class Stage { extract, graph, backbone, cluster, centrality, score, correlate, causal, all };

inline constexpr std::array<Stage, 8> ordered_stages = {Stage::extract,    Stage::graph, Stage::backbone,
                                                        Stage::cluster,    Stage::centrality, Stage::score,
                                                        Stage::correlate,  Stage::causal};

inline const char *to_string(Stage s) {
    switch (s) {
    case Stage::extract:
        return "extract";
    case Stage::graph:
        return "graph";
    case Stage::backbone:
        return "backbone";
    case Stage::cluster:
        return "cluster";
    case Stage::centrality:
        return "centrality";
    case Stage::score:
        return "score";
    case Stage::correlate:
        return "correlate";
    case Stage::causal:
        return "causal";
    case Stage::all:
        return "all";
    }
    return "?";
}

inline Stage parse_stage(std::string_view s) {
    for (auto st : ordered_stages)
        if (s == to_string(st))
            return st;
    if (s == "all")
        return Stage::all;
    throw ValidationError("unknown stage '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------------------------
// Artifact names inside the output directory

namespace artifact {
inline constexpr const char *mentions = "mentions.jsonl";
inline constexpr const char *locations = "locations.tsv";
inline constexpr const char *graph = "graph.tsv";
inline constexpr const char *backbone = "backbone.tsv";
inline constexpr const char *edge_scores = "edge_scores.tsv";
inline constexpr const char *partition = "partition.tsv";
inline constexpr const char *taxonomy = "taxonomy.json";
inline constexpr const char *centrality = "centrality.tsv";
inline constexpr const char *categories = "categories.tsv";
inline constexpr const char *scores_dir = "scores";
inline constexpr const char *correlations = "correlations.tsv";
inline constexpr const char *causal = "causal.tsv";
inline constexpr const char *matches = "matches.tsv";
inline constexpr const char *results = "results.tsv";
} // namespace artifact

// ---------------------------------------------------------------------------------------------
// Configuration

/// One (official statistic, health score) pairing analysed by `correlate` and `causal`.
struct Pairing {
    std::string statistic;
    /// "all", "central", "cluster:<module id>" or "cluster:<condition>".
    std::string category;
    std::optional<std::string> liwc;
};

struct PipelineConfig {
    struct Paths {
        std::filesystem::path documents;
        std::filesystem::path mentions; // optional: pre-extracted mentions instead of the lexicon
        std::filesystem::path lexicon;
        std::filesystem::path liwc; // directory of <disease>.tsv lexicons
        std::filesystem::path forum_map;
        std::filesystem::path census;
        std::filesystem::path statistics;
        std::filesystem::path covariates;
        std::filesystem::path output = "out";
    } paths;

    std::uint64_t seed = 1;
    std::size_t threads = 1;
    Strictness strictness = Strictness::lenient;

    std::vector<std::string> blocklist;
    std::int64_t min_contributions = 5;
    bool drop_unrepresentative = true;

    std::size_t max_conditions = 50;
    std::optional<DocumentKind> kind;

    double delta = 1.64;
    std::optional<std::size_t> target_edges;
    bool emit_scores = true;

    std::size_t trials = 10;
    double overlap_threshold = 0.25;
    std::size_t top_k = 50;

    CentralityKind centrality_kind = CentralityKind::pagerank;
    double damping = 0.85;
    double tolerance = 1e-10;
    std::size_t max_iterations = 200;
    double central_fraction = 0.05;

    std::vector<int> rhos{0, 1};
    Aggregation aggregation = Aggregation::max;
    Denominator denominator = Denominator::mentioning_users;

    int causal_rho = 1;
    CausalOptions causal;

    std::vector<Pairing> pairs;

    std::filesystem::path out(const std::string &name) const { return paths.output / name; }
    void validate() const;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> out;
    for (auto &part : text::split(s, ','))
        if (auto t = text::trim(part); !t.empty())
            out.push_back(t);
    return out;
}

inline bool parse_bool(const std::string &key, const std::string &v) {
    auto t = text::to_lower_ascii(text::trim(v));
    if (t == "true" || t == "yes" || t == "1" || t == "on")
        return true;
    if (t == "false" || t == "no" || t == "0" || t == "off")
        return false;
    throw ValidationError(key + ": expected a boolean, got '" + v + "'");
}

inline std::size_t parse_count(const std::string &key, const std::string &v) {
    auto n = io::parse_int(text::trim(v), key);
    if (n < 0)
        throw ValidationError(key + " must be non-negative");
    return static_cast<std::size_t>(n);
}

/// "category[, category...] [| liwc-disease]"
inline std::vector<Pairing> parse_pairing(const std::string &statistic, const std::string &value) {
    auto bar = value.find('|');
    std::optional<std::string> liwc;
    if (bar != std::string::npos) {
        auto l = text::trim(value.substr(bar + 1));
        if (!l.empty())
            liwc = l;
    }
    std::vector<Pairing> out;
    for (auto &category : split_list(value.substr(0, bar))) {
        if (category != "all" && category != "central" && !category.starts_with("cluster:"))
            throw ValidationError("pairs." + statistic + ": category must be all, central or cluster:<id|condition>");
        out.push_back({statistic, category, liwc});
    }
    if (out.empty())
        throw ValidationError("pairs." + statistic + ": missing health-score category");
    return out;
}

} // namespace detail

/// Reads the INI-style configuration. Relative paths are resolved against the file's directory.
inline PipelineConfig load_config(const std::filesystem::path &path) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error &e) {
        throw ValidationError("config: " + std::string(e.what()));
    }
    PipelineConfig cfg;
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    auto resolve = [&](const std::string &v) {
        std::filesystem::path p = text::trim(v);
        return p.empty() || p.is_absolute() ? p : base / p;
    };

    for (const auto &[section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ValidationError("config: key '" + section + "' outside of a section");
        for (const auto &[key, node] : body) {
            const std::string v = node.data();
            const std::string name = section + "." + key;
            if (section == "pairs") {
                for (auto &pr : detail::parse_pairing(key, v))
                    cfg.pairs.push_back(std::move(pr));
                continue;
            }
            if (section == "paths") {
                if (key == "documents")
                    cfg.paths.documents = resolve(v);
                else if (key == "mentions")
                    cfg.paths.mentions = resolve(v);
                else if (key == "lexicon")
                    cfg.paths.lexicon = resolve(v);
                else if (key == "liwc")
                    cfg.paths.liwc = resolve(v);
                else if (key == "forum_map")
                    cfg.paths.forum_map = resolve(v);
                else if (key == "census")
                    cfg.paths.census = resolve(v);
                else if (key == "statistics")
                    cfg.paths.statistics = resolve(v);
                else if (key == "covariates")
                    cfg.paths.covariates = resolve(v);
                else if (key == "output")
                    cfg.paths.output = resolve(v);
                else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "run") {
                if (key == "seed")
                    cfg.seed = static_cast<std::uint64_t>(detail::parse_count(name, v));
                else if (key == "threads")
                    cfg.threads = detail::parse_count(name, v);
                else if (key == "strict")
                    cfg.strictness = detail::parse_bool(name, v) ? Strictness::strict : Strictness::lenient;
                else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "extract") {
                if (key == "blocklist")
                    cfg.blocklist = detail::split_list(v);
                else if (key == "min_contributions")
                    cfg.min_contributions = static_cast<std::int64_t>(detail::parse_count(name, v));
                else if (key == "drop_unrepresentative")
                    cfg.drop_unrepresentative = detail::parse_bool(name, v);
                else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "graph") {
                if (key == "max_conditions")
                    cfg.max_conditions = detail::parse_count(name, v);
                else if (key == "kind") {
                    auto t = text::trim(v);
                    if (t.empty() || t == "any")
                        cfg.kind.reset();
                    else if (auto k = parse_kind(t))
                        cfg.kind = *k;
                    else
                        throw ValidationError(name + ": unknown document kind '" + t + "'");
                } else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "backbone") {
                if (key == "delta")
                    cfg.delta = io::parse_double(text::trim(v), name);
                else if (key == "target_edges") {
                    if (text::trim(v).empty())
                        cfg.target_edges.reset();
                    else
                        cfg.target_edges = detail::parse_count(name, v);
                } else if (key == "emit_scores")
                    cfg.emit_scores = detail::parse_bool(name, v);
                else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "cluster") {
                if (key == "trials")
                    cfg.trials = detail::parse_count(name, v);
                else if (key == "overlap_threshold")
                    cfg.overlap_threshold = io::parse_double(text::trim(v), name);
                else if (key == "top_k")
                    cfg.top_k = detail::parse_count(name, v);
                else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "centrality") {
                if (key == "kind")
                    cfg.centrality_kind = parse_centrality_kind(text::trim(v));
                else if (key == "damping")
                    cfg.damping = io::parse_double(text::trim(v), name);
                else if (key == "tolerance")
                    cfg.tolerance = io::parse_double(text::trim(v), name);
                else if (key == "max_iterations")
                    cfg.max_iterations = detail::parse_count(name, v);
                else if (key == "top_fraction")
                    cfg.central_fraction = io::parse_double(text::trim(v), name);
                else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "score") {
                if (key == "rho") {
                    cfg.rhos.clear();
                    for (const auto &r : detail::split_list(v))
                        cfg.rhos.push_back(static_cast<int>(io::parse_int(r, name)));
                } else if (key == "aggregation")
                    cfg.aggregation = parse_aggregation(text::trim(v));
                else if (key == "denominator")
                    cfg.denominator = parse_denominator(text::trim(v));
                else
                    throw ValidationError("config: unknown key " + name);
            } else if (section == "causal") {
                if (key == "rho")
                    cfg.causal_rho = static_cast<int>(io::parse_int(text::trim(v), name));
                else if (key == "n_resamples")
                    cfg.causal.n_resamples = detail::parse_count(name, v);
                else if (key == "level")
                    cfg.causal.level = io::parse_double(text::trim(v), name);
                else if (key == "caliper") {
                    auto t = text::trim(v);
                    if (t == "none" || t.empty())
                        cfg.causal.caliper.reset();
                    else
                        cfg.causal.caliper = io::parse_double(t, name);
                } else if (key == "cie_threshold")
                    cfg.causal.cie_threshold = io::parse_double(text::trim(v), name);
                else if (key == "smd_threshold")
                    cfg.causal.smd_threshold = io::parse_double(text::trim(v), name);
                else if (key == "l2")
                    cfg.causal.l2 = io::parse_double(text::trim(v), name);
                else
                    throw ValidationError("config: unknown key " + name);
            } else {
                throw ValidationError("config: unknown section [" + section + "]");
            }
        }
    }
    return cfg;
}

inline void PipelineConfig::validate() const {
    auto fail = [](const std::string &m) { throw ValidationError("config: " + m); };
    if (threads == 0)
        fail("threads must be at least 1");
    if (paths.output.empty())
        fail("paths.output is required");
    if (!(delta >= 0.0))
        fail("backbone.delta must be non-negative");
    if (target_edges && *target_edges == 0)
        fail("backbone.target_edges must be positive");
    if (max_conditions < 2)
        fail("graph.max_conditions must be at least 2");
    if (trials == 0)
        fail("cluster.trials must be at least 1");
    if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0))
        fail("cluster.overlap_threshold must lie in (0, 1]");
    if (top_k == 0)
        fail("cluster.top_k must be at least 1");
    if (!(damping > 0.0 && damping < 1.0))
        fail("centrality.damping must lie in (0, 1)");
    if (!(tolerance > 0.0))
        fail("centrality.tolerance must be positive");
    if (max_iterations == 0)
        fail("centrality.max_iterations must be at least 1");
    if (!(central_fraction > 0.0 && central_fraction <= 1.0))
        fail("centrality.top_fraction must lie in (0, 1]");
    if (rhos.empty())
        fail("score.rho must list at least one value");
    for (int r : rhos)
        if (r != 0 && r != 1)
            fail("score.rho values must be 0 or 1");
    if (causal_rho != 0 && causal_rho != 1)
        fail("causal.rho must be 0 or 1");
    if (std::find(rhos.begin(), rhos.end(), causal_rho) == rhos.end())
        fail("causal.rho must be one of score.rho");
    if (causal.n_resamples == 0)
        fail("causal.n_resamples must be at least 1");
    if (!(causal.level > 0.0 && causal.level < 1.0))
        fail("causal.level must lie in (0, 1)");
    if (causal.caliper && !(*causal.caliper > 0.0))
        fail("causal.caliper must be positive or none");
    if (!(causal.cie_threshold >= 0.0) || !(causal.smd_threshold >= 0.0) || !(causal.l2 >= 0.0))
        fail("causal thresholds and l2 must be non-negative");
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto &p : pairs)
        if (!seen.insert({p.statistic, p.category}).second)
            fail("statistic '" + p.statistic + "' paired twice with " + p.category);
}

// ---------------------------------------------------------------------------------------------
// Digests and manifests

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw ComputeError("sha256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

inline std::string file_sha256(const std::filesystem::path &path) { return sha256_hex(io::read_file(path)); }

struct InputRecord {
    std::string role;
    std::string file; // name only; directories list their files
    std::string sha256;
};

class StageRun {
  public:
    StageRun(Stage stage, const PipelineConfig &cfg) : stage_(stage), cfg_(cfg) {}

    /// Reads an artifact written by an earlier stage, failing with the name of that stage when
    /// it is missing and warning when it no longer matches the digest in that stage's manifest.
    std::string upstream(const std::string &name, Stage producer) {
        const auto path = cfg_.out(name);
        if (!std::filesystem::is_regular_file(path))
            throw MissingArtifactError(path.string(), to_string(producer));
        auto content = io::read_file(path);
        auto digest = sha256_hex(content);
        check_fresh(name, producer, digest);
        inputs_.push_back({name, name, digest});
        return content;
    }

    /// Reads an external input file named in the configuration.
    std::string external(const std::string &role, const std::filesystem::path &path) {
        if (path.empty())
            throw ValidationError("config: paths." + role + " is required by stage " + to_string(stage_));
        if (!std::filesystem::is_regular_file(path))
            throw ValidationError("paths." + role + ": no such file '" + path.string() + "'");
        auto content = io::read_file(path);
        inputs_.push_back({role, path.filename().string(), sha256_hex(content)});
        return content;
    }

    /// Records a file already read through another loader.
    void note_input(const std::string &role, const std::filesystem::path &path) {
        inputs_.push_back({role, path.filename().string(), file_sha256(path)});
    }

    void output(const std::string &name, std::string content) { outputs_[name] = std::move(content); }
    void warn(std::string w) { warnings_.push_back(std::move(w)); }
    nlohmann::ordered_json &parameters() { return params_; }
    const std::vector<std::string> &warnings() const { return warnings_; }

    /// Writes every output atomically, then the manifest. Nothing is written before this call,
    /// so a stage that fails validation leaves no partial artifacts. Files under
    /// `clear_dir` not produced by this run are removed.
    void commit(const std::string &clear_dir = {}) {
        std::filesystem::create_directories(cfg_.paths.output);
        if (!clear_dir.empty()) {
            const auto dir = cfg_.out(clear_dir);
            if (std::filesystem::is_directory(dir)) {
                std::vector<std::filesystem::path> stale;
                for (const auto &entry : std::filesystem::directory_iterator(dir)) {
                    auto rel = (std::filesystem::path(clear_dir) / entry.path().filename()).generic_string();
                    if (entry.is_regular_file() && !outputs_.count(rel))
                        stale.push_back(entry.path());
                }
                for (const auto &p : stale)
                    std::filesystem::remove(p);
            }
        }
        nlohmann::ordered_json manifest;
        manifest["stage"] = to_string(stage_);
        manifest["version"] = version;
        manifest["seed"] = cfg_.seed;
        manifest["parameters"] = params_;
        auto &inputs = manifest["inputs"] = nlohmann::ordered_json::array();
        for (const auto &in : inputs_)
            inputs.push_back({{"role", in.role}, {"file", in.file}, {"sha256", in.sha256}});
        auto &outputs = manifest["outputs"] = nlohmann::ordered_json::array();
        for (const auto &[name, content] : outputs_) {
            io::write_file_atomic(cfg_.out(name), content);
            outputs.push_back({{"file", name}, {"sha256", sha256_hex(content)}});
        }
        manifest["warnings"] = warnings_;
        io::write_file_atomic(cfg_.out(std::string(to_string(stage_)) + ".manifest.json"), manifest.dump(2) + "\n");
    }

  private:
    void check_fresh(const std::string &name, Stage producer, const std::string &digest) {
        const auto mpath = cfg_.out(std::string(to_string(producer)) + ".manifest.json");
        if (!std::filesystem::is_regular_file(mpath))
            return;
        try {
            auto m = nlohmann::json::parse(io::read_file(mpath));
            for (const auto &o : m.at("outputs"))
                if (o.at("file").get<std::string>() == name && o.at("sha256").get<std::string>() != digest)
                    warn(name + " changed since stage " + to_string(producer) + " wrote it; rerun that stage");
        } catch (const nlohmann::json::exception &) {
            warn("unreadable manifest " + mpath.filename().string());
        }
    }

    Stage stage_;
    const PipelineConfig &cfg_;
    nlohmann::ordered_json params_ = nlohmann::ordered_json::object();
    std::vector<InputRecord> inputs_;
    std::map<std::string, std::string> outputs_;
    std::vector<std::string> warnings_;
};

/// Sink for warnings and progress lines; the CLI points it at stderr.
struct Log {
    std::ostream *out = &std::cerr;
    bool quiet = false;
    void info(const std::string &m) const {
        if (!quiet)
            *out << "medtax: " << m << "\n";
    }
    void warn(const std::string &m) const { *out << "medtax: warning: " << m << "\n"; }
};

// ---------------------------------------------------------------------------------------------
// Helpers shared by stages

namespace detail {

inline std::vector<MentionRecord> parse_mentions_content(const std::string &content, const std::string &source) {
    std::vector<MentionRecord> out;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string::npos)
            end = content.size();
        ++lineno;
        std::string_view line(content.data() + start, end - start);
        start = end + 1;
        if (text::trim(std::string(line)).empty())
            continue;
        try {
            out.push_back(parse_mention(nlohmann::json::parse(line)));
        } catch (const std::exception &e) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline std::string category_file(const std::string &category_id, int rho) {
    return std::string(artifact::scores_dir) + "/" + category_id + "_rho" + std::to_string(rho) + ".tsv";
}

inline std::string liwc_file(const std::string &disease) {
    return std::string(artifact::scores_dir) + "/liwc_" + disease + ".tsv";
}

inline std::map<std::string, Lexicon> load_liwc(const std::filesystem::path &dir, StageRun &run) {
    std::map<std::string, Lexicon> out;
    if (!std::filesystem::is_directory(dir))
        throw ValidationError("paths.liwc: no such directory '" + dir.string() + "'");
    std::vector<std::filesystem::path> files;
    for (const auto &entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".tsv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto &f : files) {
        auto disease = f.stem().string();
        out.emplace(disease, load_lexicon(f, disease));
        run.note_input("liwc", f);
    }
    if (out.empty())
        throw ValidationError("paths.liwc: no .tsv lexicons in '" + dir.string() + "'");
    return out;
}

/// Resolves a pairing's category to the id used in score file names.
inline std::string resolve_category(const std::string &spec, const CooccurrenceGraph &backbone,
                                    const HierarchicalPartition &hp) {
    if (spec == "all" || spec == "central")
        return spec;
    auto rest = spec.substr(std::string("cluster:").size());
    bool numeric = !rest.empty() && std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (numeric) {
        auto m = static_cast<std::size_t>(io::parse_int(rest, spec));
        if (m >= hp.module_count())
            throw ValidationError("pairing refers to " + spec + " but there are " +
                                  std::to_string(hp.module_count()) + " clusters");
        return "cluster_" + rest;
    }
    auto cond = text::normalize(rest);
    for (NodeId i = 0; i < backbone.node_count(); ++i)
        if (backbone.conditions[i] == cond)
            return "cluster_" + std::to_string(hp.level1[i]);
    throw ValidationError("pairing refers to condition '" + rest + "', which is not in the backbone");
}

inline std::vector<Pairing> effective_pairs(const PipelineConfig &cfg, const std::vector<StatTable> &stats) {
    if (!cfg.pairs.empty()) {
        for (const auto &p : cfg.pairs)
            if (std::none_of(stats.begin(), stats.end(), [&](const StatTable &t) { return t.name == p.statistic; }))
                throw ValidationError("pairing names statistic '" + p.statistic + "', absent from the statistics file");
        return cfg.pairs;
    }
    std::vector<Pairing> out;
    for (const auto &t : stats)
        out.push_back({t.name, "all", std::nullopt});
    return out;
}

inline const StatTable &find_stat(const std::vector<StatTable> &stats, const std::string &name) {
    for (const auto &t : stats)
        if (t.name == name)
            return t;
    throw ValidationError("statistic '" + name + "' not found");
}

inline std::optional<PearsonResult> correlate_tables(const StatTable &stat, const HealthScoreTable &hs,
                                                     const std::string &label, std::vector<std::string> &warnings) {
    std::vector<double> x, y;
    for (const auto &[loc, v] : stat.values) {
        auto it = hs.score.find(loc);
        if (it != hs.score.end()) {
            x.push_back(it->second);
            y.push_back(v);
        }
    }
    try {
        return pearson(x, y);
    } catch (const std::runtime_error &e) {
        warnings.push_back(label + ": " + e.what());
        return std::nullopt;
    }
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Stages

inline void run_extract(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::extract, cfg);
    auto &p = run.parameters();
    p["strict"] = cfg.strictness == Strictness::strict;
    p["blocklist"] = cfg.blocklist;
    p["min_contributions"] = cfg.min_contributions;
    p["drop_unrepresentative"] = cfg.drop_unrepresentative;
    p["source"] = cfg.paths.mentions.empty() ? "lexicon" : "mentions";

    run.external("documents", cfg.paths.documents);
    auto report = LoadReport{};
    auto docs = load_documents(cfg.paths.documents, cfg.strictness, &report);
    for (const auto &w : report.warnings)
        run.warn(w);
    if (report.skipped)
        run.warn(std::to_string(report.skipped) + " malformed document line(s) skipped");

    run.external("forum_map", cfg.paths.forum_map);
    const auto forum_map = load_forum_state_map(cfg.paths.forum_map);
    auto locations = infer_user_locations(activities_from_documents(docs), forum_map, cfg.min_contributions);

    std::size_t dropped = 0;
    docs = filter_forums(std::move(docs), normalize_blocklist(cfg.blocklist), &dropped);
    p["documents_dropped_by_blocklist"] = dropped;

    std::map<std::string, std::int64_t> users_per_location;
    for (const auto &[u, loc] : locations)
        ++users_per_location[loc];

    std::string loc_report = "location\tusers\tcensus_population\tusers_per_capita\toutlier\n";
    std::set<std::string> outliers;
    if (!cfg.paths.census.empty()) {
        run.external("census", cfg.paths.census);
        std::map<std::string, std::int64_t> census;
        for (const auto &[loc, pop] : io::read_two_column(cfg.paths.census))
            census[loc] = io::parse_int(pop, "census population");
        std::vector<LocationStats> ls;
        for (const auto &[loc, n] : users_per_location) {
            auto it = census.find(loc);
            if (it == census.end()) {
                run.warn("no census population for location '" + loc + "'");
                continue;
            }
            ls.push_back({loc, n, it->second});
        }
        if (ls.size() >= 3)
            outliers = representativeness_outliers(ls);
        else
            run.warn("representativeness check skipped: fewer than 3 locations with census data");
        for (const auto &s : ls)
            loc_report += s.location + "\t" + std::to_string(s.user_count) + "\t" +
                          std::to_string(s.census_population) + "\t" +
                          io::format_double(static_cast<double>(s.user_count) / static_cast<double>(s.census_population)) +
                          "\t" + (outliers.count(s.location) ? "1" : "0") + "\n";
        for (const auto &o : outliers)
            run.warn("location '" + o + "' deviates from the users-per-capita mean by more than 2 SD" +
                     std::string(cfg.drop_unrepresentative ? "; its users are left unlocated" : ""));
    } else {
        for (const auto &[loc, n] : users_per_location)
            loc_report += loc + "\t" + std::to_string(n) + "\t\t\t0\n";
    }
    if (cfg.drop_unrepresentative)
        std::erase_if(locations, [&](const auto &kv) { return outliers.count(kv.second) > 0; });

    std::vector<MentionRecord> records;
    if (!cfg.paths.mentions.empty()) {
        run.external("mentions", cfg.paths.mentions);
        LoadReport mr;
        records = load_mentions(cfg.paths.mentions, cfg.strictness, &mr);
        for (const auto &w : mr.warnings)
            run.warn(w);
        std::set<std::string> kept;
        for (const auto &d : docs)
            kept.insert(d.doc_id);
        std::erase_if(records, [&](const MentionRecord &m) { return !m.forum.empty() && !kept.count(m.doc_id); });
    } else {
        run.external("lexicon", cfg.paths.lexicon);
        const auto lexicon = load_lexicon(cfg.paths.lexicon, "conditions");
        records.resize(docs.size());
        parallel_for(docs.size(), cfg.threads,
                     [&](std::size_t i) { records[i] = extract_mentions_dictionary(docs[i], lexicon); });
    }
    for (auto &r : records) {
        auto it = locations.find(r.user_id);
        if (it != locations.end())
            r.location = it->second;
        else if (r.location && outliers.count(*r.location) && cfg.drop_unrepresentative)
            r.location.reset();
    }
    p["documents"] = docs.size();
    p["records"] = records.size();
    p["located_users"] = locations.size();

    run.output(artifact::mentions, write_mentions_jsonl(records));
    run.output(artifact::locations, loc_report);
    run.commit();
    log.info("extract: " + std::to_string(records.size()) + " records, " + std::to_string(locations.size()) +
             " located users");
    for (const auto &w : run.warnings())
        log.warn(w);
}

inline void run_graph(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::graph, cfg);
    auto &p = run.parameters();
    p["max_conditions"] = cfg.max_conditions;
    p["kind"] = cfg.kind ? to_string(*cfg.kind) : "any";
    const auto records = detail::parse_mentions_content(run.upstream(artifact::mentions, Stage::extract),
                                                        artifact::mentions);
    CooccurrenceOptions opts;
    opts.max_conditions_per_record = cfg.max_conditions;
    opts.kind = cfg.kind;
    auto g = build_cooccurrence(records, opts);
    if (g.edge_count() == 0)
        throw ValidationError("co-occurrence graph has no edges; no record mentions two conditions");
    p["nodes"] = g.node_count();
    p["edges"] = g.edge_count();
    run.output(artifact::graph, write_graph(g));
    run.commit();
    log.info("graph: " + std::to_string(g.node_count()) + " nodes, " + std::to_string(g.edge_count()) + " edges");
    for (const auto &w : run.warnings())
        log.warn(w);
}

inline void run_backbone(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::backbone, cfg);
    auto &p = run.parameters();
    const auto g = parse_graph(run.upstream(artifact::graph, Stage::graph), artifact::graph);
    double delta = cfg.delta;
    if (cfg.target_edges) {
        auto t = tune_delta(g, std::min(*cfg.target_edges, g.edge_count()));
        delta = t.delta;
        p["target_edges"] = *cfg.target_edges;
        p["tuning_iterations"] = t.iterations;
        for (auto &w : t.warnings)
            run.warn(w);
    }
    p["delta"] = delta;
    auto bb = noise_corrected_backbone(g, {delta, std::nullopt, false});
    for (auto &w : bb.warnings)
        run.warn(w);
    if (bb.graph.edge_count() == 0)
        throw ComputeError("backbone is empty at delta = " + io::format_double(delta));
    auto giant = giant_component(bb.graph);
    p["backbone_nodes"] = bb.graph.node_count();
    p["backbone_edges"] = bb.graph.edge_count();
    p["giant_nodes"] = giant.graph.node_count();
    p["giant_edges"] = giant.graph.edge_count();
    run.output(artifact::backbone, write_graph(giant.graph));
    if (cfg.emit_scores)
        run.output(artifact::edge_scores, write_edge_scores(score_edges(g)));
    run.commit();
    log.info("backbone: delta " + io::format_double(delta) + ", giant component " +
             std::to_string(giant.graph.node_count()) + " nodes, " + std::to_string(giant.graph.edge_count()) +
             " edges");
    for (const auto &w : run.warnings())
        log.warn(w);
}

inline void run_cluster(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::cluster, cfg);
    auto &p = run.parameters();
    p["trials"] = cfg.trials;
    p["overlap_threshold"] = cfg.overlap_threshold;
    p["top_k"] = cfg.top_k;
    const auto g = parse_graph(run.upstream(artifact::backbone, Stage::backbone), artifact::backbone);
    auto hp = detect_communities(g, {cfg.seed, cfg.trials, cfg.threads});
    auto overlaps = assign_overlaps(g, hp.level1, cfg.overlap_threshold);
    auto tax = build_taxonomy(g, hp, overlaps, cfg.top_k);
    p["modules"] = hp.module_count();
    p["submodules"] = hp.submodule_count();
    p["level1_codelength"] = hp.level1_codelength;
    p["level2_codelength"] = hp.level2_codelength;
    run.output(artifact::partition, write_partition(hp));
    run.output(artifact::taxonomy, write_taxonomy(tax));
    run.commit();
    log.info("cluster: " + std::to_string(hp.module_count()) + " modules, " + std::to_string(hp.submodule_count()) +
             " submodules");
    for (const auto &w : run.warnings())
        log.warn(w);
}

inline void run_centrality(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::centrality, cfg);
    auto &p = run.parameters();
    p["kind"] = to_string(cfg.centrality_kind);
    p["damping"] = cfg.damping;
    p["tolerance"] = cfg.tolerance;
    p["max_iterations"] = cfg.max_iterations;
    const auto g = parse_graph(run.upstream(artifact::backbone, Stage::backbone), artifact::backbone);
    CentralityParams cp;
    cp.kind = cfg.centrality_kind;
    cp.damping = cfg.damping;
    cp.tolerance = cfg.tolerance;
    cp.max_iterations = cfg.max_iterations;
    cp.threads = cfg.threads;
    auto cs = centrality(g, cp);
    p["iterations"] = cs.iterations;
    run.output(artifact::centrality, write_centrality(cs));
    run.commit();
    log.info("centrality: " + std::string(to_string(cs.kind)) + " over " + std::to_string(cs.values.size()) +
             " conditions");
    for (const auto &w : run.warnings())
        log.warn(w);
}

inline void run_score(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::score, cfg);
    auto &p = run.parameters();
    p["rho"] = cfg.rhos;
    p["aggregation"] = to_string(cfg.aggregation);
    p["denominator"] = to_string(cfg.denominator);
    p["top_fraction"] = cfg.central_fraction;
    p["overlap_threshold"] = cfg.overlap_threshold;

    const auto records = detail::parse_mentions_content(run.upstream(artifact::mentions, Stage::extract),
                                                        artifact::mentions);
    const auto g = parse_graph(run.upstream(artifact::backbone, Stage::backbone), artifact::backbone);
    const auto partition_path = cfg.out(artifact::partition);
    run.upstream(artifact::partition, Stage::cluster);
    const auto hp = read_partition(partition_path, g);
    run.upstream(artifact::centrality, Stage::centrality);
    const auto cs = read_centrality(cfg.out(artifact::centrality));
    const auto weights = cs.by_condition();

    // Categories: all backbone conditions, the most central ones, and one per level-1 module
    // with its overlapping members.
    std::vector<CategorySpec> categories;
    CategorySpec all{"all", {}};
    for (const auto &c : g.conditions)
        all.conditions.insert(c);
    categories.push_back(std::move(all));
    CategorySpec central{"central", {}};
    for (auto &c : top_central(cs, cfg.central_fraction))
        central.conditions.insert(std::move(c));
    categories.push_back(std::move(central));
    const auto overlaps = assign_overlaps(g, hp.level1, cfg.overlap_threshold);
    std::vector<CategorySpec> clusters(hp.module_count());
    for (std::size_t m = 0; m < clusters.size(); ++m)
        clusters[m].id = "cluster_" + std::to_string(m);
    for (const auto &om : overlaps)
        for (const auto &[m, s] : om.modules)
            clusters[m].conditions.insert(g.conditions[om.node]);
    for (auto &c : clusters)
        categories.push_back(std::move(c));

    std::string cat_report = "category\tsize\tconditions\n";
    for (const auto &c : categories) {
        std::vector<std::string> sorted(c.conditions.begin(), c.conditions.end());
        std::sort(sorted.begin(), sorted.end());
        cat_report += c.id + "\t" + std::to_string(sorted.size()) + "\t";
        for (std::size_t i = 0; i < sorted.size(); ++i)
            cat_report += (i ? ";" : "") + sorted[i];
        cat_report += "\n";
    }
    run.output(artifact::categories, cat_report);

    const auto locations = user_locations_from_records(records);
    const auto population = population_of(records, locations, cfg.denominator);

    struct Job {
        const CategorySpec *spec;
        int rho;
    };
    std::vector<Job> jobs;
    for (const auto &c : categories)
        for (int rho : cfg.rhos)
            jobs.push_back({&c, rho});
    std::vector<std::optional<HealthScoreTable>> tables(jobs.size());
    std::vector<std::string> errors(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
        try {
            auto ft = category_fraction(records, locations, population, *jobs[i].spec, weights,
                                        {jobs[i].rho, cfg.aggregation, cfg.denominator});
            tables[i] = health_score(score_outlier_filter(std::move(ft)));
        } catch (const ValidationError &e) {
            errors[i] = jobs[i].spec->id + " (rho " + std::to_string(jobs[i].rho) + ") skipped: " + e.what();
        }
    });
    std::size_t written = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!tables[i]) {
            run.warn(errors[i]);
            continue;
        }
        for (const auto &w : tables[i]->warnings)
            run.warn(w + " (rho " + std::to_string(jobs[i].rho) + ")");
        run.output(detail::category_file(jobs[i].spec->id, jobs[i].rho), write_scores(*tables[i]));
        ++written;
    }
    if (written == 0)
        throw ValidationError("no health score could be computed; check that users are located");

    if (!cfg.paths.liwc.empty()) {
        run.external("documents", cfg.paths.documents);
        auto docs = load_documents(cfg.paths.documents, cfg.strictness);
        docs = filter_forums(std::move(docs), normalize_blocklist(cfg.blocklist));
        const auto lexicons = detail::load_liwc(cfg.paths.liwc, run);
        try {
            for (auto &[disease, hs] : disliwc_scores(docs, locations, population, lexicons)) {
                for (const auto &w : hs.warnings)
                    run.warn(w);
                run.output(detail::liwc_file(disease), write_scores(hs));
            }
        } catch (const ValidationError &e) {
            run.warn(std::string("dictionary baseline skipped: ") + e.what());
        }
    }
    p["categories"] = categories.size();
    p["located_users"] = locations.size();
    run.commit(artifact::scores_dir);
    log.info("score: " + std::to_string(written) + " health-score tables over " + std::to_string(population.size()) +
             " locations");
    for (const auto &w : run.warnings())
        log.warn(w);
}

namespace detail {

inline std::optional<HealthScoreTable> optional_scores(StageRun &run, const PipelineConfig &cfg,
                                                       const std::string &file) {
    if (!std::filesystem::is_regular_file(cfg.out(file)))
        return std::nullopt;
    run.upstream(file, Stage::score);
    return read_scores(cfg.out(file));
}

inline void require_scores(const PipelineConfig &cfg) {
    const auto dir = cfg.out(artifact::scores_dir);
    bool any = false;
    if (std::filesystem::is_directory(dir))
        for (const auto &e : std::filesystem::directory_iterator(dir))
            any = any || (e.is_regular_file() && e.path().extension() == ".tsv");
    if (!any)
        throw MissingArtifactError((dir / "*.tsv").string(), to_string(Stage::score));
}

struct CorrelationKey {
    std::string category;
    std::string statistic;
    std::string variant;
    auto operator<=>(const CorrelationKey &) const = default;
};

inline std::map<CorrelationKey, PearsonResult> parse_correlations(const std::string &content) {
    std::map<CorrelationKey, PearsonResult> out;
    std::size_t lineno = 0;
    for (const auto &line : text::split(content, '\n')) {
        ++lineno;
        if (lineno == 1 || text::trim(line).empty())
            continue;
        auto c = text::split(line, '\t');
        if (c.size() != 6)
            throw ValidationError(std::string(artifact::correlations) + ":" + std::to_string(lineno) +
                                  ": expected 6 columns");
        PearsonResult r;
        r.r = io::parse_double(c[3]);
        r.p = io::parse_double(c[4]);
        r.n = static_cast<std::size_t>(io::parse_int(c[5]));
        out.emplace(CorrelationKey{c[0], c[1], c[2]}, r);
    }
    return out;
}

} // namespace detail

inline void run_correlate(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::correlate, cfg);
    detail::require_scores(cfg);
    run.external("statistics", cfg.paths.statistics);
    const auto stats = read_statistics(cfg.paths.statistics);
    const auto pairs = detail::effective_pairs(cfg, stats);
    const auto g = parse_graph(run.upstream(artifact::backbone, Stage::backbone), artifact::backbone);
    run.upstream(artifact::partition, Stage::cluster);
    const auto hp = read_partition(cfg.out(artifact::partition), g);

    auto &p = run.parameters();
    p["rho"] = cfg.rhos;
    auto &jp = p["pairs"] = nlohmann::ordered_json::array();
    for (const auto &pr : pairs)
        jp.push_back({{"statistic", pr.statistic}, {"category", pr.category}, {"liwc", pr.liwc.value_or("")}});

    std::string out = "health_score\tofficial_statistic\tvariant\tr\tp\tn\n";
    for (const auto &pr : pairs) {
        const auto &stat = detail::find_stat(stats, pr.statistic);
        const auto category = detail::resolve_category(pr.category, g, hp);
        std::vector<std::string> warnings;
        auto emit = [&](const std::string &variant, const std::optional<HealthScoreTable> &hs) {
            const auto label = category + " vs " + pr.statistic + " (" + variant + ")";
            if (!hs) {
                warnings.push_back(label + ": no scores file");
                return;
            }
            if (auto r = detail::correlate_tables(stat, *hs, label, warnings))
                out += category + "\t" + pr.statistic + "\t" + variant + "\t" + io::format_double(r->r) + "\t" +
                       io::format_double(r->p) + "\t" + std::to_string(r->n) + "\n";
        };
        for (int rho : cfg.rhos)
            emit("rho" + std::to_string(rho), detail::optional_scores(run, cfg, detail::category_file(category, rho)));
        if (pr.liwc)
            emit("liwc", detail::optional_scores(run, cfg, detail::liwc_file(*pr.liwc)));
        for (auto &w : warnings)
            run.warn(std::move(w));
    }
    run.output(artifact::correlations, out);
    run.commit();
    log.info("correlate: " + std::to_string(pairs.size()) + " pairing(s)");
    for (const auto &w : run.warnings())
        log.warn(w);
}

inline void run_causal(const PipelineConfig &cfg, const Log &log) {
    StageRun run(Stage::causal, cfg);
    detail::require_scores(cfg);
    const auto correlations = detail::parse_correlations(run.upstream(artifact::correlations, Stage::correlate));
    run.external("statistics", cfg.paths.statistics);
    const auto stats = read_statistics(cfg.paths.statistics);
    run.external("covariates", cfg.paths.covariates);
    const auto covariates = read_covariates(cfg.paths.covariates);
    const auto pairs = detail::effective_pairs(cfg, stats);
    const auto g = parse_graph(run.upstream(artifact::backbone, Stage::backbone), artifact::backbone);
    run.upstream(artifact::partition, Stage::cluster);
    const auto hp = read_partition(cfg.out(artifact::partition), g);

    auto &p = run.parameters();
    p["rho"] = cfg.causal_rho;
    p["n_resamples"] = cfg.causal.n_resamples;
    p["level"] = cfg.causal.level;
    p["caliper"] = cfg.causal.caliper ? nlohmann::ordered_json(*cfg.causal.caliper) : nlohmann::ordered_json("none");
    p["cie_threshold"] = cfg.causal.cie_threshold;
    p["smd_threshold"] = cfg.causal.smd_threshold;
    p["l2"] = cfg.causal.l2;

    struct Job {
        const Pairing *pair;
        std::string category;
        std::optional<HealthScoreTable> scores;
    };
    std::vector<Job> jobs;
    for (const auto &pr : pairs) {
        auto category = detail::resolve_category(pr.category, g, hp);
        auto hs = detail::optional_scores(run, cfg, detail::category_file(category, cfg.causal_rho));
        jobs.push_back({&pr, category, std::move(hs)});
    }

    std::vector<std::optional<CausalResult>> results(jobs.size());
    std::vector<std::string> errors(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
        const auto &job = jobs[i];
        if (!job.scores) {
            errors[i] = job.category + " vs " + job.pair->statistic + ": no rho " + std::to_string(cfg.causal_rho) +
                        " scores file";
            return;
        }
        auto opts = cfg.causal;
        opts.seed = derive_seed(cfg.seed, job.category + "\t" + job.pair->statistic);
        try {
            results[i] = causal_pipeline(detail::find_stat(stats, job.pair->statistic), *job.scores, covariates, opts);
        } catch (const std::runtime_error &e) {
            errors[i] = job.category + " vs " + job.pair->statistic + ": " + e.what();
        }
    });

    std::string detail_out = "health_score\tofficial_statistic\tATE\tci_low\tci_high\tnaive\tn_subjects\tn_pairs\t"
                             "confounders\tcie_set\thdpsa_set\n";
    std::string matches = "health_score\tofficial_statistic\ttreated\tcontrol\tpropensity_treated\tpropensity_control\n";
    auto join = [](const std::vector<std::string> &v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? ";" : "") + v[i];
        return s;
    };
    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto &job = jobs[i];
        ResultRow row;
        row.health_score = job.category;
        row.statistic = job.pair->statistic;
        auto corr = [&](const std::string &variant) -> std::optional<PearsonResult> {
            auto it = correlations.find({job.category, job.pair->statistic, variant});
            return it == correlations.end() ? std::nullopt : std::optional(it->second);
        };
        row.r_rho0 = corr("rho0");
        row.r_rho1 = corr("rho1");
        row.r_liwc = corr("liwc");
        if (!results[i]) {
            run.warn(errors[i]);
        } else {
            const auto &r = *results[i];
            for (const auto &w : r.warnings)
                run.warn(job.category + " vs " + job.pair->statistic + ": " + w);
            detail_out += job.category + "\t" + job.pair->statistic + "\t" + io::format_double(r.ate) + "\t" +
                          io::format_double(r.ci_low) + "\t" + io::format_double(r.ci_high) + "\t" +
                          io::format_double(r.naive) + "\t" + std::to_string(r.n_subjects) + "\t" +
                          std::to_string(r.n_pairs) + "\t" + join(r.selected_confounders) + "\t" + join(r.cie_set) +
                          "\t" + join(r.hdpsa_set) + "\n";
            for (const auto &[t, c] : r.matched.pairs)
                matches += job.category + "\t" + job.pair->statistic + "\t" + r.subjects[t] + "\t" + r.subjects[c] +
                           "\t" + io::format_double(r.matched.propensity[t]) + "\t" +
                           io::format_double(r.matched.propensity[c]) + "\n";
            row.causal = r;
        }
        rows.push_back(std::move(row));
    }
    run.output(artifact::causal, detail_out);
    run.output(artifact::matches, matches);
    run.output(artifact::results, write_results(rows));
    run.commit();
    log.info("causal: " + std::to_string(jobs.size()) + " pairing(s)");
    for (const auto &w : run.warnings())
        log.warn(w);
}

inline void run_stage(Stage stage, const PipelineConfig &cfg, const Log &log = {}) {
    cfg.validate();
    switch (stage) {
    case Stage::extract:
        return run_extract(cfg, log);
    case Stage::graph:
        return run_graph(cfg, log);
    case Stage::backbone:
        return run_backbone(cfg, log);
    case Stage::cluster:
        return run_cluster(cfg, log);
    case Stage::centrality:
        return run_centrality(cfg, log);
    case Stage::score:
        return run_score(cfg, log);
    case Stage::correlate:
        return run_correlate(cfg, log);
    case Stage::causal:
        return run_causal(cfg, log);
    case Stage::all:
        for (auto s : ordered_stages)
            run_stage(s, cfg, log);
        return;
    }
}

} // namespace medtax::pipeline
