#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "io.hpp"
#include "stats.hpp"
#include "text.hpp"

namespace medtax {

enum class DocumentKind { submission, comment, tweet };

inline std::optional<DocumentKind> parse_kind(std::string_view s) {
    if (s == "submission")
        return DocumentKind::submission;
    if (s == "comment")
        return DocumentKind::comment;
    if (s == "tweet")
        return DocumentKind::tweet;
    return std::nullopt;
}

inline const char *to_string(DocumentKind k) {
    switch (k) {
    case DocumentKind::submission:
        return "submission";
    case DocumentKind::comment:
        return "comment";
    case DocumentKind::tweet:
        return "tweet";
    }
    return "?";
}

struct Document {
    std::string doc_id;
    std::string user_id;
    std::string forum;
    DocumentKind kind = DocumentKind::comment;
    std::string text;
};

/// One message's normalized conditions. `conditions` is sorted and duplicate-free.
struct MentionRecord {
    std::string doc_id;
    std::string user_id;
    std::optional<std::string> location;
    std::vector<std::string> conditions;
    // Carried through from the source document when known; not part of the required schema.
    std::string forum;
    std::optional<DocumentKind> kind;
};

/// Normalizes, deduplicates and sorts a condition list; drops empty strings.
inline std::vector<std::string> canonical_conditions(const std::vector<std::string> &raw) {
    std::vector<std::string> out;
    out.reserve(raw.size());
    for (const auto &c : raw) {
        auto n = text::normalize(c);
        if (!n.empty())
            out.push_back(std::move(n));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------------------------
// Line-delimited loaders

enum class Strictness { lenient, strict };

struct LoadReport {
    std::size_t lines = 0;
    std::size_t loaded = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

namespace detail {

template <typename Record, typename Parse, typename Sink>
LoadReport scan_jsonl(const std::filesystem::path &path, Strictness mode, Parse parse, Sink sink) {
    auto in = io::open_input(path);
    LoadReport report;
    std::string line;
    while (std::getline(in, line)) {
        ++report.lines;
        if (text::trim(line).empty())
            continue;
        try {
            auto j = nlohmann::json::parse(line);
            Record rec = parse(j);
            sink(std::move(rec));
            ++report.loaded;
        } catch (const std::exception &e) {
            std::string msg = path.string() + ":" + std::to_string(report.lines) + ": " + e.what();
            if (mode == Strictness::strict)
                throw ValidationError(msg);
            ++report.skipped;
            report.warnings.push_back(std::move(msg));
        }
    }
    return report;
}

inline std::string required_string(const nlohmann::json &j, const char *key) {
    if (!j.contains(key) || !j[key].is_string())
        throw ValidationError(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

inline std::string optional_string(const nlohmann::json &j, const char *key) {
    if (!j.contains(key) || j[key].is_null())
        return {};
    if (!j[key].is_string())
        throw ValidationError(std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

} // namespace detail

inline Document parse_document(const nlohmann::json &j) {
    Document d;
    d.doc_id = detail::required_string(j, "doc_id");
    d.user_id = detail::required_string(j, "user_id");
    d.forum = detail::optional_string(j, "forum");
    auto kind = detail::required_string(j, "kind");
    auto k = parse_kind(kind);
    if (!k)
        throw ValidationError("unknown kind '" + kind + "'");
    d.kind = *k;
    d.text = detail::required_string(j, "text");
    if (d.doc_id.empty())
        throw ValidationError("empty doc_id");
    if (text::trim(d.text).empty())
        throw ValidationError("empty text");
    return d;
}

/// Streams documents in file order. Malformed lines and repeated doc_ids are skipped and
/// reported (or fatal in strict mode).
inline LoadReport for_each_document(const std::filesystem::path &path, Strictness mode,
                                    const std::function<void(Document &&)> &sink) {
    std::unordered_set<std::string> seen;
    return detail::scan_jsonl<Document>(
        path, mode,
        [&](const nlohmann::json &j) {
            auto d = parse_document(j);
            if (!seen.insert(d.doc_id).second)
                throw ValidationError("duplicate doc_id '" + d.doc_id + "'");
            return d;
        },
        sink);
}

inline std::vector<Document> load_documents(const std::filesystem::path &path,
                                            Strictness mode = Strictness::lenient,
                                            LoadReport *report = nullptr) {
    std::vector<Document> docs;
    auto r = for_each_document(path, mode, [&](Document &&d) { docs.push_back(std::move(d)); });
    if (report)
        *report = std::move(r);
    return docs;
}

inline MentionRecord parse_mention(const nlohmann::json &j) {
    MentionRecord m;
    m.doc_id = detail::required_string(j, "doc_id");
    m.user_id = detail::required_string(j, "user_id");
    auto loc = detail::optional_string(j, "location");
    if (!loc.empty())
        m.location = loc;
    if (!j.contains("conditions") || !j["conditions"].is_array())
        throw ValidationError("missing array field 'conditions'");
    std::vector<std::string> raw;
    for (const auto &c : j["conditions"]) {
        if (!c.is_string())
            throw ValidationError("non-string condition");
        raw.push_back(c.get<std::string>());
    }
    m.conditions = canonical_conditions(raw);
    m.forum = detail::optional_string(j, "forum");
    auto kind = detail::optional_string(j, "kind");
    if (!kind.empty()) {
        m.kind = parse_kind(kind);
        if (!m.kind)
            throw ValidationError("unknown kind '" + kind + "'");
    }
    return m;
}

inline nlohmann::ordered_json to_json(const MentionRecord &m) {
    nlohmann::ordered_json j;
    j["doc_id"] = m.doc_id;
    j["user_id"] = m.user_id;
    j["location"] = m.location ? nlohmann::ordered_json(*m.location) : nlohmann::ordered_json();
    j["conditions"] = m.conditions;
    if (!m.forum.empty())
        j["forum"] = m.forum;
    if (m.kind)
        j["kind"] = to_string(*m.kind);
    return j;
}

inline LoadReport for_each_mention(const std::filesystem::path &path, Strictness mode,
                                   const std::function<void(MentionRecord &&)> &sink) {
    return detail::scan_jsonl<MentionRecord>(path, mode, parse_mention, sink);
}

inline std::vector<MentionRecord> load_mentions(const std::filesystem::path &path,
                                                Strictness mode = Strictness::lenient,
                                                LoadReport *report = nullptr) {
    std::vector<MentionRecord> out;
    auto r = for_each_mention(path, mode, [&](MentionRecord &&m) { out.push_back(std::move(m)); });
    if (report)
        *report = std::move(r);
    return out;
}

inline std::string write_mentions_jsonl(const std::vector<MentionRecord> &records) {
    std::string out;
    for (const auto &m : records) {
        out += to_json(m).dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Dictionary matching

/// Phrase dictionary compiled into a token trie. Phrases are stored normalized; matching is
/// anchored at token boundaries and prefers the longest phrase starting at each position.
class Lexicon {
public:
    Lexicon() : nodes_(1) {}
    explicit Lexicon(std::string name) : name_(std::move(name)), nodes_(1) {}

    const std::string &name() const noexcept { return name_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// Phrase -> category label (possibly empty).
    const std::map<std::string, std::string> &entries() const noexcept { return entries_; }

    /// Returns false when the phrase is empty or duplicates an existing entry (by normalized
    /// text or by token sequence).
    bool add(std::string_view phrase, std::string_view category = {}) {
        auto norm = text::normalize(phrase);
        auto tokens = text::tokenize(norm);
        if (norm.empty() || tokens.empty() || entries_.count(norm))
            return false;
        std::uint32_t at = 0;
        for (const auto &t : tokens) {
            auto it = nodes_[at].next.find(t);
            if (it == nodes_[at].next.end()) {
                nodes_.emplace_back();
                it = nodes_[at].next.emplace(t, static_cast<std::uint32_t>(nodes_.size() - 1)).first;
            }
            at = it->second;
        }
        if (nodes_[at].phrase >= 0)
            return false;
        nodes_[at].phrase = static_cast<std::int32_t>(phrases_.size());
        phrases_.push_back(norm);
        entries_.emplace(std::move(norm), std::string(category));
        return true;
    }

    /// Distinct phrases found in `text`, sorted.
    std::vector<std::string> match(std::string_view body) const {
        const auto tokens = text::tokenize(body);
        std::vector<std::string> found;
        std::size_t i = 0;
        while (i < tokens.size()) {
            std::uint32_t at = 0;
            std::int32_t best = -1;
            std::size_t best_len = 0;
            for (std::size_t j = i; j < tokens.size(); ++j) {
                auto it = nodes_[at].next.find(tokens[j]);
                if (it == nodes_[at].next.end())
                    break;
                at = it->second;
                if (nodes_[at].phrase >= 0) {
                    best = nodes_[at].phrase;
                    best_len = j - i + 1;
                }
            }
            if (best >= 0) {
                found.push_back(phrases_[static_cast<std::size_t>(best)]);
                i += best_len;
            } else {
                ++i;
            }
        }
        std::sort(found.begin(), found.end());
        found.erase(std::unique(found.begin(), found.end()), found.end());
        return found;
    }

    /// Splits a labelled lexicon into one lexicon per non-empty category.
    std::map<std::string, Lexicon> by_category() const {
        std::map<std::string, Lexicon> out;
        for (const auto &[phrase, cat] : entries_) {
            if (cat.empty())
                continue;
            auto it = out.try_emplace(cat, Lexicon(cat)).first;
            it->second.add(phrase, cat);
        }
        return out;
    }

private:
    struct Node {
        std::unordered_map<std::string, std::uint32_t> next;
        std::int32_t phrase = -1;
    };

    std::string name_;
    std::vector<Node> nodes_;
    std::vector<std::string> phrases_;
    std::map<std::string, std::string> entries_;
};

/// Lexicon file: one "phrase TAB category" per line; the category column may be absent.
inline Lexicon load_lexicon(const std::filesystem::path &path, std::string name = {}) {
    Lexicon lex(name.empty() ? path.stem().string() : std::move(name));
    std::size_t lineno = 0;
    for (const auto &line : io::read_lines(path)) {
        ++lineno;
        if (text::trim(line).empty() || line.front() == '#')
            continue;
        auto tab = line.find('\t');
        auto phrase = line.substr(0, tab);
        auto category = tab == std::string::npos ? std::string() : text::trim(line.substr(tab + 1));
        lex.add(phrase, category);
    }
    return lex;
}

inline MentionRecord extract_mentions_dictionary(const Document &doc, const Lexicon &lexicon) {
    if (lexicon.empty())
        throw ValidationError("lexicon '" + lexicon.name() + "' is empty");
    MentionRecord m;
    m.doc_id = doc.doc_id;
    m.user_id = doc.user_id;
    m.conditions = lexicon.match(doc.text);
    m.forum = doc.forum;
    m.kind = doc.kind;
    return m;
}

// ---------------------------------------------------------------------------------------------
// Forum filtering

template <typename Record>
std::vector<Record> filter_forums(std::vector<Record> records, const std::set<std::string> &blocklist,
                                  std::size_t *dropped = nullptr) {
    std::size_t before = records.size();
    if (!blocklist.empty()) {
        std::erase_if(records, [&](const Record &r) {
            return blocklist.count(text::to_lower_ascii(r.forum)) > 0;
        });
    }
    if (dropped)
        *dropped = before - records.size();
    return records;
}

inline std::set<std::string> normalize_blocklist(const std::vector<std::string> &forums) {
    std::set<std::string> out;
    for (const auto &f : forums) {
        auto t = text::to_lower_ascii(text::trim(f));
        if (!t.empty())
            out.insert(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// User geo-location

struct ActivityRecord {
    std::string user_id;
    std::string forum;
    std::int64_t contribution_count = 0;
};

/// One activity row per (user, forum) with the number of documents the user posted there.
inline std::vector<ActivityRecord> activities_from_documents(const std::vector<Document> &docs) {
    std::map<std::pair<std::string, std::string>, std::int64_t> counts;
    for (const auto &d : docs)
        if (!d.forum.empty())
            ++counts[{d.user_id, d.forum}];
    std::vector<ActivityRecord> out;
    out.reserve(counts.size());
    for (const auto &[key, n] : counts)
        out.push_back({key.first, key.second, n});
    return out;
}

using ForumStateMap = std::map<std::string, std::string>;

inline ForumStateMap load_forum_state_map(const std::filesystem::path &path) {
    ForumStateMap out;
    for (auto &[forum, state] : io::read_two_column(path)) {
        auto key = text::to_lower_ascii(forum);
        auto [it, inserted] = out.emplace(key, state);
        if (!inserted && it->second != state)
            throw ValidationError("forum '" + forum + "' maps to more than one state");
    }
    return out;
}

/// A user is located in state s iff every contribution they made in a location forum maps
/// to s and those contributions number at least `min_contributions`.
inline std::map<std::string, std::string>
infer_user_locations(const std::vector<ActivityRecord> &activities, const ForumStateMap &forum_to_state,
                     std::int64_t min_contributions = 5) {
    struct Tally {
        std::set<std::string> states;
        std::int64_t count = 0;
    };
    std::map<std::string, Tally> per_user;
    for (const auto &a : activities) {
        if (a.contribution_count < 0)
            throw ValidationError("negative contribution_count for user '" + a.user_id + "'");
        auto it = forum_to_state.find(text::to_lower_ascii(a.forum));
        if (it == forum_to_state.end() || a.contribution_count == 0)
            continue;
        auto &t = per_user[a.user_id];
        t.states.insert(it->second);
        t.count += a.contribution_count;
    }
    std::map<std::string, std::string> out;
    for (const auto &[user, t] : per_user)
        if (t.states.size() == 1 && t.count >= min_contributions)
            out.emplace(user, *t.states.begin());
    return out;
}

struct LocationStats {
    std::string location;
    std::int64_t user_count = 0;
    std::int64_t census_population = 1;
};

/// Locations whose users-per-capita ratio lies more than two population standard
/// deviations from the mean ratio.
inline std::set<std::string> representativeness_outliers(const std::vector<LocationStats> &stats) {
    if (stats.size() < 3)
        throw ValidationError("representativeness check needs at least 3 locations");
    std::vector<double> ratios;
    ratios.reserve(stats.size());
    for (const auto &s : stats) {
        if (s.census_population <= 0)
            throw ValidationError("census population must be positive for '" + s.location + "'");
        ratios.push_back(static_cast<double>(s.user_count) / static_cast<double>(s.census_population));
    }
    const double mu = stats::mean(ratios);
    const double sd = stats::population_sd(ratios);
    std::set<std::string> out;
    if (sd == 0.0)
        return out;
    for (std::size_t i = 0; i < stats.size(); ++i)
        if (stats::beyond_band(ratios[i], mu, sd, 2.0))
            out.insert(stats[i].location);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Annotation agreement

enum class MatchMode { strict, relaxed };

namespace detail {

/// True when the token sequence `needle` occurs contiguously in `hay`.
inline bool token_contains(const std::vector<std::string> &hay, const std::vector<std::string> &needle) {
    if (needle.empty() || needle.size() > hay.size())
        return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

inline bool augment(std::size_t u, const std::vector<std::vector<std::size_t>> &adj,
                    std::vector<char> &seen, std::vector<std::ptrdiff_t> &match_right) {
    for (auto v : adj[u]) {
        if (seen[v])
            continue;
        seen[v] = 1;
        if (match_right[v] < 0 ||
            augment(static_cast<std::size_t>(match_right[v]), adj, seen, match_right)) {
            match_right[v] = static_cast<std::ptrdiff_t>(u);
            return true;
        }
    }
    return false;
}

} // namespace detail

/// Agreement = matched / max(|workers|, |expert|), where matched is the size of a maximum
/// one-to-one matching between the two lists. Strict pairs require identical strings; relaxed
/// pairs require one normalized entity to occur as a token run inside the other.
inline double annotation_agreement(const std::vector<std::string> &workers,
                                   const std::vector<std::string> &expert, MatchMode mode) {
    if (workers.empty() && expert.empty())
        return 1.0;
    std::vector<std::vector<std::string>> wt, et;
    if (mode == MatchMode::relaxed) {
        for (const auto &w : workers)
            wt.push_back(text::tokenize(text::normalize(w)));
        for (const auto &e : expert)
            et.push_back(text::tokenize(text::normalize(e)));
    }
    std::vector<std::vector<std::size_t>> adj(workers.size());
    for (std::size_t i = 0; i < workers.size(); ++i) {
        for (std::size_t j = 0; j < expert.size(); ++j) {
            bool ok = mode == MatchMode::strict
                          ? workers[i] == expert[j]
                          : (detail::token_contains(wt[i], et[j]) || detail::token_contains(et[j], wt[i]));
            if (ok)
                adj[i].push_back(j);
        }
    }
    std::vector<std::ptrdiff_t> match_right(expert.size(), -1);
    std::size_t matched = 0;
    for (std::size_t i = 0; i < workers.size(); ++i) {
        std::vector<char> seen(expert.size(), 0);
        if (detail::augment(i, adj, seen, match_right))
            ++matched;
    }
    return static_cast<double>(matched) /
           static_cast<double>(std::max(workers.size(), expert.size()));
}

} // namespace medtax
