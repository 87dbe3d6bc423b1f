#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "centrality.hpp"
#include "error.hpp"
#include "ingest.hpp"
#include "io.hpp"
#include "stats.hpp"

namespace medtax {

enum class Aggregation { max, sum, mean };
enum class Denominator { mentioning_users, all_users };

inline const char *to_string(Aggregation a) {
    switch (a) {
    case Aggregation::max:
        return "max";
    case Aggregation::sum:
        return "sum";
    case Aggregation::mean:
        return "mean";
    }
    return "?";
}

inline Aggregation parse_aggregation(std::string_view s) {
    if (s == "max")
        return Aggregation::max;
    if (s == "sum")
        return Aggregation::sum;
    if (s == "mean")
        return Aggregation::mean;
    throw ValidationError("unknown aggregation '" + std::string(s) + "'");
}

inline const char *to_string(Denominator d) {
    return d == Denominator::mentioning_users ? "mentioning-users" : "all-users";
}

inline Denominator parse_denominator(std::string_view s) {
    if (s == "mentioning-users")
        return Denominator::mentioning_users;
    if (s == "all-users")
        return Denominator::all_users;
    throw ValidationError("unknown denominator '" + std::string(s) + "'");
}

struct CategorySpec {
    std::string id;
    std::unordered_set<std::string> conditions;
};

using UserLocations = std::map<std::string, std::string>;
/// Location -> users U_l counted in the denominator of the category fraction.
using Population = std::map<std::string, std::set<std::string>>;

/// User -> location from the records' own location field. Users reported in more than one
/// location are dropped.
inline UserLocations user_locations_from_records(const std::vector<MentionRecord> &records) {
    std::map<std::string, std::set<std::string>> seen;
    for (const auto &r : records)
        if (r.location)
            seen[r.user_id].insert(*r.location);
    UserLocations out;
    for (const auto &[u, locs] : seen)
        if (locs.size() == 1)
            out.emplace(u, *locs.begin());
    return out;
}

/// U_l per location. With `mentioning_users`, a located user counts once they have at least
/// one record with a condition; with `all_users`, every located user counts.
inline Population population_of(const std::vector<MentionRecord> &records, const UserLocations &locations,
                                 Denominator denominator) {
    Population pop;
    for (const auto &[user, loc] : locations)
        pop[loc]; // every known location appears, possibly empty
    if (denominator == Denominator::all_users) {
        for (const auto &[user, loc] : locations)
            pop[loc].insert(user);
        return pop;
    }
    for (const auto &r : records) {
        if (r.conditions.empty())
            continue;
        auto it = locations.find(r.user_id);
        if (it != locations.end())
            pop[it->second].insert(r.user_id);
    }
    return pop;
}

struct FractionTable {
    std::string category_id;
    int rho = 1;
    Aggregation aggregation = Aggregation::max;
    Denominator denominator = Denominator::mentioning_users;
    std::map<std::string, double> values;
    std::map<std::string, std::size_t> users;
    std::map<std::string, std::string> excluded;
};

struct FractionParams {
    int rho = 1;
    Aggregation aggregation = Aggregation::max;
    Denominator denominator = Denominator::mentioning_users;
};

/// f(l) = (1/|U_l|) sum_{u in U_l} agg({c(s)^rho : s in S_i(u)}); users without a condition of the
/// category contribute 0. With rho = 0 every term is 1, so max-aggregation gives the fraction of
/// users mentioning the category.
inline FractionTable category_fraction(const std::vector<MentionRecord> &records, const UserLocations &locations,
                                       const Population &population, const CategorySpec &spec,
                                       const std::unordered_map<std::string, double> &centrality,
                                       const FractionParams &params) {
    if (params.rho != 0 && params.rho != 1)
        throw ValidationError("rho must be 0 or 1");
    if (spec.conditions.empty())
        throw ValidationError("category '" + spec.id + "' has no conditions");

    // S_i(u): the user's distinct conditions in the category.
    std::map<std::string, std::set<std::string>> per_user;
    for (const auto &r : records) {
        auto loc = locations.find(r.user_id);
        if (loc == locations.end())
            continue;
        auto pop = population.find(loc->second);
        if (pop == population.end() || !pop->second.count(r.user_id))
            continue;
        for (const auto &c : r.conditions)
            if (spec.conditions.count(c))
                per_user[r.user_id].insert(c);
    }

    auto weight = [&](const std::string &c) {
        if (params.rho == 0)
            return 1.0;
        auto it = centrality.find(c);
        return it == centrality.end() ? 0.0 : it->second;
    };

    FractionTable ft;
    ft.category_id = spec.id;
    ft.rho = params.rho;
    ft.aggregation = params.aggregation;
    ft.denominator = params.denominator;
    for (const auto &[loc, users] : population) {
        if (users.empty()) {
            ft.excluded.emplace(loc, "no users");
            continue;
        }
        double total = 0.0;
        for (const auto &u : users) {
            auto it = per_user.find(u);
            if (it == per_user.end())
                continue;
            double agg = 0.0;
            for (const auto &c : it->second) {
                const double w = weight(c);
                agg = params.aggregation == Aggregation::max ? std::max(agg, w) : agg + w;
            }
            if (params.aggregation == Aggregation::mean)
                agg /= static_cast<double>(it->second.size());
            total += agg;
        }
        ft.values.emplace(loc, total / static_cast<double>(users.size()));
        ft.users.emplace(loc, users.size());
    }
    return ft;
}

/// Drops locations whose f lies more than two population SDs from the mean of f.
inline FractionTable score_outlier_filter(FractionTable ft) {
    if (ft.values.size() < 3)
        throw ValidationError("outlier filter needs at least 3 locations, got " + std::to_string(ft.values.size()));
    std::vector<double> f;
    for (const auto &[loc, v] : ft.values)
        f.push_back(v);
    const double mu = stats::mean(f);
    const double sd = stats::population_sd(f);
    if (sd == 0.0)
        return ft;
    for (auto it = ft.values.begin(); it != ft.values.end();) {
        if (stats::beyond_band(it->second, mu, sd, 2.0)) {
            ft.excluded.emplace(it->first, "outlier: f deviates more than 2 SD from the mean");
            ft.users.erase(it->first);
            it = ft.values.erase(it);
        } else {
            ++it;
        }
    }
    return ft;
}

struct HealthScoreTable {
    std::string category_id;
    int rho = 1;
    Aggregation aggregation = Aggregation::max;
    Denominator denominator = Denominator::mentioning_users;
    std::map<std::string, double> fraction;
    std::map<std::string, double> score;
    std::map<std::string, std::string> excluded;
    double mu = 0.0;
    double sigma = 0.0;
    std::vector<std::string> warnings;
};

/// H(l) = -(f(l) - mu) / sigma over the included locations; positive means fewer mentions than
/// average.
inline HealthScoreTable health_score(const FractionTable &ft) {
    if (ft.values.size() < 2)
        throw ValidationError("health score needs at least 2 locations, got " + std::to_string(ft.values.size()));
    HealthScoreTable hs;
    hs.category_id = ft.category_id;
    hs.rho = ft.rho;
    hs.aggregation = ft.aggregation;
    hs.denominator = ft.denominator;
    hs.fraction = ft.values;
    hs.excluded = ft.excluded;
    std::vector<double> f;
    for (const auto &[loc, v] : ft.values)
        f.push_back(v);
    hs.mu = stats::mean(f);
    hs.sigma = stats::population_sd(f);
    if (hs.sigma == 0.0)
        hs.warnings.push_back("category '" + ft.category_id + "': all fractions equal, scores set to 0");
    for (const auto &[loc, v] : ft.values)
        hs.score.emplace(loc, hs.sigma == 0.0 ? 0.0 : -(v - hs.mu) / hs.sigma);
    return hs;
}

/// Dictionary-count baseline: per disease lexicon, extract mentions, then rho = 0 fractions,
/// outlier filter and standardization. `population` fixes U_l independently of the lexicon.
inline std::map<std::string, HealthScoreTable>
disliwc_scores(const std::vector<Document> &documents, const UserLocations &locations, const Population &population,
               const std::map<std::string, Lexicon> &lexicons) {
    if (lexicons.empty())
        throw ValidationError("no disease lexicons supplied");
    std::map<std::string, HealthScoreTable> out;
    for (const auto &[disease, lexicon] : lexicons) {
        std::vector<MentionRecord> records;
        records.reserve(documents.size());
        for (const auto &d : documents)
            records.push_back(extract_mentions_dictionary(d, lexicon));
        CategorySpec spec{"liwc:" + disease, {}};
        for (const auto &[phrase, cat] : lexicon.entries())
            spec.conditions.insert(phrase);
        auto ft = category_fraction(records, locations, population, spec, {},
                                    {0, Aggregation::max, Denominator::mentioning_users});
        out.emplace(disease, health_score(score_outlier_filter(std::move(ft))));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Scores file

inline std::string write_scores(const HealthScoreTable &hs) {
    std::string out;
    out += "# category_id=" + hs.category_id + "\n";
    out += "# rho=" + std::to_string(hs.rho) + "\n";
    out += "# aggregation=" + std::string(to_string(hs.aggregation)) + "\n";
    out += "# denominator=" + std::string(to_string(hs.denominator)) + "\n";
    out += "# mu=" + io::format_double(hs.mu) + "\n";
    out += "# sigma=" + io::format_double(hs.sigma) + "\n";
    for (const auto &[loc, reason] : hs.excluded)
        out += "# excluded=" + loc + "\t" + reason + "\n";
    out += "location\tf\tH\n";
    for (const auto &[loc, f] : hs.fraction)
        out += loc + "\t" + io::format_double(f) + "\t" + io::format_double(hs.score.at(loc)) + "\n";
    return out;
}

inline HealthScoreTable read_scores(const std::filesystem::path &path) {
    HealthScoreTable hs;
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
            if (key == "category_id")
                hs.category_id = val;
            else if (key == "rho")
                hs.rho = static_cast<int>(io::parse_int(val));
            else if (key == "aggregation")
                hs.aggregation = parse_aggregation(val);
            else if (key == "denominator")
                hs.denominator = parse_denominator(val);
            else if (key == "mu")
                hs.mu = io::parse_double(val);
            else if (key == "sigma")
                hs.sigma = io::parse_double(val);
            else if (key == "excluded") {
                auto tab = val.find('\t');
                hs.excluded.emplace(val.substr(0, tab), tab == std::string::npos ? "" : val.substr(tab + 1));
            }
            continue;
        }
        if (!header) {
            header = true;
            continue;
        }
        auto cols = text::split(line, '\t');
        if (cols.size() != 3)
            throw ValidationError(path.string() + ": malformed scores row");
        hs.fraction.emplace(cols[0], io::parse_double(cols[1]));
        hs.score.emplace(cols[0], io::parse_double(cols[2]));
    }
    return hs;
}

} // namespace medtax
