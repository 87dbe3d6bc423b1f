#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "io.hpp"

/// Synthetic corpus with planted structure: condition phrases fall into topics with two
/// sub-topics each, users live in states with latent topic prevalences, and official statistics
/// and covariates are drawn from the same latent factors.
namespace medtax::synth {

struct SynthOptions {
    std::size_t documents = 10000;
    std::size_t users = 1500;
    std::uint64_t seed = 20210301;
};

namespace detail {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
    std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
    bool chance(double p) { return uniform() < p; }
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * uniform());
    }
    std::size_t weighted(const std::vector<double> &w) {
        double total = 0.0;
        for (double x : w)
            total += x;
        double r = uniform() * total;
        for (std::size_t i = 0; i < w.size(); ++i) {
            r -= w[i];
            if (r < 0.0)
                return i;
        }
        return w.size() - 1;
    }

  private:
    std::mt19937_64 eng_;
};

struct State {
    const char *code;
    const char *forum;
    double millions;
};

inline constexpr std::array<State, 40> states = {{
    {"CA", "california", 39.0},    {"TX", "texas", 30.0},         {"FL", "florida", 22.2},
    {"NY", "newyork", 19.6},       {"PA", "pennsylvania", 13.0},  {"IL", "illinois", 12.5},
    {"OH", "ohio", 11.8},          {"GA", "georgia", 11.0},       {"NC", "northcarolina", 10.7},
    {"MI", "michigan", 10.0},      {"NJ", "newjersey", 9.3},      {"VA", "virginia", 8.7},
    {"WA", "washington", 7.8},     {"AZ", "arizona", 7.4},        {"TN", "tennessee", 7.0},
    {"MA", "massachusetts", 7.0},  {"IN", "indiana", 6.8},        {"MO", "missouri", 6.2},
    {"MD", "maryland", 6.2},       {"WI", "wisconsin", 5.9},      {"CO", "colorado", 5.8},
    {"MN", "minnesota", 5.7},      {"SC", "southcarolina", 5.3},  {"AL", "alabama", 5.1},
    {"LA", "louisiana", 4.6},      {"KY", "kentucky", 4.5},       {"OR", "oregon", 4.2},
    {"OK", "oklahoma", 4.0},       {"CT", "connecticut", 3.6},    {"UT", "utah", 3.4},
    {"IA", "iowa", 3.2},           {"NV", "nevada", 3.2},         {"AR", "arkansas", 3.0},
    {"KS", "kansas", 2.9},         {"MS", "mississippi", 2.9},    {"NM", "newmexico", 2.1},
    {"NE", "nebraska", 2.0},       {"ID", "idaho", 1.9},          {"WV", "westvirginia", 1.8},
    {"HI", "hawaii", 1.4},
}};

struct Topic {
    const char *name;
    const char *statistic; // empty when the topic has no official statistic
    const char *liwc;      // dictionary-baseline disease, empty when none
    std::array<const char *, 10> roots;
};

inline constexpr std::array<Topic, 8> topics = {{
    {"respiratory", "asthma_prevalence", "asthma",
     {"asthma", "wheezing", "bronchitis", "cough", "pneumonia", "sinusitis", "emphysema", "phlegm", "allergies",
      "congestion"}},
    {"cardio", "heart_disease_mortality", "heart",
     {"hypertension", "arrhythmia", "palpitations", "angina", "tachycardia", "bradycardia", "murmur", "edema",
      "cholesterol", "stroke"}},
    {"mental", "depression_prevalence", "depression",
     {"depression", "anxiety", "insomnia", "panic", "ptsd", "adhd", "bipolar", "paranoia", "burnout",
      "loneliness"}},
    {"metabolic", "diabetes_prevalence", "diabetes",
     {"diabetes", "obesity", "hypoglycemia", "thirst", "neuropathy", "prediabetes", "gout", "hyperthyroidism",
      "hypothyroidism", "fatigue"}},
    {"musculoskeletal", "arthritis_prevalence", "arthritis",
     {"arthritis", "backache", "sciatica", "tendinitis", "osteoporosis", "bursitis", "scoliosis", "stiffness",
      "sprain", "fibromyalgia"}},
    {"digestive", "", "",
     {"gastritis", "reflux", "constipation", "diarrhea", "nausea", "bloating", "ulcer", "colitis", "heartburn",
      "cramps"}},
    {"skin", "", "",
     {"eczema", "psoriasis", "acne", "rash", "hives", "rosacea", "dermatitis", "itching", "blisters", "warts"}},
    {"neuro", "", "",
     {"migraine", "headache", "dizziness", "vertigo", "seizures", "tremor", "numbness", "tinnitus", "epilepsy",
      "concussion"}},
}};

// Index 0 is the bare root.
inline constexpr std::array<const char *, 26> modifiers = {
    "",          "chronic",  "acute",   "mild",     "severe",      "recurring", "persistent",
    "sudden",    "nocturnal", "seasonal", "constant", "intermittent", "painful",  "worsening",
    "occasional", "bad",     "minor",   "longterm", "early",       "late",      "frequent",
    "unexplained", "lingering", "sharp", "dull",    "flaring"};

inline constexpr std::array<const char *, 30> filler = {
    "been",   "dealing", "with",    "and",    "lately", "any",   "advice", "my",      "doctor", "says",
    "also",   "since",   "last",    "week",   "month",  "really", "tired", "of",      "this",   "anyone",
    "else",   "have",    "the",     "got",    "today",  "worried", "about", "help",   "thanks", "again"};

inline constexpr std::array<const char *, 5> health_forums = {"askdocs", "health", "medical_advice", "symptoms",
                                                              "mentalhealth"};
inline constexpr const char *blocked_forum = "medicalschool";

inline std::string phrase(std::size_t topic, std::size_t root, std::size_t mod) {
    std::string r = topics[topic].roots[root];
    return mod == 0 ? r : std::string(modifiers[mod]) + " " + r;
}

inline std::vector<double> zipf(std::size_t n, double s) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
    return w;
}

} // namespace detail

/// Writes documents.jsonl, lexicon.tsv, liwc/, forum_map.tsv, census.tsv, statistics.tsv,
/// covariates.tsv and config.ini into `dir`.
inline void write_corpus(const std::filesystem::path &dir, const SynthOptions &opts) {
    using namespace detail;
    Rng rng(opts.seed);
    const std::size_t S = states.size();
    const std::size_t T = topics.size();

    // Latent state factors; the first two drive both prevalence and covariates.
    std::vector<double> x1(S), x2(S);
    std::vector<std::vector<double>> z(S, std::vector<double>(T));
    for (std::size_t s = 0; s < S; ++s) {
        x1[s] = rng.normal();
        x2[s] = rng.normal();
    }
    std::vector<double> load1(T), load2(T);
    for (std::size_t t = 0; t < T; ++t) {
        load1[t] = 0.3 + 0.4 * rng.uniform();
        load2[t] = 0.3 + 0.4 * rng.uniform();
    }
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t t = 0; t < T; ++t)
            z[s][t] = load1[t] * x1[s] + load2[t] * x2[s] + 0.7 * rng.normal();

    // Users and their posting plans.
    std::vector<double> state_w(S);
    for (std::size_t s = 0; s < S; ++s)
        state_w[s] = std::pow(states[s].millions, 0.7) * std::exp(0.25 * rng.normal());
    state_w[S - 1] *= 4.0; // one over-represented state

    struct User {
        std::size_t home;
        std::size_t other;
        std::size_t n_loc;
        std::size_t n_other_loc;
        std::size_t n_health;
    };
    std::vector<User> users(opts.users);
    std::size_t total = 0;
    for (auto &u : users) {
        u.home = rng.weighted(state_w);
        u.other = u.home;
        const double kind = rng.uniform();
        if (kind < 0.80) {
            u.n_loc = rng.between(5, 7);
            u.n_other_loc = 0;
            u.n_health = rng.between(0, 2);
        } else if (kind < 0.85) {
            u.other = (u.home + 1 + rng.below(S - 1)) % S;
            u.n_loc = 3;
            u.n_other_loc = 3;
            u.n_health = rng.between(0, 1);
        } else {
            u.n_loc = rng.between(0, 3);
            u.n_other_loc = 0;
            u.n_health = rng.between(1, 4);
        }
        total += u.n_loc + u.n_other_loc + u.n_health;
    }
    const std::size_t blocked_docs = opts.documents / 50;
    const std::size_t target = opts.documents - blocked_docs;
    while (total < target) {
        ++users[rng.below(users.size())].n_health;
        ++total;
    }
    while (total > target) {
        auto &u = users[rng.below(users.size())];
        if (u.n_health > 0) {
            --u.n_health;
            --total;
        }
    }

    const auto root_w = zipf(5, 0.9);
    const auto mod_w = zipf(modifiers.size(), 1.1);
    std::vector<double> topic_base(T);
    for (std::size_t t = 0; t < T; ++t)
        topic_base[t] = 1.0 / (1.0 + 0.15 * static_cast<double>(t));

    auto draw_condition = [&](std::size_t topic, std::size_t half) {
        const std::size_t root = 5 * half + rng.weighted(root_w);
        return phrase(topic, root, rng.weighted(mod_w));
    };
    auto compose = [&](std::size_t n_cond, std::vector<double> topic_w) {
        std::vector<std::string> words;
        const std::size_t topic = rng.weighted(topic_w);
        const std::size_t half = rng.below(2);
        for (std::size_t i = 0; i < n_cond; ++i) {
            for (std::size_t k = rng.between(1, 3); k > 0; --k)
                words.push_back(filler[rng.below(filler.size())]);
            const double r = rng.uniform();
            if (r < 0.80)
                words.push_back(draw_condition(topic, half));
            else if (r < 0.92)
                words.push_back(draw_condition(topic, 1 - half));
            else
                words.push_back(draw_condition(rng.below(T), rng.below(2)));
            if (i + 1 < n_cond)
                words.push_back(rng.chance(0.5) ? "and" : "plus");
        }
        for (std::size_t k = rng.between(1, 4); k > 0; --k)
            words.push_back(filler[rng.below(filler.size())]);
        std::string textv;
        for (const auto &w : words)
            textv += (textv.empty() ? "" : " ") + w;
        if (rng.chance(0.3))
            textv[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(textv[0])));
        return textv + (rng.chance(0.5) ? "." : "!");
    };

    struct Doc {
        std::string user, forum, kind, text;
    };
    std::vector<Doc> docs;
    docs.reserve(opts.documents);
    for (std::size_t i = 0; i < users.size(); ++i) {
        const auto &u = users[i];
        const std::string uid = "u" + std::to_string(10000 + i);
        std::vector<double> tw(T);
        for (std::size_t t = 0; t < T; ++t)
            tw[t] = topic_base[t] * std::exp(0.45 * z[u.home][t]);
        auto emit = [&](const std::string &forum, bool health) {
            std::size_t n = health ? rng.between(2, 5) : (rng.chance(0.4) ? 0 : rng.between(1, 3));
            std::string kind = rng.chance(0.3) ? "submission" : "comment";
            std::string body = n == 0 ? std::string("anyone else here today got advice about this week.") : compose(n, tw);
            docs.push_back({uid, forum, kind, body});
        };
        for (std::size_t k = 0; k < u.n_loc; ++k)
            emit(states[u.home].forum, false);
        for (std::size_t k = 0; k < u.n_other_loc; ++k)
            emit(states[u.other].forum, false);
        for (std::size_t k = 0; k < u.n_health; ++k)
            emit(health_forums[rng.below(health_forums.size())], true);
    }
    for (std::size_t k = 0; k < blocked_docs; ++k) {
        std::string body;
        for (std::size_t c = 0; c < 5; ++c)
            body += (c ? " and " : "studying ") + draw_condition(rng.below(T), rng.below(2));
        docs.push_back({"u" + std::to_string(10000 + rng.below(users.size())), blocked_forum, "comment", body});
    }
    // Interleave users so files do not look sorted.
    for (std::size_t i = docs.size(); i > 1; --i)
        std::swap(docs[i - 1], docs[static_cast<std::size_t>(rng.below(i))]);

    std::string doc_out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        nlohmann::ordered_json j;
        j["doc_id"] = "d" + std::to_string(100000 + i);
        j["user_id"] = docs[i].user;
        j["forum"] = docs[i].forum;
        j["kind"] = docs[i].kind;
        j["text"] = docs[i].text;
        doc_out += j.dump() + "\n";
    }
    io::write_file_atomic(dir / "documents.jsonl", doc_out);

    std::string lex = "# phrase\tcategory\n";
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t r = 0; r < 10; ++r)
            for (std::size_t m = 0; m < modifiers.size(); ++m)
                lex += phrase(t, r, m) + "\t" + topics[t].name + "\n";
    io::write_file_atomic(dir / "lexicon.tsv", lex);

    for (const auto &topic : topics) {
        if (std::string(topic.liwc).empty())
            continue;
        std::string body;
        for (const auto *root : topic.roots)
            body += std::string(root) + "\t" + topic.liwc + "\n";
        io::write_file_atomic(dir / "liwc" / (std::string(topic.liwc) + ".tsv"), body);
    }

    std::string fm = "# forum\tstate\n", census = "# state\tpopulation\n";
    for (const auto &s : states) {
        fm += std::string(s.forum) + "\t" + s.code + "\n";
        census += std::string(s.code) + "\t" + std::to_string(static_cast<std::int64_t>(s.millions * 1e6)) + "\n";
    }
    io::write_file_atomic(dir / "forum_map.tsv", fm);
    io::write_file_atomic(dir / "census.tsv", census);

    std::string stats = "state";
    for (const auto &topic : topics)
        if (*topic.statistic)
            stats += std::string("\t") + topic.statistic;
    stats += "\tpoor_self_rated_health\n";
    for (std::size_t s = 0; s < S; ++s) {
        stats += states[s].code;
        double overall = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            overall += z[s][t] / static_cast<double>(T);
            if (*topics[t].statistic)
                stats += "\t" + io::format_fixed(10.0 + 2.0 * (z[s][t] + 0.3 * rng.normal()), 3);
        }
        stats += "\t" + io::format_fixed(17.0 + 3.0 * (overall + 0.2 * rng.normal()), 3) + "\n";
    }
    io::write_file_atomic(dir / "statistics.tsv", stats);

    std::string cov = "state\tper_capita_income\tpct_uninsured\tpct_unemployed\tpopulation_density\t"
                      "pct_single_parent\tpct_minorities\tgini_coefficient\tpct_higher_education\n";
    for (std::size_t s = 0; s < S; ++s) {
        const double noise = rng.normal();
        cov += std::string(states[s].code) + "\t" + io::format_fixed(55000.0 - 7000.0 * x1[s] + 2000.0 * rng.normal(), 0) +
               "\t" + io::format_fixed(9.0 + 3.0 * x2[s] + 0.8 * rng.normal(), 2) + "\t" +
               io::format_fixed(5.0 + 0.8 * x1[s] + 0.6 * noise, 2) + "\t" +
               io::format_fixed(std::exp(4.5 + rng.normal()), 1) + "\t" +
               io::format_fixed(25.0 + 3.0 * rng.normal(), 2) + "\t" + io::format_fixed(30.0 + 8.0 * rng.normal(), 2) +
               "\t" + (s == S - 1 ? std::string("NA") : io::format_fixed(0.46 + 0.02 * rng.normal(), 3)) + "\t" +
               io::format_fixed(32.0 - 3.0 * x1[s] + 2.0 * rng.normal(), 2) + "\n";
    }
    io::write_file_atomic(dir / "covariates.tsv", cov);

    std::string cfg = R"(; Synthetic corpus configuration. Paths are relative to this file.
[paths]
documents = documents.jsonl
lexicon = lexicon.tsv
liwc = liwc
forum_map = forum_map.tsv
census = census.tsv
statistics = statistics.tsv
covariates = covariates.tsv
output = out

[run]
seed = 7
threads = 1
strict = true

[extract]
blocklist = medicalschool
min_contributions = 5
drop_unrepresentative = true

[graph]
max_conditions = 50

[backbone]
delta = 1.64
emit_scores = true

[cluster]
trials = 10
overlap_threshold = 0.25
top_k = 50

[centrality]
kind = pagerank
damping = 0.85
tolerance = 1e-10
max_iterations = 200
top_fraction = 0.05

[score]
rho = 0, 1
aggregation = max
denominator = mentioning-users

[causal]
rho = 1
n_resamples = 100
level = 0.95
caliper = 0.1
cie_threshold = 0.1
smd_threshold = 0.2

[pairs]
asthma_prevalence = cluster:asthma | asthma
heart_disease_mortality = cluster:hypertension | heart
depression_prevalence = cluster:depression | depression
diabetes_prevalence = cluster:diabetes | diabetes
arthritis_prevalence = cluster:arthritis | arthritis
poor_self_rated_health = all, central
)";
    io::write_file_atomic(dir / "config.ini", cfg);
}

} // namespace medtax::synth
