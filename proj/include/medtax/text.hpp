#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace medtax::text {

inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

/// Word characters are ASCII alphanumerics and every non-ASCII byte (UTF-8 continuation
/// and lead bytes), so multi-byte letters never split a token.
inline bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

inline bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto &c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Condition normalization: case-fold, collapse internal whitespace, trim, and strip
/// surrounding punctuation. No stemming.
inline std::string normalize(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (unsigned char c : raw) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    std::size_t b = 0;
    std::size_t e = out.size();
    while (b < e && (is_punct(out[b]) || is_space(out[b])))
        ++b;
    while (e > b && (is_punct(out[e - 1]) || is_space(out[e - 1])))
        --e;
    return out.substr(b, e - b);
}

/// Lower-cased word tokens; any run of non-word bytes is a boundary.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : s) {
        if (is_word_byte(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty())
        tokens.push_back(std::move(cur));
    return tokens;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b]))
        ++b;
    while (e > b && is_space(s[e - 1]))
        --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char delim) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

} // namespace medtax::text
