#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "error.hpp"
#include "text.hpp"

namespace medtax::io {

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc())
        throw ComputeError("cannot format double");
    return std::string(buf, ptr);
}

/// Fixed-point rendering for human-facing report columns.
inline std::string format_fixed(double v, int digits) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
    if (ec != std::errc())
        throw ComputeError("cannot format double");
    std::string s(buf, ptr);
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-')
        s.erase(0, 1); // no "-0.000"
    return s;
}

inline double parse_double(std::string_view s, std::string_view what = "value") {
    auto t = text::trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ValidationError("cannot parse " + std::string(what) + " '" + t + "' as a number");
    return v;
}

inline std::int64_t parse_int(std::string_view s, std::string_view what = "value") {
    auto t = text::trim(s);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ValidationError("cannot parse " + std::string(what) + " '" + t + "' as an integer");
    return v;
}

inline std::ifstream open_input(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot read " + path.string());
    return in;
}

inline std::string read_file(const std::filesystem::path &path) {
    auto in = open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Lines without trailing '\r'. The final newline does not produce an empty line.
inline std::vector<std::string> read_lines(const std::filesystem::path &path) {
    auto in = open_input(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

/// Writes through a sibling temporary file and renames it into place, so readers never
/// observe a half-written artifact.
inline void write_file_atomic(const std::filesystem::path &path, std::string_view content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ValidationError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw ComputeError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// Two-column delimited text (key TAB value). Blank lines and '#' comments are skipped.
inline std::vector<std::pair<std::string, std::string>>
read_two_column(const std::filesystem::path &path) {
    std::vector<std::pair<std::string, std::string>> rows;
    std::size_t lineno = 0;
    for (const auto &line : read_lines(path)) {
        ++lineno;
        if (text::trim(line).empty() || line.front() == '#')
            continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": expected two tab-separated columns");
        rows.emplace_back(text::trim(line.substr(0, tab)), text::trim(line.substr(tab + 1)));
    }
    return rows;
}

} // namespace medtax::io
