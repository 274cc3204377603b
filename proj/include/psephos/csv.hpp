#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "psephos/common.hpp"

namespace psephos {

inline std::vector<std::string> split_fields(std::string_view line, char delim = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == delim) {
            out.emplace_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline long long parse_count(const std::string& field, std::size_t line) {
    std::string t = trim(field);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw ParseError("expected an integer, got '" + t + "'", line);
    return value;
}

inline double parse_real(const std::string& field, std::size_t line) {
    std::string t = trim(field);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw ParseError("expected a number, got '" + t + "'", line);
    return value;
}

// Calls row_fn(line_number, fields) for every non-blank line after the header.
// The header is validated against `expected_header` field names (trimmed).
inline void for_each_csv_row(std::istream& in, const std::vector<std::string>& expected_header,
                             const std::function<void(std::size_t, const std::vector<std::string>&)>& row_fn) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file: missing header row");
    ++line_no;
    auto header = split_fields(line);
    if (header.size() < expected_header.size())
        throw ParseError("bad header: expected at least " + std::to_string(expected_header.size()) + " columns",
                         line_no);
    for (std::size_t i = 0; i < expected_header.size(); ++i) {
        if (trim(header[i]) != expected_header[i])
            throw ParseError("bad header: column " + std::to_string(i + 1) + " should be '" + expected_header[i] +
                                 "', got '" + trim(header[i]) + "'",
                             line_no);
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        row_fn(line_no, split_fields(line));
    }
}

// Writes via a temp file and renames into place, so a failed run never leaves
// a truncated output behind.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw ParseError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Shortest round-trip formatting for doubles, used by every report writer so
// reruns with the same seed emit byte-identical files.
inline std::string format_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace psephos
