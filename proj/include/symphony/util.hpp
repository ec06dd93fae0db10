#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "symphony/errors.hpp"

namespace symphony::util {

using Millis = std::uint64_t;

// Wall clock, milliseconds since the Unix epoch. All protocol timestamps use
// this unit.
inline Millis now_ms() {
    using namespace std::chrono;
    return static_cast<Millis>(
        duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

// Monotonic clock for event logs and latency measurement.
inline std::int64_t steady_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

inline std::string to_hex(const unsigned char* data, std::size_t len) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(len * 2, '0');
    for (std::size_t i = 0; i < len; ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0x0f];
    }
    return out;
}

inline std::string to_hex(const std::vector<unsigned char>& data) {
    return to_hex(data.data(), data.size());
}

inline std::vector<unsigned char> from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) throw ValidationError("hex string has odd length");
    std::vector<unsigned char> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw ValidationError("invalid hex digit");
        out[i] = static_cast<unsigned char>((hi << 4) | lo);
    }
    return out;
}

inline bool is_lower_hex(std::string_view s, std::size_t expected_len) {
    if (s.size() != expected_len) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string trim(std::string_view s) {
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && issp(s[b])) ++b;
    while (e > b && issp(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

// Collapses every run of whitespace to a single space.
inline std::string collapse_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return false;
    const std::string h = to_lower(haystack);
    const std::string n = to_lower(needle);
    return h.find(n) != std::string::npos;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            parts.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return parts;
}

} // namespace symphony::util
