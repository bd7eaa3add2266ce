#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cda {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
    using Error::Error;
};

struct PreconditionError : Error {
    using Error::Error;
};

inline bool is_ascii_alpha(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }

inline bool is_ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }

inline char ascii_lower(char c) {
    return is_ascii_upper(c) ? static_cast<char>(c - 'A' + 'a') : c;
}

inline char ascii_upper(char c) {
    return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
    return out;
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Case shape of a token surface, used to restore case after a swap.
enum class CaseShape { Lower, Title, Upper, Other };

inline CaseShape detect_case(std::string_view s) {
    bool any_alpha = false, all_upper = true, all_lower = true;
    bool first_alpha_upper = false, rest_lower = true, seen_first = false;
    for (char c : s) {
        if (!is_ascii_alpha(c)) continue;
        any_alpha = true;
        const bool up = is_ascii_upper(c);
        all_upper &= up;
        all_lower &= !up;
        if (!seen_first) {
            first_alpha_upper = up;
            seen_first = true;
        } else {
            rest_lower &= !up;
        }
    }
    if (!any_alpha) return CaseShape::Other;
    if (all_lower) return CaseShape::Lower;
    if (all_upper) return CaseShape::Upper;
    if (first_alpha_upper && rest_lower) return CaseShape::Title;
    return CaseShape::Other;
}

inline std::string apply_case(std::string_view lower_word, CaseShape shape) {
    std::string out(lower_word);
    switch (shape) {
        case CaseShape::Upper:
            std::transform(out.begin(), out.end(), out.begin(), ascii_upper);
            break;
        case CaseShape::Title:
            for (auto& c : out) {
                if (is_ascii_alpha(c)) {
                    c = ascii_upper(c);
                    break;
                }
            }
            break;
        case CaseShape::Lower:
        case CaseShape::Other:
            break;
    }
    return out;
}

inline std::vector<std::string> split_on(std::string_view text, std::string_view delim) {
    std::vector<std::string> parts;
    size_t pos = 0;
    while (true) {
        const size_t hit = text.find(delim, pos);
        if (hit == std::string_view::npos) {
            parts.emplace_back(text.substr(pos));
            break;
        }
        parts.emplace_back(text.substr(pos, hit - pos));
        pos = hit + delim.size();
    }
    return parts;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Write-temp-then-rename so partially written files never replace good ones.
inline void write_file_atomic(const std::string& path, std::string_view content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("rename failed: " + tmp + " -> " + path + ": " + ec.message());
}

inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ULL) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
    return std::string(buf);
}

}  // namespace cda
