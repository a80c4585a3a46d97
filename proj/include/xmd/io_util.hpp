#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "xmd/error.hpp"

namespace xmd {

// Shortest round-trip representation; reports stay byte-identical across runs.
inline std::string fmt_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
    out << content;
    if (!out) fail(ErrorCode::IoFailure, "short write to " + path.string());
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(field);
    return fields;
}

inline double parse_double(const std::string& text, const std::string& what) {
    try {
        size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) fail(ErrorCode::ParseError, what + ": trailing characters in '" + text + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorCode::ParseError, what + ": not a number: '" + text + "'");
    }
}

inline long parse_long(const std::string& text, const std::string& what) {
    try {
        size_t pos = 0;
        const long v = std::stol(text, &pos);
        if (pos != text.size()) fail(ErrorCode::ParseError, what + ": trailing characters in '" + text + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorCode::ParseError, what + ": not an integer: '" + text + "'");
    }
}

}  // namespace xmd
