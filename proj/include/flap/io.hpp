#pragma once

#include <Eigen/Core>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flap/errors.hpp"

namespace flap {

/// Shortest decimal string that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    while (ptr != end && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
    if (ec != std::errc() || ptr != end)
        throw MissingDataError("unparseable numeric value '" + s + "' at " + where);
    return v;
}

/// Splits one CSV record on commas. Quoting is not supported; the formats
/// this library writes never need it.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingDataError("cannot open file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

/// Writes a matrix as headerless CSV at full precision.
inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw MissingDataError("empty matrix file: " + path.string());
    const auto first = split_csv_line(lines[0]);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(lines.size()),
                      static_cast<Eigen::Index>(first.size()));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto fields = split_csv_line(lines[i]);
        if (fields.size() != first.size())
            throw DimensionError("ragged row " + std::to_string(i) + " in " + path.string());
        for (std::size_t j = 0; j < fields.size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                parse_double(fields[j], path.string() + ":" + std::to_string(i + 1));
    }
    return m;
}

}  // namespace flap
