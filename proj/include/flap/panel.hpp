#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flap/errors.hpp"
#include "flap/io.hpp"

namespace flap {

/// A rectangular multivariate series: T observations of m named series with
/// a strictly increasing time index. Immutable after validation.
struct Panel {
    Eigen::MatrixXd values;                 // T x m
    std::vector<std::string> series_names;  // m
    std::vector<std::string> time_index;    // T
    // Per-series {mean, sd} recorded when standardize() produced this panel.
    std::vector<std::pair<double, double>> standardization;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

enum class PanelLayout { Wide, Long };

namespace detail {

/// Numeric-aware ordering so integer time indices sort as numbers while
/// ISO-8601 labels fall back to lexicographic order.
inline bool time_less(const std::string& a, const std::string& b) {
    char* enda = nullptr;
    char* endb = nullptr;
    const double va = std::strtod(a.c_str(), &enda);
    const double vb = std::strtod(b.c_str(), &endb);
    const bool na = enda == a.c_str() + a.size() && !a.empty();
    const bool nb = endb == b.c_str() + b.size() && !b.empty();
    if (na && nb) return va < vb;
    return a < b;
}

inline void validate_panel(const Panel& p) {
    std::vector<std::string> problems;
    std::set<std::string> seen_names(p.series_names.begin(), p.series_names.end());
    if (seen_names.size() != p.series_names.size())
        problems.push_back("duplicate series names");
    for (std::size_t t = 0; t + 1 < p.time_index.size(); ++t)
        if (!time_less(p.time_index[t], p.time_index[t + 1]))
            problems.push_back("time index not strictly increasing at row " + std::to_string(t + 1) +
                               " ('" + p.time_index[t] + "' !< '" + p.time_index[t + 1] + "')");
    for (Eigen::Index i = 0; i < p.values.rows(); ++i)
        for (Eigen::Index j = 0; j < p.values.cols(); ++j)
            if (!std::isfinite(p.values(i, j)))
                problems.push_back("non-finite value at (" + p.time_index[i] + ", " +
                                   p.series_names[j] + ")");
    if (!problems.empty()) {
        std::string msg = "panel validation failed:";
        for (const auto& s : problems) msg += "\n  - " + s;
        throw MissingDataError(msg);
    }
}

}  // namespace detail

/// Builds a validated panel from parts.
inline Panel make_panel(Eigen::MatrixXd values, std::vector<std::string> names,
                        std::vector<std::string> time_index) {
    Panel p;
    p.values = std::move(values);
    p.series_names = std::move(names);
    p.time_index = std::move(time_index);
    if (static_cast<Eigen::Index>(p.series_names.size()) != p.values.cols())
        throw DimensionError("series name count does not match column count");
    if (static_cast<Eigen::Index>(p.time_index.size()) != p.values.rows())
        throw DimensionError("time index length does not match row count");
    detail::validate_panel(p);
    return p;
}

/// Convenience constructor with generated names and an integer time index.
inline Panel make_panel(Eigen::MatrixXd values, const std::string& prefix = "N") {
    std::vector<std::string> names;
    std::vector<std::string> times;
    for (Eigen::Index j = 0; j < values.cols(); ++j)
        names.push_back(prefix + std::to_string(j + 1));
    for (Eigen::Index t = 0; t < values.rows(); ++t)
        times.push_back(std::to_string(t + 1));
    return make_panel(std::move(values), std::move(names), std::move(times));
}

/// The first `t` rows as a panel (an expanding-window training slice).
inline Panel head_rows(const Panel& p, Eigen::Index t) {
    if (t < 1 || t > p.rows()) throw DimensionError("head_rows: row count out of range");
    Panel out;
    out.values = p.values.topRows(t);
    out.series_names = p.series_names;
    out.time_index.assign(p.time_index.begin(), p.time_index.begin() + t);
    return out;
}

/// Reads a CSV panel. Wide layout: header `time,<name>...`, one row per
/// time point. Long layout: header `time,series,value`. All validation
/// problems are collected before the error is raised; no imputation is done.
inline Panel read_panel(const std::filesystem::path& path, PanelLayout layout) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw MissingDataError("empty panel file: " + path.string());
    const auto header = split_csv_line(lines[0]);
    if (header.empty() || header[0] != "time")
        throw MissingDataError("panel header must start with 'time' in " + path.string());

    if (layout == PanelLayout::Wide) {
        std::vector<std::string> names(header.begin() + 1, header.end());
        const std::size_t m = names.size();
        Eigen::MatrixXd values(static_cast<Eigen::Index>(lines.size() - 1),
                               static_cast<Eigen::Index>(m));
        std::vector<std::string> times;
        std::vector<std::string> problems;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto fields = split_csv_line(lines[i]);
            if (fields.size() != m + 1) {
                problems.push_back("row " + std::to_string(i + 1) + " has " +
                                   std::to_string(fields.size()) + " fields, expected " +
                                   std::to_string(m + 1));
                continue;
            }
            times.push_back(fields[0]);
            for (std::size_t j = 0; j < m; ++j) {
                if (fields[j + 1].empty()) {
                    problems.push_back("missing cell (" + fields[0] + ", " + names[j] + ")");
                    values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) =
                        std::numeric_limits<double>::quiet_NaN();
                } else {
                    values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) =
                        parse_double(fields[j + 1], path.string() + ":" + std::to_string(i + 1));
                }
            }
        }
        if (!problems.empty()) {
            std::string msg = "invalid panel " + path.string() + ":";
            for (const auto& s : problems) msg += "\n  - " + s;
            throw MissingDataError(msg);
        }
        // Sort rows by time before validation.
        std::vector<std::size_t> order(times.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return detail::time_less(times[a], times[b]);
        });
        Eigen::MatrixXd sorted(values.rows(), values.cols());
        std::vector<std::string> sorted_times(times.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            sorted.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(order[i]));
            sorted_times[i] = times[order[i]];
        }
        return make_panel(std::move(sorted), std::move(names), std::move(sorted_times));
    }

    // Long layout: pivot to wide.
    if (header.size() != 3 || header[1] != "series" || header[2] != "value")
        throw MissingDataError("long panel header must be 'time,series,value' in " + path.string());
    std::map<std::string, std::size_t, decltype(&detail::time_less)> time_slot(&detail::time_less);
    std::map<std::string, std::size_t> series_slot;
    std::vector<std::string> series_order;
    struct Cell { std::string time, series, raw; std::size_t line; };
    std::vector<Cell> cells;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_csv_line(lines[i]);
        if (fields.size() != 3)
            throw MissingDataError("row " + std::to_string(i + 1) + " of " + path.string() +
                                   " must have 3 fields");
        cells.push_back({fields[0], fields[1], fields[2], i + 1});
        time_slot.emplace(fields[0], 0);
        if (series_slot.emplace(fields[1], 0).second) series_order.push_back(fields[1]);
    }
    std::size_t k = 0;
    for (auto& [key, slot] : time_slot) slot = k++;
    for (std::size_t j = 0; j < series_order.size(); ++j) series_slot[series_order[j]] = j;

    const Eigen::Index T = static_cast<Eigen::Index>(time_slot.size());
    const Eigen::Index m = static_cast<Eigen::Index>(series_order.size());
    Eigen::MatrixXd values = Eigen::MatrixXd::Constant(T, m, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> problems;
    for (const auto& c : cells) {
        const Eigen::Index t = static_cast<Eigen::Index>(time_slot[c.time]);
        const Eigen::Index j = static_cast<Eigen::Index>(series_slot[c.series]);
        if (!std::isnan(values(t, j))) {
            throw DuplicateCellError("duplicate cell (" + c.time + ", " + c.series + ") at line " +
                                     std::to_string(c.line) + " of " + path.string());
        }
        values(t, j) = parse_double(c.raw, path.string() + ":" + std::to_string(c.line));
    }
    for (const auto& [time, t] : time_slot)
        for (const auto& [series, j] : series_slot)
            if (std::isnan(values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j))))
                problems.push_back("missing cell (" + time + ", " + series + ")");
    if (!problems.empty()) {
        std::string msg = "incomplete long panel " + path.string() + ":";
        for (const auto& s : problems) msg += "\n  - " + s;
        throw MissingDataError(msg);
    }
    std::vector<std::string> times;
    for (const auto& [key, slot] : time_slot) times.push_back(key);
    return make_panel(std::move(values), std::move(series_order), std::move(times));
}

/// Writes a panel as wide CSV at round-trip precision.
inline void write_panel(const std::filesystem::path& path, const Panel& p) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    out << "time";
    for (const auto& name : p.series_names) out << ',' << name;
    out << '\n';
    for (Eigen::Index t = 0; t < p.rows(); ++t) {
        out << p.time_index[t];
        for (Eigen::Index j = 0; j < p.cols(); ++j) out << ',' << format_double(p.values(t, j));
        out << '\n';
    }
}

/// Rescales every series to mean 0 and variance 1 (divisor T-1), recording
/// the applied {mean, sd} so the transform can be undone.
inline Panel standardize(const Panel& p) {
    if (p.rows() < 2) throw InsufficientDataError("standardize needs at least 2 rows");
    Panel out = p;
    out.standardization.clear();
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double mean = p.values.col(j).mean();
        const double ss = (p.values.col(j).array() - mean).square().sum();
        const double sd = std::sqrt(ss / static_cast<double>(p.rows() - 1));
        if (sd <= 0.0)
            throw DegenerateSeriesError("series '" + p.series_names[j] + "' has zero variance");
        out.values.col(j) = (p.values.col(j).array() - mean) / sd;
        out.standardization.emplace_back(mean, sd);
    }
    return out;
}

}  // namespace flap
