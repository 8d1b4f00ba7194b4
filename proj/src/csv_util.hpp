#pragma once

// Small CSV helpers shared by the serializers.

#include "dfest/error.hpp"
#include "dfest/types.hpp"

#include <charconv>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dfest::csv {

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        std::string_view cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
        out.emplace_back(cell);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double to_double(const std::string& cell, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("csv", std::string("cannot parse number '") + cell + "' in " + what);
    }
}

inline long to_long(const std::string& cell, const char* what) {
    long v = 0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ValidationError("csv", std::string("cannot parse integer '") + cell + "' in " + what);
    return v;
}

/// Reads the next non-empty line; false at end of stream.
inline bool next_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return true;
    }
    return false;
}

inline void set_precision(std::ostream& out) { out << std::setprecision(17); }

template <typename Derived>
void write_row(std::ostream& out, const Eigen::DenseBase<Derived>& row) {
    const Eigen::Index n = row.size();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j > 0) out << ',';
        out << (row.rows() == 1 ? row(0, j) : row(j, 0));
    }
}

}  // namespace dfest::csv
