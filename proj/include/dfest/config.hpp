#pragma once

#include "dfest/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dfest {

/// Plain-text configuration with `[section]` headers and `key = value` lines.
/// Lines starting with `#` or `;` are comments. Matrices are written row by
/// row with rows separated by `;` and entries by spaces or commas:
///
///     A = 0.35 -0.5 0.2; ...
class Config {
public:
    Config() = default;

    static Config from_file(const std::filesystem::path& path);
    static Config from_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    bool has_section(const std::string& section) const;
    std::vector<std::string> keys(const std::string& section) const;

    std::optional<std::string> find(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_list(const std::string& section, const std::string& key) const;
    Matrix get_matrix(const std::string& section, const std::string& key) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

std::vector<double> parse_list(const std::string& text);
Matrix parse_matrix(const std::string& text);

/// Real or complex numbers separated by commas/spaces; complex values as
/// `0.3+0.2i`.
std::vector<Complex> parse_complex_list(const std::string& text);
std::string format_complex_list(const std::vector<Complex>& values);

}  // namespace dfest
