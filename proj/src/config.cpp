#include "dfest/config.hpp"

#include "dfest/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dfest {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> tokens(const std::string& text) {
    std::string copy = text;
    std::replace(copy.begin(), copy.end(), ',', ' ');
    std::istringstream in(copy);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

double number(const std::string& token, const std::string& context) {
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used == token.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError("config", "cannot parse number '" + token + "' in " + context);
}

Config from_ptree(const pt::ptree& tree) {
    Config cfg;
    for (const auto& [name, child] : tree) {
        if (child.empty()) {
            cfg.set("", name, trim(child.data()));
            continue;
        }
        for (const auto& [key, value] : child) cfg.set(name, key, trim(value.data()));
    }
    return cfg;
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config", "cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_string(buffer.str());
}

Config Config::from_string(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        std::ostringstream os;
        os << "malformed config (line " << e.line() << "): " << e.message();
        throw ValidationError("config", os.str());
    }
    return from_ptree(tree);
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key).has_value(); }

bool Config::has_section(const std::string& section) const { return sections_.count(section) > 0; }

std::vector<std::string> Config::keys(const std::string& section) const {
    std::vector<std::string> out;
    const auto it = sections_.find(section);
    if (it != sections_.end())
        for (const auto& [k, v] : it->second) out.push_back(k);
    return out;
}

std::optional<std::string> Config::find(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
    return find(section, key).value_or(fallback);
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
    const auto v = find(section, key);
    return v ? number(*v, "[" + section + "] " + key) : fallback;
}

long Config::get_int(const std::string& section, const std::string& key, long fallback) const {
    const auto v = find(section, key);
    if (!v) return fallback;
    const double d = number(*v, "[" + section + "] " + key);
    if (d != static_cast<double>(static_cast<long>(d)))
        throw ValidationError("config", "[" + section + "] " + key + " must be an integer");
    return static_cast<long>(d);
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const auto v = find(section, key);
    if (!v) return fallback;
    std::string s = *v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw ValidationError("config", "[" + section + "] " + key + " must be a boolean");
}

std::vector<double> Config::get_list(const std::string& section, const std::string& key) const {
    const auto v = find(section, key);
    if (!v) throw ValidationError("config", "missing [" + section + "] " + key);
    return parse_list(*v);
}

Matrix Config::get_matrix(const std::string& section, const std::string& key) const {
    const auto v = find(section, key);
    if (!v) throw ValidationError("config", "missing [" + section + "] " + key);
    return parse_matrix(*v);
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& t : tokens(text)) out.push_back(number(t, "list"));
    return out;
}

Matrix parse_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    for (std::string row; std::getline(in, row, ';');) {
        if (trim(row).empty()) continue;
        rows.push_back(parse_list(row));
    }
    if (rows.empty()) throw ValidationError("config", "empty matrix");
    const std::size_t cols = rows.front().size();
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) throw ValidationError("config", "matrix rows have different lengths");
        for (std::size_t j = 0; j < cols; ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return M;
}

std::vector<Complex> parse_complex_list(const std::string& text) {
    std::vector<Complex> out;
    for (const auto& t : tokens(text)) {
        if (t.back() != 'i' && t.back() != 'j') {
            out.emplace_back(number(t, "complex list"), 0.0);
            continue;
        }
        const std::string body = t.substr(0, t.size() - 1);
        std::size_t split = std::string::npos;
        for (std::size_t i = body.size(); i-- > 1;) {
            if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
                split = i;
                break;
            }
        }
        if (split == std::string::npos) {
            const std::string imag = body.empty() || body == "+" || body == "-" ? body + "1" : body;
            out.emplace_back(0.0, number(imag, "complex list"));
        } else {
            std::string imag = body.substr(split);
            if (imag == "+" || imag == "-") imag += "1";
            out.emplace_back(number(body.substr(0, split), "complex list"), number(imag, "complex list"));
        }
    }
    return out;
}

std::string format_complex_list(const std::vector<Complex>& values) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) os << ' ';
        os << values[i].real();
        if (values[i].imag() != 0.0) os << (values[i].imag() < 0 ? "-" : "+") << std::abs(values[i].imag()) << 'i';
    }
    return os.str();
}

}  // namespace dfest
