#include "ctrliter/config.hpp"

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>

namespace ctrliter {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string describe(const std::string& source, int line, const std::string& key, const std::string& message) {
    std::ostringstream out;
    out << source;
    if (line > 0) out << ":" << line;
    out << ": ";
    if (!key.empty()) out << "key '" << key << "': ";
    out << message;
    return out.str();
}

std::optional<double> parse_double(const std::string& s) {
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(d)) return std::nullopt;
    return d;
}

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& key, const std::string& message)
    : InputError(describe(source, line, key, message)), line_(line), key_(key) {}

Config Config::parse(std::istream& in, const std::string& source) {
    Config cfg;
    cfg.source_ = source;
    cfg.base_dir_ = ".";
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source, line_no, "", "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source, line_no, "", "empty key");
        for (char c : key) {
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) {
                throw ConfigError(source, line_no, key, "keys may contain letters, digits, '_' and '.' only");
            }
        }
        if (value.empty()) throw ConfigError(source, line_no, key, "empty value");
        if (cfg.entries_.count(key)) {
            throw ConfigError(source, line_no, key,
                              "duplicate key (first set on line " + std::to_string(cfg.entries_[key].line) + ")");
        }
        cfg.entries_[key] = Entry{value, line_no};
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "", "cannot open config file");
    Config cfg = parse(in, path);
    const auto parent = std::filesystem::path(path).parent_path();
    cfg.base_dir_ = parent.empty() ? "." : parent.string();
    return cfg;
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) {
    auto& e = entries_[key];
    e.value = value;
}

int Config::line_of(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
}

const Config::Entry& Config::entry(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_, 0, key, "required key is missing");
    return it->second;
}

void Config::fail(const std::string& key, const std::string& message) const {
    throw ConfigError(source_, line_of(key), key, message);
}

std::string Config::get_string(const std::string& key) const { return entry(key).value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = entry(key).value;
    const auto d = parse_double(v);
    if (!d) fail(key, "expected a finite number, got '" + v + "'");
    return *d;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long Config::get_int(const std::string& key) const {
    const std::string& v = entry(key).value;
    long n = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail(key, "expected an integer, got '" + v + "'");
    return n;
}

long Config::get_int(const std::string& key, long fallback) const { return has(key) ? get_int(key) : fallback; }

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = entry(key).value;
    std::uint64_t n = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        fail(key, "expected a non-negative integer, got '" + v + "'");
    }
    return n;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = entry(key).value;
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    fail(key, "expected true or false, got '" + v + "'");
}

std::vector<double> Config::get_list(const std::string& key) const {
    std::string v = entry(key).value;
    for (char& c : v)
        if (c == ',') c = ' ';
    std::istringstream in(v);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        const auto d = parse_double(tok);
        if (!d) fail(key, "not a finite number: '" + tok + "'");
        out.push_back(*d);
    }
    if (out.empty()) fail(key, "empty list");
    return out;
}

void Config::check_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, e] : entries_) {
        if (!allowed.count(key)) throw ConfigError(source_, e.line, key, "unknown key");
    }
}

}  // namespace ctrliter
