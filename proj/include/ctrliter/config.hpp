#pragma once

#include "ctrliter/errors.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ctrliter {

/// Config problem with the offending line (0 when the key is missing).
class ConfigError : public InputError {
public:
    ConfigError(const std::string& source, int line, const std::string& key, const std::string& message);

    int line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    int line_;
    std::string key_;
};

/// Flat `key = value` file; `#` starts a comment, blank lines are ignored,
/// keys are unique.
class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "<config>");
    static Config load(const std::string& path);

    const std::string& source() const { return source_; }
    /// Directory of the config file (for relative paths inside it).
    const std::string& base_dir() const { return base_dir_; }

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma or whitespace separated numbers.
    std::vector<double> get_list(const std::string& key) const;

    /// Throws ConfigError naming the first key not in `allowed`.
    void check_keys(const std::set<std::string>& allowed) const;

    int line_of(const std::string& key) const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    const Entry& entry(const std::string& key) const;
    [[noreturn]] void fail(const std::string& key, const std::string& message) const;

    std::string source_;
    std::string base_dir_;
    std::map<std::string, Entry> entries_;
};

}  // namespace ctrliter
