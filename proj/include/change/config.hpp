#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "change/common.hpp"

namespace change {

// Flat `key=value` configuration; '#' starts a comment, blank lines ignored.
// CLI flags override file values via set().
class KvConfig {
public:
    static KvConfig parse(std::istream& in);
    static KvConfig parse_file(const std::string& path);

    void set(const std::string& key, std::string value) { kv_[key] = std::move(value); }
    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Sorted `key=value` lines; basis for the config hash.
    std::string canonical() const;
    std::uint64_t hash() const;  // FNV-1a of canonical()

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace change
