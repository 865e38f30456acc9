#pragma once

#include <map>
#include <string>
#include <vector>

namespace mars {

// Plain-text `key = value` configuration with '#' comments. Keys are
// namespaced (train.eta, recon.beta, ...); unknown keys are rejected at
// parse time. Lists are comma-separated.
class RunConfig {
public:
    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_string(const std::string& text);
    static const std::vector<std::string>& known_keys();

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;

    void set(const std::string& key, const std::string& value);

    // Canonical `key = value` lines, sorted by key; reparsing yields an
    // equal config.
    std::string serialize() const;

    bool operator==(const RunConfig& other) const { return kv_ == other.kv_; }

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

} // namespace mars
