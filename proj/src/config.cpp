#include "mars/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mars/errors.hpp"

namespace mars {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw DataError("config key '" + key + "': not a number: '" + value + "'");
    }
    if (pos != value.size())
        throw DataError("config key '" + key + "': trailing characters in '" + value + "'");
    return v;
}

} // namespace

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "seed",
        "geom.image_h",
        "geom.image_w",
        "geom.pixel_size",
        "geom.n_views",
        "geom.n_bins",
        "geom.bin_spacing",
        "patch.height",
        "patch.width",
        "patch.stride_x",
        "patch.stride_y",
        "sim.I0",
        "sim.sigma",
        "sim.noiseless",
        "sim.mu_water",
        "train.eta",
        "train.iters",
        "recon.beta",
        "recon.gamma",
        "recon.outer_iters",
        "recon.inner_iters",
        "recon.alpha",
        "recon.init",
        "ep.beta",
        "ep.delta",
        "ep.iters",
        "metrics.roi_radius_frac",
        "metrics.ssim_window",
        "metrics.ssim_sigma",
        "metrics.dynamic_range",
        "residuals.normalize",
        "residuals.sweeps",
    };
    return keys;
}

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    const auto& keys = known_keys();
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw DataError("config line " + std::to_string(lineno) + ": empty key");
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw DataError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                            "'");
        if (cfg.kv_.count(key))
            throw DataError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                            "'");
        cfg.kv_[key] = value;
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_string(buf.str());
}

bool RunConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw DataError("missing required config key '" + key + "'");
    return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key) const {
    return parse_double(key, get_string(key));
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : parse_double(key, it->second);
}

long RunConfig::get_int(const std::string& key) const {
    const double v = get_double(key);
    const long r = static_cast<long>(v);
    if (static_cast<double>(r) != v) throw DataError("config key '" + key + "': not an integer");
    return r;
}

long RunConfig::get_int(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw DataError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    const std::string raw = get_string(key);
    std::vector<double> out;
    std::string item;
    std::istringstream is(raw);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) throw DataError("config key '" + key + "': empty list element");
        out.push_back(parse_double(key, item));
    }
    if (out.empty()) throw DataError("config key '" + key + "': empty list");
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw DataError("unknown config key '" + key + "'");
    kv_[key] = value;
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
    return os.str();
}

} // namespace mars
