#include "gridcast/config.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gridcast {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": empty key");
        cfg.entries_.emplace_back(key, value);
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = value;
            return;
        }
    entries_.emplace_back(key, value);
}

bool Config::has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return true;
    return false;
}

std::string Config::get(const std::string& key,
                        const std::string& fallback) const {
    // last occurrence wins for scalar keys
    std::string out = fallback;
    for (const auto& [k, v] : entries_)
        if (k == key) out = v;
    return out;
}

int Config::get_int(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    return std::stoi(get(key, ""));
}

double Config::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return std::stod(get(key, ""));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string v = get(key, "");
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config key " + key + ": expected boolean");
}

std::vector<std::string> Config::get_all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (k == key) out.push_back(v);
    return out;
}

std::string Config::hash() const {
    std::vector<std::string> lines;
    for (const auto& [k, v] : entries_) lines.push_back(k + "=" + v);
    std::sort(lines.begin(), lines.end());
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& line : lines) {
        for (char c : line) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        h ^= '\n';
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(std::stod(field));
    return out;
}

}  // namespace

RunConfig RunConfig::from(const Config& cfg) {
    RunConfig rc;
    rc.grid.width = cfg.get_int("grid.width", 32);
    rc.grid.height = cfg.get_int("grid.height", 32);
    rc.grid.cell_size_miles = cfg.get_double("grid.cell_size_miles", 5.0);
    rc.weeks = cfg.get_int("cube.weeks", 209);
    rc.test_weeks = cfg.get_int("split.test_weeks", 52);
    rc.validation_fraction = cfg.get_double("split.validation_fraction", 0.1);
    rc.weights.k = cfg.get_double("weights.K", 12.0);
    rc.weights.a = cfg.get_double("weights.A", 12.0);
    rc.weights.b = cfg.get_double("weights.B", 3.0);
    rc.weights.c = cfg.get_double("weights.C", 3.0);
    rc.weights.o = cfg.get_double("weights.O", 1.0);
    rc.train.lookback = cfg.get_int("train.lookback", 8);
    rc.train.hidden_channels = cfg.get_int("train.hidden_channels", 8);
    rc.train.kernel_size = cfg.get_int("train.kernel_size", 3);
    rc.train.epochs = cfg.get_int("train.epochs", 30);
    rc.train.learning_rate = cfg.get_double("train.learning_rate", 1e-2);
    rc.train.beta1 = cfg.get_double("train.beta1", 0.9);
    rc.train.beta2 = cfg.get_double("train.beta2", 0.999);
    rc.train.adam_eps = cfg.get_double("train.adam_eps", 1e-8);
    rc.window_width = cfg.get_int("ensemble.window_width", 10);
    rc.window_height = cfg.get_int("ensemble.window_height", 10);
    rc.stride_x = cfg.get_int("ensemble.stride_x", 5);
    rc.stride_y = cfg.get_int("ensemble.stride_y", 5);
    rc.weight_eps = cfg.get_double("ensemble.weight_eps", 1e-6);
    rc.mse_filter_multiple = cfg.get_double("ensemble.mse_filter_multiple", 0.0);
    rc.persistence_fallback = cfg.get_bool("ensemble.persistence_fallback", true);
    rc.lr_lookback = cfg.get_int("baseline.lr_lookback", 8);
    rc.lr_ridge = cfg.get_double("baseline.lr_ridge", 1e-6);
    rc.arima_order.p = cfg.get_int("baseline.arima_p", 1);
    rc.arima_order.d = cfg.get_int("baseline.arima_d", 0);
    rc.arima_order.q = cfg.get_int("baseline.arima_q", 1);
    rc.eval_radii = parse_double_list(
        cfg.get("eval.radii", "0,5,10,15,20,25,30,35,40,45,50"));
    rc.cluster_count = cfg.get_int("eval.clusters", 3);
    rc.seed = static_cast<std::uint64_t>(
        std::stoull(cfg.get("seed", "42")));
    rc.train.seed = rc.seed;
    rc.kernels = cfg.get("kernels", "auto");

    double road_length = cfg.get_double("synth.road_length", 1.0);
    rc.grid.road_length_miles.assign(rc.grid.cells(), road_length);
    for (const std::string& spec : cfg.get_all("roadless")) {
        auto v = parse_double_list(spec);
        if (v.size() != 4)
            throw std::runtime_error("roadless expects x0,y0,width,height");
        for (int y = (int)v[1]; y < (int)(v[1] + v[3]); ++y)
            for (int x = (int)v[0]; x < (int)(v[0] + v[2]); ++x) {
                if (x < 0 || x >= rc.grid.width || y < 0 || y >= rc.grid.height)
                    throw std::runtime_error("roadless region exceeds grid");
                rc.grid.road_length_miles[rc.grid.index(x, y)] = 0.0;
            }
    }
    for (const std::string& spec : cfg.get_all("regime")) {
        auto v = parse_double_list(spec);
        if (v.size() != 8)
            throw std::runtime_error(
                "regime expects x0,y0,width,height,level,slope,amplitude,noise");
        rc.regimes.push_back({(int)v[0], (int)v[1], (int)v[2], (int)v[3], v[4],
                              v[5], v[6], v[7]});
    }
    rc.config_hash = cfg.hash();
    return rc;
}

void write_run_manifest(const std::string& dir, const RunConfig& cfg,
                        const std::string& command) {
    nlohmann::json manifest = {{"config_hash", cfg.config_hash},
                               {"seed", cfg.seed},
                               {"tool_version", kToolVersion},
                               {"command", command}};
    std::ofstream out(std::filesystem::path(dir) / "run_manifest.json");
    if (!out) throw std::runtime_error("cannot write run manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

std::string read_manifest_hash(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "run_manifest.json");
    if (!in) return "";
    nlohmann::json manifest = nlohmann::json::parse(in, nullptr, false);
    if (manifest.is_discarded()) return "";
    return manifest.value("config_hash", "");
}

}  // namespace gridcast
