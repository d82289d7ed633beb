#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/baselines.hpp"
#include "gridcast/convlstm.hpp"
#include "gridcast/cube.hpp"

// Line-oriented run configuration: `key = value` pairs, `#` comments,
// repeatable keys for lists (regime, roadless). See the README for the
// documented schema.
namespace gridcast {

inline constexpr const char* kToolVersion = "gridcast 0.1.0";

class Config {
 public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    void set(const std::string& key, const std::string& value);  // override
    bool has(const std::string& key) const;

    std::string get(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_all(const std::string& key) const;

    // FNV-1a over the sorted canonical key=value lines
    std::string hash() const;

 private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct RunConfig {
    GridSpec grid;  // road lengths filled for synth; ingest overrides from CSV
    int weeks = 209;
    int test_weeks = 52;
    double validation_fraction = 0.1;
    SeverityWeights weights;
    convlstm::TrainConfig train;
    int window_width = 10, window_height = 10;
    int stride_x = 5, stride_y = 5;
    double weight_eps = 1e-6;
    double mse_filter_multiple = 0.0;
    bool persistence_fallback = true;
    int lr_lookback = 8;
    double lr_ridge = 1e-6;
    baselines::ArimaOrder arima_order;
    std::vector<double> eval_radii;
    int cluster_count = 3;
    std::uint64_t seed = 42;
    std::vector<Regime> regimes;
    std::string kernels = "auto";
    std::string config_hash;

    static RunConfig from(const Config& cfg);
    SplitIndex split() const {
        return chronological_split(weeks, test_weeks, validation_fraction);
    }
};

// run_manifest.json written into every output directory: config hash, seed,
// tool version. Re-running with the same manifest reproduces the outputs.
void write_run_manifest(const std::string& dir, const RunConfig& cfg,
                        const std::string& command);
std::string read_manifest_hash(const std::string& dir);  // "" when absent

}  // namespace gridcast
