#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

// Grid geometry and the space-time cube: EPDO target matrix A (n cells x T
// weeks) plus static per-cell feature matrices. Cells without roads carry NaN
// as the null marker and are excluded from losses and metrics everywhere.
namespace gridcast {

constexpr double kNull = std::numeric_limits<double>::quiet_NaN();

inline bool is_null(double v) { return std::isnan(v); }

struct GridSpec {
    int width = 0;
    int height = 0;
    double cell_size_miles = 0.0;
    std::vector<double> road_length_miles;  // n entries, row-major (y*width+x)

    int cells() const { return width * height; }
    int index(int x, int y) const { return y * width + x; }
    bool has_road(int c) const { return road_length_miles[c] > 0.0; }
    std::vector<bool> road_mask() const;
    void validate() const;
};

enum class Severity { K, A, B, C, O };

Severity parse_severity(const std::string& code);
char severity_code(Severity s);

struct CrashRecord {
    int week_index = 0;
    int cell_x = 0;
    int cell_y = 0;
    Severity severity = Severity::O;
    bool inclement_weather = false;
};

// EPDO weights per severity class; O is the unit and must equal 1.
struct SeverityWeights {
    double k = 12.0, a = 12.0, b = 3.0, c = 3.0, o = 1.0;

    double weight(Severity s) const;
    void validate() const;
};

struct SpaceTimeCube {
    GridSpec grid;
    int weeks = 0;                           // T
    std::vector<double> target;              // cells() x weeks, cell-major
    std::vector<std::string> feature_names;  // m names
    std::vector<double> features;            // m x cells(), feature-major
    std::vector<std::string> week_labels;    // optional, empty or weeks entries

    double& at(int c, int t) { return target[c * weeks + t]; }
    double at(int c, int t) const { return target[c * weeks + t]; }
    const double* series(int c) const { return target.data() + c * weeks; }
    double feature(int k, int c) const { return features[k * grid.cells() + c]; }
    int feature_count() const { return static_cast<int>(feature_names.size()); }
};

struct SplitIndex {
    // contiguous chronological ranges [begin, end)
    int train_begin = 0, train_end = 0;
    int validation_begin = 0, validation_end = 0;
    int test_begin = 0, test_end = 0;

    int train_weeks() const { return train_end - train_begin; }
    int validation_weeks() const { return validation_end - validation_begin; }
    int test_weeks() const { return test_end - test_begin; }
};

// Aggregates severity-weighted crash counts per cell/week, normalized by road
// length. Only inclement-weather records contribute; the rest are dropped.
// Records referencing out-of-range cells or weeks are rejected with their
// index in the message.
SpaceTimeCube build_cube(const std::vector<CrashRecord>& records,
                         const GridSpec& grid, const SeverityWeights& weights,
                         int weeks);

// Last `test_weeks` slots are test; the last floor(vf * pre-test) slots
// before them are validation; the rest train.
SplitIndex chronological_split(int weeks, int test_weeks,
                               double validation_fraction);

// Synthetic generator: rectangular regimes with level + trend + annual
// seasonality + Gaussian noise, clipped at zero.
struct Regime {
    int x0 = 0, y0 = 0, width = 0, height = 0;
    double level = 0.0;
    double slope = 0.0;
    double amplitude = 0.0;
    double noise = 0.0;
};

SpaceTimeCube synth_cube(const GridSpec& grid, int weeks,
                         const std::vector<Regime>& regimes,
                         std::uint64_t seed);

// CSV header: week_index,cell_x,cell_y,severity,inclement_weather
std::vector<CrashRecord> load_crash_csv(const std::string& path);

// CSV header: cell_x,cell_y,feature_name,value. "road_length" populates the
// grid's road lengths; other names become static feature matrices.
struct FeatureTable {
    std::vector<std::string> names;
    std::vector<double> values;  // feature-major, n per feature
    std::vector<double> road_length;
};
FeatureTable load_features_csv(const std::string& path, const GridSpec& grid);

// Cube archive: a directory with manifest.json plus flat little-endian
// binary matrices. Round-trips bit-exactly, nulls included.
void save_cube(const std::string& dir, const SpaceTimeCube& cube);
SpaceTimeCube load_cube(const std::string& dir);

}  // namespace gridcast
