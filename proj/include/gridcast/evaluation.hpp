#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcast/cube.hpp"

// Forecast scoring (MSE/RMSE overall and per cluster), Ripley cross-K
// spatial correspondence, and DTW k-medoids risk-zone clustering.
namespace gridcast::evaluation {

// Per-cell forecast values for a span of weeks; entries for null cells or
// uncovered weeks hold the null marker.
struct ForecastGrid {
    int width = 0, height = 0;
    int week_begin = 0, week_end = 0;
    std::vector<double> values;  // cell-major: cells() x (week_end-week_begin)

    int cells() const { return width * height; }
    int weeks() const { return week_end - week_begin; }
    double& at(int c, int week) {
        return values[static_cast<std::size_t>(c) * weeks() + (week - week_begin)];
    }
    double at(int c, int week) const {
        return values[static_cast<std::size_t>(c) * weeks() + (week - week_begin)];
    }
};

void save_forecast_csv(const std::string& path, const ForecastGrid& grid);
ForecastGrid load_forecast_csv(const std::string& path, int width, int height);

// Per-road-cell labels in [0, k); null cells carry -1.
struct ClusterLabels {
    int k = 0;
    std::vector<int> labels;
};

void save_labels_csv(const std::string& path, const ClusterLabels& labels,
                     const GridSpec& grid);
ClusterLabels load_labels_csv(const std::string& path, const GridSpec& grid);

struct MsePair {
    double mse = 0.0;
    double rmse = 0.0;
    long count = 0;
};

struct EvalReport {
    MsePair all_regions;
    std::map<int, MsePair> per_cluster;
    nlohmann::json metadata;

    nlohmann::json to_json() const;
};

// MSE/RMSE over (road cell, week) pairs in the forecast span; nulls on
// either side are excluded. Throws when no valid pair exists.
EvalReport score(const ForecastGrid& forecast, const SpaceTimeCube& truth,
                 const ClusterLabels* labels = nullptr);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// The q highest-valued road cells of one week's risk surface, as cell
// centroids in miles; ties broken by (y, x) order.
std::vector<Point> hotspot_points(const std::vector<double>& risk,
                                  const GridSpec& grid, int q);

// Ripley cross-K, brute force, no edge correction:
// K(r) = area / (n_a * n_b) * #{(p,q) : dist <= r}
std::vector<double> cross_k(const std::vector<Point>& points_a,
                            const std::vector<Point>& points_b, double area,
                            const std::vector<double>& radii);

struct CrossKCurve {
    std::vector<double> radii;
    std::vector<double> k;  // averaged over contributing weeks
    int weeks_used = 0;
};

// Per test week: actual points are road cells with positive truth; predicted
// points are the same count of top forecast cells. Weeks without positive
// truth are skipped; curves are averaged over the rest.
CrossKCurve crossk_evaluate(const ForecastGrid& forecast,
                            const SpaceTimeCube& truth,
                            const std::vector<double>& radii);

void save_crossk_csv(const std::string& path, const CrossKCurve& curve);

// Dynamic time warping with absolute-difference local cost, full alignment.
double dtw(const std::vector<double>& a, const std::vector<double>& b);

// k-medoids (PAM) over road-cell EPDO training series under DTW. Seeded
// initialization, at most `max_iters` swap rounds.
ClusterLabels cluster_dtw(const SpaceTimeCube& cube, const SplitIndex& split,
                          int k, std::uint64_t seed, int max_iters = 50);

}  // namespace gridcast::evaluation
