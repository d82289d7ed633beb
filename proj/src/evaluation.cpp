#include "gridcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gridcast/rng.hpp"

namespace gridcast::evaluation {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_forecast_csv(const std::string& path, const ForecastGrid& grid) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "cell_x,cell_y,week_index,prediction\n";
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x) {
            int c = y * grid.width + x;
            for (int t = grid.week_begin; t < grid.week_end; ++t) {
                double v = grid.at(c, t);
                if (is_null(v)) continue;
                out << x << ',' << y << ',' << t << ',' << fmt_double(v) << '\n';
            }
        }
}

ForecastGrid load_forecast_csv(const std::string& path, int width, int height) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "cell_x,cell_y,week_index,prediction")
        throw std::runtime_error(path + ": bad forecast header");
    struct Row { int x, y, t; double v; };
    std::vector<Row> rows;
    int wmin = 0, wmax = -1;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Row r;
        char trailing;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%lf%c", &r.x, &r.y, &r.t, &r.v,
                        &trailing) != 4)
            throw std::runtime_error(path + ": malformed line " +
                                     std::to_string(line_no));
        if (r.x < 0 || r.x >= width || r.y < 0 || r.y >= height || r.t < 0)
            throw std::runtime_error(path + ": out-of-range line " +
                                     std::to_string(line_no));
        if (wmax < 0) { wmin = wmax = r.t; }
        wmin = std::min(wmin, r.t);
        wmax = std::max(wmax, r.t);
        rows.push_back(r);
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty forecast");
    ForecastGrid grid;
    grid.width = width;
    grid.height = height;
    grid.week_begin = wmin;
    grid.week_end = wmax + 1;
    grid.values.assign(static_cast<std::size_t>(grid.cells()) * grid.weeks(),
                       kNull);
    for (const Row& r : rows) grid.at(r.y * width + r.x, r.t) = r.v;
    return grid;
}

void save_labels_csv(const std::string& path, const ClusterLabels& labels,
                     const GridSpec& grid) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "cell_x,cell_y,label\n";
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x) {
            int c = grid.index(x, y);
            if (labels.labels[c] < 0) continue;
            out << x << ',' << y << ',' << labels.labels[c] << '\n';
        }
}

ClusterLabels load_labels_csv(const std::string& path, const GridSpec& grid) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "cell_x,cell_y,label")
        throw std::runtime_error(path + ": bad labels header");
    ClusterLabels labels;
    labels.labels.assign(grid.cells(), -1);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        int x, y, l;
        if (std::sscanf(line.c_str(), "%d,%d,%d", &x, &y, &l) != 3)
            throw std::runtime_error(path + ": malformed line " +
                                     std::to_string(line_no));
        if (x < 0 || x >= grid.width || y < 0 || y >= grid.height || l < 0)
            throw std::runtime_error(path + ": out-of-range line " +
                                     std::to_string(line_no));
        labels.labels[grid.index(x, y)] = l;
        labels.k = std::max(labels.k, l + 1);
    }
    return labels;
}

json EvalReport::to_json() const {
    auto pair_json = [](const MsePair& p) {
        return json{{"mse", p.mse}, {"rmse", p.rmse}, {"count", p.count}};
    };
    json clusters = json::object();
    for (const auto& [label, pair] : per_cluster)
        clusters[std::to_string(label)] = pair_json(pair);
    return json{{"all_regions", pair_json(all_regions)},
                {"per_cluster", clusters},
                {"metadata", metadata}};
}

EvalReport score(const ForecastGrid& forecast, const SpaceTimeCube& truth,
                 const ClusterLabels* labels) {
    if (forecast.width != truth.grid.width ||
        forecast.height != truth.grid.height)
        throw std::invalid_argument("score: forecast and truth grids differ");
    int begin = std::max(0, forecast.week_begin);
    int end = std::min(truth.weeks, forecast.week_end);

    struct Acc { double sum = 0.0; long count = 0; };
    Acc all;
    std::map<int, Acc> clusters;
    for (int c = 0; c < truth.grid.cells(); ++c) {
        if (!truth.grid.has_road(c)) continue;
        for (int t = begin; t < end; ++t) {
            double f = forecast.at(c, t);
            double y = truth.at(c, t);
            if (is_null(f) || is_null(y)) continue;
            double e = f - y;
            all.sum += e * e;
            ++all.count;
            if (labels && labels->labels[c] >= 0) {
                Acc& a = clusters[labels->labels[c]];
                a.sum += e * e;
                ++a.count;
            }
        }
    }
    if (all.count == 0)
        throw std::runtime_error("score: no valid forecast/truth pairs");

    EvalReport report;
    auto finish = [](const Acc& a) {
        MsePair p;
        p.count = a.count;
        p.mse = a.sum / a.count;
        p.rmse = std::sqrt(p.mse);
        return p;
    };
    report.all_regions = finish(all);
    for (const auto& [label, acc] : clusters)
        report.per_cluster[label] = finish(acc);
    return report;
}

std::vector<Point> hotspot_points(const std::vector<double>& risk,
                                  const GridSpec& grid, int q) {
    if (q == 0) return {};
    struct Cand { double value; int y, x; };
    std::vector<Cand> cands;
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x) {
            int c = grid.index(x, y);
            if (!grid.has_road(c) || is_null(risk[c])) continue;
            cands.push_back({risk[c], y, x});
        }
    if (q < 0 || q > static_cast<int>(cands.size()))
        throw std::invalid_argument("hotspot_points: q exceeds road cells");
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    std::vector<Point> points;
    points.reserve(q);
    double cs = grid.cell_size_miles;
    for (int i = 0; i < q; ++i)
        points.push_back({(cands[i].x + 0.5) * cs, (cands[i].y + 0.5) * cs});
    return points;
}

std::vector<double> cross_k(const std::vector<Point>& points_a,
                            const std::vector<Point>& points_b, double area,
                            const std::vector<double>& radii) {
    if (points_a.empty() || points_b.empty())
        throw std::invalid_argument("cross_k: empty point set");
    if (!std::is_sorted(radii.begin(), radii.end()))
        throw std::invalid_argument("cross_k: radii must be ascending");
    std::vector<double> counts(radii.size(), 0.0);
    for (const Point& p : points_a)
        for (const Point& q : points_b) {
            double dist = std::hypot(p.x - q.x, p.y - q.y);
            for (std::size_t i = 0; i < radii.size(); ++i)
                if (dist <= radii[i]) counts[i] += 1.0;
        }
    double norm = area / (static_cast<double>(points_a.size()) *
                          static_cast<double>(points_b.size()));
    for (double& c : counts) c *= norm;
    return counts;
}

CrossKCurve crossk_evaluate(const ForecastGrid& forecast,
                            const SpaceTimeCube& truth,
                            const std::vector<double>& radii) {
    const GridSpec& grid = truth.grid;
    double area = grid.width * grid.height * grid.cell_size_miles *
                  grid.cell_size_miles;
    int begin = std::max(0, forecast.week_begin);
    int end = std::min(truth.weeks, forecast.week_end);

    CrossKCurve curve;
    curve.radii = radii;
    curve.k.assign(radii.size(), 0.0);
    for (int t = begin; t < end; ++t) {
        std::vector<Point> actual;
        for (int y = 0; y < grid.height; ++y)
            for (int x = 0; x < grid.width; ++x) {
                int c = grid.index(x, y);
                double v = truth.at(c, t);
                if (!grid.has_road(c) || is_null(v) || v <= 0.0) continue;
                actual.push_back({(x + 0.5) * grid.cell_size_miles,
                                  (y + 0.5) * grid.cell_size_miles});
            }
        if (actual.empty()) continue;
        std::vector<double> risk(grid.cells());
        for (int c = 0; c < grid.cells(); ++c) risk[c] = forecast.at(c, t);
        auto predicted =
            hotspot_points(risk, grid, static_cast<int>(actual.size()));
        auto k = cross_k(predicted, actual, area, radii);
        for (std::size_t i = 0; i < k.size(); ++i) curve.k[i] += k[i];
        ++curve.weeks_used;
    }
    if (curve.weeks_used == 0)
        throw std::runtime_error("crossk_evaluate: no week with positive truth");
    for (double& v : curve.k) v /= curve.weeks_used;
    return curve;
}

void save_crossk_csv(const std::string& path, const CrossKCurve& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "r,K\n";
    for (std::size_t i = 0; i < curve.radii.size(); ++i)
        out << fmt_double(curve.radii[i]) << ',' << fmt_double(curve.k[i])
            << '\n';
}

double dtw(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("dtw: series must be non-empty");
    const std::size_t n = a.size(), m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), curr(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        curr[0] = inf;
        const double ai = a[i - 1];
        for (std::size_t j = 1; j <= m; ++j) {
            double best = std::min({prev[j], curr[j - 1], prev[j - 1]});
            curr[j] = std::abs(ai - b[j - 1]) + best;
        }
        std::swap(prev, curr);
    }
    return prev[m];
}

ClusterLabels cluster_dtw(const SpaceTimeCube& cube, const SplitIndex& split,
                          int k, std::uint64_t seed, int max_iters) {
    std::vector<int> road_cells;
    for (int c = 0; c < cube.grid.cells(); ++c)
        if (cube.grid.has_road(c)) road_cells.push_back(c);
    int n = static_cast<int>(road_cells.size());
    if (k < 1 || k > n)
        throw std::invalid_argument("cluster_dtw: k exceeds road cell count");

    std::vector<std::vector<double>> series(n);
    for (int i = 0; i < n; ++i)
        series[i].assign(cube.series(road_cells[i]) + split.train_begin,
                         cube.series(road_cells[i]) + split.train_end);

    // full pairwise DTW matrix
    std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = dtw(series[i], series[j]);
            dist[static_cast<std::size_t>(i) * n + j] = d;
            dist[static_cast<std::size_t>(j) * n + i] = d;
        }
    auto D = [&](int i, int j) {
        return dist[static_cast<std::size_t>(i) * n + j];
    };

    // seeded init: first k of a shuffled index list
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    std::vector<int> medoids(idx.begin(), idx.begin() + k);
    std::sort(medoids.begin(), medoids.end());

    auto total_cost = [&](const std::vector<int>& meds) {
        double cost = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int m : meds) best = std::min(best, D(i, m));
            cost += best;
        }
        return cost;
    };

    double cost = total_cost(medoids);
    for (int iter = 0; iter < max_iters; ++iter) {
        double best_cost = cost;
        int best_m = -1, best_h = -1;
        for (int mi = 0; mi < k; ++mi) {
            for (int h = 0; h < n; ++h) {
                if (std::find(medoids.begin(), medoids.end(), h) !=
                    medoids.end())
                    continue;
                std::vector<int> trial = medoids;
                trial[mi] = h;
                double c = total_cost(trial);
                if (c < best_cost - 1e-12) {
                    best_cost = c;
                    best_m = mi;
                    best_h = h;
                }
            }
        }
        if (best_m < 0) break;
        medoids[best_m] = best_h;
        cost = best_cost;
    }
    std::sort(medoids.begin(), medoids.end());

    ClusterLabels labels;
    labels.k = k;
    labels.labels.assign(cube.grid.cells(), -1);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int m = 1; m < k; ++m)
            if (D(i, medoids[m]) < D(i, medoids[best])) best = m;
        labels.labels[road_cells[i]] = best;
    }
    return labels;
}

}  // namespace gridcast::evaluation
