#include "gridcast/cube.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gridcast/rng.hpp"

namespace gridcast {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<bool> GridSpec::road_mask() const {
    std::vector<bool> mask(cells());
    for (int c = 0; c < cells(); ++c) mask[c] = has_road(c);
    return mask;
}

void GridSpec::validate() const {
    if (width < 1 || height < 1)
        throw std::invalid_argument("grid dimensions must be >= 1");
    if (!(cell_size_miles > 0.0))
        throw std::invalid_argument("cell size must be positive");
    if (static_cast<int>(road_length_miles.size()) != cells())
        throw std::invalid_argument("road_length_miles must have one entry per cell");
    for (double r : road_length_miles)
        if (!(r >= 0.0))
            throw std::invalid_argument("road lengths must be nonnegative");
}

Severity parse_severity(const std::string& code) {
    if (code == "K") return Severity::K;
    if (code == "A") return Severity::A;
    if (code == "B") return Severity::B;
    if (code == "C") return Severity::C;
    if (code == "O") return Severity::O;
    throw std::invalid_argument("unknown severity code " + code);
}

char severity_code(Severity s) {
    switch (s) {
        case Severity::K: return 'K';
        case Severity::A: return 'A';
        case Severity::B: return 'B';
        case Severity::C: return 'C';
        default: return 'O';
    }
}

double SeverityWeights::weight(Severity s) const {
    switch (s) {
        case Severity::K: return k;
        case Severity::A: return a;
        case Severity::B: return b;
        case Severity::C: return c;
        default: return o;
    }
}

void SeverityWeights::validate() const {
    if (o != 1.0) throw std::invalid_argument("severity weight O must be 1");
    if (!(k >= a && a >= b && b >= c && c >= o))
        throw std::invalid_argument("severity weights must be ordered K >= A >= B >= C >= O");
}

SpaceTimeCube build_cube(const std::vector<CrashRecord>& records,
                         const GridSpec& grid, const SeverityWeights& weights,
                         int weeks) {
    grid.validate();
    weights.validate();
    if (weeks < 1) throw std::invalid_argument("week count must be >= 1");

    SpaceTimeCube cube;
    cube.grid = grid;
    cube.weeks = weeks;
    cube.target.assign(static_cast<std::size_t>(grid.cells()) * weeks, 0.0);

    for (std::size_t i = 0; i < records.size(); ++i) {
        const CrashRecord& r = records[i];
        if (r.cell_x < 0 || r.cell_x >= grid.width || r.cell_y < 0 ||
            r.cell_y >= grid.height)
            throw std::invalid_argument("record " + std::to_string(i) +
                                        ": cell out of range");
        if (r.week_index < 0 || r.week_index >= weeks)
            throw std::invalid_argument("record " + std::to_string(i) +
                                        ": week out of range");
        if (!r.inclement_weather) continue;
        int c = grid.index(r.cell_x, r.cell_y);
        if (!grid.has_road(c)) continue;  // nulled below anyway
        cube.at(c, r.week_index) += weights.weight(r.severity);
    }

    for (int c = 0; c < grid.cells(); ++c) {
        if (grid.has_road(c)) {
            double len = grid.road_length_miles[c];
            for (int t = 0; t < weeks; ++t) cube.at(c, t) /= len;
        } else {
            for (int t = 0; t < weeks; ++t) cube.at(c, t) = kNull;
        }
    }
    return cube;
}

SplitIndex chronological_split(int weeks, int test_weeks,
                               double validation_fraction) {
    if (test_weeks < 0 || test_weeks >= weeks)
        throw std::invalid_argument("test_weeks must be in [0, T)");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("validation_fraction must be in [0,1)");
    int pre_test = weeks - test_weeks;
    int validation = static_cast<int>(std::floor(validation_fraction * pre_test));
    SplitIndex s;
    s.train_begin = 0;
    s.train_end = pre_test - validation;
    s.validation_begin = s.train_end;
    s.validation_end = pre_test;
    s.test_begin = pre_test;
    s.test_end = weeks;
    return s;
}

SpaceTimeCube synth_cube(const GridSpec& grid, int weeks,
                         const std::vector<Regime>& regimes,
                         std::uint64_t seed) {
    grid.validate();
    std::vector<int> owner(grid.cells(), -1);
    for (std::size_t i = 0; i < regimes.size(); ++i) {
        const Regime& r = regimes[i];
        if (r.x0 < 0 || r.y0 < 0 || r.x0 + r.width > grid.width ||
            r.y0 + r.height > grid.height || r.width < 1 || r.height < 1)
            throw std::invalid_argument("regime " + std::to_string(i) +
                                        " exceeds grid bounds");
        for (int y = r.y0; y < r.y0 + r.height; ++y)
            for (int x = r.x0; x < r.x0 + r.width; ++x) {
                int c = grid.index(x, y);
                if (owner[c] != -1)
                    throw std::invalid_argument("regimes overlap at cell (" +
                                                std::to_string(x) + "," +
                                                std::to_string(y) + ")");
                owner[c] = static_cast<int>(i);
            }
    }
    for (int c = 0; c < grid.cells(); ++c)
        if (owner[c] == -1)
            throw std::invalid_argument("regimes do not cover the whole grid");

    SpaceTimeCube cube;
    cube.grid = grid;
    cube.weeks = weeks;
    cube.target.assign(static_cast<std::size_t>(grid.cells()) * weeks, 0.0);

    Rng rng(seed);
    for (int c = 0; c < grid.cells(); ++c) {
        const Regime& r = regimes[owner[c]];
        for (int t = 0; t < weeks; ++t) {
            // draw noise unconditionally so the stream position does not
            // depend on the road mask
            double n = rng.normal();
            if (!grid.has_road(c)) {
                cube.at(c, t) = kNull;
                continue;
            }
            double v = r.level + r.slope * t +
                       r.amplitude * std::sin(2.0 * M_PI * t / 52.0) +
                       r.noise * n;
            cube.at(c, t) = std::max(0.0, v);
        }
    }
    return cube;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

int parse_int_field(const std::string& s, int line_no, const char* what) {
    std::size_t pos = 0;
    int v;
    try {
        v = std::stoi(s, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": non-integer " + what + " '" + s + "'");
    }
    if (pos != s.size())
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": non-integer " + what + " '" + s + "'");
    return v;
}

bool parse_bool_field(const std::string& s, int line_no) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::runtime_error("line " + std::to_string(line_no) +
                             ": expected boolean, got '" + s + "'");
}

void write_doubles(const fs::path& path, const std::vector<double>& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(const fs::path& path, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
        throw std::runtime_error("short read in " + path.string());
    return v;
}

}  // namespace

std::vector<CrashRecord> load_crash_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ": empty file");
    if (split_csv_line(line) !=
        std::vector<std::string>{"week_index", "cell_x", "cell_y", "severity",
                                 "inclement_weather"})
        throw std::runtime_error(path + ": bad header, expected "
                                 "week_index,cell_x,cell_y,severity,inclement_weather");
    std::vector<CrashRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 5)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected 5 fields");
        CrashRecord r;
        r.week_index = parse_int_field(fields[0], line_no, "week_index");
        r.cell_x = parse_int_field(fields[1], line_no, "cell_x");
        r.cell_y = parse_int_field(fields[2], line_no, "cell_y");
        try {
            r.severity = parse_severity(fields[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": unknown severity code " + fields[3]);
        }
        r.inclement_weather = parse_bool_field(fields[4], line_no);
        records.push_back(r);
    }
    return records;
}

FeatureTable load_features_csv(const std::string& path, const GridSpec& grid) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) !=
            std::vector<std::string>{"cell_x", "cell_y", "feature_name", "value"})
        throw std::runtime_error(path + ": bad header, expected "
                                 "cell_x,cell_y,feature_name,value");
    FeatureTable table;
    table.road_length.assign(grid.cells(), 0.0);
    std::map<std::string, std::vector<double>> by_name;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected 4 fields");
        int x = parse_int_field(fields[0], line_no, "cell_x");
        int y = parse_int_field(fields[1], line_no, "cell_y");
        if (x < 0 || x >= grid.width || y < 0 || y >= grid.height)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": cell out of range");
        double v;
        try {
            v = std::stod(fields[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": non-numeric value '" + fields[3] + "'");
        }
        if (fields[2] == "road_length") {
            table.road_length[grid.index(x, y)] = v;
        } else {
            auto [it, inserted] =
                by_name.try_emplace(fields[2], grid.cells(), 0.0);
            it->second[grid.index(x, y)] = v;
        }
    }
    for (auto& [name, values] : by_name) {
        table.names.push_back(name);
        table.values.insert(table.values.end(), values.begin(), values.end());
    }
    return table;
}

void save_cube(const std::string& dir, const SpaceTimeCube& cube) {
    fs::create_directories(dir);
    json manifest = {
        {"format", "gridcast-cube"},
        {"version", 1},
        {"width", cube.grid.width},
        {"height", cube.grid.height},
        {"cell_size_miles", cube.grid.cell_size_miles},
        {"weeks", cube.weeks},
        {"feature_names", cube.feature_names},
        {"null_sentinel", "nan"},
        {"files",
         {{"target", "target.bin"},
          {"road_length", "road_length.bin"},
          {"features", "features.bin"}}},
    };
    if (!cube.week_labels.empty()) manifest["week_labels"] = cube.week_labels;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    write_doubles(fs::path(dir) / "target.bin", cube.target);
    write_doubles(fs::path(dir) / "road_length.bin", cube.grid.road_length_miles);
    write_doubles(fs::path(dir) / "features.bin", cube.features);
}

SpaceTimeCube load_cube(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json manifest = json::parse(mf);
    if (manifest.value("format", "") != "gridcast-cube")
        throw std::runtime_error(dir + ": not a cube archive");
    SpaceTimeCube cube;
    cube.grid.width = manifest.at("width").get<int>();
    cube.grid.height = manifest.at("height").get<int>();
    cube.grid.cell_size_miles = manifest.at("cell_size_miles").get<double>();
    cube.weeks = manifest.at("weeks").get<int>();
    cube.feature_names =
        manifest.at("feature_names").get<std::vector<std::string>>();
    if (manifest.contains("week_labels"))
        cube.week_labels = manifest["week_labels"].get<std::vector<std::string>>();
    std::size_t n = static_cast<std::size_t>(cube.grid.width) * cube.grid.height;
    cube.grid.road_length_miles =
        read_doubles(fs::path(dir) / "road_length.bin", n);
    cube.target = read_doubles(fs::path(dir) / "target.bin", n * cube.weeks);
    cube.features = read_doubles(fs::path(dir) / "features.bin",
                                 n * cube.feature_names.size());
    cube.grid.validate();
    return cube;
}

}  // namespace gridcast
