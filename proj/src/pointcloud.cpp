#include "granet/pointcloud.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "granet/error.hpp"

namespace granet {

ClassMap::ClassMap(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2) throw ConfigError("a class map needs at least two classes");
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (!seen.insert(n).second) throw ConfigError("duplicate class name '" + n + "'");
    }
}

ClassMap ClassMap::isprs() {
    return ClassMap({"powerline", "low_vegetation", "impervious_surfaces", "car", "fence_hedge", "roof", "facade",
                     "shrub", "tree"});
}

bool PointCloud::has_labels() const {
    return !points.empty() && std::all_of(points.begin(), points.end(), [](const Point& p) { return p.label.has_value(); });
}

std::vector<Vec3> PointCloud::positions() const {
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.position());
    return out;
}

std::vector<std::size_t> PointCloud::labels() const {
    std::vector<std::size_t> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!points[i].label) throw ContractError("point " + std::to_string(i) + " has no label");
        out.push_back(*points[i].label);
    }
    return out;
}

namespace {

double parse_number(std::string_view field, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw ParseError(where + ": '" + std::string(field) + "' is not a finite number");
    }
    return v;
}

std::size_t parse_index(std::string_view field, const std::string& where, const char* what) {
    const double v = parse_number(field, where);
    if (v < 0.0 || v != std::floor(v) || v > 1e15) {
        throw ParseError(where + ": " + what + " '" + std::string(field) + "' is not a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string point_line(const Point& p) {
    std::string s = format_double(p.x) + ' ' + format_double(p.y) + ' ' + format_double(p.z) + ' ' +
                    format_double(p.intensity) + ' ' + std::to_string(p.return_number);
    if (p.label) s += ' ' + std::to_string(*p.label);
    return s;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void check_prediction_count(const PointCloud& cloud, std::span<const std::size_t> predicted) {
    if (predicted.size() != cloud.size()) {
        throw ContractError(std::to_string(predicted.size()) + " predictions for " + std::to_string(cloud.size()) +
                            " points");
    }
}

} // namespace

PointCloud parse_pts(const std::string& text, bool has_labels, const ClassMap& class_map,
                     const std::string& source_name) {
    PointCloud cloud;
    cloud.class_map = class_map;
    cloud.crs_note = source_name;
    const std::size_t expected = has_labels ? 6 : 5;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_fields(line);
        if (fields.empty() || fields[0].front() == '#') continue;
        const std::string where = source_name + ":" + std::to_string(line_no);
        if (fields.size() != expected) {
            throw ParseError(where + ": expected " + std::to_string(expected) + " fields, found " +
                             std::to_string(fields.size()));
        }
        Point p;
        p.x = parse_number(fields[0], where);
        p.y = parse_number(fields[1], where);
        p.z = parse_number(fields[2], where);
        p.intensity = parse_number(fields[3], where);
        p.return_number = static_cast<int>(parse_index(fields[4], where, "return number"));
        if (has_labels) {
            const std::size_t label = parse_index(fields[5], where, "label");
            if (label >= class_map.class_count()) {
                throw RangeError(where + ": label " + std::to_string(label) + " out of range for " +
                                 std::to_string(class_map.class_count()) + " classes");
            }
            p.label = label;
        }
        cloud.points.push_back(p);
    }
    if (cloud.points.empty()) throw ParseError(source_name + ": empty point cloud");
    return cloud;
}

PointCloud read_pts(const std::filesystem::path& path, bool has_labels, const ClassMap& class_map) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_pts(buf.str(), has_labels, class_map, path.string());
}

std::array<double, 5> feature_vector(const Point& p) {
    return {p.x, p.y, p.z, p.intensity, static_cast<double>(p.return_number)};
}

std::array<double, 2> non_coordinate_features(const Point& p) {
    return {p.intensity, static_cast<double>(p.return_number)};
}

PointCloud normalize_hag(const PointCloud& cloud, double cell_size) {
    if (!(cell_size > 0.0)) throw ContractError("HaG cell size must be positive");
    PointCloud out = cloud;
    if (cloud.empty()) return out;
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    for (const auto& p : cloud.points) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
    }
    auto cell_of = [&](const Point& p) {
        return std::pair<long long, long long>{static_cast<long long>(std::floor((p.x - min_x) / cell_size)),
                                               static_cast<long long>(std::floor((p.y - min_y) / cell_size))};
    };
    std::map<std::pair<long long, long long>, double> floor_z;
    for (const auto& p : cloud.points) {
        auto [it, inserted] = floor_z.try_emplace(cell_of(p), p.z);
        if (!inserted) it->second = std::min(it->second, p.z);
    }
    for (auto& p : out.points) p.z -= floor_z.at(cell_of(p));
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_pts(const PointCloud& cloud, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    for (const auto& p : cloud.points) out << point_line(p) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

void write_labels(const PointCloud& cloud, std::span<const std::size_t> predicted, const std::filesystem::path& path) {
    check_prediction_count(cloud, predicted);
    auto out = open_for_write(path);
    for (std::size_t i = 0; i < cloud.size(); ++i) out << point_line(cloud.points[i]) << ' ' << predicted[i] << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

void write_error_map(const PointCloud& cloud, std::span<const std::size_t> predicted,
                     const std::filesystem::path& path) {
    check_prediction_count(cloud, predicted);
    auto truth = cloud.labels();
    auto out = open_for_write(path);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        out << point_line(cloud.points[i]) << ' ' << predicted[i] << ' ' << (truth[i] == predicted[i] ? 1 : 0)
            << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace granet
