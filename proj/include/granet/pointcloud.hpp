#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace granet {

using Vec3 = std::array<double, 3>;

struct Point {
    double x = 0.0, y = 0.0, z = 0.0;
    double intensity = 0.0;
    int return_number = 0;
    std::optional<std::size_t> label;

    Vec3 position() const { return {x, y, z}; }
};

class ClassMap {
public:
    ClassMap() = default;
    // Throws ConfigError on duplicate names or fewer than two classes.
    explicit ClassMap(std::vector<std::string> names);

    // The nine ISPRS Vaihingen categories.
    static ClassMap isprs();

    std::size_t class_count() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t index) const { return names_.at(index); }

private:
    std::vector<std::string> names_;
};

struct PointCloud {
    std::vector<Point> points;
    ClassMap class_map;
    std::string crs_note;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_labels() const;
    std::vector<Vec3> positions() const;
    // Throws ContractError when any point lacks a label.
    std::vector<std::size_t> labels() const;
};

// Whitespace-separated `x y z intensity return_number [label]`, one point per
// line; blank lines and lines starting with '#' are skipped.
PointCloud read_pts(const std::filesystem::path& path, bool has_labels, const ClassMap& class_map = ClassMap::isprs());
PointCloud parse_pts(const std::string& text, bool has_labels, const ClassMap& class_map = ClassMap::isprs(),
                     const std::string& source_name = "<memory>");

// [x, y, z, intensity, return_number].
std::array<double, 5> feature_vector(const Point& p);
// [intensity, return_number]: the slice the initial lift layer consumes.
std::array<double, 2> non_coordinate_features(const Point& p);

// Replaces z by z minus the minimum z of the point's horizontal grid cell.
// Stand-in for height above ground when no terrain model is available.
PointCloud normalize_hag(const PointCloud& cloud, double cell_size = 25.0);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

// Each line echoes the input point (with its label when present) followed by
// the predicted class.
void write_labels(const PointCloud& cloud, std::span<const std::size_t> predicted, const std::filesystem::path& path);
// As write_labels plus a trailing 1 (correct) / 0 (wrong) flag; needs labels.
void write_error_map(const PointCloud& cloud, std::span<const std::size_t> predicted,
                     const std::filesystem::path& path);
void write_pts(const PointCloud& cloud, const std::filesystem::path& path);

} // namespace granet
