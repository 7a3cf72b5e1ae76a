#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "granet/error.hpp"
#include "granet/pointcloud.hpp"

using namespace granet;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("granet_pc_" + name);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST(ClassMap, IsprsHasNineClasses) {
    EXPECT_EQ(ClassMap::isprs().class_count(), 9u);
    EXPECT_EQ(ClassMap::isprs().name(5), "roof");
}

TEST(ClassMap, RejectsDuplicatesAndSingletons) {
    EXPECT_THROW(ClassMap({"a"}), ConfigError);
    EXPECT_THROW(ClassMap({"a", "b", "a"}), ConfigError);
}

TEST(Pts, ParsesLabeledLinesAndSkipsComments) {
    const auto cloud = parse_pts("# header\n1 2 3 40 1 5\n\n4.5 5 6 70 2 0\n", true);
    ASSERT_EQ(cloud.size(), 2u);
    EXPECT_DOUBLE_EQ(cloud.points[1].x, 4.5);
    EXPECT_EQ(cloud.points[1].return_number, 2);
    EXPECT_EQ(*cloud.points[0].label, 5u);
    EXPECT_TRUE(cloud.has_labels());
}

TEST(Pts, FeatureVectorOrder) {
    const auto cloud = parse_pts("1 2 3 40 2\n", false);
    EXPECT_EQ(feature_vector(cloud.points[0]), (std::array<double, 5>{1, 2, 3, 40, 2}));
    EXPECT_EQ(non_coordinate_features(cloud.points[0]), (std::array<double, 2>{40, 2}));
    EXPECT_FALSE(cloud.has_labels());
    EXPECT_THROW(cloud.labels(), ContractError);
}

TEST(Pts, ErrorsNameTheLine) {
    try {
        parse_pts("1 2 3 4 1 0\n1 2 x 4 1 0\n", true, ClassMap::isprs(), "f.pts");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("f.pts:2"), std::string::npos);
    }
    EXPECT_THROW(parse_pts("1 2 3 4 1\n", true), ParseError);
    EXPECT_THROW(parse_pts("# nothing\n", false), ParseError);
    EXPECT_THROW(parse_pts("1 2 3 4 1 9\n", true), RangeError);
    EXPECT_THROW(parse_pts("1 2 3 4 -1\n", false), ParseError);
}

TEST(Pts, MissingFileIsIoError) { EXPECT_THROW(read_pts("/nonexistent/cloud.pts", true), IoError); }

TEST(Pts, WriteReadRoundTripIsExact) {
    PointCloud c;
    c.class_map = ClassMap::isprs();
    c.points.push_back({0.1, 1.0 / 3.0, -2.5e-7, 12.0, 1, 3});
    c.points.push_back({1e6 + 0.125, 2.0, 3.0, 0.0, 2, 8});
    const auto path = temp_file("roundtrip.pts");
    write_pts(c, path);
    const auto back = read_pts(path, true);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.points[0].y, c.points[0].y);
    EXPECT_EQ(back.points[0].z, c.points[0].z);
    EXPECT_EQ(back.points[1].x, c.points[1].x);
    EXPECT_EQ(*back.points[1].label, 8u);
}

TEST(Pts, LabelAndErrorMapFiles) {
    const auto cloud = parse_pts("0 0 0 1 1 2\n1 1 1 1 1 3\n", true);
    const std::vector<std::size_t> pred{2, 4};
    write_labels(cloud, pred, temp_file("labels.pts"));
    write_error_map(cloud, pred, temp_file("errors.pts"));
    EXPECT_EQ(slurp(temp_file("labels.pts")), "0 0 0 1 1 2 2\n1 1 1 1 1 3 4\n");
    EXPECT_EQ(slurp(temp_file("errors.pts")), "0 0 0 1 1 2 2 1\n1 1 1 1 1 3 4 0\n");
    EXPECT_THROW(write_labels(cloud, std::vector<std::size_t>{1}, temp_file("bad.pts")), ContractError);
}

TEST(Hag, SubtractsPerCellMinimum) {
    const auto cloud = parse_pts("0 0 10 0 1\n1 1 12 0 1\n30 0 5 0 1\n31 2 6 0 1\n", false);
    const auto hag = normalize_hag(cloud, 25.0);
    EXPECT_DOUBLE_EQ(hag.points[0].z, 0.0);
    EXPECT_DOUBLE_EQ(hag.points[1].z, 2.0);
    EXPECT_DOUBLE_EQ(hag.points[2].z, 0.0);
    EXPECT_DOUBLE_EQ(hag.points[3].z, 1.0);
    EXPECT_DOUBLE_EQ(hag.points[3].x, 31.0);
}
