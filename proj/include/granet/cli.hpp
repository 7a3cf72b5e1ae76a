#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "granet/network.hpp"
#include "granet/pointcloud.hpp"
#include "granet/spatial.hpp"
#include "granet/training.hpp"

namespace granet::cli {

inline constexpr const char* kConfigEnv = "GRANET_CONFIG";

// Everything one run needs. Relative paths in a config file are resolved
// against the file's directory.
struct RunConfig {
    net::NetworkConfig network;
    train::TrainConfig train;
    std::filesystem::path train_file, validation_file, test_file;
    double validation_fraction = 0.0;  // used when no validation file is set
    std::filesystem::path output_dir = "granet_out";
    std::vector<std::string> class_names;  // empty: the nine ISPRS classes
    bool hag = false;
    double hag_cell = 25.0;
    double intensity_scale = 1.0;
    spatial::TileOptions tiling;

    ClassMap class_map() const;
    static RunConfig from_ini(const IniDocument& doc, const std::filesystem::path& base_dir = {});
    IniDocument to_ini() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Clouds with 6 columns carry labels, 5 columns do not.
PointCloud read_cloud(const std::filesystem::path& path, const ClassMap& classes);

// Exit codes: 0 success, 1 contract or configuration error, 2 I/O error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace granet::cli
