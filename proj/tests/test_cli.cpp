#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "granet/cli.hpp"
#include "granet/dataset.hpp"
#include "granet/network.hpp"

using namespace granet;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "granet");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("granet_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spill(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

std::string grid_cloud(double extent, bool labels, std::size_t label = 0) {
    std::ostringstream s;
    for (double x = 0; x <= extent; x += 1.0)
        for (double y = 0; y <= extent; y += 1.0) {
            s << x << ' ' << y << " 0 50 1";
            if (labels) s << ' ' << label;
            s << '\n';
        }
    return s.str();
}

// Miniature model whose head always prefers class 0.
fs::path class0_checkpoint(const fs::path& dir) {
    auto cfg = net::NetworkConfig::miniature();
    cfg.class_count = 3;
    net::GraNetModel m(cfg);
    auto w = m.head.weight.mutable_values();
    std::fill(w.begin(), w.end(), 0.0);
    auto b = m.head.bias.mutable_values();
    b[0] = 5.0;
    b[1] = b[2] = 0.0;
    const auto path = dir / "class0.bin";
    net::save_checkpoint(m, path);
    return path;
}

} // namespace

TEST(Cli, TileSyntheticSceneGivesNineSubblocks) {
    const auto dir = scratch("tile");
    write_pts(data::synthetic_scene(), dir / "scene.pts");
    const auto r = invoke({"tile", (dir / "scene.pts").string(), (dir / "manifest.txt").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("subblocks: 9"), std::string::npos) << r.out;
    EXPECT_EQ(spatial::read_manifest(dir / "manifest.txt").subblocks.size(), 9u);
}

TEST(Cli, TileSmallCloudGivesOneSubblock) {
    const auto dir = scratch("tile_small");
    spill(dir / "small.pts", grid_cloud(10.0, false));
    const auto r = invoke({"tile", (dir / "small.pts").string(), (dir / "m.txt").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("subblocks: 1\n"), std::string::npos) << r.out;
}

TEST(Cli, MissingFileExitsWithTwo) {
    const auto dir = scratch("missing");
    const auto r = invoke({"tile", "/nonexistent/cloud.pts", (dir / "m.txt").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, BadArgumentsExitWithOne) {
    EXPECT_EQ(invoke({"gradcheck", "--module", "nope"}).code, 1);
    EXPECT_EQ(invoke({"frobnicate"}).code, 1);
    EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(Cli, TrainWithoutConfigIsAConfigError) {
    unsetenv(cli::kConfigEnv);
    const auto r = invoke({"train"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--config"), std::string::npos);
}

TEST(Cli, ParamsModeCounts) {
    auto total = [](const std::string& mode) {
        const auto r = invoke({"params", "--gra-mode", mode});
        EXPECT_EQ(r.code, 0);
        const auto pos = r.out.find("total");
        std::istringstream in(r.out.substr(pos + 5));
        std::size_t n = 0;
        in >> n;
        return n;
    };
    const auto m1 = total("mode1");
    EXPECT_EQ(m1, total("mode2"));
    EXPECT_GT(total("mode3"), m1);
    EXPECT_EQ(m1, net::GraNetModel(net::NetworkConfig{}).param_count());
}

TEST(Cli, GradcheckSingleModule) {
    const auto r = invoke({"gradcheck", "--module", "cra"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, PredictWithoutLabelsWarnsAndSkipsErrorMap) {
    const auto dir = scratch("predict");
    const auto ck = class0_checkpoint(dir);
    spill(dir / "cloud.pts", grid_cloud(12.0, false));
    const auto r = invoke({"predict", "--checkpoint", ck.string(), "--data", (dir / "cloud.pts").string(), "--output",
                           (dir / "out").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("warning: input has no labels"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "out" / "labels.pts"));
    EXPECT_FALSE(fs::exists(dir / "out" / "errormap.pts"));
    std::istringstream labels(slurp(dir / "out" / "labels.pts"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(labels, line)) {
        ++rows;
        EXPECT_EQ(line.substr(line.size() - 2), " 0");
    }
    EXPECT_EQ(rows, 13u * 13u);
}

TEST(Cli, EvalOfPerfectPredictionsReportsOne) {
    const auto dir = scratch("eval");
    const auto ck = class0_checkpoint(dir);
    spill(dir / "cloud.pts", grid_cloud(12.0, true, 0));
    const auto r = invoke({"eval", "--checkpoint", ck.string(), "--data", (dir / "cloud.pts").string(), "--output",
                           (dir / "out").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(dir / "out" / "metrics.csv");
    EXPECT_NE(csv.find("OA,,,1.0000"), std::string::npos) << csv;
    EXPECT_NE(csv.find("AvgF1,,,1.0000"), std::string::npos) << csv;
}

TEST(Cli, TrainFromEnvironmentConfig) {
    const auto dir = scratch("train");
    write_pts(data::synthetic_scene(7, 400), dir / "scene.pts");
    spill(dir / "run.ini",
          "[network]\npreset = miniature\nclass_count = 3\n"
          "[train]\nmax_epochs = 2\nlr0 = 0.01\n"
          "[data]\ntrain_file = scene.pts\noutput_dir = out\nclasses = ground, roof, tree\nintensity_scale = 255\n");
    setenv(cli::kConfigEnv, (dir / "run.ini").c_str(), 1);
    const auto r = invoke({"train"});
    unsetenv(cli::kConfigEnv);
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("final training OA"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "out" / "checkpoint_best.bin"));
    EXPECT_TRUE(fs::exists(dir / "out" / "train.log"));
    EXPECT_TRUE(fs::exists(dir / "out" / "run.ini"));
    const auto saved = cli::load_run_config(dir / "out" / "run.ini");
    EXPECT_TRUE(fs::exists(saved.train_file));
    EXPECT_EQ(saved.network.class_count, 3u);
    EXPECT_EQ(saved.class_names, (std::vector<std::string>{"ground", "roof", "tree"}));

    // The trained checkpoint evaluates with the same config.
    const auto e = invoke({"eval", "--config", (dir / "run.ini").string(), "--checkpoint",
                           (dir / "out" / "checkpoint_best.bin").string(), "--data", (dir / "scene.pts").string()});
    EXPECT_EQ(e.code, 0) << e.err;
    EXPECT_NE(e.out.find("roof"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "out" / "metrics.csv"));
}

TEST(Cli, ConfigErrorsExitWithOne) {
    const auto dir = scratch("badcfg");
    spill(dir / "bad.ini", "[network]\nencoder_widths = 64, 32, 128\n");
    EXPECT_EQ(invoke({"params", "--config", (dir / "bad.ini").string()}).code, 1);
    EXPECT_EQ(invoke({"params", "--config", (dir / "absent.ini").string()}).code, 2);
}
