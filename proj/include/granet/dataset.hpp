#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "granet/network.hpp"
#include "granet/pointcloud.hpp"
#include "granet/spatial.hpp"

namespace granet::data {

struct BlockOptions {
    // Intensity is divided by this before it enters the network.
    double intensity_scale = 1.0;
    std::uint64_t seed = 1;
};

// Network blocks with their cached neighborhood pyramids.
struct BlockSet {
    std::vector<net::Block> blocks;
    std::vector<net::Pyramid> pyramids;

    std::size_t size() const { return blocks.size(); }
    bool empty() const { return blocks.empty(); }
};

// x and y relative to the subblock center, z unchanged.
net::Block make_block(const PointCloud& cloud, const spatial::SampledBlock& sample, const spatial::Subblock& subblock,
                      double sub_size, double intensity_scale);

// Every subblock is split into fixed-size blocks that together hold all of
// its points.
BlockSet build_blocks(const PointCloud& cloud, const spatial::TilePlan& plan, const net::NetworkConfig& config,
                      const BlockOptions& options);

// Moves a seeded `fraction` of the blocks (at least one, at most all but
// one) into the returned validation set.
BlockSet split_validation(BlockSet& train, double fraction, std::uint64_t seed);

// Row-wise argmax of a [N x C] score tensor; ties go to the lower class.
std::vector<std::size_t> argmax_rows(const ad::Tensor& scores);

// Labels for every point of `cloud`: blocks are classified independently in
// inference mode and the overlapping subblock votes fused.
std::vector<std::size_t> predict_cloud(const net::GraNetModel& model, const PointCloud& cloud,
                                       const spatial::TilePlan& plan, const BlockOptions& options,
                                       std::size_t threads = 1);

// Scores every block of a set in inference mode; result[b] holds the argmax
// of each of its points.
std::vector<std::vector<std::size_t>> predict_blocks(const net::GraNetModel& model, const BlockSet& set,
                                                     std::size_t threads = 1);

// 50 x 50 m three-class scene (ground, roof, tree): flat ground at z = 0,
// flat roof patches at z = 8 and vertically scattered canopy clusters with
// multiple returns. Intensities lie in [0, 255].
PointCloud synthetic_scene(std::uint64_t seed = 7, std::size_t points = 4096);
inline constexpr double kSyntheticIntensityScale = 255.0;

} // namespace granet::data
