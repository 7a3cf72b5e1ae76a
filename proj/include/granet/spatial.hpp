#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "granet/pointcloud.hpp"

namespace granet::spatial {

double squared_distance(const Vec3& a, const Vec3& b);

// Per-query K nearest support points. Rows are sorted by (distance, index);
// when the support holds fewer than K points the nearest entry fills the
// remainder of the row.
struct NeighborIndex {
    std::size_t k = 0;
    std::vector<std::size_t> indices;  // rows * k
    std::vector<double> distances;     // rows * k, meters

    std::size_t rows() const { return k == 0 ? 0 : indices.size() / k; }
    std::span<const std::size_t> row(std::size_t i) const { return {indices.data() + i * k, k}; }
    std::span<const double> row_distances(std::size_t i) const { return {distances.data() + i * k, k}; }
};

// Static kd-tree over a borrowed point array. Results match an exhaustive
// scan exactly, including the ascending-index tie-break.
class KdTree {
public:
    explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 12);

    // Up to k (squared distance, index) pairs, ascending.
    std::vector<std::pair<double, std::size_t>> nearest(const Vec3& query, std::size_t k) const;
    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        std::size_t begin = 0, end = 0;  // range in order_
        int axis = -1;                   // -1 marks a leaf
        double split = 0.0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end, std::size_t leaf_size);

    std::span<const Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

NeighborIndex knn_search(std::span<const Vec3> support, std::span<const Vec3> queries, std::size_t k);
NeighborIndex knn_search(const PointCloud& support, const PointCloud& queries, std::size_t k);

// Greedy farthest-point sampling seeded at index 0; ties go to the lowest
// index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t m);

// Octant id of an offset: 4*[dx>=0] + 2*[dy>=0] + [dz>=0].
int octant_of(const Vec3& offset);

// Nearest neighbor per octant around `center`, skipping `center_index`
// itself; empty octants get `center_index`. The result does not depend on
// the order of `neighbors`.
std::array<std::size_t, 8> octant_select(std::span<const Vec3> points, std::size_t center_index,
                                         std::span<const std::size_t> neighbors);

struct Subblock {
    double origin_x = 0.0, origin_y = 0.0;
    std::size_t block_id = 0;
    std::vector<std::size_t> indices;

    Vec3 center(double sub) const { return {origin_x + sub / 2.0, origin_y + sub / 2.0, 0.0}; }
};

struct TileOptions {
    double block = 100.0;
    double sub = 25.0;
    double stride = 12.5;
};

// Non-overlapping blocks of `block` meters from the cloud's minimum x/y, each
// split into `sub`-meter windows at `stride`. Windows are half-open
// [o, o + sub) except the last along each axis, which also keeps points on
// its far edge. Windows without points are dropped.
struct TilePlan {
    TileOptions options;
    std::vector<Subblock> subblocks;
};

TilePlan tile_blocks(std::span<const Vec3> points, const TileOptions& options = {});

void write_manifest(const TilePlan& plan, const std::filesystem::path& path);
TilePlan read_manifest(const std::filesystem::path& path);

// Majority vote over every subblock prediction of a point; ties go to the
// tied class predicted by the subblock whose center is nearest the point.
// predictions[s][j] is the class for plan.subblocks[s].indices[j].
std::vector<std::size_t> fuse_predictions(const TilePlan& plan, std::span<const Vec3> points,
                                          const std::vector<std::vector<std::size_t>>& predictions,
                                          std::size_t class_count);

struct SampledBlock {
    std::vector<std::size_t> indices;
    std::size_t subblock = 0;
    std::uint64_t seed = 0;
    // Leading entries that are not top-up repeats (all of them for
    // resample_fixed, whose repeats are shuffled in).
    std::size_t primary = 0;
};

// n indices drawn from `indices`: without replacement when enough points
// exist; otherwise every point once plus random repeats, shuffled.
SampledBlock resample_fixed(std::span<const std::size_t> indices, std::size_t n, std::uint64_t seed,
                            std::size_t subblock = 0);

// Splits a shuffled subblock into ceil(count / n) blocks of n that together
// contain every point; the last block is topped up with random repeats.
std::vector<SampledBlock> partition_fixed(std::span<const std::size_t> indices, std::size_t n, std::uint64_t seed,
                                          std::size_t subblock = 0);

struct InterpolationIndex {
    NeighborIndex neighbors;
    std::vector<double> weights;  // rows * k, each row sums to 1
};

// k in {1, 3}: nearest coarse points of every fine point with normalized
// inverse-distance weights. A coincident coarse point takes the whole weight.
InterpolationIndex interpolation_index(std::span<const Vec3> coarse, std::span<const Vec3> fine, std::size_t k);

} // namespace granet::spatial
