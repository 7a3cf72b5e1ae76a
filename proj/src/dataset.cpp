#include "granet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "granet/error.hpp"

namespace granet::data {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; each index is handled
// exactly once and results are written by index, so output order never
// depends on scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace

net::Block make_block(const PointCloud& cloud, const spatial::SampledBlock& sample, const spatial::Subblock& subblock,
                      double sub_size, double intensity_scale) {
    if (intensity_scale <= 0.0) throw ConfigError("intensity_scale must be positive");
    const Vec3 c = subblock.center(sub_size);
    const bool labeled = cloud.has_labels();
    net::Block b;
    b.subblock = sample.subblock;
    b.scored = sample.primary;
    b.source_indices = sample.indices;
    b.positions.reserve(sample.indices.size());
    b.features.reserve(sample.indices.size());
    for (std::size_t i : sample.indices) {
        if (i >= cloud.size()) throw RangeError("block index outside the point cloud");
        const Point& p = cloud.points[i];
        const Vec3 pos{p.x - c[0], p.y - c[1], p.z};
        b.positions.push_back(pos);
        b.features.push_back({pos[0], pos[1], pos[2], p.intensity / intensity_scale,
                              static_cast<double>(p.return_number)});
        if (labeled) b.labels.push_back(*p.label);
    }
    return b;
}

BlockSet build_blocks(const PointCloud& cloud, const spatial::TilePlan& plan, const net::NetworkConfig& config,
                      const BlockOptions& options) {
    BlockSet set;
    for (std::size_t s = 0; s < plan.subblocks.size(); ++s) {
        const auto& sb = plan.subblocks[s];
        for (const auto& sample :
             spatial::partition_fixed(sb.indices, config.points_per_block, mix_seed(options.seed, s), s)) {
            set.blocks.push_back(make_block(cloud, sample, sb, plan.options.sub, options.intensity_scale));
        }
    }
    set.pyramids.reserve(set.blocks.size());
    for (const auto& b : set.blocks) set.pyramids.push_back(net::build_pyramid(b.positions, config));
    return set;
}

BlockSet split_validation(BlockSet& train, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
    if (train.size() < 2) throw ContractError("need at least two blocks to split off a validation set");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size()))), 1, train.size() - 1);
    std::vector<bool> held(train.size(), false);
    for (std::size_t i = 0; i < take; ++i) held[order[i]] = true;
    BlockSet kept, val;
    for (std::size_t i = 0; i < train.size(); ++i) {
        BlockSet& dst = held[i] ? val : kept;
        dst.blocks.push_back(std::move(train.blocks[i]));
        dst.pyramids.push_back(std::move(train.pyramids[i]));
    }
    train = std::move(kept);
    return val;
}

std::vector<std::size_t> argmax_rows(const ad::Tensor& scores) {
    if (scores.rank() != 2) throw DimensionError("argmax_rows expects a matrix");
    const std::size_t n = scores.dim(0), c = scores.dim(1);
    const auto v = scores.values();
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (v[i * c + j] > v[i * c + best]) best = j;
        out[i] = best;
    }
    return out;
}

std::vector<std::vector<std::size_t>> predict_blocks(const net::GraNetModel& model, const BlockSet& set,
                                                     std::size_t threads) {
    std::vector<std::vector<std::size_t>> out(set.size());
    parallel_for(set.size(), threads, [&](std::size_t i) {
        ad::NoGradGuard guard;
        out[i] = argmax_rows(model.forward(set.blocks[i], set.pyramids[i], false));
    });
    return out;
}

std::vector<std::size_t> predict_cloud(const net::GraNetModel& model, const PointCloud& cloud,
                                       const spatial::TilePlan& plan, const BlockOptions& options,
                                       std::size_t threads) {
    const BlockSet set = build_blocks(cloud, plan, model.config(), options);
    const auto labels = predict_blocks(model, set, threads);

    // Per subblock, the prediction of every listed point (first occurrence
    // wins for top-up repeats).
    std::vector<std::vector<std::size_t>> per_subblock(plan.subblocks.size());
    std::vector<std::vector<bool>> filled(plan.subblocks.size());
    for (std::size_t s = 0; s < plan.subblocks.size(); ++s) {
        per_subblock[s].assign(plan.subblocks[s].indices.size(), 0);
        filled[s].assign(plan.subblocks[s].indices.size(), false);
    }
    std::vector<std::size_t> position(cloud.size());
    for (std::size_t b = 0; b < set.size(); ++b) {
        const auto& block = set.blocks[b];
        const auto& sb = plan.subblocks[block.subblock];
        for (std::size_t j = 0; j < sb.indices.size(); ++j) position[sb.indices[j]] = j;
        for (std::size_t j = 0; j < block.size(); ++j) {
            const std::size_t slot = position[block.source_indices[j]];
            if (filled[block.subblock][slot]) continue;
            filled[block.subblock][slot] = true;
            per_subblock[block.subblock][slot] = labels[b][j];
        }
    }
    return spatial::fuse_predictions(plan, cloud.positions(), per_subblock, model.config().class_count);
}

PointCloud synthetic_scene(std::uint64_t seed, std::size_t points) {
    struct Rect {
        double x0, y0, x1, y1;
    };
    struct Disk {
        double x, y, r;
    };
    const Rect roofs[] = {{5.0, 28.0, 20.0, 45.0}, {29.0, 4.0, 46.0, 18.0}};
    const Disk trees[] = {{11.0, 11.0, 5.0}, {38.0, 36.0, 6.0}, {24.0, 24.0, 4.0}};

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    PointCloud cloud;
    cloud.class_map = ClassMap({"ground", "roof", "tree"});
    cloud.points.reserve(points);
    for (std::size_t i = 0; i < points; ++i) {
        Point p;
        p.x = 50.0 * u01(rng);
        p.y = 50.0 * u01(rng);
        bool roof = false, tree = false;
        for (const auto& r : roofs) roof = roof || (p.x >= r.x0 && p.x < r.x1 && p.y >= r.y0 && p.y < r.y1);
        for (const auto& d : trees) tree = tree || std::hypot(p.x - d.x, p.y - d.y) < d.r;
        if (roof) {
            p.z = 8.0 + 0.03 * noise(rng);
            p.intensity = std::clamp(170.0 + 12.0 * noise(rng), 0.0, 255.0);
            p.return_number = 1;
            p.label = 1;
        } else if (tree && u01(rng) < 0.8) {
            p.z = 2.0 + 12.0 * u01(rng);
            p.intensity = std::clamp(95.0 + 15.0 * noise(rng), 0.0, 255.0);
            p.return_number = 1 + static_cast<int>(3.0 * u01(rng));
            p.label = 2;
        } else {
            p.z = 0.03 * noise(rng);
            p.intensity = std::clamp(45.0 + 10.0 * noise(rng), 0.0, 255.0);
            p.return_number = tree ? 2 + static_cast<int>(2.0 * u01(rng)) : 1;
            p.label = 0;
        }
        cloud.points.push_back(p);
    }
    return cloud;
}

} // namespace granet::data
