#include "granet/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include "granet/error.hpp"

namespace granet::spatial {

double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size) : points_(points), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points.empty()) build(0, points.size(), std::max<std::size_t>(1, leaf_size));
}

std::size_t KdTree::build(std::size_t begin, std::size_t end, std::size_t leaf_size) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size) return id;

    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi{-lo[0], -lo[1], -lo[2]};
    for (std::size_t i = begin; i < end; ++i) {
        const auto& p = points_[order_[i]];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    if (hi[axis] == lo[axis]) return id;  // all coincident: keep as a leaf

    const std::size_t mid = begin + (end - begin) / 2;
    auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
    std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const std::size_t left = build(begin, mid, leaf_size);
    const std::size_t right = build(mid, end, leaf_size);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<std::pair<double, std::size_t>> KdTree::nearest(const Vec3& query, std::size_t k) const {
    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry> heap;  // worst (distance, index) on top
    if (k == 0 || nodes_.empty()) return {};

    auto visit = [&](auto&& self, std::size_t node_id) -> void {
        const Node& node = nodes_[node_id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t idx = order_[i];
                const Entry cand{squared_distance(query, points_[idx]), idx};
                if (heap.size() < k) {
                    heap.push(cand);
                } else if (cand < heap.top()) {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        const double diff = query[node.axis] - node.split;
        const std::size_t near = diff < 0.0 ? node.left : node.right;
        const std::size_t far = diff < 0.0 ? node.right : node.left;
        self(self, near);
        // <= keeps equal-distance candidates with a lower index reachable.
        if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
    };
    visit(visit, 0);

    std::vector<Entry> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = heap.top();
        heap.pop();
    }
    return out;
}

NeighborIndex knn_search(std::span<const Vec3> support, std::span<const Vec3> queries, std::size_t k) {
    if (support.empty()) throw ContractError("knn_search: empty support set");
    if (k == 0) throw ContractError("knn_search: K must be at least 1");
    KdTree tree(support);
    NeighborIndex result;
    result.k = k;
    result.indices.resize(queries.size() * k);
    result.distances.resize(queries.size() * k);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto found = tree.nearest(queries[q], k);
        for (std::size_t j = 0; j < k; ++j) {
            const auto& e = j < found.size() ? found[j] : found.front();
            result.indices[q * k + j] = e.second;
            result.distances[q * k + j] = std::sqrt(e.first);
        }
    }
    return result;
}

NeighborIndex knn_search(const PointCloud& support, const PointCloud& queries, std::size_t k) {
    const auto s = support.positions();
    const auto q = queries.positions();
    return knn_search(s, q, k);
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t m) {
    if (m == 0 || m > points.size()) {
        throw ContractError("farthest_point_sampling: cannot pick " + std::to_string(m) + " of " +
                            std::to_string(points.size()) + " points");
    }
    std::vector<double> min_d2(points.size(), std::numeric_limits<double>::infinity());
    std::vector<std::size_t> chosen;
    chosen.reserve(m);
    std::size_t current = 0;
    for (std::size_t step = 0; step < m; ++step) {
        chosen.push_back(current);
        min_d2[current] = -1.0;  // never pick twice
        if (step + 1 == m) break;
        std::size_t best = 0;
        double best_d2 = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (min_d2[i] >= 0.0) min_d2[i] = std::min(min_d2[i], squared_distance(points[i], points[current]));
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    return chosen;
}

int octant_of(const Vec3& d) { return 4 * (d[0] >= 0.0) + 2 * (d[1] >= 0.0) + (d[2] >= 0.0); }

std::array<std::size_t, 8> octant_select(std::span<const Vec3> points, std::size_t center_index,
                                         std::span<const std::size_t> neighbors) {
    const Vec3& c = points[center_index];
    std::array<std::size_t, 8> slot;
    slot.fill(center_index);
    std::array<double, 8> best;
    best.fill(std::numeric_limits<double>::infinity());
    for (std::size_t idx : neighbors) {
        if (idx == center_index) continue;
        const Vec3& p = points[idx];
        const Vec3 d{p[0] - c[0], p[1] - c[1], p[2] - c[2]};
        const int o = octant_of(d);
        const double d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if (d2 < best[o] || (d2 == best[o] && idx < slot[o])) {
            best[o] = d2;
            slot[o] = idx;
        }
    }
    return slot;
}

namespace {

std::size_t window_count(double extent, const TileOptions& o) {
    if (extent <= o.sub) return 1;
    return static_cast<std::size_t>(std::ceil((extent - o.sub) / o.stride)) + 1;
}

// Window indices along one axis that contain coordinate v (offset from the
// window grid origin).
std::pair<std::size_t, std::size_t> window_range(double v, std::size_t count, const TileOptions& o) {
    // Window w covers [w*stride, w*stride + sub); the last one also its far edge.
    std::size_t lo = count, hi = 0;
    const long long first = static_cast<long long>(std::floor((v - o.sub) / o.stride)) - 1;
    for (long long w = std::max(0LL, first); w < static_cast<long long>(count); ++w) {
        const double start = static_cast<double>(w) * o.stride;
        if (start > v) break;
        const bool last = w + 1 == static_cast<long long>(count);
        const bool inside = v < start + o.sub || last;
        if (inside) {
            lo = std::min(lo, static_cast<std::size_t>(w));
            hi = static_cast<std::size_t>(w) + 1;
        }
    }
    return {lo, hi};
}

} // namespace

TilePlan tile_blocks(std::span<const Vec3> points, const TileOptions& options) {
    if (points.empty()) throw ContractError("tile_blocks: empty point cloud");
    if (!(options.sub > 0.0) || !(options.stride > 0.0) || !(options.block > 0.0)) {
        throw ContractError("tile_blocks: sizes must be positive");
    }
    if (options.stride > options.sub) throw ContractError("tile_blocks: stride must not exceed the window size");

    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_x;
    for (const auto& p : points) {
        min_x = std::min(min_x, p[0]);
        min_y = std::min(min_y, p[1]);
        max_x = std::max(max_x, p[0]);
        max_y = std::max(max_y, p[1]);
    }
    const std::size_t blocks_x = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((max_x - min_x) / options.block)));
    const std::size_t blocks_y = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((max_y - min_y) / options.block)));

    std::vector<std::vector<std::size_t>> members(blocks_x * blocks_y);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto bx = std::min(blocks_x - 1, static_cast<std::size_t>((points[i][0] - min_x) / options.block));
        const auto by = std::min(blocks_y - 1, static_cast<std::size_t>((points[i][1] - min_y) / options.block));
        members[by * blocks_x + bx].push_back(i);
    }

    TilePlan plan;
    plan.options = options;
    for (std::size_t b = 0; b < members.size(); ++b) {
        if (members[b].empty()) continue;
        const double ox = min_x + static_cast<double>(b % blocks_x) * options.block;
        const double oy = min_y + static_cast<double>(b / blocks_x) * options.block;
        double ext_x = 0.0, ext_y = 0.0;
        for (std::size_t i : members[b]) {
            ext_x = std::max(ext_x, points[i][0] - ox);
            ext_y = std::max(ext_y, points[i][1] - oy);
        }
        const std::size_t nx = window_count(ext_x, options), ny = window_count(ext_y, options);
        std::vector<std::vector<std::size_t>> windows(nx * ny);
        for (std::size_t i : members[b]) {
            auto [x0, x1] = window_range(points[i][0] - ox, nx, options);
            auto [y0, y1] = window_range(points[i][1] - oy, ny, options);
            for (std::size_t wy = y0; wy < y1; ++wy)
                for (std::size_t wx = x0; wx < x1; ++wx) windows[wy * nx + wx].push_back(i);
        }
        for (std::size_t w = 0; w < windows.size(); ++w) {
            if (windows[w].empty()) continue;
            Subblock s;
            s.origin_x = ox + static_cast<double>(w % nx) * options.stride;
            s.origin_y = oy + static_cast<double>(w / nx) * options.stride;
            s.block_id = b;
            s.indices = std::move(windows[w]);
            plan.subblocks.push_back(std::move(s));
        }
    }
    return plan;
}

void write_manifest(const TilePlan& plan, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# granet tile manifest: block " << format_double(plan.options.block) << " sub "
        << format_double(plan.options.sub) << " stride " << format_double(plan.options.stride) << '\n';
    for (const auto& s : plan.subblocks) {
        out << format_double(s.origin_x) << ' ' << format_double(s.origin_y) << ' ' << s.indices.size() << '\n';
        for (std::size_t i = 0; i < s.indices.size(); ++i) out << (i ? " " : "") << s.indices[i];
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

TilePlan read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    TilePlan plan;
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (line.front() == '#') {
                std::istringstream hs(line.substr(1));
                std::string word;
                while (hs >> word) {
                    if (word == "block") hs >> plan.options.block;
                    else if (word == "sub") hs >> plan.options.sub;
                    else if (word == "stride") hs >> plan.options.stride;
                }
                continue;
            }
            return true;
        }
        return false;
    };
    while (next_line()) {
        Subblock s;
        std::size_t count = 0;
        std::istringstream hs(line);
        if (!(hs >> s.origin_x >> s.origin_y >> count)) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad subblock header");
        }
        if (!next_line()) throw ParseError(path.string() + ": missing index line for subblock");
        std::istringstream is(line);
        std::size_t idx = 0;
        while (is >> idx) s.indices.push_back(idx);
        if (s.indices.size() != count) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(count) +
                             " indices, found " + std::to_string(s.indices.size()));
        }
        plan.subblocks.push_back(std::move(s));
    }
    return plan;
}

std::vector<std::size_t> fuse_predictions(const TilePlan& plan, std::span<const Vec3> points,
                                          const std::vector<std::vector<std::size_t>>& predictions,
                                          std::size_t class_count) {
    if (predictions.size() != plan.subblocks.size()) {
        throw ContractError("fuse_predictions: one prediction list per subblock required");
    }
    std::vector<std::size_t> votes(points.size() * class_count, 0);
    // Per point: squared distance to the nearest voting center and, per class,
    // the nearest center that voted for it.
    std::vector<double> nearest_for_class(points.size() * class_count, std::numeric_limits<double>::infinity());
    for (std::size_t s = 0; s < plan.subblocks.size(); ++s) {
        const auto& sb = plan.subblocks[s];
        if (predictions[s].size() != sb.indices.size()) {
            throw ContractError("fuse_predictions: prediction count mismatch in subblock " + std::to_string(s));
        }
        const Vec3 c = sb.center(plan.options.sub);
        for (std::size_t j = 0; j < sb.indices.size(); ++j) {
            const std::size_t i = sb.indices[j];
            const std::size_t cls = predictions[s][j];
            if (cls >= class_count) throw RangeError("fuse_predictions: class out of range");
            ++votes[i * class_count + cls];
            const double dx = points[i][0] - c[0], dy = points[i][1] - c[1];
            auto& best = nearest_for_class[i * class_count + cls];
            best = std::min(best, dx * dx + dy * dy);
        }
    }
    std::vector<std::size_t> fused(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t best = class_count;
        for (std::size_t c = 0; c < class_count; ++c) {
            const std::size_t v = votes[i * class_count + c];
            if (v == 0) continue;
            if (best == class_count || v > votes[i * class_count + best] ||
                (v == votes[i * class_count + best] &&
                 nearest_for_class[i * class_count + c] < nearest_for_class[i * class_count + best])) {
                best = c;
            }
        }
        if (best == class_count) throw ContractError("fuse_predictions: point " + std::to_string(i) + " has no prediction");
        fused[i] = best;
    }
    return fused;
}

SampledBlock resample_fixed(std::span<const std::size_t> indices, std::size_t n, std::uint64_t seed,
                            std::size_t subblock) {
    if (indices.empty()) throw ContractError("resample_fixed: empty subblock");
    if (n == 0) throw ContractError("resample_fixed: sample size must be positive");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pool(indices.begin(), indices.end());
    SampledBlock out;
    out.subblock = subblock;
    out.seed = seed;
    if (pool.size() >= n) {
        // Partial Fisher-Yates.
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(n);
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, indices.size() - 1);
        while (pool.size() < n) pool.push_back(indices[pick(rng)]);
        std::shuffle(pool.begin(), pool.end(), rng);
    }
    out.indices = std::move(pool);
    out.primary = n;
    return out;
}

std::vector<SampledBlock> partition_fixed(std::span<const std::size_t> indices, std::size_t n, std::uint64_t seed,
                                          std::size_t subblock) {
    if (indices.empty()) throw ContractError("partition_fixed: empty subblock");
    if (n == 0) throw ContractError("partition_fixed: sample size must be positive");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pool(indices.begin(), indices.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<SampledBlock> out;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t start = 0; start < pool.size(); start += n) {
        SampledBlock b;
        b.subblock = subblock;
        b.seed = seed;
        const std::size_t end = std::min(pool.size(), start + n);
        b.indices.assign(pool.begin() + static_cast<std::ptrdiff_t>(start), pool.begin() + static_cast<std::ptrdiff_t>(end));
        b.primary = end - start;
        while (b.indices.size() < n) b.indices.push_back(pool[pick(rng)]);
        out.push_back(std::move(b));
    }
    return out;
}

InterpolationIndex interpolation_index(std::span<const Vec3> coarse, std::span<const Vec3> fine, std::size_t k) {
    if (k != 1 && k != 3) throw ContractError("interpolation_index: k must be 1 or 3");
    if (coarse.empty()) throw ContractError("interpolation_index: empty coarse set");
    InterpolationIndex out;
    out.neighbors = knn_search(coarse, fine, k);
    out.weights.assign(out.neighbors.indices.size(), 0.0);
    for (std::size_t r = 0; r < out.neighbors.rows(); ++r) {
        auto d = out.neighbors.row_distances(r);
        double* w = out.weights.data() + r * k;
        if (k == 1 || d[0] == 0.0) {
            w[0] = 1.0;
            continue;
        }
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += 1.0 / d[j];
        for (std::size_t j = 0; j < k; ++j) w[j] = (1.0 / d[j]) / total;
    }
    return out;
}

} // namespace granet::spatial
