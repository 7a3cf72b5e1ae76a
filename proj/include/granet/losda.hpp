#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "granet/nn.hpp"
#include "granet/pointcloud.hpp"
#include "granet/spatial.hpp"

namespace granet::losda {

using ad::Tensor;

// Which local encodings are active. Ablation models A-E are subsets.
struct LosdaFlags {
    bool sde = true;
    bool dfe = true;
    bool ede = true;
    bool attention_pool = true;
    // Encode z_j - z_i instead of the neighbor's raw z.
    bool relative_ede = false;

    bool operator==(const LosdaFlags&) const = default;
};

inline constexpr std::size_t kSdeWidth = 10;

// [p_i, p_j, p_i - p_j, |p_i - p_j|].
std::array<double, kSdeWidth> sde_pre_embedding(const Vec3& center, const Vec3& neighbor);

// The three 2-tap convolutions of the orientation encoder. Slot s of a cube
// holds octant s = 4x + 2y + z; each stage merges the two halves of one axis
// with a [2d x d] weight (rows 0..d-1 act on the negative half) and a ReLU.
struct OrientationConv {
    nn::SharedMlp stage_x, stage_y, stage_z;

    OrientationConv() = default;
    OrientationConv(std::size_t d, nn::Initializer& init);
    std::size_t width() const { return stage_z.out_width(); }
};

// cube: [N*8 x d], rows n*8 + slot. Returns [N x d]. Shape trace per point:
// 2x2x2xd -> 1x2x2xd -> 1x1x2xd -> 1x1x1xd.
Tensor orientation_conv(const Tensor& cube, const OrientationConv& conv);

// features: [N x K x D]. Scores are a per-channel softmax over K of a shared
// linear map; output row i is sum_j features[i][j] * scores[i][j].
Tensor attention_pool(const Tensor& features, const nn::SharedMlp& score_map);
// Scores alone, [N x K x D].
Tensor attention_scores(const Tensor& features, const nn::SharedMlp& score_map);

// Geometry of one encoder level: centers are rows of `support`.
struct LocalNeighborhood {
    std::span<const Vec3> support;
    std::span<const std::size_t> centers;  // support index of every center
    const spatial::NeighborIndex* neighbors = nullptr;  // one row per center, over support
};

class LosdaLayer {
public:
    LosdaLayer() = default;
    // d_in: width of incoming per-point features, d: width of each local
    // encoding, d_out: width of the fused output.
    LosdaLayer(std::size_t d_in, std::size_t d, std::size_t d_out, LosdaFlags flags, bool batch_norm,
               nn::Initializer& init);

    // support_features: [support x d_in]. Returns [centers x d_out].
    Tensor forward(const Tensor& support_features, const LocalNeighborhood& hood, bool training) const;

    // Width of the per-neighbor feature f_hat (0 when no per-neighbor path).
    std::size_t neighbor_width() const { return neighbor_width_; }
    const LosdaFlags& flags() const { return flags_; }
    void collect(nn::ParamList& out, const std::string& prefix) const;

    // Learnable pieces, exposed for tests and gradient checks.
    nn::SharedMlp sde_mlp;       // 10 -> d
    nn::SharedMlp ede_mlp;       // 1 -> d
    nn::SharedMlp dfe_project;   // d_in -> d, fills the octant cube
    OrientationConv dfe_conv;
    nn::SharedMlp attention;     // neighbor_width -> neighbor_width, linear
    nn::SharedMlp fusion;        // pooled (+ dfe) -> d_out

private:
    std::size_t d_in_ = 0, d_ = 0, d_out_ = 0, neighbor_width_ = 0;
    LosdaFlags flags_;
};

// Per-neighbor constant inputs for a neighborhood, rows ordered (center,
// neighbor) after canonical sorting of each row by (distance, index).
struct NeighborhoodInputs {
    std::size_t centers = 0, k = 0;
    std::vector<std::size_t> neighbor_rows;  // centers * k support indices
    std::vector<double> sde;                 // centers * k * 10
    std::vector<double> z;                   // centers * k
    std::vector<std::size_t> octant_rows;    // centers * 8 support indices
};

NeighborhoodInputs gather_neighborhood(const LocalNeighborhood& hood, bool relative_z);

} // namespace granet::losda
