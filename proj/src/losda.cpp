#include "granet/losda.hpp"

#include <algorithm>
#include <cmath>

#include "granet/error.hpp"
#include "granet/ops.hpp"

namespace granet::losda {

std::array<double, kSdeWidth> sde_pre_embedding(const Vec3& c, const Vec3& n) {
    const double dx = c[0] - n[0], dy = c[1] - n[1], dz = c[2] - n[2];
    return {c[0], c[1], c[2], n[0], n[1], n[2], dx, dy, dz, std::sqrt(dx * dx + dy * dy + dz * dz)};
}

OrientationConv::OrientationConv(std::size_t d, nn::Initializer& init)
    : stage_x(2 * d, d, {.batch_norm = false, .relu = true, .bias = true}, init),
      stage_y(2 * d, d, {.batch_norm = false, .relu = true, .bias = true}, init),
      stage_z(2 * d, d, {.batch_norm = false, .relu = true, .bias = true}, init) {}

namespace {

// Merges row pairs (base + lo_offset, base + hi_offset) for each group of
// `group` rows: output row g*out_per_group + r concatenates the two rows.
Tensor merge_halves(const Tensor& rows, std::size_t groups, std::size_t group, std::size_t half) {
    std::vector<std::size_t> lo, hi;
    lo.reserve(groups * half);
    hi.reserve(groups * half);
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t r = 0; r < half; ++r) {
            lo.push_back(g * group + r);
            hi.push_back(g * group + half + r);
        }
    return ad::concat({ad::gather_rows(rows, lo), ad::gather_rows(rows, hi)}, 1);
}

} // namespace

Tensor orientation_conv(const Tensor& cube, const OrientationConv& conv) {
    const std::size_t d = conv.width();
    if (cube.rank() != 2 || cube.dim(1) != d || cube.dim(0) % 8 != 0) {
        throw DimensionError("orientation_conv expects [N*8 x " + std::to_string(d) + "], got " +
                             ad::shape_str(cube.shape()));
    }
    const std::size_t n = cube.dim(0) / 8;
    // Slot 4x + 2y + z: the x halves are slots 0-3 and 4-7.
    Tensor vx = conv.stage_x.forward(merge_halves(cube, n, 8, 4), false);  // rows n*4 + (2y + z)
    Tensor vxy = conv.stage_y.forward(merge_halves(vx, n, 4, 2), false);   // rows n*2 + z
    return conv.stage_z.forward(merge_halves(vxy, n, 2, 1), false);        // rows n
}

Tensor attention_scores(const Tensor& features, const nn::SharedMlp& score_map) {
    if (features.rank() != 3) throw DimensionError("attention pooling expects [N x K x D]");
    return ad::softmax(score_map.forward(features, false), 1);
}

Tensor attention_pool(const Tensor& features, const nn::SharedMlp& score_map) {
    return ad::sum(ad::mul(features, attention_scores(features, score_map)), 1);
}

NeighborhoodInputs gather_neighborhood(const LocalNeighborhood& hood, bool relative_z) {
    if (hood.neighbors == nullptr) throw ContractError("LoSDA neighborhood without a neighbor index");
    const auto& nbr = *hood.neighbors;
    if (nbr.rows() != hood.centers.size()) {
        throw ContractError("neighbor index has " + std::to_string(nbr.rows()) + " rows for " +
                            std::to_string(hood.centers.size()) + " centers");
    }
    if (nbr.k == 0) throw ContractError("LoSDA needs K >= 1");
    NeighborhoodInputs in;
    in.centers = hood.centers.size();
    in.k = nbr.k;
    in.neighbor_rows.reserve(in.centers * in.k);
    in.sde.reserve(in.centers * in.k * kSdeWidth);
    in.z.reserve(in.centers * in.k);
    in.octant_rows.reserve(in.centers * 8);
    std::vector<std::pair<double, std::size_t>> row;
    for (std::size_t i = 0; i < in.centers; ++i) {
        const std::size_t ci = hood.centers[i];
        if (ci >= hood.support.size()) throw RangeError("center index outside the support set");
        const Vec3& c = hood.support[ci];
        row.clear();
        for (std::size_t j : nbr.row(i)) {
            if (j >= hood.support.size()) throw RangeError("neighbor index outside the support set");
            row.emplace_back(spatial::squared_distance(c, hood.support[j]), j);
        }
        // Canonical order makes every reduction below independent of how the
        // row was listed.
        std::sort(row.begin(), row.end());
        for (const auto& [d2, j] : row) {
            in.neighbor_rows.push_back(j);
            auto pre = sde_pre_embedding(c, hood.support[j]);
            in.sde.insert(in.sde.end(), pre.begin(), pre.end());
            in.z.push_back(relative_z ? hood.support[j][2] - c[2] : hood.support[j][2]);
        }
        auto slots = spatial::octant_select(hood.support, ci, nbr.row(i));
        in.octant_rows.insert(in.octant_rows.end(), slots.begin(), slots.end());
    }
    return in;
}

LosdaLayer::LosdaLayer(std::size_t d_in, std::size_t d, std::size_t d_out, LosdaFlags flags, bool batch_norm,
                       nn::Initializer& init)
    : d_in_(d_in), d_(d), d_out_(d_out), flags_(flags) {
    if (!flags.sde && !flags.dfe) throw ConfigError("LoSDA needs at least one of SDE or DFE enabled");
    if (d_in == 0 || d == 0 || d_out == 0) throw ConfigError("LoSDA widths must be positive");
    const nn::MlpOptions mlp{.batch_norm = batch_norm, .relu = true, .bias = true};
    const bool per_neighbor = flags.sde || flags.ede;
    if (flags.sde) sde_mlp = nn::SharedMlp(kSdeWidth, d, mlp, init);
    if (flags.ede) ede_mlp = nn::SharedMlp(1, d, mlp, init);
    if (per_neighbor) {
        neighbor_width_ = (flags.sde ? d : 0) + (flags.ede ? d : 0) + d_in;
        if (flags.attention_pool) {
            attention = nn::SharedMlp(neighbor_width_, neighbor_width_,
                                      {.batch_norm = false, .relu = false, .bias = false}, init);
        }
    }
    if (flags.dfe) {
        dfe_project = nn::SharedMlp(d_in, d, mlp, init);
        dfe_conv = OrientationConv(d, init);
    }
    fusion = nn::SharedMlp(neighbor_width_ + (flags.dfe ? d : 0), d_out, mlp, init);
}

Tensor LosdaLayer::forward(const Tensor& support_features, const LocalNeighborhood& hood, bool training) const {
    if (support_features.rank() != 2 || support_features.dim(1) != d_in_ ||
        support_features.dim(0) != hood.support.size()) {
        throw DimensionError("LoSDA expects features [" + std::to_string(hood.support.size()) + "x" +
                             std::to_string(d_in_) + "], got " + ad::shape_str(support_features.shape()));
    }
    const auto in = gather_neighborhood(hood, flags_.relative_ede);
    const std::size_t n = in.centers, k = in.k;
    std::vector<Tensor> fused_parts;

    if (neighbor_width_ > 0) {
        std::vector<Tensor> parts;
        if (flags_.sde) parts.push_back(sde_mlp.forward(Tensor::from({n * k, kSdeWidth}, in.sde), training));
        if (flags_.ede) parts.push_back(ede_mlp.forward(Tensor::from({n * k, 1}, in.z), training));
        parts.push_back(ad::gather_rows(support_features, in.neighbor_rows));
        Tensor f_hat = ad::reshape(ad::concat(parts, 1), {n, k, neighbor_width_});
        fused_parts.push_back(flags_.attention_pool ? attention_pool(f_hat, attention) : ad::max_pool(f_hat, 1));
    }
    if (flags_.dfe) {
        Tensor projected = dfe_project.forward(support_features, training);
        fused_parts.push_back(orientation_conv(ad::gather_rows(projected, in.octant_rows), dfe_conv));
    }
    Tensor fused = fused_parts.size() == 1 ? fused_parts.front() : ad::concat(fused_parts, 1);
    return fusion.forward(fused, training);
}

void LosdaLayer::collect(nn::ParamList& out, const std::string& prefix) const {
    if (flags_.sde) sde_mlp.collect(out, prefix + ".sde");
    if (flags_.ede) ede_mlp.collect(out, prefix + ".ede");
    if (flags_.dfe) {
        dfe_project.collect(out, prefix + ".dfe.project");
        dfe_conv.stage_x.collect(out, prefix + ".dfe.conv_x");
        dfe_conv.stage_y.collect(out, prefix + ".dfe.conv_y");
        dfe_conv.stage_z.collect(out, prefix + ".dfe.conv_z");
    }
    if (neighbor_width_ > 0 && flags_.attention_pool) attention.collect(out, prefix + ".attention");
    fusion.collect(out, prefix + ".fusion");
}

} // namespace granet::losda
