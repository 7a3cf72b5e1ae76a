#include "granet/gra.hpp"

#include "granet/error.hpp"
#include "granet/ops.hpp"

namespace granet::gra {

std::string to_string(GraMode mode) {
    switch (mode) {
        case GraMode::Off: return "off";
        case GraMode::SraOnly: return "sra";
        case GraMode::CraOnly: return "cra";
        case GraMode::Mode1: return "mode1";
        case GraMode::Mode2: return "mode2";
        case GraMode::Mode3: return "mode3";
    }
    return "off";
}

GraMode parse_gra_mode(const std::string& text) {
    for (auto m : {GraMode::Off, GraMode::SraOnly, GraMode::CraOnly, GraMode::Mode1, GraMode::Mode2, GraMode::Mode3}) {
        if (to_string(m) == text) return m;
    }
    throw ConfigError("unknown gra_mode '" + text + "' (expected off, sra, cra, mode1, mode2 or mode3)");
}

namespace {

std::size_t reduced(std::size_t width, std::size_t reduction) { return std::max<std::size_t>(1, (width + reduction - 1) / reduction); }

} // namespace

RelationAttention::RelationAttention(std::size_t nodes_, std::size_t node_width_, std::size_t reduction,
                                     bool batch_norm, nn::Initializer& init)
    : nodes(nodes_), node_width(node_width_) {
    if (nodes == 0 || node_width == 0) throw ConfigError("relation attention needs positive sizes");
    if (reduction == 0) throw ConfigError("GRA reduction ratio must be positive");
    const nn::MlpOptions embed{.batch_norm = batch_norm, .relu = true, .bias = true};
    const std::size_t embed_width = reduced(node_width, reduction);
    const std::size_t relation_width = reduced(2 * nodes, reduction);
    const std::size_t hidden = reduced(1 + relation_width, reduction);
    alpha = nn::SharedMlp(node_width, embed_width, embed, init);
    beta = nn::SharedMlp(node_width, embed_width, embed, init);
    relation = nn::SharedMlp(2 * nodes, relation_width, embed, init);
    score_hidden = nn::SharedMlp(1 + relation_width, hidden, {.batch_norm = false, .relu = true, .bias = true}, init);
    score_out = nn::SharedMlp(hidden, 1, {.batch_norm = false, .relu = false, .bias = true}, init);
}

void RelationAttention::collect(nn::ParamList& out, const std::string& prefix) const {
    alpha.collect(out, prefix + ".alpha");
    beta.collect(out, prefix + ".beta");
    relation.collect(out, prefix + ".relation");
    score_hidden.collect(out, prefix + ".score_hidden");
    score_out.collect(out, prefix + ".score_out");
}

void RelationAttention::zero_score_head() {
    auto w = score_out.weight;
    for (auto& v : w.mutable_values()) v = 0.0;
    auto b = score_out.bias;
    for (auto& v : b.mutable_values()) v = 0.0;
}

Tensor affinity(const Tensor& nodes, const nn::SharedMlp& alpha, const nn::SharedMlp& beta, bool training) {
    return ad::matmul(alpha.forward(nodes, training), ad::transpose(beta.forward(nodes, training)));
}

Tensor relation_features(const Tensor& a) { return ad::concat({a, ad::transpose(a)}, 1); }

std::vector<double> relation_vector(const Tensor& a, std::size_t i) {
    const std::size_t n = a.dim(0);
    if (a.rank() != 2 || a.dim(1) != n) throw DimensionError("affinity matrix must be square");
    if (i >= n) throw RangeError("node index " + std::to_string(i) + " out of range");
    std::vector<double> r(2 * n);
    for (std::size_t j = 0; j < n; ++j) {
        r[j] = a.at(i, j);
        r[n + j] = a.at(j, i);
    }
    return r;
}

namespace {

Tensor augment_embedded(const Tensor& embedded, const Tensor& a, const RelationAttention& unit, bool training) {
    const std::size_t n = embedded.dim(0);
    Tensor pooled = ad::reshape(ad::max_pool(embedded, 1), {n, 1});
    Tensor rel = unit.relation.forward(relation_features(a), training);
    return ad::concat({pooled, rel}, 1);
}

} // namespace

Tensor relation_augment(const Tensor& nodes, const Tensor& a, const RelationAttention& unit, bool training) {
    return augment_embedded(unit.alpha.forward(nodes, training), a, unit, training);
}

Tensor attention_scores(const Tensor& augmented, const RelationAttention& unit) {
    return ad::sigmoid(unit.score_out.forward(unit.score_hidden.forward(augmented, false), false));
}

Tensor node_scores(const Tensor& nodes, const RelationAttention& unit, bool training) {
    if (nodes.rank() != 2 || nodes.dim(0) != unit.nodes || nodes.dim(1) != unit.node_width) {
        throw DimensionError("relation attention built for " + std::to_string(unit.nodes) + " nodes of width " +
                             std::to_string(unit.node_width) + ", got " + ad::shape_str(nodes.shape()));
    }
    Tensor embedded = unit.alpha.forward(nodes, training);
    Tensor a = ad::matmul(embedded, ad::transpose(unit.beta.forward(nodes, training)));
    return attention_scores(augment_embedded(embedded, a, unit, training), unit);
}

Tensor sra_forward(const Tensor& x, const RelationAttention& unit, bool training) {
    return ad::scale_rows(x, node_scores(x, unit, training));
}

Tensor cra_forward(const Tensor& x, const RelationAttention& unit, bool training) {
    return ad::scale_cols(x, node_scores(ad::transpose(x), unit, training));
}

GraModule::GraModule(GraMode mode, std::size_t points, std::size_t channels, std::size_t reduction, bool batch_norm,
                     nn::Initializer& init)
    : mode_(mode), points_(points), channels_(channels) {
    const bool use_sra = mode != GraMode::Off && mode != GraMode::CraOnly;
    const bool use_cra = mode != GraMode::Off && mode != GraMode::SraOnly;
    // Channel nodes are the columns: `channels` nodes, each `points` long.
    if (use_cra) channel.emplace(channels, points, reduction, batch_norm, init);
    if (use_sra) spatial.emplace(points, channels, reduction, batch_norm, init);
    if (mode == GraMode::Mode3) {
        parallel_fusion.emplace(2 * channels, channels, nn::MlpOptions{.batch_norm = batch_norm, .relu = true, .bias = true},
                                init);
    }
}

Tensor GraModule::forward(const Tensor& x, bool training) const {
    if (mode_ != GraMode::Off && (x.rank() != 2 || x.dim(0) != points_ || x.dim(1) != channels_)) {
        throw DimensionError("GRA built for [" + std::to_string(points_) + "x" + std::to_string(channels_) +
                             "], got " + ad::shape_str(x.shape()));
    }
    switch (mode_) {
        case GraMode::Off: return x;
        case GraMode::SraOnly: return sra_forward(x, *spatial, training);
        case GraMode::CraOnly: return cra_forward(x, *channel, training);
        case GraMode::Mode1: return sra_forward(cra_forward(x, *channel, training), *spatial, training);
        case GraMode::Mode2: return cra_forward(sra_forward(x, *spatial, training), *channel, training);
        case GraMode::Mode3:
            return parallel_fusion->forward(
                ad::concat({sra_forward(x, *spatial, training), cra_forward(x, *channel, training)}, 1), training);
    }
    return x;
}

void GraModule::collect(nn::ParamList& out, const std::string& prefix) const {
    if (spatial) spatial->collect(out, prefix + ".sra");
    if (channel) channel->collect(out, prefix + ".cra");
    if (parallel_fusion) parallel_fusion->collect(out, prefix + ".fusion");
}

} // namespace granet::gra
