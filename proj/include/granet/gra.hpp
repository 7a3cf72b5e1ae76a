#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "granet/nn.hpp"

namespace granet::gra {

using ad::Tensor;

enum class GraMode { Off, SraOnly, CraOnly, Mode1, Mode2, Mode3 };

// Config spellings: off, sra, cra, mode1, mode2, mode3.
std::string to_string(GraMode mode);
GraMode parse_gra_mode(const std::string& text);

// Parameters of one relation-aware attention unit. The same structure serves
// the spatial variant (nodes are the N rows of X, each C wide) and the
// channel variant (nodes are the C columns of X, each N long).
struct RelationAttention {
    nn::SharedMlp alpha;         // node_width -> embed
    nn::SharedMlp beta;          // node_width -> embed
    nn::SharedMlp relation;      // 2 * nodes -> relation width
    nn::SharedMlp score_hidden;  // 1 + relation width -> hidden, ReLU
    nn::SharedMlp score_out;     // hidden -> 1, linear; sigmoid applied on top
    std::size_t nodes = 0;
    std::size_t node_width = 0;

    RelationAttention() = default;
    RelationAttention(std::size_t nodes, std::size_t node_width, std::size_t reduction, bool batch_norm,
                      nn::Initializer& init);

    void collect(nn::ParamList& out, const std::string& prefix) const;
    // Zeroes the final score layer so every node scores sigmoid(0) = 0.5.
    void zero_score_head();
};

// A[i][j] = alpha(x_i) . beta(x_j) for node rows x: [nodes x width].
Tensor affinity(const Tensor& nodes, const nn::SharedMlp& alpha, const nn::SharedMlp& beta, bool training);
// Row i is concat(A[i][:], A[:][i]).
Tensor relation_features(const Tensor& affinity_matrix);
// Same as row i of relation_features, for a single node.
std::vector<double> relation_vector(const Tensor& affinity_matrix, std::size_t i);
// Row i is concat(max over width of alpha(x_i), relation(r_i)).
Tensor relation_augment(const Tensor& nodes, const Tensor& affinity_matrix, const RelationAttention& unit,
                        bool training);
// sigmoid(W2 relu(W1 y_i + b1) + b2) per node, [nodes x 1].
Tensor attention_scores(const Tensor& augmented, const RelationAttention& unit);
// Full chain for node rows: affinity, augmentation, scores.
Tensor node_scores(const Tensor& nodes, const RelationAttention& unit, bool training);

// X: [N x C]; row i scaled by its spatial score.
Tensor sra_forward(const Tensor& x, const RelationAttention& unit, bool training);
// X: [N x C]; column j scaled by its channel score.
Tensor cra_forward(const Tensor& x, const RelationAttention& unit, bool training);

class GraModule {
public:
    GraModule() = default;
    GraModule(GraMode mode, std::size_t points, std::size_t channels, std::size_t reduction, bool batch_norm,
              nn::Initializer& init);

    // Keeps the [N x C] shape in every mode.
    Tensor forward(const Tensor& x, bool training) const;
    GraMode mode() const { return mode_; }
    void collect(nn::ParamList& out, const std::string& prefix) const;

    std::optional<RelationAttention> spatial;
    std::optional<RelationAttention> channel;
    std::optional<nn::SharedMlp> parallel_fusion;  // mode 3: 2C -> C

private:
    GraMode mode_ = GraMode::Off;
    std::size_t points_ = 0, channels_ = 0;
};

} // namespace granet::gra
