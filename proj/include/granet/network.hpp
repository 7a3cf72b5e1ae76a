#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "granet/gra.hpp"
#include "granet/ini.hpp"
#include "granet/losda.hpp"
#include "granet/nn.hpp"
#include "granet/spatial.hpp"

namespace granet::net {

using ad::Tensor;

inline constexpr std::size_t kEncoderLevels = 3;

struct NetworkConfig {
    std::size_t class_count = 9;
    std::size_t input_width = 5;  // x, y, z, intensity, return number
    std::size_t k = 32;
    std::size_t points_per_block = 4096;
    std::size_t decimation = 4;
    std::array<std::size_t, kEncoderLevels> encoder_widths{64, 128, 256};
    std::size_t lift_width = 32;
    gra::GraMode gra_mode = gra::GraMode::Mode1;
    std::size_t gra_reduction = 8;
    losda::LosdaFlags losda;
    std::size_t interpolation_k = 1;
    bool batch_norm = true;
    std::uint64_t seed = 1;

    // Throws ConfigError on an inconsistent configuration.
    void validate() const;
    // Point count at every level, input first: N, ceil(N/r), ceil(N/r^2), ...
    std::array<std::size_t, kEncoderLevels + 1> level_sizes() const;

    // 64 points, K = 4, widths [8, 16, 32], no normalization layers.
    static NetworkConfig miniature();

    void write_to(IniDocument& doc, const std::string& section = "network") const;
    static NetworkConfig read_from(const IniDocument& doc, const std::string& section = "network");
};

// Ablation models of the local encoder: A = SDE, B = DFE, C = SDE + DFE,
// D = C + EDE, E = D + attention pooling. GRA is switched off for all five.
NetworkConfig build_ablation(char tag, NetworkConfig base);

// One network input: block-local coordinates plus the 5D point vectors.
struct Block {
    std::vector<Vec3> positions;
    std::vector<std::array<double, 5>> features;
    std::vector<std::size_t> labels;          // empty when unlabeled
    std::vector<std::size_t> source_indices;  // rows of the parent cloud
    std::size_t subblock = 0;
    std::size_t scored = 0;  // leading points that count towards metrics

    std::size_t size() const { return positions.size(); }
};

// Geometry-only part of a forward pass; depends on positions and config only.
struct Pyramid {
    std::array<std::vector<Vec3>, kEncoderLevels + 1> positions;
    // sampled[l]: indices into level l of the level l+1 points (FPS order).
    std::array<std::vector<std::size_t>, kEncoderLevels> sampled;
    // groups[l]: K neighbors in level l of every level l+1 point.
    std::array<spatial::NeighborIndex, kEncoderLevels> groups;
    // upsample[l]: for every level l point, its neighbors in level l+1.
    std::array<spatial::InterpolationIndex, kEncoderLevels> upsample;

    std::array<std::size_t, kEncoderLevels + 1> counts() const;
};

Pyramid build_pyramid(std::span<const Vec3> positions, const NetworkConfig& config);

struct ParamGroup {
    std::string name;
    std::size_t count = 0;
};

class GraNetModel {
public:
    explicit GraNetModel(NetworkConfig config);

    // Per-point class scores [N x class_count].
    Tensor forward(const Block& block, const Pyramid& pyramid, bool training) const;
    Tensor forward(const Block& block, bool training) const;

    const NetworkConfig& config() const { return config_; }
    // Every tensor (learnables and normalization buffers) in a fixed order.
    nn::ParamList parameters() const;
    std::vector<Tensor> learnable() const;
    std::size_t param_count() const;
    std::vector<ParamGroup> param_breakdown() const;

    nn::SharedMlp lift;
    std::array<losda::LosdaLayer, kEncoderLevels> encoders;
    // decoders[l] runs at level l: GRA over the concatenated features, then
    // a shared MLP back to the skip width of that level.
    std::array<gra::GraModule, kEncoderLevels> attention;
    std::array<nn::SharedMlp, kEncoderLevels> propagate;
    nn::SharedMlp head;

private:
    NetworkConfig config_;
};

// Sized binary container: magic, version byte, payload size, config text,
// then (name, shape, raw little-endian doubles) per tensor.
void save_checkpoint(const GraNetModel& model, const std::filesystem::path& path);
GraNetModel load_checkpoint(const std::filesystem::path& path);

} // namespace granet::net
