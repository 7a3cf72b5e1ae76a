#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "granet/tensor.hpp"

namespace granet::nn {

using ad::Tensor;

// Weight initializer: uniform in +-sqrt(6 / (fan_in + fan_out)), seeded.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}
    Tensor glorot(std::size_t fan_in, std::size_t fan_out);
    Tensor uniform(ad::Shape shape, double bound);
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

enum class ParamKind { Learnable, Buffer };

struct NamedTensor {
    std::string name;
    Tensor tensor;
    ParamKind kind = ParamKind::Learnable;
};

using ParamList = std::vector<NamedTensor>;

std::size_t count_learnable(const ParamList& params);

struct BatchNormState {
    Tensor gamma, beta;                      // learnable
    mutable Tensor running_mean, running_var;  // buffers, updated in training mode
    double momentum = 0.9;
    double eps = 1e-5;
};

// Normalizes each column of x [P x C] over its P positions. In training mode
// batch statistics are used and the running statistics move towards them
// (running = momentum * running + (1 - momentum) * batch); in inference mode
// the running statistics are used.
Tensor batch_norm(const Tensor& x, const BatchNormState& state, bool training);

struct MlpOptions {
    bool batch_norm = true;
    bool relu = true;
    bool bias = true;
};

// Per-position affine map, optional batch normalization, optional ReLU; the
// same weights are applied at every position of the leading axes.
class SharedMlp {
public:
    SharedMlp() = default;
    SharedMlp(std::size_t in, std::size_t out, MlpOptions options, Initializer& init);

    Tensor forward(const Tensor& x, bool training) const;
    void collect(ParamList& out, const std::string& prefix) const;

    std::size_t in_width() const { return in_; }
    std::size_t out_width() const { return out_; }
    const MlpOptions& options() const { return options_; }

    Tensor weight;  // [in x out]
    Tensor bias;    // [out], undefined when options.bias is false
    BatchNormState bn;

private:
    std::size_t in_ = 0, out_ = 0;
    MlpOptions options_;
};

} // namespace granet::nn
