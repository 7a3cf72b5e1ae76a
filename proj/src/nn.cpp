#include "granet/nn.hpp"

#include <cmath>

#include "granet/error.hpp"
#include "granet/ops.hpp"

namespace granet::nn {

Tensor Initializer::glorot(std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform({fan_in, fan_out}, bound);
}

Tensor Initializer::uniform(ad::Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor::from(std::move(shape), std::move(v), true);
}

std::size_t count_learnable(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& p : params)
        if (p.kind == ParamKind::Learnable) n += p.tensor.size();
    return n;
}

Tensor batch_norm(const Tensor& x, const BatchNormState& state, bool training) {
    if (x.rank() != 2) throw DimensionError("batch_norm needs [P x C], got " + ad::shape_str(x.shape()));
    const std::size_t p = x.dim(0), c = x.dim(1);
    if (state.gamma.size() != c) throw DimensionError("batch_norm: parameters do not match " + ad::shape_str(x.shape()));
    auto xv = x.values();
    auto gv = state.gamma.values();
    auto bv = state.beta.values();
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    if (training) {
        if (p < 2) {
            throw ContractError("batch normalization over a single position has degenerate variance; "
                                "disable normalization or use inference mode");
        }
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < c; ++j) mean[j] += xv[i * c + j];
        for (auto& m : mean) m /= static_cast<double>(p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double d = xv[i * c + j] - mean[j];
                var[j] += d * d;
            }
        for (auto& v : var) v /= static_cast<double>(p);
        auto rm = state.running_mean.mutable_values();
        auto rv = state.running_var.mutable_values();
        const double unbias = static_cast<double>(p) / static_cast<double>(p - 1);
        for (std::size_t j = 0; j < c; ++j) {
            rm[j] = state.momentum * rm[j] + (1.0 - state.momentum) * mean[j];
            rv[j] = state.momentum * rv[j] + (1.0 - state.momentum) * var[j] * unbias;
        }
    } else {
        auto rm = state.running_mean.values();
        auto rv = state.running_var.values();
        mean.assign(rm.begin(), rm.end());
        var.assign(rv.begin(), rv.end());
    }
    std::vector<double> inv_std(c);
    for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
    std::vector<double> xhat(p * c), out(p * c);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (xv[i * c + j] - mean[j]) * inv_std[j];
            xhat[i * c + j] = h;
            out[i * c + j] = gv[j] * h + bv[j];
        }
    return ad::make_result(
        "batch_norm", x.shape(), std::move(out), {x, state.gamma, state.beta},
        [p, c, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](ad::detail::Node& self) {
            auto& nx = *self.inputs[0];
            auto& ng = *self.inputs[1];
            auto& nb = *self.inputs[2];
            const auto& g = self.grad;
            std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    sum_dy[j] += g[i * c + j];
                    sum_dy_xhat[j] += g[i * c + j] * xhat[i * c + j];
                }
            if (ng.requires_grad)
                for (std::size_t j = 0; j < c; ++j) ng.grad[j] += sum_dy_xhat[j];
            if (nb.requires_grad)
                for (std::size_t j = 0; j < c; ++j) nb.grad[j] += sum_dy[j];
            if (!nx.requires_grad) return;
            const double inv_p = 1.0 / static_cast<double>(p);
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const double gamma = ng.value[j];
                    const double dy = g[i * c + j];
                    if (training) {
                        nx.grad[i * c + j] += gamma * inv_std[j] *
                                              (dy - inv_p * sum_dy[j] - xhat[i * c + j] * inv_p * sum_dy_xhat[j]);
                    } else {
                        nx.grad[i * c + j] += gamma * inv_std[j] * dy;
                    }
                }
        });
}

SharedMlp::SharedMlp(std::size_t in, std::size_t out, MlpOptions options, Initializer& init)
    : in_(in), out_(out), options_(options) {
    if (in == 0 || out == 0) throw ConfigError("shared MLP widths must be positive");
    weight = init.glorot(in, out);
    if (options.bias) bias = Tensor::zeros({out}, true);
    if (options.batch_norm) {
        bn.gamma = Tensor::full({out}, 1.0, true);
        bn.beta = Tensor::zeros({out}, true);
        bn.running_mean = Tensor::zeros({out});
        bn.running_var = Tensor::full({out}, 1.0);
    }
}

Tensor SharedMlp::forward(const Tensor& x, bool training) const {
    if (x.rank() == 0 || x.shape().back() != in_) {
        throw DimensionError("shared MLP expects last extent " + std::to_string(in_) + ", got " +
                             ad::shape_str(x.shape()));
    }
    ad::Shape out_shape = x.shape();
    out_shape.back() = out_;
    const std::size_t positions = x.size() / in_;
    Tensor h = x.rank() == 2 ? x : ad::reshape(x, {positions, in_});
    h = ad::matmul(h, weight);
    if (options_.bias) h = ad::add_bias(h, bias);
    if (options_.batch_norm) h = batch_norm(h, bn, training);
    if (options_.relu) h = ad::relu(h);
    return out_shape.size() == 2 ? h : ad::reshape(h, std::move(out_shape));
}

void SharedMlp::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight, ParamKind::Learnable});
    if (options_.bias) out.push_back({prefix + ".bias", bias, ParamKind::Learnable});
    if (options_.batch_norm) {
        out.push_back({prefix + ".bn.gamma", bn.gamma, ParamKind::Learnable});
        out.push_back({prefix + ".bn.beta", bn.beta, ParamKind::Learnable});
        out.push_back({prefix + ".bn.running_mean", bn.running_mean, ParamKind::Buffer});
        out.push_back({prefix + ".bn.running_var", bn.running_var, ParamKind::Buffer});
    }
}

} // namespace granet::nn
