#include "granet/gradsuite.hpp"

#include <cmath>
#include <random>

#include "granet/error.hpp"
#include "granet/gra.hpp"
#include "granet/gradcheck.hpp"
#include "granet/losda.hpp"
#include "granet/network.hpp"
#include "granet/ops.hpp"
#include "granet/training.hpp"

namespace granet {

namespace {

using ad::Tensor;

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}
    std::vector<double> values(std::size_t n, double lo = -1.0, double hi = 1.0) {
        std::uniform_real_distribution<double> u(lo, hi);
        std::vector<double> v(n);
        for (auto& x : v) x = u(rng_);
        return v;
    }
    Tensor tensor(ad::Shape shape, bool grad = true) {
        const std::size_t n = ad::shape_size(shape);
        return Tensor::from(std::move(shape), values(n), grad);
    }
    std::vector<Vec3> points(std::size_t n, double extent) {
        std::vector<Vec3> p(n);
        std::uniform_real_distribution<double> u(0.0, extent);
        for (auto& q : p) q = {u(rng_), u(rng_), u(rng_)};
        return p;
    }
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Random projection of the output to a scalar, so no gradient cancels.
Tensor project(const Tensor& out, const Tensor& r) { return ad::sum(ad::mul(out, r)); }

// Zero-initialized biases put pre-activations exactly on the ReLU kink for
// inputs that are exactly zero, where a central difference sees half the
// slope. Random biases move the probe point off that set.
void jitter_biases(const nn::ParamList& params, Sampler& s) {
    for (const auto& p : params) {
        if (p.kind != nn::ParamKind::Learnable || !p.name.ends_with(".bias")) continue;
        Tensor t = p.tensor;
        const auto noise = s.values(t.size(), -0.1, 0.1);
        auto v = t.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise[i];
    }
}

std::vector<Tensor> learnables(const nn::ParamList& params, Sampler& s) {
    jitter_biases(params, s);
    std::vector<Tensor> out;
    for (const auto& p : params)
        if (p.kind == nn::ParamKind::Learnable) out.push_back(p.tensor);
    return out;
}

GradSuiteResult finish(const std::string& name, const std::function<Tensor()>& loss, std::vector<Tensor> probed,
                       std::size_t max_coords = 0) {
    ad::GradCheckOptions opt;
    opt.max_coords_per_tensor = max_coords;
    GradSuiteResult r{name, 0.0, probed.size()};
    const auto rep = ad::finite_diff_report(loss, std::move(probed), opt);
    r.max_error = rep.max_error;
    r.checked = rep.checked;
    r.skipped = rep.skipped;
    return r;
}

} // namespace

const std::vector<std::string>& gradcheck_modules() {
    static const std::vector<std::string> names = {"shared_mlp", "sde",  "ede",   "orientation_conv",
                                                   "attention_pool", "losda", "sra", "cra",
                                                   "mode1",      "mode2", "mode3", "full"};
    return names;
}

GradSuiteResult run_gradcheck(const std::string& module, std::uint64_t seed) {
    Sampler s(seed);
    nn::Initializer init(seed + 100);

    if (module == "shared_mlp") {
        nn::SharedMlp mlp(5, 6, {.batch_norm = true, .relu = true, .bias = true}, init);
        Tensor x = s.tensor({12, 5});
        Tensor r = s.tensor({12, 6}, false);
        std::vector<Tensor> probed = learnables([&] { nn::ParamList p; mlp.collect(p, "m"); return p; }(), s);
        probed.push_back(x);
        return finish(module, [&] { return project(mlp.forward(x, true), r); }, probed);
    }
    if (module == "sde" || module == "ede") {
        const std::size_t n = 6, k = 4, d = 8;
        const bool sde = module == "sde";
        const std::size_t width = sde ? losda::kSdeWidth : 1;
        nn::SharedMlp mlp(width, d, {.batch_norm = true, .relu = true, .bias = true}, init);
        // Pre-embeddings of random neighborhoods as the probed input.
        std::vector<double> pre;
        auto pts = s.points(n * (k + 1), 5.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 1; j <= k; ++j) {
                if (sde) {
                    auto e = losda::sde_pre_embedding(pts[i * (k + 1)], pts[i * (k + 1) + j]);
                    pre.insert(pre.end(), e.begin(), e.end());
                } else {
                    pre.push_back(pts[i * (k + 1) + j][2]);
                }
            }
        Tensor x = Tensor::from({n, k, width}, pre, true);
        Tensor r = s.tensor({n, k, d}, false);
        std::vector<Tensor> probed = learnables([&] { nn::ParamList p; mlp.collect(p, "m"); return p; }(), s);
        probed.push_back(x);
        return finish(module, [&] { return project(ad::max_pool(mlp.forward(x, true), 1), ad::max_pool(r, 1)); },
                      probed);
    }
    if (module == "orientation_conv") {
        const std::size_t n = 5, d = 6;
        losda::OrientationConv conv(d, init);
        Tensor cube = s.tensor({n * 8, d});
        Tensor r = s.tensor({n, d}, false);
        nn::ParamList p;
        conv.stage_x.collect(p, "x");
        conv.stage_y.collect(p, "y");
        conv.stage_z.collect(p, "z");
        auto probed = learnables(p, s);
        probed.push_back(cube);
        return finish(module, [&] { return project(losda::orientation_conv(cube, conv), r); }, probed);
    }
    if (module == "attention_pool") {
        const std::size_t n = 6, k = 8, d = 7;
        nn::SharedMlp map(d, d, {.batch_norm = false, .relu = false, .bias = false}, init);
        Tensor f = s.tensor({n, k, d});
        Tensor r = s.tensor({n, d}, false);
        return finish(module, [&] { return project(losda::attention_pool(f, map), r); }, {f, map.weight});
    }
    if (module == "losda") {
        const std::size_t support = 16, centers = 8, k = 6;
        auto pts = s.points(support, 4.0);
        std::vector<std::size_t> idx(centers);
        for (std::size_t i = 0; i < centers; ++i) idx[i] = 2 * i;
        std::vector<Vec3> cpts;
        for (std::size_t i : idx) cpts.push_back(pts[i]);
        const auto nbr = spatial::knn_search(pts, cpts, k);
        losda::LosdaLayer layer(5, 4, 7, losda::LosdaFlags{}, true, init);
        Tensor feats = s.tensor({support, 5});
        Tensor r = s.tensor({centers, 7}, false);
        losda::LocalNeighborhood hood{pts, idx, &nbr};
        nn::ParamList p;
        layer.collect(p, "l");
        auto probed = learnables(p, s);
        probed.push_back(feats);
        return finish(module, [&] { return project(layer.forward(feats, hood, true), r); }, probed);
    }
    if (module == "sra" || module == "cra" || module == "mode1" || module == "mode2" || module == "mode3") {
        const std::size_t n = 10, c = 8;
        const auto mode = module == "sra"   ? gra::GraMode::SraOnly
                          : module == "cra" ? gra::GraMode::CraOnly
                                            : gra::parse_gra_mode(module);
        gra::GraModule g(mode, n, c, 2, true, init);
        Tensor x = s.tensor({n, c});
        Tensor r = s.tensor({n, c}, false);
        nn::ParamList p;
        g.collect(p, "g");
        auto probed = learnables(p, s);
        probed.push_back(x);
        return finish(module, [&] { return project(g.forward(x, true), r); }, probed);
    }
    if (module == "full") {
        auto cfg = net::NetworkConfig::miniature();
        cfg.seed = seed;
        net::GraNetModel model(cfg);
        net::Block block;
        block.positions = s.points(cfg.points_per_block, 10.0);
        std::uniform_int_distribution<std::size_t> cls(0, cfg.class_count - 1);
        for (const auto& p : block.positions) {
            const auto extra = s.values(2, 0.0, 1.0);
            block.features.push_back({p[0], p[1], p[2], extra[0], 1.0 + std::floor(3.0 * extra[1])});
            block.labels.push_back(cls(s.rng()));
        }
        const auto pyramid = net::build_pyramid(block.positions, cfg);
        return finish(
            module,
            [&] { return train::cross_entropy_loss(model.forward(block, pyramid, true), block.labels); },
            learnables(model.parameters(), s));
    }
    throw ConfigError("unknown gradcheck module '" + module + "'");
}

} // namespace granet
