#pragma once

#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

#include "granet/gra.hpp"
#include "test_util.hpp"

namespace granet::testing {

using ad::Tensor;

inline void fill(Tensor t, const std::vector<double>& v) {
    auto m = t.mutable_values();
    if (m.size() != v.size()) throw std::logic_error("fill: size mismatch");
    std::copy(v.begin(), v.end(), m.begin());
}

inline void randomize_bn(nn::SharedMlp& m, std::mt19937_64& rng) {
    if (!m.options().batch_norm) return;
    fill(m.bn.running_mean, random_values(rng, m.out_width(), -0.3, 0.3));
    fill(m.bn.running_var, random_values(rng, m.out_width(), 0.5, 2.0));
    fill(m.bn.gamma, random_values(rng, m.out_width(), 0.5, 1.5));
    fill(m.bn.beta, random_values(rng, m.out_width(), -0.2, 0.2));
}

inline void randomize(gra::RelationAttention& u, std::mt19937_64& rng) {
    for (nn::SharedMlp* m : {&u.alpha, &u.beta, &u.relation, &u.score_hidden, &u.score_out}) {
        randomize_bn(*m, rng);
        if (m->options().bias) fill(m->bias, random_values(rng, m->out_width(), -0.2, 0.2));
    }
}

// Small dyadic values keep every sum exact in floating point.
inline std::vector<double> dyadic(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> d(-4, 4);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng) / 4.0;
    return v;
}

// Relation weights that depend only on which half of r an entry sits in, so
// the relation embedding ignores node order.
inline void equivariant_weights(gra::RelationAttention& u, std::mt19937_64& rng) {
    for (nn::SharedMlp* m : {&u.alpha, &u.beta, &u.score_hidden, &u.score_out}) {
        fill(m->weight, dyadic(rng, m->weight.size()));
        if (m->options().bias) fill(m->bias, dyadic(rng, m->out_width()));
    }
    const std::size_t in = u.relation.in_width(), out = u.relation.out_width();
    const auto lo = dyadic(rng, out), hi = dyadic(rng, out);
    std::vector<double> w(in * out);
    for (std::size_t i = 0; i < in; ++i)
        for (std::size_t o = 0; o < out; ++o) w[i * out + o] = i < in / 2 ? lo[o] : hi[o];
    fill(u.relation.weight, w);
    fill(u.relation.bias, dyadic(rng, out));
}

inline std::vector<double> integer_values(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> d(-3, 3);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

} // namespace granet::testing
