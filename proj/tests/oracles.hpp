#pragma once

// Plain-loop reference implementations used to check the tensor versions.
// Everything runs in inference mode.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "granet/gra.hpp"
#include "granet/losda.hpp"
#include "granet/nn.hpp"

namespace granet::oracle {

inline std::vector<double> mlp_row(const nn::SharedMlp& m, const std::vector<double>& in) {
    const std::size_t ni = m.in_width(), no = m.out_width();
    std::vector<double> out(no);
    for (std::size_t o = 0; o < no; ++o) {
        double s = m.options().bias ? m.bias[o] : 0.0;
        for (std::size_t i = 0; i < ni; ++i) s += in[i] * m.weight[i * no + o];
        if (m.options().batch_norm)
            s = (s - m.bn.running_mean[o]) / std::sqrt(m.bn.running_var[o] + m.bn.eps) * m.bn.gamma[o] + m.bn.beta[o];
        if (m.options().relu) s = std::max(0.0, s);
        out[o] = s;
    }
    return out;
}

inline std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a);
    r.insert(r.end(), b.begin(), b.end());
    return r;
}

// cube: n*8 rows of d values, slot 4x + 2y + z.
inline std::vector<double> orientation_conv(const std::vector<double>& cube, std::size_t n, std::size_t d,
                                            const losda::OrientationConv& conv) {
    std::vector<double> out;
    for (std::size_t p = 0; p < n; ++p) {
        auto slot = [&](std::size_t s) {
            return std::vector<double>(cube.begin() + (p * 8 + s) * d, cube.begin() + (p * 8 + s + 1) * d);
        };
        std::vector<std::vector<double>> vx(4), vy(2);
        for (std::size_t yz = 0; yz < 4; ++yz) vx[yz] = mlp_row(conv.stage_x, concat(slot(yz), slot(4 + yz)));
        for (std::size_t z = 0; z < 2; ++z) vy[z] = mlp_row(conv.stage_y, concat(vx[z], vx[2 + z]));
        const auto v = mlp_row(conv.stage_z, concat(vy[0], vy[1]));
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

// features: n x k x dim. Softmax over k, per channel.
inline std::vector<double> attention_scores(const std::vector<double>& f, std::size_t n, std::size_t k,
                                            std::size_t dim, const nn::SharedMlp& map) {
    std::vector<double> logits(n * k * dim), scores(n * k * dim);
    for (std::size_t r = 0; r < n * k; ++r) {
        const auto l = mlp_row(map, std::vector<double>(f.begin() + r * dim, f.begin() + (r + 1) * dim));
        std::copy(l.begin(), l.end(), logits.begin() + r * dim);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < dim; ++c) {
            double mx = -INFINITY;
            for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits[(i * k + j) * dim + c]);
            double z = 0.0;
            for (std::size_t j = 0; j < k; ++j) z += std::exp(logits[(i * k + j) * dim + c] - mx);
            for (std::size_t j = 0; j < k; ++j)
                scores[(i * k + j) * dim + c] = std::exp(logits[(i * k + j) * dim + c] - mx) / z;
        }
    return scores;
}

inline std::vector<double> attention_pool(const std::vector<double>& f, std::size_t n, std::size_t k,
                                          std::size_t dim, const nn::SharedMlp& map) {
    const auto s = attention_scores(f, n, k, dim, map);
    std::vector<double> out(n * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < dim; ++c) out[i * dim + c] += f[(i * k + j) * dim + c] * s[(i * k + j) * dim + c];
    return out;
}

// nodes: rows x width.
inline std::vector<double> affinity(const std::vector<double>& x, std::size_t rows, std::size_t width,
                                    const nn::SharedMlp& alpha, const nn::SharedMlp& beta) {
    std::vector<std::vector<double>> a(rows), b(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const std::vector<double> xi(x.begin() + i * width, x.begin() + (i + 1) * width);
        a[i] = mlp_row(alpha, xi);
        b[i] = mlp_row(beta, xi);
    }
    std::vector<double> out(rows * rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < rows; ++j) {
            double s = 0.0;
            for (std::size_t e = 0; e < a[i].size(); ++e) s += a[i][e] * b[j][e];
            out[i * rows + j] = s;
        }
    return out;
}

inline std::vector<double> node_scores(const std::vector<double>& x, std::size_t rows, std::size_t width,
                                       const gra::RelationAttention& unit) {
    const auto a = affinity(x, rows, width, unit.alpha, unit.beta);
    std::vector<double> scores(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto emb = mlp_row(unit.alpha, std::vector<double>(x.begin() + i * width, x.begin() + (i + 1) * width));
        std::vector<double> r(2 * rows);
        for (std::size_t j = 0; j < rows; ++j) {
            r[j] = a[i * rows + j];
            r[rows + j] = a[j * rows + i];
        }
        std::vector<double> y{*std::max_element(emb.begin(), emb.end())};
        const auto rel = mlp_row(unit.relation, r);
        y.insert(y.end(), rel.begin(), rel.end());
        const double logit = mlp_row(unit.score_out, mlp_row(unit.score_hidden, y))[0];
        scores[i] = 1.0 / (1.0 + std::exp(-logit));
    }
    return scores;
}

// x: n x c. Rows scaled by spatial scores.
inline std::vector<double> sra(const std::vector<double>& x, std::size_t n, std::size_t c,
                               const gra::RelationAttention& unit) {
    const auto s = node_scores(x, n, c, unit);
    std::vector<double> out(x);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= s[i];
    return out;
}

// Columns scaled by channel scores; channel nodes are the columns of x.
inline std::vector<double> cra(const std::vector<double>& x, std::size_t n, std::size_t c,
                               const gra::RelationAttention& unit) {
    std::vector<double> xt(n * c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) xt[j * n + i] = x[i * c + j];
    const auto s = node_scores(xt, c, n, unit);
    std::vector<double> out(x);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= s[j];
    return out;
}

inline double max_abs_diff(const std::vector<double>& a, std::span<const double> b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace granet::oracle
