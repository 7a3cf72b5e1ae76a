#include "granet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "granet/error.hpp"

namespace granet::ad {

namespace {

using detail::Node;

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + " needs a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void require_finite(const Tensor& t, const char* op) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input value");
    }
}

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

bool wants(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        const auto& g = self.grad;
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) {
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = g.data() + i * n;
                    const double* brow = nb.value.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    na.grad[i * k + p] += acc;
                }
            }
        }
        if (nb.requires_grad) {
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = na.value[i * k + p];
                    if (aip == 0.0) continue;
                    double* dst = nb.grad.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) dst[j] += aip * grow[j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(r * c);
    auto av = a.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += self.grad[j * r + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t s = 0; s < 2; ++s) {
            if (!wants(self, s)) continue;
            auto& g = self.inputs[s]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
        if (wants(self, 0)) {
            auto& g = self.inputs[0]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = self.inputs[1]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * nb.value[i];
        if (nb.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] += self.grad[i] * na.value[i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= factor;
    return make_result("scale", a.shape(), std::move(out), {a}, [factor](Node& self) {
        auto& g = self.inputs[0]->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_matrix(x, "add_bias");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (bias.size() != cols) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    auto bv = bias.values();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bv[j];
    return make_result("add_bias", x.shape(), std::move(out), {x, bias}, [rows, cols](Node& self) {
        if (wants(self, 0)) {
            auto& g = self.inputs[0]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = self.inputs[1]->grad;
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) g[j] += self.grad[i * cols + j];
        }
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& a) {
    require_matrix(x, "scale_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (a.size() != rows) {
        throw DimensionError("scale_rows: " + shape_str(a.shape()) + " factors for " + shape_str(x.shape()));
    }
    std::vector<double> out(x.size());
    auto xv = x.values();
    auto av = a.values();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xv[i * cols + j] * av[i];
    return make_result("scale_rows", x.shape(), std::move(out), {x, a}, [rows, cols](Node& self) {
        auto& nx = *self.inputs[0];
        auto& na = *self.inputs[1];
        for (std::size_t i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double g = self.grad[i * cols + j];
                if (nx.requires_grad) nx.grad[i * cols + j] += g * na.value[i];
                acc += g * nx.value[i * cols + j];
            }
            if (na.requires_grad) na.grad[i] += acc;
        }
    });
}

Tensor scale_cols(const Tensor& x, const Tensor& a) {
    require_matrix(x, "scale_cols");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (a.size() != cols) {
        throw DimensionError("scale_cols: " + shape_str(a.shape()) + " factors for " + shape_str(x.shape()));
    }
    std::vector<double> out(x.size());
    auto xv = x.values();
    auto av = a.values();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xv[i * cols + j] * av[j];
    return make_result("scale_cols", x.shape(), std::move(out), {x, a}, [rows, cols](Node& self) {
        auto& nx = *self.inputs[0];
        auto& na = *self.inputs[1];
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                const double g = self.grad[i * cols + j];
                if (nx.requires_grad) nx.grad[i * cols + j] += g * na.value[j];
                if (na.requires_grad) na.grad[j] += g * nx.value[i * cols + j];
            }
        }
    });
}

Tensor relu(const Tensor& t) {
    require_finite(t, "relu");
    std::vector<double> out(t.values().begin(), t.values().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    if (branch_tracing())
        for (double v : out) note_branch(v > 0.0);
    return make_result("relu", t.shape(), std::move(out), {t}, [](Node& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (in.value[i] > 0.0) in.grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& t) {
    require_finite(t, "sigmoid");
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = tv[i];
        // Split by sign so exp never overflows.
        if (x >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            out[i] = e / (1.0 + e);
        }
    }
    return make_result("sigmoid", t.shape(), std::move(out), {t}, [](Node& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.value[i];
            in.grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor softmax(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) {
        throw ContractError("softmax axis " + std::to_string(axis) + " out of range for " + shape_str(t.shape()));
    }
    require_finite(t, "softmax");
    const auto s = split_at(t.shape(), axis);
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < s.extent; ++a) mx = std::max(mx, tv[base + a * s.inner]);
            double total = 0.0;
            for (std::size_t a = 0; a < s.extent; ++a) {
                const double e = std::exp(tv[base + a * s.inner] - mx);
                out[base + a * s.inner] = e;
                total += e;
            }
            for (std::size_t a = 0; a < s.extent; ++a) out[base + a * s.inner] /= total;
        }
    }
    return make_result("softmax", t.shape(), std::move(out), {t}, [s](Node& self) {
        auto& nin = *self.inputs[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.extent * s.inner + in;
                double dot = 0.0;
                for (std::size_t a = 0; a < s.extent; ++a) {
                    const std::size_t idx = base + a * s.inner;
                    dot += self.grad[idx] * self.value[idx];
                }
                for (std::size_t a = 0; a < s.extent; ++a) {
                    const std::size_t idx = base + a * s.inner;
                    nin.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Tensor concat(const std::vector<Tensor>& ts, std::size_t axis) {
    if (ts.empty()) throw ContractError("concat of zero tensors");
    const Shape& first = ts.front().shape();
    if (axis >= first.size()) throw DimensionError("concat axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& t : ts) {
        const Shape& sh = t.shape();
        bool ok = sh.size() == first.size();
        for (std::size_t d = 0; ok && d < sh.size(); ++d)
            if (d != axis && sh[d] != first[d]) ok = false;
        if (!ok) {
            throw DimensionError("concat: " + shape_str(sh) + " incompatible with " + shape_str(first) +
                                 " along axis " + std::to_string(axis));
        }
        out_shape[axis] += sh[axis];
    }
    const auto s = split_at(out_shape, axis);
    std::vector<double> out(shape_size(out_shape));
    std::vector<std::size_t> offsets;  // running offset along the axis for each input
    std::size_t offset = 0;
    for (const auto& t : ts) {
        offsets.push_back(offset);
        const std::size_t ext = t.shape()[axis];
        auto tv = t.values();
        for (std::size_t o = 0; o < s.outer; ++o) {
            const double* src = tv.data() + o * ext * s.inner;
            double* dst = out.data() + (o * s.extent + offset) * s.inner;
            std::copy(src, src + ext * s.inner, dst);
        }
        offset += ext;
    }
    return make_result("concat", out_shape, std::move(out), ts, [s, axis, offsets](Node& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            auto& in = *self.inputs[k];
            if (!in.requires_grad) continue;
            const std::size_t ext = in.shape[axis];
            for (std::size_t o = 0; o < s.outer; ++o) {
                const double* src = self.grad.data() + (o * s.extent + offsets[k]) * s.inner;
                double* dst = in.grad.data() + o * ext * s.inner;
                for (std::size_t i = 0; i < ext * s.inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor max_pool(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) throw DimensionError("max_pool axis out of range for " + shape_str(t.shape()));
    const auto s = split_at(t.shape(), axis);
    Shape out_shape = t.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> argmax(out.size());
    auto tv = t.values();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            std::size_t best = base;
            for (std::size_t a = 1; a < s.extent; ++a) {
                const std::size_t idx = base + a * s.inner;
                if (tv[idx] > tv[best]) best = idx;  // strict: ties keep the lowest index
            }
            out[o * s.inner + in] = tv[best];
            argmax[o * s.inner + in] = best;
            note_branch(best - base);
        }
    }
    return make_result("max_pool", out_shape, std::move(out), {t}, [argmax = std::move(argmax)](Node& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < argmax.size(); ++i) in.grad[argmax[i]] += self.grad[i];
    });
}

Tensor sum(const Tensor& t) {
    double total = 0.0;
    for (double v : t.values()) total += v;
    return make_result("sum", {}, {total}, {t}, [](Node& self) {
        auto& in = *self.inputs[0];
        const double g = self.grad[0];
        for (auto& v : in.grad) v += g;
    });
}

Tensor sum(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) throw DimensionError("sum axis out of range for " + shape_str(t.shape()));
    const auto s = split_at(t.shape(), axis);
    Shape out_shape = t.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<double> out(s.outer * s.inner, 0.0);
    auto tv = t.values();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t a = 0; a < s.extent; ++a)
            for (std::size_t in = 0; in < s.inner; ++in)
                out[o * s.inner + in] += tv[(o * s.extent + a) * s.inner + in];
    return make_result("sum_axis", out_shape, std::move(out), {t}, [s](Node& self) {
        auto& nin = *self.inputs[0];
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t a = 0; a < s.extent; ++a)
                for (std::size_t in = 0; in < s.inner; ++in)
                    nin.grad[(o * s.extent + a) * s.inner + in] += self.grad[o * s.inner + in];
    });
}

Tensor mean(const Tensor& t) { return scale(sum(t), 1.0 / static_cast<double>(t.size())); }

Tensor reshape(const Tensor& t, Shape shape) {
    if (shape_size(shape) != t.size()) {
        throw DimensionError("reshape " + shape_str(t.shape()) + " -> " + shape_str(shape) + " changes element count");
    }
    std::vector<double> out(t.values().begin(), t.values().end());
    return make_result("reshape", std::move(shape), std::move(out), {t}, [](Node& self) {
        auto& g = self.inputs[0]->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    require_matrix(x, "gather_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    if (rows.empty()) throw ContractError("gather_rows with no row indices");
    std::vector<double> out(rows.size() * c);
    auto xv = x.values();
    for (std::size_t m = 0; m < rows.size(); ++m) {
        if (rows[m] >= r) {
            throw RangeError("gather_rows: row " + std::to_string(rows[m]) + " out of range for " + shape_str(x.shape()));
        }
        std::copy_n(xv.data() + rows[m] * c, c, out.data() + m * c);
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return make_result("gather_rows", {rows.size(), c}, std::move(out), {x}, [c, idx = std::move(idx)](Node& self) {
        auto& g = self.inputs[0]->grad;
        for (std::size_t m = 0; m < idx.size(); ++m)
            for (std::size_t j = 0; j < c; ++j) g[idx[m] * c + j] += self.grad[m * c + j];
    });
}

Tensor gather_weighted(const Tensor& x, std::span<const std::size_t> rows, std::span<const double> weights,
                       std::size_t k) {
    require_matrix(x, "gather_weighted");
    if (k == 0 || rows.size() != weights.size() || rows.size() % k != 0 || rows.empty()) {
        throw DimensionError("gather_weighted: " + std::to_string(rows.size()) + " rows, " +
                             std::to_string(weights.size()) + " weights, k=" + std::to_string(k));
    }
    const std::size_t r = x.dim(0), c = x.dim(1), m_count = rows.size() / k;
    std::vector<double> out(m_count * c, 0.0);
    auto xv = x.values();
    for (std::size_t m = 0; m < m_count; ++m) {
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t row = rows[m * k + j];
            if (row >= r) throw RangeError("gather_weighted: row out of range for " + shape_str(x.shape()));
            const double w = weights[m * k + j];
            for (std::size_t q = 0; q < c; ++q) out[m * c + q] += w * xv[row * c + q];
        }
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> wts(weights.begin(), weights.end());
    return make_result("gather_weighted", {m_count, c}, std::move(out), {x},
                       [c, k, m_count, idx = std::move(idx), wts = std::move(wts)](Node& self) {
                           auto& g = self.inputs[0]->grad;
                           for (std::size_t m = 0; m < m_count; ++m)
                               for (std::size_t j = 0; j < k; ++j) {
                                   const std::size_t row = idx[m * k + j];
                                   const double w = wts[m * k + j];
                                   for (std::size_t q = 0; q < c; ++q) g[row * c + q] += w * self.grad[m * c + q];
                               }
                       });
}

Tensor softmax_cross_entropy(const Tensor& scores, std::span<const std::size_t> labels,
                             std::span<const double> class_weights) {
    require_matrix(scores, "softmax_cross_entropy");
    const std::size_t n = scores.dim(0), c = scores.dim(1);
    if (labels.size() != n) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             shape_str(scores.shape()));
    }
    if (!class_weights.empty() && class_weights.size() != c) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(class_weights.size()) +
                             " class weights for " + std::to_string(c) + " classes");
    }
    require_finite(scores, "softmax_cross_entropy");
    auto sv = scores.values();
    std::vector<double> prob(n * c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= c) {
            throw ContractError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(c) +
                                " classes");
        }
        const double* row = sv.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(row[j] - log_z);
        const double w = class_weights.empty() ? 1.0 : class_weights[labels[i]];
        total += w * (log_z - row[labels[i]]);
    }
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    std::vector<double> wts(class_weights.begin(), class_weights.end());
    return make_result("softmax_cross_entropy", {}, {total / static_cast<double>(n)}, {scores},
                       [n, c, prob = std::move(prob), lab = std::move(lab), wts = std::move(wts)](Node& self) {
                           auto& g = self.inputs[0]->grad;
                           const double scale_out = self.grad[0] / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                               const double w = wts.empty() ? 1.0 : wts[lab[i]];
                               for (std::size_t j = 0; j < c; ++j) {
                                   const double target = j == lab[i] ? 1.0 : 0.0;
                                   g[i * c + j] += scale_out * w * (prob[i * c + j] - target);
                               }
                           }
                       });
}

} // namespace granet::ad
