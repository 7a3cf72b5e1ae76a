#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "granet/tensor.hpp"

namespace granet::ad {

// Matrix product of [m x k] and [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x: [P x C], bias: [C]; adds bias to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x: [N x C], a: N values; row i of x multiplied by a[i].
Tensor scale_rows(const Tensor& x, const Tensor& a);
// x: [N x C], a: C values; column j of x multiplied by a[j].
Tensor scale_cols(const Tensor& x, const Tensor& a);

Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor softmax(const Tensor& t, std::size_t axis);

Tensor concat(const std::vector<Tensor>& ts, std::size_t axis);
// Maximum along `axis`, which is removed from the shape. The gradient goes
// to the first (lowest-index) maximum.
Tensor max_pool(const Tensor& t, std::size_t axis);
Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t);
Tensor reshape(const Tensor& t, Shape shape);

// x: [R x C]; output row m is x[rows[m]].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// x: [R x C]; rows and weights hold M*k entries; output row m is
// sum_j weights[m*k+j] * x[rows[m*k+j]].
Tensor gather_weighted(const Tensor& x, std::span<const std::size_t> rows, std::span<const double> weights,
                       std::size_t k);

// Mean over rows of -w[label] * log softmax(scores)[label]; scores: [N x C].
Tensor softmax_cross_entropy(const Tensor& scores, std::span<const std::size_t> labels,
                             std::span<const double> class_weights = {});

} // namespace granet::ad
