#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "granet/tensor.hpp"

namespace granet::ad {

struct GradCheckOptions {
    double eps = 1e-5;
    // Probe at most this many coordinates per tensor (0 = all), picked by a
    // seeded shuffle so runs are reproducible.
    std::size_t max_coords_per_tensor = 0;
    std::uint64_t seed = 7;
    // Skip coordinates whose +-eps evaluations take a different relu or
    // max_pool branch than the unperturbed one: the function is not
    // differentiable across that interval, so the central difference is
    // meaningless there.
    bool skip_branch_changes = true;
};

struct GradCheckReport {
    double max_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates straddling a branch change
};

GradCheckReport finite_diff_report(const std::function<Tensor()>& loss, std::vector<Tensor> probed,
                                   const GradCheckOptions& options = {});

// Compares reverse-mode gradients of `loss` against central differences.
// `loss` must rebuild its record on every call and read the probed tensors by
// reference. Returns max over probed coordinates of
// |analytic - numeric| / max(1, |numeric|).
double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> probed,
                         const GradCheckOptions& options = {});

// Single-input form: f(x) must return a scalar tensor.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

} // namespace granet::ad
