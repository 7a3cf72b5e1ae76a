#include "granet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "granet/error.hpp"

namespace granet::ad {

GradCheckReport finite_diff_report(const std::function<Tensor()>& loss, std::vector<Tensor> probed,
                                   const GradCheckOptions& options) {
    if (options.eps <= 0.0) throw ContractError("finite_diff_check needs eps > 0");
    for (auto& t : probed) {
        if (!t.requires_grad()) throw ContractError("probed tensor does not require grad");
        t.zero_grad();
    }
    backward(loss());
    std::vector<std::vector<double>> analytic;
    for (auto& t : probed) {
        auto g = t.grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    NoGradGuard no_grad;
    auto traced = [&](std::uint64_t& digest) {
        BranchTrace trace;
        const double v = loss().item();
        digest = trace.digest();
        return v;
    };
    std::uint64_t base = 0, d_up = 0, d_down = 0;
    traced(base);
    for (std::size_t k = 0; k < probed.size(); ++k) {
        auto values = probed[k].mutable_values();
        std::vector<std::size_t> coords(values.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t c : coords) {
            const double saved = values[c];
            values[c] = saved + options.eps;
            const double up = traced(d_up);
            values[c] = saved - options.eps;
            const double down = traced(d_down);
            values[c] = saved;
            if (options.skip_branch_changes && (d_up != base || d_down != base)) {
                ++report.skipped;
                continue;
            }
            const double numeric = (up - down) / (2.0 * options.eps);
            const double err = std::abs(analytic[k][c] - numeric) / std::max(1.0, std::abs(numeric));
            report.max_error = std::max(report.max_error, err);
            ++report.checked;
        }
    }
    return report;
}

double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> probed,
                         const GradCheckOptions& options) {
    return finite_diff_report(loss, std::move(probed), options).max_error;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
    GradCheckOptions options;
    options.eps = eps;
    return finite_diff_check([&] { return f(x); }, {x}, options);
}

} // namespace granet::ad
