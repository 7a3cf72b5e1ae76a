#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace granet {

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteResult {
    std::string module;
    double max_error = 0.0;
    std::size_t tensors = 0;  // probed tensors
    std::size_t checked = 0;  // coordinates compared
    std::size_t skipped = 0;  // coordinates straddling a relu/max branch change
    bool passed() const { return max_error <= kGradTolerance; }
};

// shared_mlp, sde, ede, orientation_conv, attention_pool, losda, sra, cra,
// mode1, mode2, mode3, full.
const std::vector<std::string>& gradcheck_modules();

// Finite-difference check of one module on a small random instance
// (64-bit floats, eps 1e-5). "full" is the miniature network with a
// cross-entropy loss over every learnable coordinate.
GradSuiteResult run_gradcheck(const std::string& module, std::uint64_t seed = 1);

} // namespace granet
