#include <gtest/gtest.h>

#include <algorithm>

#include "granet/gradsuite.hpp"

using namespace granet;

class GradSuite : public ::testing::TestWithParam<std::string> {};

TEST_P(GradSuite, MatchesFiniteDifferences) {
    const auto r = run_gradcheck(GetParam());
    EXPECT_GT(r.checked, 0u);
    EXPECT_LE(r.max_error, kGradTolerance) << r.module;
    // Kink crossings are rare; a large skip count would hide real errors.
    EXPECT_LE(r.skipped * 50, r.checked + r.skipped) << r.module;
}

INSTANTIATE_TEST_SUITE_P(Modules, GradSuite, ::testing::ValuesIn(gradcheck_modules()),
                         [](const auto& info) { return info.param; });

TEST(GradSuiteList, CoversEveryModule) {
    const auto& m = gradcheck_modules();
    for (const char* name : {"shared_mlp", "sde", "ede", "orientation_conv", "attention_pool", "sra", "cra", "mode1",
                             "mode2", "mode3", "full"})
        EXPECT_NE(std::find(m.begin(), m.end(), name), m.end()) << name;
    EXPECT_THROW(run_gradcheck("nope"), std::exception);
}
