#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "granet/error.hpp"
#include "granet/gra.hpp"
#include "granet/ops.hpp"
#include "gra_fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace granet;
using namespace granet::gra;
using ad::Tensor;
using namespace granet::testing;

namespace {

nn::SharedMlp identity_map(std::size_t d) {
    nn::Initializer init(1);
    nn::SharedMlp m(d, d, {.batch_norm = false, .relu = false, .bias = false}, init);
    std::vector<double> w(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
    fill(m.weight, w);
    return m;
}

} // namespace

TEST(Affinity, IdentityEmbeddingsOnOrthonormalRows) {
    const auto id = identity_map(3);
    const double c = std::cos(0.3), s = std::sin(0.3);
    const Tensor x = Tensor::from({3, 3}, {c, s, 0, -s, c, 0, 0, 0, 1});
    const Tensor a = affinity(x, id, id, false);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.at(i, j), i == j ? 1.0 : 0.0, 1e-15);
}

TEST(Affinity, EqualUnitRowsGiveAllOnes) {
    const auto id = identity_map(2);
    const Tensor x = Tensor::from({3, 2}, {0.6, 0.8, 0.6, 0.8, 0.6, 0.8});
    const Tensor a = affinity(x, id, id, false);
    for (double v : a.values()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Affinity, MatchesLoopOracle) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        nn::Initializer init(seed);
        nn::SharedMlp alpha(4, 3, {.batch_norm = true, .relu = true, .bias = true}, init);
        nn::SharedMlp beta(4, 3, {.batch_norm = true, .relu = true, .bias = true}, init);
        randomize_bn(alpha, rng);
        randomize_bn(beta, rng);
        const auto x = random_values(rng, 12);
        const Tensor a = affinity(Tensor::from({3, 4}, x), alpha, beta, false);
        EXPECT_LE(oracle::max_abs_diff(oracle::affinity(x, 3, 4, alpha, beta), a.values()), 1e-12);
    }
}

TEST(Relation, IdentityAffinityVector) {
    const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    EXPECT_EQ(relation_vector(eye, 0), (std::vector<double>{1, 0, 0, 1, 0, 0}));
    EXPECT_THROW(relation_vector(eye, 3), RangeError);
}

TEST(Relation, FeaturesMatchSlicingOracle) {
    std::mt19937_64 rng(3);
    const Tensor a = granet::testing::random_tensor(rng, {4, 4});
    const Tensor r = relation_features(a);
    ASSERT_EQ(r.shape(), (ad::Shape{4, 8}));
    for (std::size_t i = 0; i < 4; ++i) {
        const auto v = relation_vector(a, i);
        for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(r.at(i, j), v[j]);
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(v[j], a.at(i, j));
            EXPECT_EQ(v[4 + j], a.at(j, i));
        }
    }
    const Tensor sym = Tensor::from({2, 2}, {1, 2, 2, 5});
    const auto v = relation_vector(sym, 1);
    EXPECT_EQ(v[0], v[2]);
    EXPECT_EQ(v[1], v[3]);
}

TEST(Scores, HandArithmeticTwoNodes) {
    nn::Initializer init(1);
    RelationAttention u(2, 1, 8, false, init);
    ASSERT_EQ(u.score_hidden.weight.shape(), (ad::Shape{2, 1}));
    fill(u.score_hidden.weight, {0.5, -1.0});
    fill(u.score_hidden.bias, {0.25});
    fill(u.score_out.weight, {2.0});
    fill(u.score_out.bias, {-1.0});
    const Tensor y = Tensor::from({2, 2}, {1, 2, 3, 0.5});
    const Tensor s = attention_scores(y, u);
    EXPECT_NEAR(s[0], 1.0 / (1.0 + std::exp(1.0)), 1e-12);
    EXPECT_NEAR(s[1], 1.0 / (1.0 + std::exp(-1.5)), 1e-12);
}

TEST(Scores, ZeroHeadGivesHalf) {
    nn::Initializer init(2);
    RelationAttention u(5, 3, 8, true, init);
    u.zero_score_head();
    std::mt19937_64 rng(4);
    const auto xv = random_values(rng, 15);
    const Tensor x = Tensor::from({5, 3}, xv);
    const Tensor scores = node_scores(x, u, false);
    for (double v : scores.values()) EXPECT_EQ(v, 0.5);
    const Tensor y = sra_forward(x, u, false);
    for (std::size_t i = 0; i < xv.size(); ++i) EXPECT_EQ(y[i], xv[i] / 2);
}

TEST(Scores, StrictlyInsideUnitInterval) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        nn::Initializer init(seed);
        RelationAttention u(6, 4, 2, false, init);
        std::mt19937_64 rng(seed);
        const Tensor x = granet::testing::random_tensor(rng, {6, 4});
        const Tensor scores = node_scores(ad::scale(x, 10.0), u, false);
        for (double v : scores.values()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(Sra, MatchesLoopOracle) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        nn::Initializer init(seed);
        RelationAttention u(4, 3, 8, true, init);
        std::mt19937_64 rng(seed);
        randomize(u, rng);
        const auto x = random_values(rng, 12);
        const Tensor y = sra_forward(Tensor::from({4, 3}, x), u, false);
        EXPECT_LE(oracle::max_abs_diff(oracle::sra(x, 4, 3, u), y.values()), 1e-12);
    }
}

TEST(Cra, MatchesLoopOracle) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        nn::Initializer init(seed);
        RelationAttention u(3, 4, 8, true, init);
        std::mt19937_64 rng(seed);
        randomize(u, rng);
        const auto x = random_values(rng, 12);
        const Tensor y = cra_forward(Tensor::from({4, 3}, x), u, false);
        EXPECT_LE(oracle::max_abs_diff(oracle::cra(x, 4, 3, u), y.values()), 1e-12);
    }
}

TEST(Cra, ZeroColumnStaysZero) {
    nn::Initializer init(5);
    RelationAttention u(3, 4, 8, false, init);
    const Tensor x = Tensor::from({4, 3}, {1, 0, 2, 3, 0, 4, 5, 0, 6, 7, 0, 8});
    const Tensor y = cra_forward(x, u, false);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y.at(i, 1), 0.0);
}

TEST(Sra, RowPermutationEquivariance) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::size_t n = 6, c = 4;
        nn::Initializer init(seed);
        RelationAttention u(n, c, 2, false, init);
        std::mt19937_64 rng(seed);
        equivariant_weights(u, rng);
        const auto x = integer_values(rng, n * c);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> xp(n * c);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) xp[i * c + j] = x[perm[i] * c + j];
        const Tensor y = sra_forward(Tensor::from({n, c}, x), u, false);
        const Tensor yp = sra_forward(Tensor::from({n, c}, xp), u, false);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(yp.at(i, j), y.at(perm[i], j));
    }
}

TEST(Cra, ColumnPermutationEquivariance) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::size_t n = 5, c = 6;
        nn::Initializer init(seed);
        RelationAttention u(c, n, 2, false, init);
        std::mt19937_64 rng(seed);
        equivariant_weights(u, rng);
        const auto x = integer_values(rng, n * c);
        std::vector<std::size_t> perm(c);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> xp(n * c);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) xp[i * c + j] = x[i * c + perm[j]];
        const Tensor y = cra_forward(Tensor::from({n, c}, x), u, false);
        const Tensor yp = cra_forward(Tensor::from({n, c}, xp), u, false);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(yp.at(i, j), y.at(i, perm[j]));
    }
}

TEST(GraModule, ModesKeepShape) {
    std::mt19937_64 rng(7);
    const Tensor x = granet::testing::random_tensor(rng, {8, 6});
    for (auto m : {GraMode::Off, GraMode::SraOnly, GraMode::CraOnly, GraMode::Mode1, GraMode::Mode2, GraMode::Mode3}) {
        nn::Initializer init(1);
        GraModule g(m, 8, 6, 8, true, init);
        EXPECT_EQ(g.forward(x, true).shape(), x.shape());
        EXPECT_EQ(g.forward(x, false).shape(), x.shape());
    }
    nn::Initializer init(1);
    GraModule g(GraMode::Mode1, 8, 6, 8, true, init);
    EXPECT_THROW(g.forward(granet::testing::random_tensor(rng, {7, 6}), false), DimensionError);
}

TEST(GraModule, OffIsIdentityAndZeroHeadsCompose) {
    std::mt19937_64 rng(8);
    const auto xv = random_values(rng, 48);
    const Tensor x = Tensor::from({8, 6}, xv);
    nn::Initializer init(1);
    GraModule off(GraMode::Off, 8, 6, 8, true, init);
    EXPECT_EQ(granet::testing::to_vector(off.forward(x, false)), xv);
    GraModule m1(GraMode::Mode1, 8, 6, 8, true, init);
    m1.spatial->zero_score_head();
    m1.channel->zero_score_head();
    const Tensor y = m1.forward(x, false);
    for (std::size_t i = 0; i < xv.size(); ++i) EXPECT_EQ(y[i], xv[i] / 4);
}

TEST(GraModule, ModeParameterCounts) {
    auto count = [](GraMode m) {
        nn::Initializer init(1);
        GraModule g(m, 64, 32, 8, true, init);
        nn::ParamList p;
        g.collect(p, "g");
        return nn::count_learnable(p);
    };
    EXPECT_EQ(count(GraMode::Mode1), count(GraMode::Mode2));
    EXPECT_GT(count(GraMode::Mode3), count(GraMode::Mode1));
    EXPECT_EQ(count(GraMode::Off), 0u);
    EXPECT_LT(count(GraMode::SraOnly), count(GraMode::Mode1));
}

TEST(GraModule, ModeNames) {
    for (auto m : {GraMode::Off, GraMode::SraOnly, GraMode::CraOnly, GraMode::Mode1, GraMode::Mode2, GraMode::Mode3})
        EXPECT_EQ(parse_gra_mode(to_string(m)), m);
    EXPECT_THROW(parse_gra_mode("mode4"), ConfigError);
}
