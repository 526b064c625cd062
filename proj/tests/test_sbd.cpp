#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "planted.hpp"
#include "msp/sbd.hpp"

using msp::Matrix;

namespace {

Matrix value_of(msp::Var (*f)(const msp::Var&), const Matrix& x) {
    msp::Tape t;
    return f(t.constant(x)).value();
}

double fro_diff(const Matrix& a, const Matrix& b) { return msp::frobenius(msp::sub(a, b)); }

Matrix permutation(const std::vector<std::size_t>& p) {
    Matrix m(p.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) m(i, p[i]) = 1.0;
    return m;
}

std::vector<std::vector<std::size_t>> pairs(std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t j = 0; j < k; ++j) out.push_back({2 * j, 2 * j + 1});
    return out;
}

}  // namespace

TEST(AbsAdjacency, Examples) {
    EXPECT_LT(fro_diff(value_of(msp::abs_adjacency, permutation({2, 0, 1})), Matrix::identity(3)), 1e-11);
    EXPECT_LT(fro_diff(value_of(msp::abs_adjacency, Matrix{{1, 1}, {1, 1}}), Matrix{{2, 2}, {2, 2}}), 1e-11);
    const Matrix v = planted::rotation_blocks({0.4, -1.1});
    const Matrix a = value_of(msp::abs_adjacency, v);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_GE(a(i, j), 0.0);
            EXPECT_EQ(a(i, j), a(j, i));
            if (i / 2 != j / 2) {
                EXPECT_LT(a(i, j), 1e-11);
            }
        }
}

TEST(NormalizedLaplacian, Examples) {
    EXPECT_LT(msp::max_abs(value_of(msp::normalized_laplacian, Matrix::identity(3))), 1e-9);
    const Matrix l = value_of(msp::normalized_laplacian, Matrix{{2, 2}, {2, 2}});
    EXPECT_LT(fro_diff(l, Matrix{{0.5, -0.5}, {-0.5, 0.5}}), 1e-9);
    const auto ev = msp::sym_eig_value(l).values;
    std::vector<double> got(ev.begin(), ev.end());
    std::sort(got.begin(), got.end());
    EXPECT_NEAR(got[0], 0.0, 1e-9);
    EXPECT_NEAR(got[1], 1.0, 1e-9);
}

TEST(NormalizedLaplacian, KernelDimensionCountsComponents) {
    std::mt19937_64 g(11);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + rep % 9;
        const Matrix a = planted::block_adjacency(n, g);
        const Matrix l = value_of(msp::normalized_laplacian, a);
        const auto ev = msp::sym_eig_value(msp::symmetrized(l)).values;
        std::size_t zeros = 0;
        for (double x : ev) {
            EXPECT_GT(x, -1e-9);
            EXPECT_LT(x, 2.0 + 1e-9);
            zeros += std::abs(x) < 1e-8;
        }
        EXPECT_EQ(zeros, oracle::bfs_components(oracle::to_dense(a), 0.0)) << "instance " << rep;
    }
}

TEST(BlocknessLoss, Examples) {
    EXPECT_LE(msp::blockness_loss(permutation({1, 3, 0, 2})), 1e-8);
    EXPECT_LE(msp::blockness_loss(Matrix::identity(5)), 1e-8);
    EXPECT_NEAR(msp::blockness_loss(Matrix{{1, 1}, {1, 1}}), 1.0, 1e-9);
    const double q = std::acos(-1.0) / 4;
    EXPECT_NEAR(msp::blockness_loss(planted::rotation_blocks({q, q})), 2.0, 1e-9);
}

TEST(BlocknessLoss, BlockRespectingPermutationInvariance) {
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> ang(-3, 3);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix v = planted::rotation_blocks({ang(g), ang(g), ang(g)});
        // swap the first two blocks and flip coordinates inside the third
        const Matrix p = permutation({2, 3, 0, 1, 5, 4});
        const Matrix w = msp::matmul_nt(msp::matmul(p, v), p);
        EXPECT_NEAR(msp::blockness_loss(w), msp::blockness_loss(v), 1e-10);
    }
}

TEST(BlocknessLoss, DenseMixingRaisesLoss) {
    const auto f = planted::rotation_family(3, 4, 2);
    for (std::size_t i = 0; i < f.mixed.size(); ++i)
        EXPECT_GT(msp::blockness_loss(f.mixed[i]), msp::blockness_loss(f.hidden[i]) + 0.1);
}

TEST(DetectBlocks, ExactPlantedPartition) {
    const auto f = planted::rotation_family(4, 16, 3);
    const auto b = msp::detect_blocks(f.hidden, 0.01);
    EXPECT_EQ(b.blocks, pairs(4));
    EXPECT_EQ(b.threshold, 0.01);
}

TEST(DetectBlocks, DenseInputsGiveOneBlock) {
    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<Matrix> vs;
    for (int i = 0; i < 5; ++i) {
        Matrix m(5, 5);
        for (auto& x : m.data()) x = u(g) + 1.0;
        vs.push_back(m);
    }
    const auto b = msp::detect_blocks(vs, 0.01);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b.blocks[0].size(), 5u);
}

TEST(DetectBlocks, SmallNoiseKeepsPartition) {
    auto f = planted::rotation_family(4, 32, 6);
    std::mt19937_64 g(8);
    std::uniform_real_distribution<double> noise(-1e-3, 1e-3);
    for (auto& m : f.hidden)
        for (auto& x : m.data()) x += noise(g);
    EXPECT_EQ(msp::detect_blocks(f.hidden, 0.01).blocks, pairs(4));
}

TEST(DetectBlocks, PartitionIsDisjointCover) {
    const auto f = planted::rotation_family(3, 8, 9);
    const auto b = msp::detect_blocks(f.mixed, 0.01);
    std::vector<int> seen(6, 0);
    for (const auto& blk : b.blocks) {
        EXPECT_TRUE(std::is_sorted(blk.begin(), blk.end()));
        for (auto i : blk) ++seen[i];
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    for (std::size_t i = 1; i < b.size(); ++i) EXPECT_LT(b.blocks[i - 1][0], b.blocks[i][0]);
}

TEST(RestrictToBlocks, KeepAllNoneAndErrors) {
    const Matrix v = planted::rotation_blocks({0.3, 1.0, -2.0});
    msp::BlockStructure b{pairs(3), 0.01};
    const std::vector<std::size_t> all{0, 1, 2}, none{};
    EXPECT_EQ(msp::restrict_to_blocks(v, b, all), v);
    EXPECT_EQ(msp::restrict_to_blocks(v, b, none), Matrix::identity(6));
    EXPECT_EQ(msp::restrict_to_blocks(msp::restrict_to_blocks(v, b, all), b, none), Matrix::identity(6));
    const std::vector<std::size_t> bad{3};
    try {
        msp::restrict_to_blocks(v, b, bad);
        FAIL();
    } catch (const msp::ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("block 3"), std::string::npos);
    }
}

TEST(RestrictToBlocks, OnlyKeptCoordinatesMove) {
    const Matrix v = planted::rotation_blocks({0.3, 1.0, -2.0});
    msp::BlockStructure b{pairs(3), 0.01};
    const std::vector<std::size_t> keep{1};
    const Matrix r = msp::restrict_to_blocks(v, b, keep);
    const Matrix h{{1.0, 2.0, 3.0, 4.0, 5.0, 6.0}};
    const Matrix out = msp::matmul_nt(h, r);
    for (std::size_t i : {0, 1, 4, 5}) EXPECT_EQ(out(0, i), h(0, i));
    EXPECT_NE(out(0, 2), h(0, 2));
    EXPECT_NE(out(0, 3), h(0, 3));
}

TEST(FitSbd, AlreadyBlockDiagonalDoesNotDegrade) {
    const auto f = planted::rotation_family(3, 16, 12);
    msp::SbdOptions o;
    o.restarts = 2;
    o.iters = 20;
    const double init = msp::blockness_loss(f.hidden[0]);
    const auto r = msp::fit_sbd(f.hidden, o);
    double mean = 0.0;
    for (const auto& m : f.hidden) mean += msp::blockness_loss(m);
    mean /= static_cast<double>(f.hidden.size());
    EXPECT_LE(r.loss, mean + 1e-12);
    EXPECT_GE(init, 0.0);
    EXPECT_EQ(r.blocks.blocks, pairs(3));
}

TEST(FitSbd, ResultInvariants) {
    const auto f = planted::rotation_family(2, 8, 13);
    msp::SbdOptions o;
    o.restarts = 3;
    o.iters = 30;
    const auto r = msp::fit_sbd(f.mixed, o);
    EXPECT_LT(msp::frobenius(msp::sub(msp::matmul_nt(r.u, r.u), Matrix::identity(4))), 1e-8);
    EXPECT_EQ(r.skew_param.size(), 6u);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) EXPECT_LT(r.loss_history[i], r.loss_history[i - 1]);
    EXPECT_EQ(r.loss, r.loss_history.back());
    ASSERT_EQ(r.v.size(), f.mixed.size());
}

TEST(FitSbd, Deterministic) {
    const auto f = planted::rotation_family(2, 8, 14);
    msp::SbdOptions o;
    o.restarts = 3;
    o.iters = 20;
    o.seed = 7;
    const auto a = msp::fit_sbd(f.mixed, o), b = msp::fit_sbd(f.mixed, o);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(msp::to_json(a).dump(), msp::to_json(b).dump());
}

TEST(FitSbd, RecoversPlantedBlocks) {
    const auto f = planted::rotation_family(4, 64, 21);
    msp::SbdOptions o;
    o.seed = 1;
    const auto r = msp::fit_sbd(f.mixed, o);
    ASSERT_EQ(r.blocks.size(), 4u) << msp::to_json(r.blocks).dump();
    for (const auto& blk : r.blocks.blocks) EXPECT_EQ(blk.size(), 2u);
    EXPECT_LT(msp::off_block_mass(r.v, r.blocks), 0.01);
}

TEST(FitSbd, Errors) {
    EXPECT_THROW(msp::fit_sbd(std::vector<Matrix>{}), msp::ContractError);
    EXPECT_THROW(msp::fit_sbd(std::vector<Matrix>{Matrix::identity(2), Matrix::identity(3)}), msp::DimensionError);
}

TEST(OffBlockMass, Examples) {
    msp::BlockStructure b{pairs(2), 0.01};
    EXPECT_EQ(msp::off_block_mass(std::vector<Matrix>{planted::rotation_blocks({0.5, 1.5})}, b), 0.0);
    Matrix m(4, 4, 1.0);
    EXPECT_DOUBLE_EQ(msp::off_block_mass(std::vector<Matrix>{m}, b), 0.5);
}
