#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "msp/datagen.hpp"
#include "oracles.hpp"

using msp::GeneratorSpec;
using msp::Matrix;
using msp::Mode;

namespace {

GeneratorSpec small_spec() {
    GeneratorSpec s;
    s.k = 1;
    s.obs_dim = 4;
    s.T = 3;
    s.num_sequences = 2;
    s.mixing_seed = 7;
    return s;
}

GeneratorSpec medium_spec(Mode mode) {
    GeneratorSpec s = GeneratorSpec::defaults(mode);
    s.k = 3;
    s.obs_dim = 24;
    s.T = mode == Mode::velocity ? 5 : 6;
    s.num_sequences = 100;
    s.mixing_seed = 11;
    return s;
}

// x = c * W2 tanh(W1 z) + W3 z, written out independently of MixingMap::apply.
std::vector<double> remix(const msp::MixingMap& m, const std::vector<double>& z) {
    std::vector<double> hidden(m.w1.rows());
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) acc += m.w1(i, j) * z[j];
        hidden[i] = std::tanh(acc);
    }
    std::vector<double> x(m.w3.rows());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double nl = 0.0, lin = 0.0;
        for (std::size_t j = 0; j < hidden.size(); ++j) nl += m.w2(i, j) * hidden[j];
        for (std::size_t j = 0; j < z.size(); ++j) lin += m.w3(i, j) * z[j];
        x[i] = m.nonlinearity * nl + lin;
    }
    return x;
}

}  // namespace

TEST(LatentRotation, Examples) {
    const std::vector<double> zeros(3, 0.0);
    EXPECT_EQ(msp::latent_rotation(zeros), Matrix::identity(6));
    const std::vector<double> quarter{std::numbers::pi / 2};
    const Matrix r = msp::latent_rotation(quarter);
    EXPECT_NEAR(r(0, 0), 0.0, 1e-16);
    EXPECT_EQ(r(0, 1), -1.0);
    EXPECT_EQ(r(1, 0), 1.0);
    EXPECT_NEAR(r(1, 1), 0.0, 1e-16);
}

TEST(LatentRotation, AngleAdditionAndOrthogonality) {
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> u(-4, 4);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> a(3), b(3), s(3);
        for (int j = 0; j < 3; ++j) {
            a[j] = u(g);
            b[j] = u(g);
            s[j] = a[j] + b[j];
        }
        const Matrix prod = msp::matmul(msp::latent_rotation(a), msp::latent_rotation(b));
        EXPECT_LT(msp::max_abs(msp::sub(prod, msp::latent_rotation(s))), 1e-12);
        const Matrix r = msp::latent_rotation(a);
        EXPECT_LT(msp::max_abs(msp::sub(msp::matmul_nt(r, r), Matrix::identity(6))), 1e-15);
    }
}

TEST(MixingMap, DeterministicAndZeroAtOrigin) {
    const GeneratorSpec s = medium_spec(Mode::velocity);
    const auto m1 = msp::MixingMap::from_spec(s), m2 = msp::MixingMap::from_spec(s);
    const std::vector<double> z{0.1, -0.4, 0.9, 0.3, -1.2, 0.5};
    EXPECT_EQ(m1.apply(z), m2.apply(z));
    for (double v : m1.apply(std::vector<double>(6, 0.0))) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(m1.apply(std::vector<double>(5, 0.0)), msp::DimensionError);
}

TEST(MixingMap, LinearPartSingularValuesClamped) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GeneratorSpec s = medium_spec(Mode::velocity);
        s.mixing_seed = seed;
        const auto m = msp::MixingMap::from_spec(s);
        for (double v : msp::sym_eig_value(msp::matmul_tn(m.w3, m.w3)).values) {
            EXPECT_GE(std::sqrt(v), 0.5 - 1e-9);
            EXPECT_LE(std::sqrt(v), 2.0 + 1e-9);
        }
    }
}

TEST(MixingMap, InjectivityProbe) {
    const auto m = msp::MixingMap::from_spec(medium_spec(Mode::velocity));
    std::mt19937_64 g(2);
    std::normal_distribution<double> n(0.0, 1.0);
    int collisions = 0;
    for (int i = 0; i < 10000; ++i) {
        std::vector<double> z(6), w(6);
        double d = 0.0;
        for (int j = 0; j < 6; ++j) {
            z[j] = n(g);
            w[j] = z[j] + 1e-2 * n(g);
            d += (z[j] - w[j]) * (z[j] - w[j]);
        }
        if (std::sqrt(d) <= 1e-3) continue;
        const auto x = m.apply(z), y = m.apply(w);
        double dx = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) dx += (x[j] - y[j]) * (x[j] - y[j]);
        if (!(dx > 0.0)) ++collisions;
    }
    EXPECT_EQ(collisions, 0);
}

TEST(MakeDataset, ByteIdenticalRerun) {
    const auto a = msp::make_dataset(small_spec(), 7, Mode::velocity);
    const auto b = msp::make_dataset(small_spec(), 7, Mode::velocity);
    EXPECT_EQ(a, b);
    const auto c = msp::make_dataset(small_spec(), 8, Mode::velocity);
    EXPECT_NE(a.observations, c.observations);
}

TEST(MakeDataset, VelocityModeHasZeroAcceleration) {
    const auto b = msp::make_dataset(medium_spec(Mode::velocity), 3, Mode::velocity);
    for (double v : b.accel.data()) EXPECT_EQ(v, 0.0);
}

TEST(MakeDataset, DefaultRanges) {
    const auto v = GeneratorSpec::defaults(Mode::velocity);
    EXPECT_EQ(v.velocity.lo, -std::numbers::pi / 2);
    EXPECT_EQ(v.velocity.hi, std::numbers::pi / 2);
    const auto a = GeneratorSpec::defaults(Mode::acceleration);
    EXPECT_EQ(a.velocity.hi, std::numbers::pi / 5);
    EXPECT_EQ(a.accel.lo, -std::numbers::pi / 40);
    const auto b = msp::make_dataset(medium_spec(Mode::acceleration), 3, Mode::acceleration);
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_GE(b.velocity(i, j), a.velocity.lo);
            EXPECT_LT(b.velocity(i, j), a.velocity.hi);
            EXPECT_GE(b.accel(i, j), a.accel.lo);
            EXPECT_LT(b.accel(i, j), a.accel.hi);
        }
}

TEST(MakeDataset, RegenerationOracle) {
    for (Mode mode : {Mode::velocity, Mode::acceleration}) {
        const GeneratorSpec s = medium_spec(mode);
        const auto b = msp::make_dataset(s, 5, mode);
        const auto mix = msp::MixingMap::from_spec(s);
        for (std::size_t i = 0; i < b.size(); ++i)
            for (std::size_t t = 0; t < s.T; ++t) {
                std::vector<double> z(2 * s.k);
                for (std::size_t j = 0; j < s.k; ++j) {
                    const double td = static_cast<double>(t);
                    const double th = b.theta0(i, j) + b.velocity(i, j) * td + b.accel(i, j) * (td * (td - 1.0) / 2.0);
                    const double c = std::cos(th), sn = std::sin(th);
                    z[2 * j] = c * b.z0(i, 2 * j) - sn * b.z0(i, 2 * j + 1);
                    z[2 * j + 1] = sn * b.z0(i, 2 * j) + c * b.z0(i, 2 * j + 1);
                }
                const auto want = remix(mix, z);
                const auto got = b.frame(i, t);
                ASSERT_TRUE(std::equal(got.begin(), got.end(), want.begin())) << "sequence " << i << " t " << t;
            }
    }
}

TEST(MakeDataset, PerSequenceStreamsIndependentOfBatchSize) {
    GeneratorSpec s = medium_spec(Mode::velocity);
    const auto big = msp::make_dataset(s, 9, Mode::velocity);
    s.num_sequences = 10;
    const auto small = msp::make_dataset(s, 9, Mode::velocity);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(big.frames(i, 0, s.T), small.frames(i, 0, s.T));
}

TEST(MakeDataset, ValidationListsEveryViolatedField) {
    GeneratorSpec s = small_spec();
    s.obs_dim = 1;
    s.T = 2;
    try {
        msp::make_dataset(s, 0, Mode::velocity);
        FAIL();
    } catch (const msp::ValidationError& e) {
        const std::string w = e.what();
        EXPECT_NE(w.find("obs_dim"), std::string::npos);
        EXPECT_NE(w.find("T"), std::string::npos);
    }
    GeneratorSpec a = small_spec();
    a.T = 3;
    EXPECT_THROW(msp::make_dataset(a, 0, Mode::acceleration), msp::ValidationError);
}

TEST(Stationarity, ConstantAngleStepsInVelocityMode) {
    const auto b = msp::make_dataset(medium_spec(Mode::velocity), 4, Mode::velocity);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto st = b.state(i);
        for (std::size_t j = 0; j < 3; ++j) {
            const double d0 = st.angle(j, 1) - st.angle(j, 0);
            for (std::size_t t = 1; t + 1 < b.length(); ++t) EXPECT_NEAR(st.angle(j, t + 1) - st.angle(j, t), d0, 1e-12);
        }
    }
}

TEST(Stationarity, HiddenTransitionIdenticalAcrossTime) {
    const auto b = msp::make_dataset(medium_spec(Mode::velocity), 4, Mode::velocity);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto st = b.state(i);
        // z_{t+1} = ρ(v) z_t for every t.
        const std::vector<double> v(st.velocity);
        const Matrix rho = msp::latent_rotation(v);
        for (std::size_t t = 0; t + 1 < b.length(); ++t) {
            const auto zt = st.latent(t), zn = st.latent(t + 1);
            const Matrix pred = msp::matmul(rho, Matrix::column(zt));
            for (std::size_t d = 0; d < zt.size(); ++d) EXPECT_NEAR(pred(d, 0), zn[d], 1e-12);
        }
    }
}

TEST(Acceleration, AngleStepsGrowByAlpha) {
    const auto b = msp::make_dataset(medium_spec(Mode::acceleration), 4, Mode::acceleration);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto st = b.state(i);
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t t = 0; t + 1 < b.length(); ++t)
                EXPECT_NEAR(st.angle(j, t + 1) - st.angle(j, t), st.velocity[j] + st.accel[j] * static_cast<double>(t),
                            1e-12);
    }
}

TEST(MakePaired, SharedMotionIndependentState) {
    for (Mode mode : {Mode::velocity, Mode::acceleration}) {
        const auto p = msp::make_paired(medium_spec(mode), 21, mode);
        EXPECT_EQ(p.first.velocity, p.second.velocity);
        EXPECT_EQ(p.first.accel, p.second.accel);
        for (std::size_t i = 0; i < 100; ++i)
            for (std::size_t j = 0; j < 3; ++j) EXPECT_NE(p.first.theta0(i, j), p.second.theta0(i, j));
        if (mode == Mode::velocity)
            for (double v : p.second.accel.data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(MakePaired, SameHiddenTransitionPerIndex) {
    const auto p = msp::make_paired(medium_spec(Mode::velocity), 22, Mode::velocity);
    for (std::size_t i = 0; i < 100; ++i) {
        const auto a = p.first.state(i), b = p.second.state(i);
        EXPECT_EQ(msp::latent_rotation(a.velocity), msp::latent_rotation(b.velocity));
    }
}

TEST(SingleFactor, OnlyChosenFactorMoves) {
    const auto b = msp::make_single_factor(medium_spec(Mode::velocity), 3, Mode::velocity, 1);
    for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_EQ(b.velocity(i, 0), 0.0);
        EXPECT_EQ(b.velocity(i, 2), 0.0);
    }
    EXPECT_THROW(msp::make_single_factor(medium_spec(Mode::velocity), 3, Mode::velocity, 3), msp::ContractError);
}
