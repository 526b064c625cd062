#include <gtest/gtest.h>

#include <complex>
#include <numbers>
#include <random>

#include "gradcheck.hpp"
#include "msp/analysis.hpp"
#include "msp/oracle.hpp"
#include "msp/trainer.hpp"
#include "oracles.hpp"

using msp::Matrix;

namespace {

msp::GeneratorSpec linear_spec(std::size_t T, std::size_t N = 30) {
    msp::GeneratorSpec s;
    s.k = 2;
    s.obs_dim = 10;
    s.T = T;
    s.num_sequences = N;
    s.nonlinearity = 0.0;
    s.mixing_seed = 8;
    return s;
}

msp::ModelParams oracle_for(const msp::GeneratorSpec& s) { return msp::oracle_model(s, {6, 2, true}); }

msp::ModelParams untrained(std::size_t obs_dim) {
    msp::TrainConfig c;
    c.a = 4;
    c.m = 6;
    c.hidden = {16};
    c.seed = 3;
    return msp::ModelParams::init(c, obs_dim);
}

Matrix rot(double th) {
    return Matrix{{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
}

}  // namespace

TEST(TransitionDistance, Examples) {
    std::mt19937_64 g(1);
    const Matrix a = gradcheck::random(3, 3, g), b = gradcheck::random(3, 3, g);
    EXPECT_EQ(msp::transition_distance(a, a).total, 0.0);
    const auto d = msp::transition_distance(Matrix::identity(2), msp::scaled(Matrix::identity(2), 2.0));
    EXPECT_EQ(d.total, 2.0);
    EXPECT_EQ(d.entrywise, Matrix::identity(2));
    EXPECT_EQ(msp::transition_distance(a, b).total, msp::transition_distance(b, a).total);
    EXPECT_THROW(msp::transition_distance(a, Matrix(2, 2)), msp::DimensionError);
}

TEST(OrthogonalityDefect, Examples) {
    EXPECT_LT(msp::orthogonality_defect(rot(0.7)), 1e-30);
    EXPECT_EQ(msp::orthogonality_defect(Matrix(5, 5)), 5.0);
    EXPECT_EQ(msp::orthogonality_defect(msp::scaled(Matrix::identity(2), 2.0)), 18.0);
}

TEST(Equivariance, OracleIsExact) {
    const auto s = linear_spec(3);
    const auto paired = msp::make_paired(s, 4, msp::Mode::velocity);
    const auto rep = msp::equivariance_error(oracle_for(s), paired, 2, 1);
    EXPECT_LT(rep.loss_pred, 1e-20);
    EXPECT_LT(rep.loss_equiv, 1e-20);
    EXPECT_FALSE(rep.ratio.has_value());
    EXPECT_EQ(rep.samples, 30u);
    EXPECT_TRUE(msp::to_json(rep)["ratio"].is_null());
}

TEST(Equivariance, SelfPairingEqualsLossPred) {
    const auto s = linear_spec(4, 10);
    const auto data = msp::make_dataset(s, 4, msp::Mode::velocity);
    const auto p = untrained(s.obs_dim);
    const auto rep = msp::equivariance_error(p, msp::PairedBatch{data, data}, 2, 2);
    double want = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        msp::Tape t;
        want += msp::loss_pred(msp::bind(t, p, false), data.frames(i, 0, 4), 2, 2).value()(0, 0);
    }
    want /= 10.0;
    EXPECT_EQ(rep.loss_pred, want);
    EXPECT_EQ(rep.loss_equiv, want);
    ASSERT_TRUE(rep.ratio.has_value());
    EXPECT_EQ(*rep.ratio, 1.0);
}

TEST(Swap, SameSequenceIsSelfPrediction) {
    const auto s = linear_spec(4, 2);
    const auto data = msp::make_dataset(s, 4, msp::Mode::velocity);
    const auto p = untrained(s.obs_dim);
    const Matrix seq = data.frames(0, 0, 4);
    const auto r = msp::transition_swap(p, seq, seq, 2, 2);
    EXPECT_EQ(r.on_second, r.on_first);
    EXPECT_EQ(r.swap_err_second, r.self_err_second);
    EXPECT_EQ(r.swap_err_first, r.self_err_first);
}

TEST(Swap, OracleSharedMotionSwapEqualsSelf) {
    const auto s = linear_spec(4, 10);
    const auto paired = msp::make_paired(s, 5, msp::Mode::velocity);
    const auto p = oracle_for(s);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto r = msp::transition_swap(p, paired.first.frames(i, 0, 4), paired.second.frames(i, 0, 4), 2, 2);
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_NEAR(r.swap_err_second[j], r.self_err_second[j], 1e-20);
            EXPECT_NEAR(r.swap_err_first[j], r.self_err_first[j], 1e-20);
        }
    }
}

TEST(Homogeneity, OracleIsExactUntrainedIsNot) {
    const auto s = linear_spec(7, 20);
    const auto probe = msp::make_dataset(s, 6, msp::Mode::velocity);
    const auto o = msp::homogeneity_check(oracle_for(s), probe, 2, 5);
    ASSERT_EQ(o.shifts.size(), 5u);
    for (double d : o.distance) EXPECT_LT(d, 1e-9);
    const auto u = msp::homogeneity_check(untrained(s.obs_dim), probe, 2, 5);
    EXPECT_GT(u.mean_relative, 0.1);
    EXPECT_THROW(msp::homogeneity_check(oracle_for(s), probe, 2, 6), msp::DimensionError);
}

TEST(Spectrum, SimilarMatricesMatch) {
    std::mt19937_64 g(2);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> angles{0.3 + 0.05 * i, -1.2};
        const Matrix r = msp::latent_rotation(angles);
        const Matrix p = msp::add(Matrix::identity(4), gradcheck::random(4, 4, g, 0.3));
        const Matrix pinv = oracle::from_dense(oracle::gauss_solve(oracle::to_dense(p), oracle::to_dense(Matrix::identity(4))));
        const Matrix sim = msp::matmul(p, msp::matmul(r, pinv));
        EXPECT_LT(msp::spectrum_distance(r, sim), 1e-8);
    }
}

TEST(Spectrum, NearTiedRealPartsPairByImaginary) {
    // cos(1.2) appears twice, with opposite rotation senses.
    const Matrix r = msp::latent_rotation(std::vector<double>{1.2, -1.2 + 1e-13});
    const Matrix q = msp::latent_rotation(std::vector<double>{-1.2, 1.2});
    EXPECT_LT(msp::spectrum_distance(r, q), 1e-8);
}

TEST(Spectrum, RotationDistance) {
    for (double th : {0.3, 1.0, 2.5})
        for (double tp : {0.7, 1.9}) {
            const double want = 2.0 * std::abs(std::polar(1.0, th) - std::polar(1.0, tp));
            EXPECT_NEAR(msp::spectrum_distance(rot(th), rot(tp)), want, 1e-12);
        }
    const std::vector<Matrix> one{rot(0.2)};
    const auto rep = msp::spectrum_similarity(one);
    EXPECT_TRUE(rep.pairs.empty());
    EXPECT_TRUE(rep.distances.empty());
}

TEST(Spectrum, CanonicalOrderAndConjugatePairs) {
    const auto ev = msp::canonical_spectrum(msp::latent_rotation(std::vector<double>{0.5, 2.0}));
    ASSERT_EQ(ev.size(), 4u);
    for (std::size_t i = 1; i < ev.size(); ++i)
        EXPECT_TRUE(ev[i - 1].real() < ev[i].real() ||
                    (ev[i - 1].real() == ev[i].real() && ev[i - 1].imag() <= ev[i].imag()));
    EXPECT_EQ(ev[0], std::conj(ev[1]));
    EXPECT_EQ(ev[2], std::conj(ev[3]));
}

TEST(Spectrum, PowerLawOnOracle) {
    const auto s = linear_spec(5, 20);
    const auto data = msp::make_dataset(s, 7, msp::Mode::velocity);
    const auto p = oracle_for(s);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Matrix seq = data.frames(i, 0, 5);
        Matrix stride2(2, s.obs_dim);
        for (std::size_t c = 0; c < s.obs_dim; ++c) {
            stride2(0, c) = seq(0, c);
            stride2(1, c) = seq(2, c);
        }
        msp::Tape t;
        const auto bm = msp::bind(t, p, false);
        const Matrix m1 = msp::detail::sequence_transition(bm, seq, 2).m_star.value();
        const Matrix m2 = msp::detail::sequence_transition(bm, stride2, 2).m_star.value();
        EXPECT_LT(msp::spectrum_distance(m2, msp::matmul(m1, m1)), 1e-8);
    }
}

TEST(Regression, ExactLinearTargets) {
    std::mt19937_64 g(3);
    const std::size_t N = 200;
    std::vector<Matrix> ms;
    Matrix targets(N, 2);
    const Matrix w = gradcheck::random(9, 2, g);
    for (std::size_t i = 0; i < N; ++i) {
        ms.push_back(gradcheck::random(3, 3, g));
        for (std::size_t c = 0; c < 2; ++c) {
            double v = 0.5 + c;
            for (std::size_t f = 0; f < 9; ++f) v += ms.back()[f] * w(f, c);
            targets(i, c) = v;
        }
    }
    for (const auto& r : msp::regress_transition_params(ms, targets, 1)) {
        ASSERT_TRUE(r.has_value());
        EXPECT_LT(*r, 1e-6);
    }
}

TEST(Regression, NoiseTargetsAreChanceLevel) {
    std::mt19937_64 g(4);
    const std::size_t N = 1000;
    std::vector<Matrix> ms;
    for (std::size_t i = 0; i < N; ++i) ms.push_back(gradcheck::random(3, 3, g));
    const Matrix targets = gradcheck::random(N, 4, g);
    for (const auto& r : msp::regress_transition_params(ms, targets, 2)) {
        ASSERT_TRUE(r.has_value());
        EXPECT_GE(*r, 0.8);
        EXPECT_LE(*r, 1.2);
    }
}

TEST(Regression, DegenerateTargetIsNullAndSmallSetsRejected) {
    std::mt19937_64 g(5);
    std::vector<Matrix> ms;
    for (int i = 0; i < 50; ++i) ms.push_back(gradcheck::random(2, 2, g));
    Matrix targets(50, 2, 3.0);
    for (int i = 0; i < 50; ++i) targets(i, 1) = ms[i][0];
    const auto r = msp::regress_transition_params(ms, targets);
    EXPECT_FALSE(r[0].has_value());
    EXPECT_TRUE(r[1].has_value());
    EXPECT_TRUE(msp::regression_json(r)["one_minus_r2"][0].is_null());
    const std::vector<Matrix> few(ms.begin(), ms.begin() + 4);
    EXPECT_THROW(msp::regress_transition_params(few, Matrix(4, 1)), msp::ContractError);
}

TEST(Regression, OracleTransitionsRecoverVelocity) {
    auto s = linear_spec(3, 400);
    const auto data = msp::make_dataset(s, 9, msp::Mode::velocity);
    const auto ms = msp::sequence_transitions(oracle_for(s), data, 2);
    for (const auto& r : msp::regress_transition_params(ms, msp::velocity_targets(data), 3)) {
        ASSERT_TRUE(r.has_value());
        EXPECT_LT(*r, 0.05);
    }
}

TEST(Reports, PureAndTagged) {
    const auto s = linear_spec(7, 10);
    const auto data = msp::make_dataset(s, 6, msp::Mode::velocity);
    const auto p = untrained(s.obs_dim);
    const auto run = [&] {
        msp::json j;
        j["h"] = msp::to_json(msp::homogeneity_check(p, data, 2, 5));
        const auto ms = msp::sequence_transitions(p, data, 2);
        j["s"] = msp::to_json(msp::spectrum_similarity(ms));
        j["e"] = msp::to_json(msp::equivariance_error(p, msp::make_paired(s, 1, msp::Mode::velocity), 2, 1));
        j["d"] = msp::to_json(msp::transition_distance(ms[0], ms[1]));
        j["r"] = msp::regression_json(msp::regress_transition_params(ms, msp::velocity_targets(data)));
        return j.dump();
    };
    const std::string a = run();
    EXPECT_EQ(a, run());
    const auto j = msp::json::parse(a);
    EXPECT_EQ(j["h"]["kind"], "homogeneity");
    EXPECT_EQ(j["s"]["kind"], "spectrum");
    EXPECT_EQ(j["e"]["kind"], "equivariance");
    EXPECT_EQ(j["d"]["kind"], "transition_distance");
    EXPECT_EQ(j["d"]["entrywise"].size(), 4u);
}

TEST(HorizonErrors, OracleIsExactAndShapeChecked) {
    const auto s = linear_spec(8, 10);
    const auto data = msp::make_dataset(s, 6, msp::Mode::velocity);
    const auto e = msp::horizon_errors(oracle_for(s), data, 2, 6);
    ASSERT_EQ(e.size(), 6u);
    for (double v : e) EXPECT_LT(v, 1e-20);
    EXPECT_THROW(msp::horizon_errors(oracle_for(s), data, 2, 7), msp::DimensionError);
    EXPECT_GT(msp::frame_variance(data, 2), 0.0);
}
