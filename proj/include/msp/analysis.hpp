#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "msp/binio.hpp"
#include "msp/datagen.hpp"
#include "msp/losses.hpp"
#include "msp/model.hpp"
#include "msp/rng.hpp"
#include "msp/trainer.hpp"

namespace msp {

namespace detail {

/// Frames [0, T_c) of one sequence flattened into a 1 x T_c n row.
inline Matrix flatten_frames(const Matrix& seq, std::size_t T_c) {
    const std::size_t n = seq.cols();
    Matrix out(1, T_c * n);
    std::copy(seq.data().begin(), seq.data().begin() + static_cast<std::ptrdiff_t>(T_c * n), out.data().begin());
    return out;
}

inline Matrix row_range(const Matrix& seq, std::size_t t0, std::size_t t1) {
    if (seq.rows() < t1) throw DimensionError("sequence too short: has " + std::to_string(seq.rows()) + " frames");
    Matrix out(t1 - t0, seq.cols());
    std::copy(seq.data().begin() + static_cast<std::ptrdiff_t>(t0 * seq.cols()),
              seq.data().begin() + static_cast<std::ptrdiff_t>(t1 * seq.cols()), out.data().begin());
    return out;
}

/// Encoded conditioning latents of one sequence as a x m Vars.
inline std::vector<Var> conditioning_latents(const BoundModel& bm, const Matrix& seq, std::size_t T_c) {
    const ModelParams& p = *bm.params;
    const Var enc = encode_rows(bm, bm.tape->constant(row_range(seq, 0, T_c)));
    std::vector<Var> lat;
    for (std::size_t t = 0; t < T_c; ++t) lat.push_back(reshape_row(enc, t, p.a, p.m));
    return lat;
}

inline TransitionEstimate sequence_transition(const BoundModel& bm, const Matrix& seq, std::size_t T_c) {
    const auto lat = conditioning_latents(bm, seq, T_c);
    const Var cond = bm.tape->constant(flatten_frames(seq, T_c));
    return model_transition(bm, lat, &cond);
}

struct CrossPrediction {
    Var loss;
    Var decoded;
};

/// Transition estimated on `src`, rolled out from Φ(dst_{T_c}), scored on
/// dst frames [T_c, T_c+T_p). Same op sequence as the training objective, so
/// src == dst reproduces loss_pred bit for bit.
inline CrossPrediction cross_prediction(const BoundModel& bm, const Matrix& src, const Matrix& dst, std::size_t T_c,
                                        std::size_t T_p) {
    const TransitionEstimate est = sequence_transition(bm, src, T_c);
    const auto dst_lat = conditioning_latents(bm, dst, T_c);
    const auto preds = predict_latents(est, dst_lat.back(), T_p);
    const Var decoded = decode_rows(bm, stack_rows(preds));
    const Matrix target = row_range(dst, T_c, T_c + T_p);
    const Var diff = sub(decoded, bm.tape->constant(target));
    return {scale(frobenius_sq(diff), 1.0 / static_cast<double>(decoded.rows)), decoded};
}

inline std::vector<double> row_sq_errors(const Matrix& pred, const Matrix& target) {
    std::vector<double> out(pred.rows(), 0.0);
    for (std::size_t r = 0; r < pred.rows(); ++r)
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            const double d = pred(r, c) - target(r, c);
            out[r] += d * d;
        }
    return out;
}

inline json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

/// Forward-only transition (M*, M_θ, or ²M*) per sequence of `data`.
inline std::vector<Matrix> sequence_transitions(const ModelParams& p, const SequenceBatch& data, std::size_t T_c) {
    std::vector<Matrix> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        Tape tape;
        const BoundModel bm = bind(tape, p, false);
        out.push_back(detail::sequence_transition(bm, data.frames(i, 0, T_c), T_c).m_star.value());
    }
    return out;
}

/// Mean squared error of the j-th predicted frame, j = 1..horizons, with
/// conditioning on frames [0, T_c) and a single rollout per sequence.
inline std::vector<double> horizon_errors(const ModelParams& p, const SequenceBatch& data, std::size_t T_c,
                                          std::size_t horizons) {
    if (data.length() < T_c + horizons) {
        throw DimensionError("horizon_errors: sequences have " + std::to_string(data.length()) + " frames, need " +
                             std::to_string(T_c + horizons));
    }
    std::vector<double> err(horizons, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        Tape tape;
        const BoundModel bm = bind(tape, p, false);
        const Matrix seq = data.frames(i, 0, T_c + horizons);
        const auto cp = detail::cross_prediction(bm, seq, seq, T_c, horizons);
        const auto e = detail::row_sq_errors(cp.decoded.value(), detail::row_range(seq, T_c, T_c + horizons));
        for (std::size_t j = 0; j < horizons; ++j) err[j] += e[j];
    }
    for (auto& e : err) e /= static_cast<double>(data.size());
    return err;
}

/// Variance of frames at one time index, summed over observation dims.
inline double frame_variance(const SequenceBatch& data, std::size_t t) {
    const std::size_t n = data.obs_dim(), N = data.size();
    std::vector<double> mu(n, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const auto f = data.frame(i, t);
        for (std::size_t j = 0; j < n; ++j) mu[j] += f[j];
    }
    for (auto& v : mu) v /= static_cast<double>(N);
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const auto f = data.frame(i, t);
        for (std::size_t j = 0; j < n; ++j) s += (f[j] - mu[j]) * (f[j] - mu[j]);
    }
    return s / static_cast<double>(N);
}

// ---------------------------------------------------------------------------
// Equivariance
// ---------------------------------------------------------------------------

struct EquivarianceReport {
    double loss_pred = 0.0;
    double loss_equiv = 0.0;
    std::optional<double> ratio;
    std::size_t samples = 0;
};

/// L^p on the second batch and L^p_equiv with M* taken from the first batch
/// of each pair, both averaged over pairs and predicted frames.
inline EquivarianceReport equivariance_error(const ModelParams& p, const PairedBatch& paired, std::size_t T_c,
                                             std::size_t T_p) {
    const SequenceBatch& s = paired.first;
    const SequenceBatch& sp = paired.second;
    if (s.size() != sp.size()) throw DimensionError("equivariance_error: paired batches differ in size");
    EquivarianceReport rep;
    rep.samples = s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
        Tape tape;
        const BoundModel bm = bind(tape, p, false);
        const Matrix a = s.frames(i, 0, T_c + T_p), b = sp.frames(i, 0, T_c + T_p);
        rep.loss_pred += detail::cross_prediction(bm, b, b, T_c, T_p).loss.value()(0, 0);
        rep.loss_equiv += detail::cross_prediction(bm, a, b, T_c, T_p).loss.value()(0, 0);
    }
    if (rep.samples > 0) {
        rep.loss_pred /= static_cast<double>(rep.samples);
        rep.loss_equiv /= static_cast<double>(rep.samples);
    }
    if (rep.loss_pred >= 1e-15) rep.ratio = rep.loss_equiv / rep.loss_pred;
    return rep;
}

/// Single-sequence L^p_equiv: M* from `src` applied to `dst`.
inline double equivariance_loss(const ModelParams& p, const Matrix& src, const Matrix& dst, std::size_t T_c,
                                std::size_t T_p) {
    Tape tape;
    const BoundModel bm = bind(tape, p, false);
    return detail::cross_prediction(bm, src, dst, T_c, T_p).loss.value()(0, 0);
}

struct SwapResult {
    /// M*(s) applied to Φ(s') and M*(s') applied to Φ(s), decoded.
    Matrix on_second;
    Matrix on_first;
    std::vector<double> swap_err_second;
    std::vector<double> swap_err_first;
    std::vector<double> self_err_second;
    std::vector<double> self_err_first;
};

inline SwapResult transition_swap(const ModelParams& p, const Matrix& s, const Matrix& sp, std::size_t T_c,
                                  std::size_t T_p) {
    Tape tape;
    const BoundModel bm = bind(tape, p, false);
    const Matrix ts = detail::row_range(s, T_c, T_c + T_p), tsp = detail::row_range(sp, T_c, T_c + T_p);
    SwapResult r;
    r.on_second = detail::cross_prediction(bm, s, sp, T_c, T_p).decoded.value();
    r.on_first = detail::cross_prediction(bm, sp, s, T_c, T_p).decoded.value();
    r.swap_err_second = detail::row_sq_errors(r.on_second, tsp);
    r.swap_err_first = detail::row_sq_errors(r.on_first, ts);
    r.self_err_second = detail::row_sq_errors(detail::cross_prediction(bm, sp, sp, T_c, T_p).decoded.value(), tsp);
    r.self_err_first = detail::row_sq_errors(detail::cross_prediction(bm, s, s, T_c, T_p).decoded.value(), ts);
    return r;
}

struct TransitionDistance {
    double total = 0.0;
    Matrix entrywise;
};

/// ||M1 - M2||_F^2 and (M1 - M2)^2 entrywise.
inline TransitionDistance transition_distance(const Matrix& m1, const Matrix& m2) {
    require_same_shape(m1, m2, "transition_distance");
    const Matrix d = sub(m1, m2);
    Matrix sq = hadamard(d, d);
    return {frobenius_sq(d), std::move(sq)};
}

// ---------------------------------------------------------------------------
// Intra-orbital homogeneity
// ---------------------------------------------------------------------------

struct HomogeneityReport {
    std::vector<std::size_t> shifts;
    /// Per shift ℓ: mean over sequences of ||M*(x) - M*(g^ℓ x)||_F, and the
    /// same divided by ||M*(x)||_F.
    std::vector<double> distance;
    std::vector<double> relative;
    double max_relative = 0.0;
    double mean_relative = 0.0;
};

/// Compares M* of the window starting at frame 0 with the windows starting
/// at frames 1..max_shift of the same sequence.
inline HomogeneityReport homogeneity_check(const ModelParams& p, const SequenceBatch& probe, std::size_t T_c,
                                           std::size_t max_shift = 5) {
    if (probe.length() < T_c + max_shift) {
        throw DimensionError("homogeneity_check: probe sequences need " + std::to_string(T_c + max_shift) + " frames");
    }
    HomogeneityReport rep;
    rep.distance.assign(max_shift, 0.0);
    rep.relative.assign(max_shift, 0.0);
    for (std::size_t l = 1; l <= max_shift; ++l) rep.shifts.push_back(l);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        Tape tape;
        const BoundModel bm = bind(tape, p, false);
        const Matrix base = detail::sequence_transition(bm, probe.frames(i, 0, T_c), T_c).m_star.value();
        const double norm = frobenius(base);
        for (std::size_t l = 1; l <= max_shift; ++l) {
            const Matrix m = detail::sequence_transition(bm, probe.frames(i, l, l + T_c), T_c).m_star.value();
            const double d = frobenius(sub(base, m));
            rep.distance[l - 1] += d;
            rep.relative[l - 1] += norm > 0.0 ? d / norm : 0.0;
        }
    }
    const double n = static_cast<double>(std::max<std::size_t>(probe.size(), 1));
    for (std::size_t l = 0; l < max_shift; ++l) {
        rep.distance[l] /= n;
        rep.relative[l] /= n;
        rep.max_relative = std::max(rep.max_relative, rep.relative[l]);
        rep.mean_relative += rep.relative[l] / static_cast<double>(max_shift);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

inline constexpr double kSpectrumTieTol = 1e-9;

/// Eigenvalues with conjugate pairs made exact and sorted by (Re, Im).
inline std::vector<std::complex<double>> canonical_spectrum(const Matrix& m) {
    auto ev = eigenvalues(m);
    for (auto& z : ev)
        if (std::abs(z.imag()) <= 1e-14 * std::max(1.0, std::abs(z))) z = {z.real(), 0.0};
    std::vector<bool> used(ev.size(), false);
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (used[i] || ev[i].imag() == 0.0) continue;
        std::size_t best = i;
        double best_d = 0.0;
        for (std::size_t j = i + 1; j < ev.size(); ++j) {
            if (used[j] || ev[j].imag() == 0.0) continue;
            const double d = std::abs(ev[j] - std::conj(ev[i]));
            if (best == i || d < best_d) best = j, best_d = d;
        }
        if (best == i) continue;
        const double re = 0.5 * (ev[i].real() + ev[best].real());
        const double im = 0.5 * (std::abs(ev[i].imag()) + std::abs(ev[best].imag()));
        ev[i] = {re, -im};
        ev[best] = {re, im};
        used[i] = used[best] = true;
    }
    std::sort(ev.begin(), ev.end(), [](const auto& x, const auto& y) {
        return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
    });
    // Real parts that agree up to rounding count as ties, ordered by Im.
    for (std::size_t lo = 0; lo < ev.size();) {
        std::size_t hi = lo + 1;
        while (hi < ev.size() && ev[hi].real() - ev[hi - 1].real() <= kSpectrumTieTol * std::max(1.0, std::abs(ev[hi])))
            ++hi;
        std::sort(ev.begin() + static_cast<std::ptrdiff_t>(lo), ev.begin() + static_cast<std::ptrdiff_t>(hi),
                  [](const auto& x, const auto& y) { return x.imag() < y.imag(); });
        lo = hi;
    }
    return ev;
}

/// Σ |λ_i - μ_i| over canonically sorted spectra.
inline double spectrum_distance(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "spectrum_distance");
    const auto x = canonical_spectrum(a), y = canonical_spectrum(b);
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += std::abs(x[i] - y[i]);
    return d;
}

struct SpectrumReport {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<double> distances;
    double mean = 0.0;
    double median = 0.0;
    double max = 0.0;
};

namespace detail {

inline void summarize(SpectrumReport& r) {
    if (r.distances.empty()) return;
    std::vector<double> s = r.distances;
    std::sort(s.begin(), s.end());
    for (double d : s) r.mean += d / static_cast<double>(s.size());
    r.max = s.back();
    r.median = s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
}

}  // namespace detail

/// All pairs i < j of the list.
inline SpectrumReport spectrum_similarity(std::span<const Matrix> ms) {
    SpectrumReport r;
    for (std::size_t i = 0; i < ms.size(); ++i)
        for (std::size_t j = i + 1; j < ms.size(); ++j) {
            r.pairs.emplace_back(i, j);
            r.distances.push_back(spectrum_distance(ms[i], ms[j]));
        }
    detail::summarize(r);
    return r;
}

/// Index-matched pairs (a[i], b[i]).
inline SpectrumReport spectrum_similarity(std::span<const Matrix> a, std::span<const Matrix> b) {
    if (a.size() != b.size()) throw DimensionError("spectrum_similarity: lists differ in length");
    SpectrumReport r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.pairs.emplace_back(i, i);
        r.distances.push_back(spectrum_distance(a[i], b[i]));
    }
    detail::summarize(r);
    return r;
}

// ---------------------------------------------------------------------------
// Regression probe
// ---------------------------------------------------------------------------

inline constexpr double kRidge = 1e-6;

/// (cos v_j, sin v_j) for every factor j, one row per sequence.
inline Matrix velocity_targets(const SequenceBatch& data) {
    const std::size_t k = data.spec.k;
    Matrix out(data.size(), 2 * k);
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j = 0; j < k; ++j) {
            out(i, 2 * j) = std::cos(data.velocity(i, j));
            out(i, 2 * j + 1) = std::sin(data.velocity(i, j));
        }
    return out;
}

/// Ridge regression from flattened matrices (plus intercept, via centering)
/// to each target column; returns held-out 1 - R² per column, null where
/// the target has no variance.
inline std::vector<std::optional<double>> regress_transition_params(std::span<const Matrix> ms, const Matrix& targets,
                                                                    std::uint64_t seed = 0) {
    const std::size_t N = ms.size();
    if (N != targets.rows()) throw DimensionError("regress_transition_params: matrix and target counts differ");
    if (N < 5) throw ContractError("regress_transition_params: needs at least 5 samples for an 80/20 split");
    const std::size_t f = ms.front().size();
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    Rng rng(stream_seed(seed, 0x7e57));
    shuffle(order, rng);
    const std::size_t n_train = (N * 4) / 5;

    Eigen::MatrixXd X(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(f));
    for (std::size_t r = 0; r < N; ++r) {
        if (ms[order[r]].size() != f) throw DimensionError("regress_transition_params: matrices differ in size");
        const auto d = ms[order[r]].data();
        for (std::size_t c = 0; c < f; ++c) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d[c];
    }
    const auto ntr = static_cast<Eigen::Index>(n_train), nte = static_cast<Eigen::Index>(N - n_train);
    const Eigen::RowVectorXd mu = X.topRows(ntr).colwise().mean();
    const Eigen::MatrixXd Xtr = X.topRows(ntr).rowwise() - mu;
    const Eigen::MatrixXd Xte = X.bottomRows(nte).rowwise() - mu;
    Eigen::MatrixXd gram = Xtr.transpose() * Xtr;
    gram.diagonal().array() += kRidge;
    const Eigen::LDLT<Eigen::MatrixXd> solver(gram);

    std::vector<std::optional<double>> out;
    for (std::size_t c = 0; c < targets.cols(); ++c) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(N));
        for (std::size_t r = 0; r < N; ++r) y(static_cast<Eigen::Index>(r)) = targets(order[r], c);
        const double ymu = y.mean();
        if ((y.array() - ymu).square().mean() < 1e-15) {
            out.emplace_back(std::nullopt);
            continue;
        }
        const Eigen::VectorXd ytr = y.head(ntr).array() - y.head(ntr).mean();
        const Eigen::VectorXd w = solver.solve(Xtr.transpose() * ytr);
        const Eigen::VectorXd pred = (Xte * w).array() + y.head(ntr).mean();
        const Eigen::VectorXd yte = y.tail(nte);
        const double sse = (pred - yte).squaredNorm();
        const double sst = (yte.array() - yte.mean()).square().sum();
        if (sst < 1e-15) {
            out.emplace_back(std::nullopt);
            continue;
        }
        out.emplace_back(sse / sst);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json to_json(const EquivarianceReport& r) {
    return {{"kind", "equivariance"},
            {"loss_pred", r.loss_pred},
            {"loss_equiv", r.loss_equiv},
            {"ratio", detail::opt_json(r.ratio)},
            {"samples", r.samples}};
}

inline json to_json(const HomogeneityReport& r) {
    return {{"kind", "homogeneity"},         {"shifts", r.shifts},
            {"distance", r.distance},        {"relative", r.relative},
            {"max_relative", r.max_relative}, {"mean_relative", r.mean_relative}};
}

inline json to_json(const SpectrumReport& r) {
    json pairs = json::array();
    for (const auto& [i, j] : r.pairs) pairs.push_back({i, j});
    return {{"kind", "spectrum"}, {"pairs", pairs},     {"distances", r.distances},
            {"mean", r.mean},     {"median", r.median}, {"max", r.max}};
}

inline json to_json(const TransitionDistance& d) {
    return {{"kind", "transition_distance"}, {"total", d.total}, {"entrywise", detail::matrix_json(d.entrywise)}};
}

inline json regression_json(const std::vector<std::optional<double>>& scores) {
    json s = json::array();
    for (const auto& v : scores) s.push_back(detail::opt_json(v));
    return {{"kind", "regression"}, {"one_minus_r2", s}};
}

}  // namespace msp
