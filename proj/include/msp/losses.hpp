#pragma once

#include <span>
#include <vector>

#include "msp/autodiff.hpp"
#include "msp/model.hpp"
#include "msp/transition.hpp"

namespace msp {

/// Which objective to build and over which frames.
struct ObjectiveSpec {
    Variant variant = Variant::msp;
    int order = 1;
    std::size_t T_c = 2;
    std::size_t T_p = 1;
    double inv_weight = 0.0;

    static ObjectiveSpec from(const TrainConfig& c) { return {c.variant, c.order, c.T_c, c.T_p, c.inv_weight}; }
};

struct ObjectiveResult {
    Var loss;
    /// Per-sequence first transition matrix (M*, M_θ, or ²M*) values.
    std::vector<Matrix> transitions;
};

/// Rows [t0, t1) of every sequence stacked sequence-major.
inline Matrix stack_frames(std::span<const Matrix> seqs, std::size_t t0, std::size_t t1) {
    const std::size_t n = seqs.front().cols();
    Matrix out(seqs.size() * (t1 - t0), n);
    std::size_t r = 0;
    for (const auto& s : seqs) {
        if (s.rows() < t1) throw DimensionError("sequence too short: has " + std::to_string(s.rows()) + " frames");
        for (std::size_t t = t0; t < t1; ++t, ++r) {
            const auto src = s.row(t);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
    }
    return out;
}

/// M_θ(s_c) = I + reshape(net([s_1, ..., s_{T_c}])) for each row of cond
/// (B x T_c n); the identity offset starts the network near "no motion".
inline std::vector<Var> neural_mstar(const BoundModel& bm, const Var& cond) {
    const std::size_t a = bm.params->a;
    Tape& t = *bm.tape;
    const Var out = bm.transition.forward(cond);
    const Var eye = t.constant(Matrix::identity(a));
    std::vector<Var> ms;
    for (std::size_t i = 0; i < cond.rows; ++i) ms.push_back(add(reshape_row(out, i, a, a), eye));
    return ms;
}

/// Estimate for the model's variant/order from a sequence's conditioning
/// latents; `cond` (1 x T_c n) is only read by neural_mstar.
inline TransitionEstimate model_transition(const BoundModel& bm, std::span<const Var> latents,
                                           const Var* cond = nullptr) {
    const ModelParams& p = *bm.params;
    switch (p.variant) {
        case Variant::fixed_blocks: return estimate_transition_blockwise(latents, 2);
        case Variant::neural_mstar: {
            if (cond == nullptr) throw ContractError("model_transition: neural_mstar needs conditioning frames");
            return {1, neural_mstar(bm, *cond).front(), std::nullopt, 0.0};
        }
        case Variant::msp:
        case Variant::rec_model:
            return p.order == 2 ? estimate_second_order(latents) : estimate_transition(latents);
    }
    throw ContractError("model_transition: unknown variant");
}

namespace detail {

inline Var mean_sq_error(const Var& pred, const Matrix& target) {
    Tape& t = *pred.tape;
    const Var diff = sub(pred, t.constant(target));
    return scale(frobenius_sq(diff), 1.0 / static_cast<double>(pred.rows));
}

}  // namespace detail

/// Training objective over a batch of sequences (each T x n), averaged over
/// sequences and predicted frames. Per-frame error is the squared L2 norm.
///
///   msp / fixed_blocks / neural_mstar: condition on frames [0, T_c),
///       roll out T_p steps from Φ(s_{T_c}), score frames [T_c, T_c+T_p).
///   rec_model: fit on frames [0, T_c), reconstruct [1, T_c) from Φ(s_1).
inline ObjectiveResult objective(const BoundModel& bm, std::span<const Matrix> seqs, const ObjectiveSpec& spec) {
    const ModelParams& p = *bm.params;
    Tape& tape = *bm.tape;
    const std::size_t B = seqs.size(), Tc = spec.T_c;
    const bool rec = spec.variant == Variant::rec_model;
    const std::size_t steps = rec ? Tc - 1 : spec.T_p;

    const Matrix x_cond = stack_frames(seqs, 0, Tc);
    const Var xc = tape.constant(x_cond);
    const Var enc = encode_rows(bm, xc);

    std::vector<Var> thetas;
    if (spec.variant == Variant::neural_mstar) {
        Matrix cond(B, Tc * p.obs_dim, std::vector<double>(x_cond.data().begin(), x_cond.data().end()));
        thetas = neural_mstar(bm, tape.constant(std::move(cond)));
    }

    ObjectiveResult res;
    std::vector<Var> preds;
    preds.reserve(B * steps);
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<Var> lat;
        for (std::size_t t = 0; t < Tc; ++t) lat.push_back(reshape_row(enc, b * Tc + t, p.a, p.m));
        TransitionEstimate est;
        if (spec.variant == Variant::neural_mstar) {
            est = {1, thetas[b], std::nullopt, 0.0};
        } else if (spec.variant == Variant::fixed_blocks) {
            est = estimate_transition_blockwise(lat, 2);
        } else {
            est = spec.order == 2 ? estimate_second_order(lat) : estimate_transition(lat);
        }
        res.transitions.push_back(est.m_star.value());
        const Var start = rec ? lat.front() : lat.back();
        const auto out = predict_latents(est, start, steps);
        preds.insert(preds.end(), out.begin(), out.end());
    }
    const Var decoded = decode_rows(bm, stack_rows(preds));
    const Matrix target = rec ? stack_frames(seqs, 1, Tc) : stack_frames(seqs, Tc, Tc + steps);
    Var loss = detail::mean_sq_error(decoded, target);

    if (spec.variant == Variant::neural_mstar && spec.inv_weight > 0.0) {
        const Var recon = decode_rows(bm, enc);
        loss = add(loss, scale(detail::mean_sq_error(recon, x_cond), spec.inv_weight));
    }
    res.loss = loss;
    return res;
}

/// L^p on one sequence (T x n): mean over the T_p predicted frames of
/// ||Ψ(M*^j Φ(s_{T_c})) - s_{T_c+j}||².
inline Var loss_pred(const BoundModel& bm, const Matrix& sequence, std::size_t T_c, std::size_t T_p) {
    const ModelParams& p = *bm.params;
    ObjectiveSpec spec{p.variant == Variant::rec_model ? Variant::msp : p.variant, p.order, T_c, T_p, 0.0};
    return objective(bm, std::span<const Matrix>(&sequence, 1), spec).loss;
}

/// L^r on one sequence: M* from frames [0, T_c), mean error reconstructing
/// frames 2..T_c from Φ(s_1).
inline Var loss_rec(const BoundModel& bm, const Matrix& sequence, std::size_t T_c) {
    ObjectiveSpec spec{Variant::rec_model, 1, T_c, 0, 0.0};
    return objective(bm, std::span<const Matrix>(&sequence, 1), spec).loss;
}

/// Σ_t ||Ψ(Φ(s_t)) - s_t||² over the rows of frames.
inline Var invertibility_loss(const BoundModel& bm, const Matrix& frames) {
    Tape& t = *bm.tape;
    const Var recon = decode_rows(bm, encode_rows(bm, t.constant(frames)));
    return frobenius_sq(sub(recon, t.constant(frames)));
}

}  // namespace msp
