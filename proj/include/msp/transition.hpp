#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msp/autodiff.hpp"
#include "msp/error.hpp"

namespace msp {

/// Closed-form latent transition of one sequence.
///   order 1: m_star = M*
///   order 2: m_star = ²M* (acceleration), m_last = ¹M at the last
///            conditioning frame (velocity)
struct TransitionEstimate {
    int order = 1;
    Var m_star;
    std::optional<Var> m_last;
    /// Squared Frobenius misfit of the internal least-squares problem.
    double residual = 0.0;
};

namespace detail {

inline double fit_residual(const Matrix& m, const Matrix& h0, const Matrix& h1) {
    return frobenius_sq(sub(matmul(m, h0), h1));
}

/// M = H1 H0† for horizontally concatenated H0 = [X_0 .. X_{n-2}], H1 = [X_1 .. X_{n-1}].
inline TransitionEstimate solve_shifted(std::span<const Var> xs) {
    const std::vector<Var> first(xs.begin(), xs.end() - 1), next(xs.begin() + 1, xs.end());
    const Var h0 = hcat(first), h1 = hcat(next);
    const Var m = matmul(h1, pinv_right(h0));
    return {1, m, std::nullopt, fit_residual(m.value(), h0.value(), h1.value())};
}

}  // namespace detail

/// M* = argmin_M Σ_t ||M Φ(s_t) - Φ(s_{t+1})||_F^2 = H₊₁ H₊₀†.
inline TransitionEstimate estimate_transition(std::span<const Var> latents) {
    if (latents.size() < 2) throw ContractError("estimate_transition: needs at least 2 latents");
    const std::size_t a = latents.front().rows;
    if ((latents.size() - 1) * latents.front().cols < a) {
        throw DimensionError("estimate_transition: (T_c-1)*m must be >= a");
    }
    return detail::solve_shifted(latents);
}

/// M* restricted to a direct sum of block x block transitions, each solved
/// on its own row slice of the latents. Off-block entries are exactly zero.
inline TransitionEstimate estimate_transition_blockwise(std::span<const Var> latents, std::size_t block = 2) {
    if (latents.size() < 2) throw ContractError("estimate_transition_blockwise: needs at least 2 latents");
    const std::size_t a = latents.front().rows;
    if (block == 0 || a % block != 0) {
        throw DimensionError("estimate_transition_blockwise: a=" + std::to_string(a) + " not divisible by block");
    }
    std::vector<Var> blocks;
    double residual = 0.0;
    for (std::size_t bi = 0; bi < a / block; ++bi) {
        std::vector<Var> sliced;
        for (const auto& h : latents) sliced.push_back(slice_rows(h, bi * block, (bi + 1) * block));
        try {
            auto est = detail::solve_shifted(sliced);
            residual += est.residual;
            blocks.push_back(est.m_star);
        } catch (const SingularityError& e) {
            throw SingularityError("block " + std::to_string(bi) + ": " + e.what(), e.pivot());
        }
    }
    return {1, block_diag(blocks), std::nullopt, residual};
}

/// Outputs M^{j+1} h for j = 0..steps-1 by repeated multiplication.
inline std::vector<Var> rollout(const Var& m, const Var& h, std::size_t steps) {
    if (steps < 1) throw ContractError("rollout: steps must be >= 1");
    std::vector<Var> out;
    out.reserve(steps);
    Var cur = h;
    for (std::size_t j = 0; j < steps; ++j) {
        cur = matmul(m, cur);
        out.push_back(cur);
    }
    return out;
}

/// Velocities ¹M_t = Φ(s_t) Φ(s_{t-1})†, then ²M* = ¹M₊₁ ¹M₊₀† over the
/// velocity sequence.
inline TransitionEstimate estimate_second_order(std::span<const Var> latents) {
    if (latents.size() < 3) throw ContractError("estimate_second_order: needs at least 3 latents");
    const std::size_t a = latents.front().rows;
    if (latents.front().cols < a) throw DimensionError("estimate_second_order: needs m >= a");
    std::vector<Var> velocities;
    for (std::size_t t = 1; t < latents.size(); ++t) {
        try {
            velocities.push_back(matmul(latents[t], pinv_right(latents[t - 1])));
        } catch (const SingularityError& e) {
            throw SingularityError("latent at time " + std::to_string(t - 1) + ": " + e.what(), e.pivot());
        }
    }
    TransitionEstimate est = detail::solve_shifted(velocities);
    est.order = 2;
    est.m_last = velocities.back();
    return est;
}

/// Second-order prediction: the step-j velocity is (²M*)^j ¹M_last, and
/// each step left-multiplies the running latent by it.
inline std::vector<Var> rollout_second_order(const TransitionEstimate& est, const Var& h, std::size_t steps) {
    if (est.order != 2 || !est.m_last) throw ContractError("rollout_second_order: needs an order-2 estimate");
    if (steps < 1) throw ContractError("rollout_second_order: steps must be >= 1");
    std::vector<Var> out;
    Var velocity = *est.m_last;
    Var cur = h;
    for (std::size_t j = 0; j < steps; ++j) {
        velocity = matmul(est.m_star, velocity);
        cur = matmul(velocity, cur);
        out.push_back(cur);
    }
    return out;
}

/// Dispatches on the estimate's order.
inline std::vector<Var> predict_latents(const TransitionEstimate& est, const Var& h, std::size_t steps) {
    return est.order == 2 ? rollout_second_order(est, h, steps) : rollout(est.m_star, h, steps);
}

}  // namespace msp
