#pragma once

#include <cmath>
#include <numbers>

#include "msp/datagen.hpp"
#include "msp/model.hpp"
#include "msp/rng.hpp"

namespace msp {

struct OracleOptions {
    std::size_t m = 4;
    std::uint64_t seed = 0;
    /// Mix latent rows by a random orthogonal Q, so M* = Q ρ(g) Qᵀ instead
    /// of being block-diagonal in the stored basis.
    bool mix_rows = false;
};

namespace detail {

/// (AᵀA)⁻¹Aᵀ for a tall full-column-rank A.
inline Matrix left_pinv(const Matrix& a) { return matmul_nt(spd_inverse_value(matmul_tn(a, a)), a); }

inline Matrix random_orthogonal(std::size_t n, Rng& rng) {
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = rng.normal();
            s(i, j) = v;
            s(j, i) = -v;
        }
    return expm(s);
}

}  // namespace detail

/// (a*m) x 2k map K with vec(Φ(z)) = K z, where column c of Φ(z) applies a
/// random rotation-scaling to every 2-block of z. Such blocks commute with
/// SO(2), so Φ(ρ(g) z) = ρ(g) Φ(z) (or Q ρ(g) Qᵀ Φ(z) with row mixing).
inline Matrix equivariant_lift(std::size_t k, const OracleOptions& opt) {
    const std::size_t a = 2 * k, m = opt.m;
    Rng rng(stream_seed(opt.seed, 0x0a11));
    std::vector<Matrix> cols;
    for (std::size_t c = 0; c < m; ++c) {
        Matrix b(a, a);
        for (std::size_t j = 0; j < k; ++j) {
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi), gain = rng.uniform(0.5, 1.5);
            const double cs = gain * std::cos(phase), sn = gain * std::sin(phase);
            b(2 * j, 2 * j) = cs;
            b(2 * j, 2 * j + 1) = -sn;
            b(2 * j + 1, 2 * j) = sn;
            b(2 * j + 1, 2 * j + 1) = cs;
        }
        cols.push_back(std::move(b));
    }
    if (opt.mix_rows) {
        const Matrix q = detail::random_orthogonal(a, rng);
        for (auto& b : cols) b = matmul(q, b);
    }
    Matrix lift(a * m, a);
    for (std::size_t r = 0; r < a; ++r)
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t j = 0; j < a; ++j) lift(r * m + c, j) = cols[c](r, j);
    return lift;
}

/// Exactly equivariant linear encoder/decoder for data generated with
/// nonlinearity 0, where x = W3 z. Single-layer networks, a = 2k.
inline ModelParams oracle_model(const GeneratorSpec& spec, const OracleOptions& opt = {}, int order = 1,
                                std::size_t T_c = 2) {
    if (spec.nonlinearity != 0.0) throw ContractError("oracle_model: needs a linear mixing map (nonlinearity 0)");
    const std::size_t k = spec.k, a = 2 * k;
    if (opt.m < a) throw DimensionError("oracle_model: m must be >= 2k");
    const MixingMap mix = MixingMap::from_spec(spec);
    const Matrix lift = equivariant_lift(k, opt);

    ModelParams p;
    p.a = a;
    p.m = opt.m;
    p.obs_dim = spec.obs_dim;
    p.variant = Variant::msp;
    p.order = order;
    p.T_c = T_c;
    p.encoder.w.push_back(transpose(matmul(lift, detail::left_pinv(mix.w3))));
    p.encoder.b.emplace_back(1, a * opt.m);
    p.decoder.w.push_back(transpose(matmul(mix.w3, detail::left_pinv(lift))));
    p.decoder.b.emplace_back(1, spec.obs_dim);
    return p;
}

}  // namespace msp
