#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "msp/error.hpp"
#include "msp/matrix.hpp"
#include "msp/rng.hpp"

namespace msp {

enum class Mode { velocity, acceleration };

inline const char* to_string(Mode m) { return m == Mode::velocity ? "velocity" : "acceleration"; }

inline Mode mode_from_string(const std::string& s) {
    if (s == "velocity") return Mode::velocity;
    if (s == "acceleration") return Mode::acceleration;
    throw ValidationError({"mode: expected \"velocity\" or \"acceleration\", got \"" + s + "\""});
}

/// Half-open interval [lo, hi).
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Synthetic data source: k commuting SO(2) factors acting on a 2k-dim
/// latent, observed through a fixed nonlinear mixing into R^obs_dim.
struct GeneratorSpec {
    std::size_t k = 3;
    std::size_t obs_dim = 24;
    std::size_t T = 3;
    Interval velocity{-std::numbers::pi / 2, std::numbers::pi / 2};
    Interval accel{0.0, 0.0};
    std::uint64_t mixing_seed = 0;
    std::size_t num_sequences = 5000;
    std::size_t mixing_hidden = 32;
    /// Weight of the tanh branch of the mixing map; 0 makes it linear.
    double nonlinearity = 1.0;
    /// Radius range of each latent 2D factor.
    Interval radius{0.5, 1.5};

    std::size_t latent_dim() const noexcept { return 2 * k; }

    /// Default ranges for a mode: velocity mode uses [-pi/2, pi/2) and no
    /// acceleration; acceleration mode uses [-pi/5, pi/5) and [-pi/40, pi/40).
    static GeneratorSpec defaults(Mode mode) {
        GeneratorSpec s;
        if (mode == Mode::acceleration) {
            s.velocity = {-std::numbers::pi / 5, std::numbers::pi / 5};
            s.accel = {-std::numbers::pi / 40, std::numbers::pi / 40};
        }
        return s;
    }

    void validate(Mode mode) const {
        std::vector<std::string> bad;
        if (k < 1) bad.push_back("k: must be >= 1");
        if (obs_dim < 2 * k) bad.push_back("obs_dim: must be >= 2k");
        const std::size_t min_t = mode == Mode::velocity ? 3 : 4;
        if (T < min_t) bad.push_back("T: must be >= " + std::to_string(min_t) + " in " + to_string(mode) + " mode");
        if (num_sequences < 1) bad.push_back("num_sequences: must be >= 1");
        if (!(velocity.lo <= velocity.hi) || !std::isfinite(velocity.lo) || !std::isfinite(velocity.hi))
            bad.push_back("velocity_range: need finite lo <= hi");
        if (!(accel.lo <= accel.hi) || !std::isfinite(accel.lo) || !std::isfinite(accel.hi))
            bad.push_back("accel_range: need finite lo <= hi");
        if (mixing_hidden < 1) bad.push_back("mixing_hidden: must be >= 1");
        if (!std::isfinite(nonlinearity)) bad.push_back("nonlinearity: must be finite");
        if (!(radius.lo > 0.0 && radius.lo <= radius.hi)) bad.push_back("radius_range: need 0 < lo <= hi");
        if (!bad.empty()) throw ValidationError(bad);
    }

    friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Block-diagonal direct sum of 2x2 rotations, one per angle.
inline Matrix latent_rotation(std::span<const double> angles) {
    const std::size_t k = angles.size();
    Matrix r(2 * k, 2 * k);
    for (std::size_t j = 0; j < k; ++j) {
        const double c = std::cos(angles[j]), s = std::sin(angles[j]);
        r(2 * j, 2 * j) = c;
        r(2 * j, 2 * j + 1) = -s;
        r(2 * j + 1, 2 * j) = s;
        r(2 * j + 1, 2 * j + 1) = c;
    }
    return r;
}

/// x = nonlinearity * W2 tanh(W1 z) + W3 z, with weights drawn once from
/// the mixing seed and W3's singular values clamped to [0.5, 2].
struct MixingMap {
    Matrix w1;  // hidden x 2k
    Matrix w2;  // n x hidden
    Matrix w3;  // n x 2k
    double nonlinearity = 1.0;

    static MixingMap from_spec(const GeneratorSpec& spec) {
        const std::size_t d = spec.latent_dim(), n = spec.obs_dim, h = spec.mixing_hidden;
        MixingMap m;
        m.nonlinearity = spec.nonlinearity;
        Rng r1(stream_seed(spec.mixing_seed, 1)), r2(stream_seed(spec.mixing_seed, 2)),
            r3(stream_seed(spec.mixing_seed, 3));
        m.w1 = Matrix(h, d);
        for (auto& v : m.w1.data()) v = r1.normal();
        m.w2 = Matrix(n, h);
        for (auto& v : m.w2.data()) v = r2.normal() / std::sqrt(static_cast<double>(h));
        Matrix w3(n, d);
        for (auto& v : w3.data()) v = r3.normal() / std::sqrt(static_cast<double>(n)) * 1.5;
        m.w3 = clamp_singular_values(w3, 0.5, 2.0);
        return m;
    }

    std::vector<double> apply(std::span<const double> z) const {
        const std::size_t h = w1.rows(), d = w1.cols(), n = w3.rows();
        if (z.size() != d) throw DimensionError("mixing_map: latent has " + std::to_string(z.size()) + " entries");
        std::vector<double> hidden(h);
        for (std::size_t i = 0; i < h; ++i) {
            double a = 0.0;
            for (std::size_t j = 0; j < d; ++j) a += w1(i, j) * z[j];
            hidden[i] = std::tanh(a);
        }
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            double nl = 0.0;
            for (std::size_t j = 0; j < h; ++j) nl += w2(i, j) * hidden[j];
            double lin = 0.0;
            for (std::size_t j = 0; j < d; ++j) lin += w3(i, j) * z[j];
            x[i] = nonlinearity * nl + lin;
        }
        return x;
    }

    /// W3 V diag(clamp(s)/s) Vᵀ, where W3ᵀW3 = V diag(s^2) Vᵀ.
    static Matrix clamp_singular_values(const Matrix& w, double lo, double hi) {
        const SymEig e = sym_eig_value(matmul_tn(w, w));
        const std::size_t d = w.cols();
        Matrix scaled_v = e.vectors;
        for (std::size_t j = 0; j < d; ++j) {
            const double s = std::sqrt(std::max(e.values[j], 0.0));
            const double f = s > 0.0 ? std::clamp(s, lo, hi) / s : 0.0;
            for (std::size_t i = 0; i < d; ++i) scaled_v(i, j) *= f;
        }
        return matmul(w, matmul_nt(scaled_v, e.vectors));
    }
};

/// Hidden state of a sequence: angles evolve as theta0 + v t + alpha t(t-1)/2.
struct SequenceState {
    std::vector<double> theta0, velocity, accel, z0;

    double angle(std::size_t j, std::size_t t) const {
        const double td = static_cast<double>(t);
        return theta0[j] + velocity[j] * td + accel[j] * (td * (td - 1.0) / 2.0);
    }

    std::vector<double> latent(std::size_t t) const {
        const std::size_t k = theta0.size();
        std::vector<double> z(2 * k);
        for (std::size_t j = 0; j < k; ++j) {
            const double th = angle(j, t);
            const double c = std::cos(th), s = std::sin(th);
            z[2 * j] = c * z0[2 * j] - s * z0[2 * j + 1];
            z[2 * j + 1] = s * z0[2 * j] + c * z0[2 * j + 1];
        }
        return z;
    }
};

struct SequenceBatch {
    GeneratorSpec spec;
    Mode mode = Mode::velocity;
    std::uint64_t master_seed = 0;
    std::vector<double> observations;  // [sequence][time][dim]
    Matrix theta0;                     // N x k
    Matrix velocity;                   // N x k
    Matrix accel;                      // N x k
    Matrix z0;                         // N x 2k

    std::size_t size() const noexcept { return theta0.rows(); }
    std::size_t length() const noexcept { return spec.T; }
    std::size_t obs_dim() const noexcept { return spec.obs_dim; }

    std::span<const double> frame(std::size_t i, std::size_t t) const {
        const std::size_t n = spec.obs_dim;
        return {observations.data() + (i * spec.T + t) * n, n};
    }

    /// Frames [t0, t1) of sequence i as rows.
    Matrix frames(std::size_t i, std::size_t t0, std::size_t t1) const {
        const std::size_t n = spec.obs_dim;
        Matrix out(t1 - t0, n);
        for (std::size_t t = t0; t < t1; ++t) {
            const auto f = frame(i, t);
            std::copy(f.begin(), f.end(), out.row(t - t0).begin());
        }
        return out;
    }

    SequenceState state(std::size_t i) const {
        const auto row = [](const Matrix& m, std::size_t r) {
            const auto s = m.row(r);
            return std::vector<double>(s.begin(), s.end());
        };
        return {row(theta0, i), row(velocity, i), row(accel, i), row(z0, i)};
    }

    friend bool operator==(const SequenceBatch&, const SequenceBatch&) = default;
};

/// Two batches sharing (velocity, accel) per index, with independent
/// initial angles and radii.
struct PairedBatch {
    SequenceBatch first;
    SequenceBatch second;
};

namespace detail {

inline SequenceState sample_state(const GeneratorSpec& spec, Mode mode, Rng& state_rng, Rng& motion_rng) {
    const std::size_t k = spec.k;
    SequenceState s{std::vector<double>(k), std::vector<double>(k), std::vector<double>(k, 0.0),
                    std::vector<double>(2 * k, 0.0)};
    for (std::size_t j = 0; j < k; ++j) {
        s.theta0[j] = state_rng.uniform(0.0, 2.0 * std::numbers::pi);
        s.z0[2 * j] = state_rng.uniform(spec.radius.lo, spec.radius.hi);
    }
    for (std::size_t j = 0; j < k; ++j) {
        s.velocity[j] = motion_rng.uniform(spec.velocity.lo, spec.velocity.hi);
        if (mode == Mode::acceleration) s.accel[j] = motion_rng.uniform(spec.accel.lo, spec.accel.hi);
    }
    return s;
}

inline SequenceBatch empty_batch(const GeneratorSpec& spec, Mode mode, std::uint64_t seed) {
    SequenceBatch b;
    b.spec = spec;
    b.mode = mode;
    b.master_seed = seed;
    const std::size_t n = spec.num_sequences, k = spec.k;
    b.observations.assign(n * spec.T * spec.obs_dim, 0.0);
    b.theta0 = Matrix(n, k);
    b.velocity = Matrix(n, k);
    b.accel = Matrix(n, k);
    b.z0 = Matrix(n, 2 * k);
    return b;
}

inline void store(SequenceBatch& b, std::size_t i, const SequenceState& s, const MixingMap& mix) {
    const std::size_t k = b.spec.k;
    for (std::size_t j = 0; j < k; ++j) {
        b.theta0(i, j) = s.theta0[j];
        b.velocity(i, j) = s.velocity[j];
        b.accel(i, j) = s.accel[j];
    }
    for (std::size_t j = 0; j < 2 * k; ++j) b.z0(i, j) = s.z0[j];
    const std::size_t n = b.spec.obs_dim;
    for (std::size_t t = 0; t < b.spec.T; ++t) {
        const auto x = mix.apply(s.latent(t));
        std::copy(x.begin(), x.end(), b.observations.begin() + static_cast<std::ptrdiff_t>((i * b.spec.T + t) * n));
    }
}

}  // namespace detail

/// Each sequence i draws from its own stream stream_seed(master_seed, i).
inline SequenceBatch make_dataset(const GeneratorSpec& spec, std::uint64_t master_seed, Mode mode) {
    spec.validate(mode);
    const MixingMap mix = MixingMap::from_spec(spec);
    SequenceBatch b = detail::empty_batch(spec, mode, master_seed);
    for (std::size_t i = 0; i < spec.num_sequences; ++i) {
        Rng rng(stream_seed(master_seed, i));
        const SequenceState s = detail::sample_state(spec, mode, rng, rng);
        detail::store(b, i, s, mix);
    }
    return b;
}

/// make_dataset with every factor but `factor` held still (zero velocity and
/// acceleration).
inline SequenceBatch make_single_factor(const GeneratorSpec& spec, std::uint64_t master_seed, Mode mode,
                                        std::size_t factor) {
    spec.validate(mode);
    if (factor >= spec.k) throw ContractError("make_single_factor: factor " + std::to_string(factor) + " >= k");
    const MixingMap mix = MixingMap::from_spec(spec);
    SequenceBatch b = detail::empty_batch(spec, mode, master_seed);
    for (std::size_t i = 0; i < spec.num_sequences; ++i) {
        Rng rng(stream_seed(master_seed, i));
        SequenceState s = detail::sample_state(spec, mode, rng, rng);
        for (std::size_t j = 0; j < spec.k; ++j)
            if (j != factor) s.velocity[j] = s.accel[j] = 0.0;
        detail::store(b, i, s, mix);
    }
    return b;
}

inline PairedBatch make_paired(const GeneratorSpec& spec, std::uint64_t master_seed, Mode mode) {
    spec.validate(mode);
    const MixingMap mix = MixingMap::from_spec(spec);
    PairedBatch p{detail::empty_batch(spec, mode, master_seed), detail::empty_batch(spec, mode, master_seed)};
    const std::uint64_t motion_master = mix64(master_seed + 1);
    const std::uint64_t first_master = mix64(master_seed + 2);
    const std::uint64_t second_master = mix64(master_seed + 3);
    for (std::size_t i = 0; i < spec.num_sequences; ++i) {
        Rng motion_a(stream_seed(motion_master, i)), motion_b(stream_seed(motion_master, i));
        Rng state_a(stream_seed(first_master, i)), state_b(stream_seed(second_master, i));
        detail::store(p.first, i, detail::sample_state(spec, mode, state_a, motion_a), mix);
        detail::store(p.second, i, detail::sample_state(spec, mode, state_b, motion_b), mix);
    }
    return p;
}

}  // namespace msp
