#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "msp/adam.hpp"
#include "msp/autodiff.hpp"
#include "msp/binio.hpp"
#include "msp/rng.hpp"

namespace msp {

inline constexpr double kAbsEps = 1e-12;
inline constexpr double kDegreeEps = 1e-10;
inline constexpr double kSignEps = 1e-10;

/// A(V) = |V| |V|ᵀ with a smoothed absolute value.
inline Var abs_adjacency(const Var& v) {
    if (v.rows != v.cols) throw DimensionError("abs_adjacency: not square " + v.shape());
    const Var av = abs_smooth(v, kAbsEps);
    return matmul(av, transpose(av));
}

/// I - D^{-1/2} A D^{-1/2}, with D = diag(A 1 + eps).
inline Var normalized_laplacian(const Var& adj) {
    if (adj.rows != adj.cols) throw DimensionError("normalized_laplacian: not square " + adj.shape());
    Tape& t = *adj.tape;
    const std::size_t n = adj.rows;
    const Var deg = shift(matmul(adj, t.constant(Matrix(n, 1, 1.0))), kDegreeEps);
    const Var d = power(deg, -0.5);
    return sub(t.constant(Matrix::identity(n)), hadamard(adj, matmul(d, transpose(d))));
}

/// Σ |λ| over the eigenvalues of the normalized Laplacian of A(V).
inline Var blockness_loss(const Var& v) {
    const SymEigVar e = sym_eig(normalized_laplacian(abs_adjacency(v)));
    return sum(abs_smooth(e.values, kSignEps));
}

inline double blockness_loss(const Matrix& v) {
    Tape t;
    return blockness_loss(t.constant(v)).value()(0, 0);
}

// ---------------------------------------------------------------------------
// Block structure
// ---------------------------------------------------------------------------

struct BlockStructure {
    std::vector<std::vector<std::size_t>> blocks;
    double threshold = 0.01;

    std::size_t size() const noexcept { return blocks.size(); }
    friend bool operator==(const BlockStructure&, const BlockStructure&) = default;
};

class DisjointSet {
public:
    explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a), b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> rank_;
};

/// Connected components of the graph with edge (i, j) iff
/// max(w_ij, w_ji) > cutoff; members sorted, blocks by smallest member.
inline std::vector<std::vector<std::size_t>> connected_components(const Matrix& w, double cutoff) {
    if (w.rows() != w.cols()) throw DimensionError("connected_components: not square " + w.shape());
    const std::size_t n = w.rows();
    DisjointSet ds(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::max(w(i, j), w(j, i)) > cutoff) ds.unite(i, j);
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> slot(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = ds.find(i);
        if (slot[r] == n) {
            slot[r] = out.size();
            out.emplace_back();
        }
        out[slot[r]].push_back(i);
    }
    return out;
}

/// mean_i |V_i - I|, entrywise.
inline Matrix mean_abs_deviation(std::span<const Matrix> vs) {
    if (vs.empty()) throw ContractError("mean_abs_deviation: empty list");
    const std::size_t a = vs.front().rows();
    Matrix e(a, a);
    for (const auto& v : vs) {
        if (v.rows() != a || v.cols() != a) throw DimensionError("mean_abs_deviation: sizes differ");
        for (std::size_t i = 0; i < a; ++i)
            for (std::size_t j = 0; j < a; ++j) e(i, j) += std::abs(v(i, j) - (i == j ? 1.0 : 0.0));
    }
    return scaled(e, 1.0 / static_cast<double>(vs.size()));
}

inline BlockStructure detect_blocks(std::span<const Matrix> vs, double threshold = 0.01) {
    const Matrix e = mean_abs_deviation(vs);
    return {connected_components(e, threshold * max_abs(e)), threshold};
}

/// Kept blocks copied from v; identity elsewhere.
inline Matrix restrict_to_blocks(const Matrix& v, const BlockStructure& blocks, std::span<const std::size_t> keep) {
    if (v.rows() != v.cols()) throw DimensionError("restrict_to_blocks: not square " + v.shape());
    Matrix out = Matrix::identity(v.rows());
    for (std::size_t b : keep) {
        if (b >= blocks.size()) {
            throw ContractError("restrict_to_blocks: block " + std::to_string(b) + " does not exist (have " +
                                std::to_string(blocks.size()) + ")");
        }
        for (std::size_t i : blocks.blocks[b])
            for (std::size_t j : blocks.blocks[b]) {
                if (i >= v.rows() || j >= v.rows()) throw ContractError("restrict_to_blocks: index out of range");
                out(i, j) = v(i, j);
            }
    }
    return out;
}

/// Share of squared entries that fall outside the diagonal blocks, pooled
/// over the list.
inline double off_block_mass(std::span<const Matrix> vs, const BlockStructure& blocks) {
    if (vs.empty()) return 0.0;
    const std::size_t a = vs.front().rows();
    std::vector<std::size_t> label(a, a);
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (std::size_t i : blocks.blocks[b]) label.at(i) = b;
    double off = 0.0, total = 0.0;
    for (const auto& v : vs)
        for (std::size_t i = 0; i < a; ++i)
            for (std::size_t j = 0; j < a; ++j) {
                const double m = v(i, j) * v(i, j);
                total += m;
                if (label[i] != label[j] || label[i] == a) off += m;
            }
    return total > 0.0 ? off / total : 0.0;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct SbdOptions {
    std::size_t iters = 150;
    double lr = 0.05;
    std::uint64_t seed = 0;
    /// Restart 0 starts at U = I; each later one starts from the best
    /// parameters so far plus N(0, perturb²) noise.
    std::size_t restarts = 30;
    double perturb = 0.3;
    double threshold = 0.01;
};

struct SbdResult {
    Matrix u;
    Matrix skew_param;
    /// Best mean loss so far, recorded each time it improves.
    std::vector<double> loss_history;
    double loss = 0.0;
    std::vector<Matrix> v;
    BlockStructure blocks;
};

/// U M Uᵀ for every M.
inline std::vector<Matrix> conjugate_all(const Matrix& u, std::span<const Matrix> ms) {
    std::vector<Matrix> out;
    out.reserve(ms.size());
    for (const auto& m : ms) out.push_back(matmul_nt(matmul(u, m), u));
    return out;
}

namespace detail {

struct SbdEval {
    double loss;
    Matrix grad;
};

inline SbdEval sbd_objective(const Matrix& params, std::span<const Matrix> ms, std::size_t a) {
    Tape t;
    const Var p = t.leaf(params, true);
    const Var u = expm(skew_from_params(p, a));
    const Var ut = transpose(u);
    Var total = t.constant(Matrix(1, 1));
    for (const auto& m : ms) total = add(total, blockness_loss(matmul(matmul(u, t.constant(m)), ut)));
    total = scale(total, 1.0 / static_cast<double>(ms.size()));
    t.backward(total);
    return {total.value()(0, 0), t.grad(p)};
}

}  // namespace detail

/// Minimizes the mean blockness of U M_i Uᵀ over orthogonal U = exp(S).
inline SbdResult fit_sbd(std::span<const Matrix> ms, const SbdOptions& opt = {}) {
    if (ms.empty()) throw ContractError("fit_sbd: no transitions");
    const std::size_t a = ms.front().rows();
    for (const auto& m : ms)
        if (m.rows() != a || m.cols() != a) throw DimensionError("fit_sbd: transitions must all be a x a");
    const std::size_t np = a * (a - 1) / 2;

    SbdResult best;
    best.skew_param = Matrix(1, np);
    best.loss = std::numeric_limits<double>::infinity();
    std::size_t step = 0;
    for (std::size_t r = 0; r < std::max<std::size_t>(opt.restarts, 1); ++r) {
        Matrix params = best.skew_param;
        if (r > 0) {
            Rng rng(stream_seed(opt.seed, r));
            for (auto& x : params.data()) x += opt.perturb * rng.normal();
        }
        std::vector<Matrix*> slots{&params};
        AdamState adam = AdamState::init(std::vector<const Matrix*>{&params});
        for (std::size_t it = 0; it <= opt.iters; ++it, ++step) {
            const auto ev = detail::sbd_objective(params, ms, a);
            if (!std::isfinite(ev.loss)) throw TrainingAborted("fit_sbd: non-finite loss", step);
            if (ev.loss < best.loss) {
                best.loss = ev.loss;
                best.skew_param = params;
                best.loss_history.push_back(ev.loss);
            }
            if (it == opt.iters) break;
            adam_step(adam, slots, std::span<const Matrix>(&ev.grad, 1), opt.lr, step);
        }
    }
    Tape t;
    best.u = expm(skew_from_params(t.constant(best.skew_param), a)).value();
    best.v = conjugate_all(best.u, ms);
    best.blocks = detect_blocks(best.v, opt.threshold);
    return best;
}

inline json to_json(const BlockStructure& b) { return {{"blocks", b.blocks}, {"threshold", b.threshold}}; }

inline json to_json(const SbdResult& r) {
    const auto mat = [](const Matrix& m) {
        json rows = json::array();
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const auto row = m.row(i);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        return rows;
    };
    return {{"kind", "sbd"},
            {"u", mat(r.u)},
            {"skew_param", std::vector<double>(r.skew_param.data().begin(), r.skew_param.data().end())},
            {"loss", r.loss},
            {"loss_history", r.loss_history},
            {"blocks", to_json(r.blocks)},
            {"mean_abs_v_minus_i", mat(mean_abs_deviation(r.v))}};
}

}  // namespace msp
