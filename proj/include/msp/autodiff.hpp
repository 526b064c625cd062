#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msp/error.hpp"
#include "msp/matrix.hpp"

namespace msp {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    const Matrix& value() const;
    std::string shape() const { return Matrix::shape_string(rows, cols); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so every
/// parent index is smaller than its child's. Single owner; not thread-safe.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Matrix value, bool requires_grad = true) {
        return push(std::move(value), requires_grad, {});
    }

    Var constant(Matrix value) { return leaf(std::move(value), false); }

    std::size_t size() const noexcept { return nodes_.size(); }

    const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }

    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Gradient of the last backward() loss with respect to v; zeros when v
    /// was not reached.
    Matrix grad(const Var& v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.empty() && !n.value.empty()) return Matrix(n.value.rows(), n.value.cols());
        return n.grad;
    }

    bool has_grad(const Var& v) const { return !nodes_.at(v.id).grad.empty(); }

    void backward(const Var& loss) {
        check(loss);
        if (loss.rows != 1 || loss.cols != 1) {
            throw ContractError("backward: loss must be 1x1, got " + loss.shape());
        }
        if (backward_done_) throw ContractError("backward: already run on this tape; call zero_grad() first");
        backward_done_ = true;
        if (!nodes_[loss.id].requires_grad) return;
        grad_slot(loss.id)(0, 0) = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward && !n.grad.empty()) n.backward(*this, i);
        }
    }

    void zero_grad() {
        for (auto& n : nodes_) n.grad = Matrix();
        backward_done_ = false;
    }

    // ---- op-author interface ------------------------------------------------

    Var push(Matrix value, bool requires_grad, Backward fn) {
        Var v{this, nodes_.size(), value.rows(), value.cols()};
        nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(fn) : Backward{}});
        return v;
    }

    /// Gradient accumulator of node id, zero-initialized on first use.
    Matrix& grad_slot(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
        return n.grad;
    }

    void accumulate(std::size_t id, const Matrix& g) {
        if (!nodes_[id].requires_grad) return;
        Node& n = nodes_[id];
        if (n.grad.empty()) {
            n.grad = g;
        } else {
            add_inplace(n.grad, g);
        }
    }

    void check(const Var& v) const {
        if (v.tape != this) throw ContractError("variable belongs to a different tape");
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
    };

    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

inline const Matrix& Var::value() const { return tape->value(id); }

namespace detail {

inline Tape& common_tape(const Var& a, const Var& b) {
    if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands live on different tapes");
    return *a.tape;
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
    }
}

/// Entrywise map with derivative df(x, y) where y = f(x).
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
    Tape& t = *a.tape;
    Matrix out = a.value();
    for (auto& v : out.data()) v = f(v);
    const std::size_t ia = a.id;
    return t.push(std::move(out), t.requires_grad(ia), [ia, df](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        const Matrix& x = tp.value(ia);
        const Matrix& y = tp.value(self);
        Matrix ga(x.rows(), x.cols());
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] = g[k] * df(x[k], y[k]);
        tp.accumulate(ia, ga);
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Products and elementwise ops
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    Tape& t = detail::common_tape(a, b);
    if (a.cols != b.rows) {
        throw DimensionError("matmul: inner dimensions differ " + a.shape() + " * " + b.shape());
    }
    const std::size_t ia = a.id, ib = b.id;
    return t.push(matmul(a.value(), b.value()), t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape& tp, std::size_t self) {
                      const Matrix& g = tp.grad_slot(self);
                      if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
                      if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value(ia), g));
                  });
}

inline Var add(const Var& a, const Var& b) {
    Tape& t = detail::common_tape(a, b);
    detail::require_same_shape(a, b, "add");
    const std::size_t ia = a.id, ib = b.id;
    return t.push(add(a.value(), b.value()), t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape& tp, std::size_t self) {
                      const Matrix& g = tp.grad_slot(self);
                      tp.accumulate(ia, g);
                      tp.accumulate(ib, g);
                  });
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = detail::common_tape(a, b);
    detail::require_same_shape(a, b, "sub");
    const std::size_t ia = a.id, ib = b.id;
    return t.push(sub(a.value(), b.value()), t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape& tp, std::size_t self) {
                      const Matrix& g = tp.grad_slot(self);
                      tp.accumulate(ia, g);
                      if (tp.requires_grad(ib)) tp.accumulate(ib, scaled(g, -1.0));
                  });
}

inline Var hadamard(const Var& a, const Var& b) {
    Tape& t = detail::common_tape(a, b);
    detail::require_same_shape(a, b, "hadamard");
    const std::size_t ia = a.id, ib = b.id;
    return t.push(hadamard(a.value(), b.value()), t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape& tp, std::size_t self) {
                      const Matrix& g = tp.grad_slot(self);
                      if (tp.requires_grad(ia)) tp.accumulate(ia, hadamard(g, tp.value(ib)));
                      if (tp.requires_grad(ib)) tp.accumulate(ib, hadamard(g, tp.value(ia)));
                  });
}

inline Var scale(const Var& a, double c) {
    return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

/// a + c entrywise.
inline Var shift(const Var& a, double c) {
    return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var tanh(const Var& a) {
    return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

/// relu'(0) is taken as 0.
inline Var relu(const Var& a) {
    return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var square(const Var& a) {
    return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// sqrt(x^2 + eps^2): differentiable stand-in for |x|.
inline Var abs_smooth(const Var& a, double eps) {
    const double e2 = eps * eps;
    return detail::unary(a, [e2](double x) { return std::sqrt(x * x + e2); },
                         [](double x, double y) { return x / y; });
}

/// x^p for strictly positive entries.
inline Var power(const Var& a, double p) {
    for (double v : a.value().data()) {
        if (!(v > 0.0)) throw NumericError("power: non-positive base");
    }
    return detail::unary(a, [p](double x) { return std::pow(x, p); },
                         [p](double x, double y) { return p * y / x; });
}

inline Var transpose(const Var& a) {
    Tape& t = *a.tape;
    const std::size_t ia = a.id;
    return t.push(transpose(a.value()), t.requires_grad(ia), [ia](Tape& tp, std::size_t self) {
        tp.accumulate(ia, transpose(tp.grad_slot(self)));
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var sum(const Var& a) {
    Tape& t = *a.tape;
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::size_t ia = a.id;
    return t.push(Matrix(1, 1, s), t.requires_grad(ia), [ia](Tape& tp, std::size_t self) {
        const double g = tp.grad_slot(self)(0, 0);
        const Matrix& x = tp.value(ia);
        tp.accumulate(ia, Matrix(x.rows(), x.cols(), g));
    });
}

inline Var frobenius_sq(const Var& a) {
    Tape& t = *a.tape;
    const std::size_t ia = a.id;
    return t.push(Matrix(1, 1, frobenius_sq(a.value())), t.requires_grad(ia), [ia](Tape& tp, std::size_t self) {
        const double g = tp.grad_slot(self)(0, 0);
        tp.accumulate(ia, scaled(tp.value(ia), 2.0 * g));
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// Inverse of a symmetric positive definite matrix via Cholesky. The
/// gradient is symmetrized, which is exact whenever the input is
/// structurally symmetric (e.g. h hᵀ).
inline Var spd_inverse(const Var& s) {
    Tape& t = *s.tape;
    if (s.rows != s.cols) throw DimensionError("spd_inverse: not square " + s.shape());
    const std::size_t is = s.id;
    return t.push(spd_inverse_value(s.value()), t.requires_grad(is), [is](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        const Matrix& inv = tp.value(self);
        // d/ds = -s^-T G s^-T
        Matrix gs = scaled(matmul(matmul_tn(inv, g), transpose(inv)), -1.0);
        tp.accumulate(is, symmetrized(gs));
    });
}

/// Right pseudo-inverse hᵀ (h hᵀ)⁻¹ of a full-row-rank a x k matrix, k >= a.
inline Var pinv_right(const Var& h) {
    if (h.cols < h.rows) {
        throw DimensionError("pinv_right: needs at least as many columns as rows, got " + h.shape());
    }
    const Var ht = transpose(h);
    return matmul(ht, spd_inverse(matmul(h, ht)));
}

struct SymEigVar {
    Var values;      // n x 1, ascending
    Matrix vectors;  // orthonormal columns
};

/// Symmetric eigendecomposition of (s + sᵀ)/2. Only the eigenvalues carry
/// gradients.
inline SymEigVar sym_eig(const Var& s) {
    Tape& t = *s.tape;
    if (s.rows != s.cols) throw DimensionError("sym_eig: not square " + s.shape());
    SymEig e = sym_eig_value(s.value());
    const std::size_t is = s.id;
    Matrix q = e.vectors;
    Var vals = t.push(Matrix::column(e.values), t.requires_grad(is), [is, q](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        const std::size_t n = q.rows();
        Matrix qd = q;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) qd(i, j) *= g(j, 0);
        tp.accumulate(is, matmul_nt(qd, q));
    });
    return {vals, std::move(e.vectors)};
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

/// x (B x c) plus a broadcast row vector b (1 x c).
inline Var add_row_broadcast(const Var& x, const Var& b) {
    Tape& t = detail::common_tape(x, b);
    if (b.rows != 1 || b.cols != x.cols) {
        throw DimensionError("add_row_broadcast: " + x.shape() + " + " + b.shape());
    }
    Matrix out = x.value();
    const Matrix& bv = b.value();
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
    const std::size_t ix = x.id, ib = b.id;
    return t.push(std::move(out), t.requires_grad(ix) || t.requires_grad(ib), [ix, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        tp.accumulate(ix, g);
        if (tp.requires_grad(ib)) {
            Matrix gb(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
            tp.accumulate(ib, gb);
        }
    });
}

/// Row `row` of x reshaped (row-major) into r x c.
inline Var reshape_row(const Var& x, std::size_t row, std::size_t r, std::size_t c) {
    Tape& t = *x.tape;
    if (row >= x.rows || r * c != x.cols) {
        throw DimensionError("reshape_row: cannot take row " + std::to_string(row) + " of " + x.shape() + " as " +
                             Matrix::shape_string(r, c));
    }
    const auto src = x.value().row(row);
    Matrix out(r, c, std::vector<double>(src.begin(), src.end()));
    const std::size_t ix = x.id;
    return t.push(std::move(out), t.requires_grad(ix), [ix, row](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        auto dst = tp.grad_slot(ix).row(row);
        for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    });
}

inline Var reshape(const Var& x, std::size_t r, std::size_t c) {
    if (x.rows == 1) return reshape_row(x, 0, r, c);
    Tape& t = *x.tape;
    if (r * c != x.rows * x.cols) throw DimensionError("reshape: " + x.shape() + " to " + Matrix::shape_string(r, c));
    const auto src = x.value().data();
    const std::size_t ix = x.id, xr = x.rows, xc = x.cols;
    return t.push(Matrix(r, c, std::vector<double>(src.begin(), src.end())), t.requires_grad(ix),
                  [ix, xr, xc](Tape& tp, std::size_t self) {
                      const auto g = tp.grad_slot(self).data();
                      tp.accumulate(ix, Matrix(xr, xc, std::vector<double>(g.begin(), g.end())));
                  });
}

/// Each input flattened row-major into one row of the result.
inline Var stack_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("stack_rows: no inputs");
    Tape& t = *parts.front().tape;
    const std::size_t width = parts.front().rows * parts.front().cols;
    Matrix out(parts.size(), width);
    bool rg = false;
    std::vector<std::size_t> ids;
    ids.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        t.check(parts[i]);
        if (parts[i].rows * parts[i].cols != width) throw DimensionError("stack_rows: inputs differ in size");
        const auto src = parts[i].value().data();
        std::copy(src.begin(), src.end(), out.row(i).begin());
        rg = rg || t.requires_grad(parts[i].id);
        ids.push_back(parts[i].id);
    }
    return t.push(std::move(out), rg, [ids](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!tp.requires_grad(ids[i])) continue;
            auto dst = tp.grad_slot(ids[i]).data();
            const auto src = g.row(i);
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    });
}

/// Horizontal concatenation [p0, p1, ...].
inline Var hcat(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("hcat: no inputs");
    Tape& t = *parts.front().tape;
    const std::size_t r = parts.front().rows;
    std::size_t c = 0;
    bool rg = false;
    for (const auto& p : parts) {
        t.check(p);
        if (p.rows != r) throw DimensionError("hcat: row counts differ " + parts.front().shape() + " vs " + p.shape());
        c += p.cols;
        rg = rg || t.requires_grad(p.id);
    }
    Matrix out(r, c);
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, column offset)
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Matrix& v = p.value();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols; ++j) out(i, off + j) = v(i, j);
        spans.emplace_back(p.id, off);
        off += p.cols;
    }
    return t.push(std::move(out), rg, [spans](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        for (const auto& [id, o] : spans) {
            if (!tp.requires_grad(id)) continue;
            Matrix& dst = tp.grad_slot(id);
            for (std::size_t i = 0; i < dst.rows(); ++i)
                for (std::size_t j = 0; j < dst.cols(); ++j) dst(i, j) += g(i, o + j);
        }
    });
}

/// Rows [r0, r1) of x.
inline Var slice_rows(const Var& x, std::size_t r0, std::size_t r1) {
    Tape& t = *x.tape;
    if (r0 > r1 || r1 > x.rows) {
        throw DimensionError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) + ") of " + x.shape());
    }
    const auto src = x.value().data().subspan(r0 * x.cols, (r1 - r0) * x.cols);
    const std::size_t ix = x.id;
    return t.push(Matrix(r1 - r0, x.cols, std::vector<double>(src.begin(), src.end())), t.requires_grad(ix),
                  [ix, r0](Tape& tp, std::size_t self) {
                      const Matrix& g = tp.grad_slot(self);
                      Matrix& dst = tp.grad_slot(ix);
                      auto d = dst.data().subspan(r0 * dst.cols(), g.size());
                      for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k];
                  });
}

/// Block-diagonal direct sum; off-block entries are exactly zero.
inline Var block_diag(std::span<const Var> blocks) {
    if (blocks.empty()) throw ContractError("block_diag: no inputs");
    Tape& t = *blocks.front().tape;
    std::vector<Matrix> vals;
    std::vector<std::pair<std::size_t, std::pair<std::size_t, std::size_t>>> where;
    std::size_t r = 0, c = 0;
    bool rg = false;
    for (const auto& b : blocks) {
        t.check(b);
        vals.push_back(b.value());
        where.push_back({b.id, {r, c}});
        r += b.rows;
        c += b.cols;
        rg = rg || t.requires_grad(b.id);
    }
    return t.push(direct_sum(vals), rg, [where](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        for (const auto& [id, off] : where) {
            if (!tp.requires_grad(id)) continue;
            Matrix& dst = tp.grad_slot(id);
            for (std::size_t i = 0; i < dst.rows(); ++i)
                for (std::size_t j = 0; j < dst.cols(); ++j) dst(i, j) += g(off.first + i, off.second + j);
        }
    });
}

/// n x n skew-symmetric matrix whose strict upper triangle, read row by row,
/// holds the n(n-1)/2 entries of p; the lower triangle is its negation.
inline Var skew_from_params(const Var& p, std::size_t n) {
    Tape& t = *p.tape;
    if (p.rows * p.cols != n * (n - 1) / 2) {
        throw DimensionError("skew_from_params: " + p.shape() + " does not hold " + std::to_string(n * (n - 1) / 2) +
                             " parameters");
    }
    Matrix s(n, n);
    const auto pv = p.value().data();
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++k) {
            s(i, j) = pv[k];
            s(j, i) = -pv[k];
        }
    const std::size_t ip = p.id;
    return t.push(std::move(s), t.requires_grad(ip), [ip, n](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad_slot(self);
        auto dst = tp.grad_slot(ip).data();
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j, ++k) dst[k] += g(i, j) - g(j, i);
    });
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series,
/// stopping once a term's max-abs entry drops below `tol`. Composite, hence
/// differentiable.
inline Var expm(const Var& x, double tol = 1e-13) {
    if (x.rows != x.cols) throw DimensionError("expm: not square " + x.shape());
    Tape& t = *x.tape;
    const Matrix& xv = x.value();
    double norm1 = 0.0;
    for (std::size_t j = 0; j < xv.cols(); ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < xv.rows(); ++i) col += std::abs(xv(i, j));
        norm1 = std::max(norm1, col);
    }
    int squarings = 0;
    while (norm1 > 0.5 && squarings < 60) {
        norm1 *= 0.5;
        ++squarings;
    }
    const Var xs = scale(x, std::ldexp(1.0, -squarings));
    Var result = t.constant(Matrix::identity(x.rows));
    Var term = result;
    for (int k = 1; k <= 40; ++k) {
        term = scale(matmul(term, xs), 1.0 / k);
        result = add(result, term);
        if (max_abs(term.value()) < tol) break;
    }
    for (int i = 0; i < squarings; ++i) result = matmul(result, result);
    return result;
}

/// Plain-value matrix exponential (same algorithm, throwaway tape).
inline Matrix expm(const Matrix& x, double tol = 1e-13) {
    Tape t;
    return expm(t.constant(x), tol).value();
}

}  // namespace msp
