#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "msp/error.hpp"
#include "msp/matrix.hpp"

namespace msp {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<Matrix> first;
    std::vector<Matrix> second;

    static AdamState init(std::span<const Matrix* const> params, double beta1 = 0.9, double beta2 = 0.999,
                          double eps = 1e-8) {
        AdamState s{beta1, beta2, eps, 0, {}, {}};
        for (const Matrix* p : params) {
            s.first.emplace_back(p->rows(), p->cols());
            s.second.emplace_back(p->rows(), p->cols());
        }
        return s;
    }
};

/// One bias-corrected Adam update in place. `iteration` only labels the
/// abort raised on a non-finite gradient; parameters are untouched then.
inline void adam_step(AdamState& s, std::span<Matrix* const> params, std::span<const Matrix> grads, double lr,
                      std::size_t iteration = 0) {
    if (params.size() != grads.size() || params.size() != s.first.size()) {
        throw DimensionError("adam_step: parameter/gradient/state counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(s.first[i])) {
            throw DimensionError("adam_step: gradient " + grads[i].shape() + " does not match parameter " +
                                 params[i]->shape());
        }
        if (!grads[i].all_finite()) throw TrainingAborted("non-finite gradient", iteration);
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        auto m = s.first[i].data();
        auto v = s.second[i].data();
        const auto g = grads[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g[k];
            v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            p[k] -= lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

}  // namespace msp
