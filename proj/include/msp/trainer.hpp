#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msp/adam.hpp"
#include "msp/binio.hpp"
#include "msp/datagen.hpp"
#include "msp/losses.hpp"
#include "msp/model.hpp"
#include "msp/rng.hpp"

namespace msp {

struct MetricsRecord {
    std::size_t iter = 0;
    double loss = 0.0;
    std::optional<double> loss_eval;
    std::optional<double> ortho_defect;
    std::optional<double> wall_ms;
};

inline json metrics_to_json(const MetricsRecord& r) {
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"iter", r.iter},
                {"loss", r.loss},
                {"loss_eval", opt(r.loss_eval)},
                {"ortho_defect", opt(r.ortho_defect)},
                {"wall_ms", opt(r.wall_ms)}};
}

/// ||I - M Mᵀ||_F^2.
inline double orthogonality_defect(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("orthogonality_defect: not square " + m.shape());
    return frobenius_sq(sub(Matrix::identity(m.rows()), matmul_nt(m, m)));
}

/// Learning rate at a 0-based iteration: lr before decay_at, lr_final after.
inline double learning_rate(const TrainConfig& c, std::size_t iteration) {
    return iteration < c.decay_at ? c.lr : c.lr_final;
}

/// Sequence frames [0, frames) for the listed indices.
inline std::vector<Matrix> gather_sequences(const SequenceBatch& data, std::span<const std::size_t> idx,
                                            std::size_t frames) {
    std::vector<Matrix> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(data.frames(i, 0, frames));
    return out;
}

/// Objective used to score held-out data: L^p under the model's own
/// prediction protocol (rec_model is scored as a predictor with T_c = 2).
inline ObjectiveSpec eval_spec(const TrainConfig& c) {
    if (c.variant == Variant::rec_model) return {Variant::msp, 1, 2, 1, 0.0};
    return {c.variant, c.order, c.T_c, c.T_p, 0.0};
}

/// Forward-only objective averaged over all sequences of `data`, in chunks
/// of `chunk` sequences. Returns (mean loss, mean orthogonality defect).
inline std::pair<double, double> evaluate_objective(const ModelParams& p, const SequenceBatch& data,
                                                    const ObjectiveSpec& spec, std::size_t chunk = 64) {
    const std::size_t frames = spec.variant == Variant::rec_model ? spec.T_c : spec.T_c + spec.T_p;
    double loss = 0.0, defect = 0.0;
    const std::size_t n = data.size();
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t end = std::min(n, start + chunk);
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        Tape tape;
        const BoundModel bm = bind(tape, p, false);
        const auto seqs = gather_sequences(data, idx, frames);
        const ObjectiveResult r = objective(bm, seqs, spec);
        loss += r.loss.value()(0, 0) * static_cast<double>(end - start);
        for (const auto& m : r.transitions) defect += orthogonality_defect(m);
    }
    return {loss / static_cast<double>(n), defect / static_cast<double>(n)};
}

/// Epoch-wise seeded permutation sampler.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed) : rng_(stream_seed(seed, 0xba7c)), order_(n) {
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        shuffle(order_, rng_);
    }

    std::vector<std::size_t> next(std::size_t batch) {
        std::vector<std::size_t> out;
        out.reserve(batch);
        while (out.size() < batch) {
            if (pos_ == order_.size()) {
                shuffle(order_, rng_);
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

struct TrainHooks {
    /// Held-out data scored at every log step (loss_eval); optional.
    const SequenceBatch* eval = nullptr;
    /// Called once per log record.
    std::function<void(const MetricsRecord&)> on_log;
    /// Wallclock is left null by default so metrics files are reproducible.
    bool record_wallclock = false;
};

struct TrainResult {
    ModelParams params;
    std::vector<MetricsRecord> history;
    bool aborted = false;
    std::size_t abort_iteration = 0;
    std::string abort_message;
};

/// Adam on the configured objective. On a non-finite loss or gradient the
/// run stops and returns the last parameters that produced a finite loss.
inline TrainResult train(const TrainConfig& cfg, const SequenceBatch& data, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (data.length() < cfg.frames_needed()) {
        throw ValidationError({"T: dataset sequences have " + std::to_string(data.length()) +
                               " frames, objective needs " + std::to_string(cfg.frames_needed())});
    }
    TrainResult res;
    res.params = ModelParams::init(cfg, data.obs_dim());
    ModelParams last_good = res.params;
    auto slots = res.params.tensors();
    AdamState adam = AdamState::init(std::vector<const Matrix*>(slots.begin(), slots.end()), cfg.beta1, cfg.beta2,
                                     cfg.eps);
    BatchSampler sampler(data.size(), cfg.seed);
    const ObjectiveSpec spec = ObjectiveSpec::from(cfg);
    const auto t0 = std::chrono::steady_clock::now();

    for (std::size_t it = 0; it < cfg.iters; ++it) {
        const auto idx = sampler.next(cfg.batch);
        const auto seqs = gather_sequences(data, idx, cfg.frames_needed());
        Tape tape;
        const BoundModel bm = bind(tape, res.params, true);
        ObjectiveResult obj;
        try {
            obj = objective(bm, seqs, spec);
        } catch (const SingularityError& e) {
            res.aborted = true;
            res.abort_iteration = it + 1;
            res.abort_message = std::string("latent collapse: ") + e.what();
            res.params = last_good;
            return res;
        }
        const double loss = obj.loss.value()(0, 0);
        if (!std::isfinite(loss)) {
            res.aborted = true;
            res.abort_iteration = it + 1;
            res.abort_message = "non-finite loss";
            res.params = last_good;
            return res;
        }
        tape.backward(obj.loss);
        const auto leaves = bm.leaves();
        std::vector<Matrix> grads;
        grads.reserve(leaves.size());
        for (const auto& v : leaves) grads.push_back(tape.grad(v));
        last_good = res.params;
        try {
            adam_step(adam, slots, grads, learning_rate(cfg, it), it + 1);
        } catch (const TrainingAborted& e) {
            res.aborted = true;
            res.abort_iteration = e.iteration();
            res.abort_message = e.what();
            res.params = last_good;
            return res;
        }

        const std::size_t done = it + 1;
        if (done % cfg.log_interval == 0 || done == cfg.iters) {
            MetricsRecord rec;
            rec.iter = done;
            rec.loss = loss;
            double defect = 0.0;
            for (const auto& m : obj.transitions) defect += orthogonality_defect(m);
            rec.ortho_defect = defect / static_cast<double>(obj.transitions.size());
            if (hooks.eval != nullptr) rec.loss_eval = evaluate_objective(res.params, *hooks.eval, eval_spec(cfg)).first;
            if (hooks.record_wallclock) {
                rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            }
            res.history.push_back(rec);
            if (hooks.on_log) hooks.on_log(rec);
        }
    }
    return res;
}

}  // namespace msp
