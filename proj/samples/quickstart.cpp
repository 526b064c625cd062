// Train a small MSP model and print its prediction error by horizon.
#include <cstdio>

#include "msp/analysis.hpp"
#include "msp/trainer.hpp"

int main() {
    msp::GeneratorSpec spec;
    spec.k = 2;
    spec.obs_dim = 12;
    spec.num_sequences = 1000;
    spec.mixing_seed = 7;
    const auto data = msp::make_dataset(spec, 7, msp::Mode::velocity);

    msp::TrainConfig cfg;
    cfg.a = 4;
    cfg.m = 8;
    cfg.hidden = {64, 64};
    cfg.iters = 1500;
    cfg.decay_at = 1200;
    cfg.log_interval = 500;
    cfg.seed = 7;

    msp::TrainHooks hooks;
    hooks.on_log = [](const msp::MetricsRecord& r) { std::printf("iter %5zu  loss %.5f\n", r.iter, r.loss); };
    const auto res = msp::train(cfg, data, hooks);

    spec.T = 2 + 8;
    spec.num_sequences = 200;
    const auto held = msp::make_dataset(spec, 8, msp::Mode::velocity);
    const auto err = msp::horizon_errors(res.params, held, 2, 8);
    const double var = msp::frame_variance(held, 2);
    for (std::size_t j = 0; j < err.size(); ++j) std::printf("T_p=%zu  L^p %.5f  (%.2f%% of variance)\n", j + 1, err[j], 100 * err[j] / var);
}
