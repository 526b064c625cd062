#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msp/autodiff.hpp"
#include "msp/error.hpp"
#include "msp/rng.hpp"

namespace msp {

enum class Variant { msp, rec_model, fixed_blocks, neural_mstar };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::msp: return "msp";
        case Variant::rec_model: return "rec_model";
        case Variant::fixed_blocks: return "fixed_blocks";
        case Variant::neural_mstar: return "neural_mstar";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "msp") return Variant::msp;
    if (s == "rec_model") return Variant::rec_model;
    if (s == "fixed_blocks") return Variant::fixed_blocks;
    if (s == "neural_mstar") return Variant::neural_mstar;
    throw ValidationError({"variant: unknown \"" + s + "\" (msp, rec_model, fixed_blocks, neural_mstar)"});
}

/// Training hyperparameters. Defaults follow the desk-scale setup: Adam at
/// 3e-4 decayed to 1e-4 at 80% of the run, batch 32.
struct TrainConfig {
    std::size_t a = 8;
    std::size_t m = 16;
    std::vector<std::size_t> hidden{128, 128};
    /// Hidden widths of the transition network (neural_mstar only).
    std::vector<std::size_t> transition_hidden{128};
    double lr = 3e-4;
    double lr_final = 1e-4;
    std::size_t decay_at = 8000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch = 32;
    std::size_t iters = 10000;
    std::uint64_t seed = 0;
    Variant variant = Variant::msp;
    int order = 1;
    std::size_t T_c = 2;
    std::size_t T_p = 1;
    /// Weight of the invertibility term; only used by neural_mstar.
    double inv_weight = 0.0;
    std::size_t log_interval = 100;

    /// Frames per sequence the objective reads.
    std::size_t frames_needed() const { return variant == Variant::rec_model ? T_c : T_c + T_p; }

    void validate() const {
        std::vector<std::string> bad;
        if (a < 1) bad.push_back("a: must be >= 1");
        if (m <= a) bad.push_back("m: must exceed a");
        if (batch < 1) bad.push_back("batch: must be >= 1");
        if (order != 1 && order != 2) bad.push_back("order: must be 1 or 2");
        if (order == 2 && variant != Variant::msp) bad.push_back("order: second order is only defined for variant msp");
        if (order == 1 && T_c < 2) bad.push_back("T_c: must be >= 2 for order 1");
        if (order == 2 && T_c < 3) bad.push_back("T_c: must be >= 3 for order 2");
        if (variant != Variant::rec_model && T_p < 1) bad.push_back("T_p: must be >= 1");
        if (variant == Variant::fixed_blocks && a % 2 != 0) bad.push_back("a: fixed_blocks needs an even a");
        if (!(lr > 0.0) || !(lr_final > 0.0) || lr_final > lr) bad.push_back("lr: need 0 < lr_final <= lr");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad.push_back("betas: must lie in [0, 1)");
        if (!(eps > 0.0)) bad.push_back("eps: must be > 0");
        if (inv_weight < 0.0) bad.push_back("inv_weight: must be >= 0");
        if (log_interval < 1) bad.push_back("log_interval: must be >= 1");
        for (auto h : hidden)
            if (h < 1) bad.push_back("hidden: widths must be >= 1");
        if (!bad.empty()) throw ValidationError(bad);
    }
};

/// Fully connected network: tanh between layers, linear output.
/// Layer l computes x W_l + b_l with W_l of shape fan_in x fan_out.
struct Mlp {
    std::vector<Matrix> w;
    std::vector<Matrix> b;

    std::size_t layers() const noexcept { return w.size(); }
    bool empty() const noexcept { return w.empty(); }
    std::size_t in_dim() const { return w.front().rows(); }
    std::size_t out_dim() const { return w.back().cols(); }

    /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    static Mlp init(const std::vector<std::size_t>& sizes, Rng& rng) {
        Mlp net;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
            Matrix w(sizes[l], sizes[l + 1]), b(1, sizes[l + 1]);
            for (auto& v : w.data()) v = rng.uniform(-bound, bound);
            for (auto& v : b.data()) v = rng.uniform(-bound, bound);
            net.w.push_back(std::move(w));
            net.b.push_back(std::move(b));
        }
        return net;
    }

    friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// Encoder Φ: R^n -> R^{a x m}, decoder Ψ: R^{a x m} -> R^n, and, for the
/// neural_mstar variant, a transition network on the conditioning frames.
struct ModelParams {
    std::size_t a = 0;
    std::size_t m = 0;
    std::size_t obs_dim = 0;
    Variant variant = Variant::msp;
    int order = 1;
    std::size_t T_c = 2;
    Mlp encoder;
    Mlp decoder;
    Mlp transition;

    static ModelParams init(const TrainConfig& cfg, std::size_t obs_dim) {
        cfg.validate();
        ModelParams p;
        p.a = cfg.a;
        p.m = cfg.m;
        p.obs_dim = obs_dim;
        p.variant = cfg.variant;
        p.order = cfg.order;
        p.T_c = cfg.T_c;
        Rng rng(stream_seed(cfg.seed, 0x5eed));
        std::vector<std::size_t> enc{obs_dim};
        enc.insert(enc.end(), cfg.hidden.begin(), cfg.hidden.end());
        enc.push_back(cfg.a * cfg.m);
        std::vector<std::size_t> dec(enc.rbegin(), enc.rend());
        p.encoder = Mlp::init(enc, rng);
        p.decoder = Mlp::init(dec, rng);
        if (cfg.variant == Variant::neural_mstar) {
            std::vector<std::size_t> net{cfg.T_c * obs_dim};
            net.insert(net.end(), cfg.transition_hidden.begin(), cfg.transition_hidden.end());
            net.push_back(cfg.a * cfg.a);
            p.transition = Mlp::init(net, rng);
        }
        return p;
    }

    /// All tensors in a fixed order: encoder (w0, b0, ...), decoder, transition.
    std::vector<Matrix*> tensors() {
        std::vector<Matrix*> out;
        for (Mlp* net : {&encoder, &decoder, &transition})
            for (std::size_t l = 0; l < net->layers(); ++l) {
                out.push_back(&net->w[l]);
                out.push_back(&net->b[l]);
            }
        return out;
    }

    std::vector<const Matrix*> tensors() const {
        std::vector<const Matrix*> out;
        for (const Mlp* net : {&encoder, &decoder, &transition})
            for (std::size_t l = 0; l < net->layers(); ++l) {
                out.push_back(&net->w[l]);
                out.push_back(&net->b[l]);
            }
        return out;
    }

    std::vector<std::string> tensor_names() const {
        std::vector<std::string> out;
        const std::pair<const char*, const Mlp*> nets[] = {
            {"encoder", &encoder}, {"decoder", &decoder}, {"transition", &transition}};
        for (const auto& [name, net] : nets)
            for (std::size_t l = 0; l < net->layers(); ++l) {
                out.push_back(std::string(name) + ".w" + std::to_string(l));
                out.push_back(std::string(name) + ".b" + std::to_string(l));
            }
        return out;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// ---------------------------------------------------------------------------
// Tape binding
// ---------------------------------------------------------------------------

struct BoundMlp {
    std::vector<Var> w;
    std::vector<Var> b;

    Var forward(Var x) const {
        for (std::size_t l = 0; l < w.size(); ++l) {
            x = add_row_broadcast(matmul(x, w[l]), b[l]);
            if (l + 1 < w.size()) x = tanh(x);
        }
        return x;
    }
};

/// Model parameters registered as leaves on one tape.
struct BoundModel {
    const ModelParams* params = nullptr;
    Tape* tape = nullptr;
    BoundMlp encoder;
    BoundMlp decoder;
    BoundMlp transition;

    /// Leaves in the same order as ModelParams::tensors().
    std::vector<Var> leaves() const {
        std::vector<Var> out;
        for (const BoundMlp* net : {&encoder, &decoder, &transition})
            for (std::size_t l = 0; l < net->w.size(); ++l) {
                out.push_back(net->w[l]);
                out.push_back(net->b[l]);
            }
        return out;
    }
};

inline BoundModel bind(Tape& tape, const ModelParams& p, bool requires_grad = true) {
    BoundModel bm;
    bm.params = &p;
    bm.tape = &tape;
    const auto bind_net = [&](const Mlp& net, BoundMlp& out) {
        for (std::size_t l = 0; l < net.layers(); ++l) {
            out.w.push_back(tape.leaf(net.w[l], requires_grad));
            out.b.push_back(tape.leaf(net.b[l], requires_grad));
        }
    };
    bind_net(p.encoder, bm.encoder);
    bind_net(p.decoder, bm.decoder);
    bind_net(p.transition, bm.transition);
    return bm;
}

/// Encodes B frames (rows of x) into B x (a*m) flattened latents.
inline Var encode_rows(const BoundModel& bm, const Var& x) { return bm.encoder.forward(x); }

/// Φ(x) for one frame x (1 x n), as an a x m latent.
inline Var encode(const BoundModel& bm, const Var& x) {
    if (x.rows != 1) throw DimensionError("encode: expects one frame (1 x n), got " + x.shape());
    return reshape_row(encode_rows(bm, x), 0, bm.params->a, bm.params->m);
}

/// Decodes B flattened latents (rows of h) into B x n frames.
inline Var decode_rows(const BoundModel& bm, const Var& h) { return bm.decoder.forward(h); }

/// Ψ(h) for one a x m latent, as a 1 x n frame.
inline Var decode(const BoundModel& bm, const Var& h) {
    if (h.rows != bm.params->a || h.cols != bm.params->m) {
        throw DimensionError("decode: expects an a x m latent, got " + h.shape());
    }
    return decode_rows(bm, reshape(h, 1, h.rows * h.cols));
}

}  // namespace msp
