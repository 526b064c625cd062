#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "msp/analysis.hpp"
#include "msp/binio.hpp"
#include "msp/checkpoint.hpp"
#include "msp/config_json.hpp"
#include "msp/dataset_io.hpp"
#include "msp/log.hpp"
#include "msp/oracle.hpp"
#include "msp/sbd.hpp"
#include "msp/sha256.hpp"
#include "msp/svg.hpp"
#include "msp/trainer.hpp"

namespace msp {

inline constexpr const char* kVersion = "0.1.0";

struct EvalSpec {
    std::size_t horizons = 18;
    std::size_t sequences = 256;
    std::size_t pairs = 256;
    std::size_t spectrum_pairs = 50;
    std::size_t shifts = 5;
    /// Held-out sequences scored at every training log step.
    std::size_t monitor = 64;
};

struct SbdSpec {
    std::size_t iters = 150;
    double lr = 0.05;
    double threshold = 0.01;
    std::size_t restarts = 30;
    double perturb = 0.3;
    std::size_t sequences = 256;
    std::size_t factor_sequences = 64;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "run";
    GeneratorSpec generator;
    Mode mode = Mode::velocity;
    TrainConfig train;
    EvalSpec eval;
    SbdSpec sbd;
};

/// Command-line overrides applied to the raw config before defaults.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> variant;
    std::optional<int> order;
    std::optional<std::size_t> iters;
    std::optional<std::size_t> horizons;
};

namespace detail {

class ConfigReader {
public:
    ConfigReader(const json& j, std::string prefix, std::vector<std::string>& bad)
        : j_(j), prefix_(std::move(prefix)), bad_(bad) {
        if (!j_.is_object()) bad_.push_back(prefix_ + ": must be an object");
    }

    bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

    template <class T>
    void required(const char* key, T& out) {
        seen_.insert(key);
        if (!has(key)) {
            bad_.push_back(prefix_ + key + ": required field missing");
            return;
        }
        read(key, out);
    }

    template <class T>
    void optional(const char* key, T& out) {
        seen_.insert(key);
        if (has(key)) read(key, out);
    }

    void interval(const char* key, Interval& out) {
        std::vector<double> v{out.lo, out.hi};
        optional(key, v);
        if (v.size() != 2) {
            bad_.push_back(prefix_ + key + ": expected [lo, hi]");
            return;
        }
        out = {v[0], v[1]};
    }

    void reject_unknown() const {
        if (!j_.is_object()) return;
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) bad_.push_back(prefix_ + k + ": unknown field");
    }

private:
    template <class T>
    void read(const char* key, T& out) {
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            bad_.push_back(prefix_ + key + ": wrong type");
        }
    }

    const json& j_;
    std::string prefix_;
    std::vector<std::string>& bad_;
    std::set<std::string> seen_;
};

inline const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    return j.is_object() && j.contains(key) ? j.at(key) : empty;
}

}  // namespace detail

/// Validates a raw config and materializes every default. Missing required
/// fields, unknown fields and type errors are all collected into one
/// ValidationError.
inline ExperimentConfig parse_experiment_config(json raw, const Overrides& ov = {}) {
    if (!raw.is_object()) throw ValidationError({"config: top level must be an object"});
    if (ov.seed) raw["seed"] = *ov.seed;
    if (ov.out_dir) raw["out_dir"] = *ov.out_dir;
    if (ov.variant || ov.order || ov.iters) {
        if (!raw.contains("train") || !raw["train"].is_object()) raw["train"] = json::object();
        if (ov.variant) raw["train"]["variant"] = *ov.variant;
        if (ov.order) raw["train"]["order"] = *ov.order;
        if (ov.iters) raw["train"]["iters"] = *ov.iters;
    }
    if (ov.horizons) {
        if (!raw.contains("eval") || !raw["eval"].is_object()) raw["eval"] = json::object();
        raw["eval"]["horizons"] = *ov.horizons;
    }

    std::vector<std::string> bad;
    ExperimentConfig c;
    detail::ConfigReader top(raw, "", bad);
    top.required("seed", c.seed);
    top.optional("out_dir", c.out_dir);
    json dummy;
    top.required("generator", dummy);
    top.required("train", dummy);
    top.optional("eval", dummy);
    top.optional("sbd", dummy);
    top.reject_unknown();

    const json& g = detail::section(raw, "generator");
    std::string mode = "velocity";
    if (g.is_object() && g.contains("mode") && g["mode"].is_string()) mode = g["mode"].get<std::string>();
    try {
        c.mode = mode_from_string(mode);
    } catch (const ValidationError& e) {
        bad.push_back("generator." + e.fields().front());
    }
    c.generator = GeneratorSpec::defaults(c.mode);
    c.generator.mixing_seed = c.seed;
    {
        detail::ConfigReader r(g, "generator.", bad);
        r.optional("mode", mode);
        r.required("k", c.generator.k);
        r.required("obs_dim", c.generator.obs_dim);
        r.required("T", c.generator.T);
        r.required("num_sequences", c.generator.num_sequences);
        r.interval("velocity_range", c.generator.velocity);
        r.interval("accel_range", c.generator.accel);
        r.interval("radius_range", c.generator.radius);
        r.optional("mixing_seed", c.generator.mixing_seed);
        r.optional("mixing_hidden", c.generator.mixing_hidden);
        r.optional("nonlinearity", c.generator.nonlinearity);
        r.reject_unknown();
    }

    const json& t = detail::section(raw, "train");
    {
        TrainConfig& tc = c.train;
        tc.seed = c.seed;
        detail::ConfigReader r(t, "train.", bad);
        r.required("a", tc.a);
        r.required("m", tc.m);
        r.required("iters", tc.iters);
        std::string variant = "msp";
        r.optional("variant", variant);
        try {
            tc.variant = variant_from_string(variant);
        } catch (const ValidationError& e) {
            bad.push_back("train." + e.fields().front());
        }
        r.optional("order", tc.order);
        tc.T_c = tc.order == 2 ? 5 : tc.variant == Variant::rec_model ? 3 : 2;
        tc.T_p = tc.order == 2 ? 5 : 1;
        tc.inv_weight = tc.variant == Variant::neural_mstar ? 1.0 : 0.0;
        tc.decay_at = tc.iters * 4 / 5;
        r.optional("T_c", tc.T_c);
        r.optional("T_p", tc.T_p);
        r.optional("inv_weight", tc.inv_weight);
        r.optional("decay_at", tc.decay_at);
        r.optional("hidden", tc.hidden);
        r.optional("transition_hidden", tc.transition_hidden);
        r.optional("lr", tc.lr);
        r.optional("lr_final", tc.lr_final);
        r.optional("beta1", tc.beta1);
        r.optional("beta2", tc.beta2);
        r.optional("eps", tc.eps);
        r.optional("batch", tc.batch);
        r.optional("seed", tc.seed);
        r.optional("log_interval", tc.log_interval);
        r.reject_unknown();
    }
    {
        detail::ConfigReader r(detail::section(raw, "eval"), "eval.", bad);
        r.optional("horizons", c.eval.horizons);
        r.optional("sequences", c.eval.sequences);
        r.optional("pairs", c.eval.pairs);
        r.optional("spectrum_pairs", c.eval.spectrum_pairs);
        r.optional("shifts", c.eval.shifts);
        r.optional("monitor", c.eval.monitor);
        r.reject_unknown();
    }
    {
        detail::ConfigReader r(detail::section(raw, "sbd"), "sbd.", bad);
        r.optional("iters", c.sbd.iters);
        r.optional("lr", c.sbd.lr);
        r.optional("threshold", c.sbd.threshold);
        r.optional("restarts", c.sbd.restarts);
        r.optional("perturb", c.sbd.perturb);
        r.optional("sequences", c.sbd.sequences);
        r.optional("factor_sequences", c.sbd.factor_sequences);
        r.reject_unknown();
    }
    if (!bad.empty()) throw ValidationError(bad);

    const auto prefixed = [&](const char* prefix, auto&& fn) {
        try {
            fn();
        } catch (const ValidationError& e) {
            for (const auto& f : e.fields()) bad.push_back(std::string(prefix) + f);
        }
    };
    prefixed("generator.", [&] { c.generator.validate(c.mode); });
    prefixed("train.", [&] { c.train.validate(); });
    if (c.train.frames_needed() > c.generator.T) {
        bad.push_back("generator.T: objective needs " + std::to_string(c.train.frames_needed()) + " frames");
    }
    if (c.eval.horizons < 1) bad.push_back("eval.horizons: must be >= 1");
    if (c.eval.sequences < 5) bad.push_back("eval.sequences: must be >= 5");
    if (c.eval.pairs < 1) bad.push_back("eval.pairs: must be >= 1");
    if (c.eval.spectrum_pairs > c.eval.pairs) bad.push_back("eval.spectrum_pairs: must be <= eval.pairs");
    if (c.eval.shifts < 1) bad.push_back("eval.shifts: must be >= 1");
    if (c.sbd.sequences < 1) bad.push_back("sbd.sequences: must be >= 1");
    if (c.sbd.factor_sequences < 1) bad.push_back("sbd.factor_sequences: must be >= 1");
    if (!(c.sbd.lr > 0.0)) bad.push_back("sbd.lr: must be > 0");
    if (!(c.sbd.threshold >= 0.0 && c.sbd.threshold < 1.0)) bad.push_back("sbd.threshold: must lie in [0, 1)");
    if (c.out_dir.empty()) bad.push_back("out_dir: must not be empty");
    if (!bad.empty()) throw ValidationError(bad);
    return c;
}

/// Every field, defaults included; object keys sort canonically.
inline json canonical_json(const ExperimentConfig& c) {
    const auto iv = [](const Interval& i) { return json::array({i.lo, i.hi}); };
    const GeneratorSpec& g = c.generator;
    return {{"seed", c.seed},
            {"out_dir", c.out_dir},
            {"generator",
             {{"mode", to_string(c.mode)},
              {"k", g.k},
              {"obs_dim", g.obs_dim},
              {"T", g.T},
              {"num_sequences", g.num_sequences},
              {"velocity_range", iv(g.velocity)},
              {"accel_range", iv(g.accel)},
              {"radius_range", iv(g.radius)},
              {"mixing_seed", g.mixing_seed},
              {"mixing_hidden", g.mixing_hidden},
              {"nonlinearity", g.nonlinearity}}},
            {"train", train_config_to_json(c.train)},
            {"eval",
             {{"horizons", c.eval.horizons},
              {"sequences", c.eval.sequences},
              {"pairs", c.eval.pairs},
              {"spectrum_pairs", c.eval.spectrum_pairs},
              {"shifts", c.eval.shifts},
              {"monitor", c.eval.monitor}}},
            {"sbd",
             {{"iters", c.sbd.iters},
              {"lr", c.sbd.lr},
              {"threshold", c.sbd.threshold},
              {"restarts", c.sbd.restarts},
              {"perturb", c.sbd.perturb},
              {"sequences", c.sbd.sequences},
              {"factor_sequences", c.sbd.factor_sequences}}}};
}

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(canonical_json(c).dump()); }

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path, const Overrides& ov = {}) {
    if (!std::filesystem::exists(path)) throw MissingInputError("config file not found: " + path.string());
    json raw;
    try {
        raw = json::parse(binio::read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError({std::string("config: not valid JSON (") + e.what() + ")"});
    }
    return parse_experiment_config(std::move(raw), ov);
}

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

struct RunPaths {
    std::filesystem::path dir;

    std::filesystem::path config() const { return dir / "config.json"; }
    std::filesystem::path dataset() const { return dir / "dataset.mspdat"; }
    std::filesystem::path dataset_sha() const { return dir / "dataset.sha256"; }
    std::filesystem::path checkpoint() const { return dir / "checkpoint.mspckp"; }
    std::filesystem::path metrics() const { return dir / "metrics.jsonl"; }
    std::filesystem::path report() const { return dir / "report.json"; }
    std::filesystem::path sbd() const { return dir / "sbd.json"; }
};

inline void write_text(const std::filesystem::path& p, const std::string& s) { binio::write_file(p, s); }

inline void require_input(const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::exists(p)) throw MissingInputError(std::string(what) + " not found: " + p.string());
}

/// Seeds of the auxiliary data sets, derived from the master seed.
namespace seeds {
inline std::uint64_t heldout(std::uint64_t s) { return stream_seed(s, 0xe7a1); }
inline std::uint64_t monitor(std::uint64_t s) { return stream_seed(s, 0x3011); }
inline std::uint64_t paired(std::uint64_t s) { return stream_seed(s, 0x9a1d); }
inline std::uint64_t orbit(std::uint64_t s) { return stream_seed(s, 0x4040); }
inline std::uint64_t factor(std::uint64_t s, std::size_t j) { return stream_seed(s, 0xfac0 + j); }
}  // namespace seeds

inline GeneratorSpec with_shape(GeneratorSpec g, std::size_t T, std::size_t n) {
    g.T = T;
    g.num_sequences = n;
    return g;
}

/// Conditioning length used when scoring a model (rec_model is scored as a
/// T_c = 2 predictor).
inline std::size_t scoring_tc(const ModelParams& p) { return p.variant == Variant::rec_model ? 2 : p.T_c; }

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Writes the dataset, its SHA-256 and the canonical config; returns the SHA.
inline std::string run_generate(const ExperimentConfig& c) {
    const RunPaths rp{c.out_dir};
    const SequenceBatch data = make_dataset(c.generator, c.seed, c.mode);
    const std::string bytes = encode_dataset(data);
    const std::string sha = sha256_hex(bytes);
    binio::write_file(rp.dataset(), bytes);
    write_text(rp.dataset_sha(), sha + "  dataset.mspdat\n");
    write_text(rp.config(), canonical_json(c).dump(2) + "\n");
    log().info("dataset {} sha256 {}", rp.dataset().string(), sha);
    return sha;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline SequenceBatch load_run_dataset(const RunPaths& rp) {
    require_input(rp.dataset(), "dataset");
    return load_dataset(rp.dataset());
}

/// Trains, writes checkpoint and metrics. On abort the last good parameters
/// are still saved, then TrainingAborted is rethrown.
inline TrainResult run_train(const ExperimentConfig& c) {
    const RunPaths rp{c.out_dir};
    const SequenceBatch data = load_run_dataset(rp);
    if (data.obs_dim() != c.generator.obs_dim) {
        throw DimensionError("dataset obs_dim " + std::to_string(data.obs_dim()) + " does not match config " +
                             std::to_string(c.generator.obs_dim));
    }
    const ObjectiveSpec es = eval_spec(c.train);
    const std::size_t monitor_frames = es.T_c + es.T_p;
    std::optional<SequenceBatch> monitor;
    if (c.eval.monitor > 0) {
        monitor = make_dataset(with_shape(data.spec, monitor_frames, c.eval.monitor), seeds::monitor(c.seed),
                               data.mode);
    }
    std::ofstream metrics;
    std::filesystem::create_directories(rp.dir);
    metrics.open(rp.metrics(), std::ios::trunc);
    if (!metrics) throw Error("cannot write " + rp.metrics().string());
    TrainHooks hooks;
    hooks.eval = monitor ? &*monitor : nullptr;
    hooks.on_log = [&](const MetricsRecord& r) {
        metrics << metrics_to_json(r).dump() << '\n';
        log().debug("iter {} loss {:.6g}", r.iter, r.loss);
    };
    TrainResult res = train(c.train, data, hooks);
    metrics.close();
    save_checkpoint(res.params, rp.checkpoint(), &c.train);
    if (res.aborted) throw TrainingAborted(res.abort_message, res.abort_iteration);
    log().info("checkpoint {}", rp.checkpoint().string());
    return res;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Model under evaluation: the run's checkpoint, or the exact linear oracle
/// for the run's dataset.
inline ModelParams run_model(const ExperimentConfig& c, const SequenceBatch& data, bool oracle) {
    if (oracle) {
        const int order = data.mode == Mode::acceleration ? 2 : 1;
        OracleOptions o;
        o.m = std::max(c.train.m, 2 * data.spec.k);
        o.seed = c.seed;
        return oracle_model(data.spec, o, order, order == 2 ? std::max<std::size_t>(c.train.T_c, 3) : 2);
    }
    const RunPaths rp{c.out_dir};
    require_input(rp.checkpoint(), "checkpoint");
    ModelParams p = load_checkpoint(rp.checkpoint()).params;
    if (p.obs_dim != data.obs_dim()) {
        throw DimensionError("checkpoint obs_dim " + std::to_string(p.obs_dim) + " does not match dataset obs_dim " +
                             std::to_string(data.obs_dim()));
    }
    return p;
}

inline json run_eval(const ExperimentConfig& c, bool oracle = false) {
    const RunPaths rp{c.out_dir};
    const SequenceBatch data = load_run_dataset(rp);
    const ModelParams p = run_model(c, data, oracle);
    const std::size_t tc = scoring_tc(p), H = c.eval.horizons;

    const SequenceBatch held = make_dataset(with_shape(data.spec, tc + H, c.eval.sequences), seeds::heldout(c.seed),
                                            data.mode);
    const auto errs = horizon_errors(p, held, tc, H);
    const double var = frame_variance(held, tc);
    std::vector<double> rel, horizons;
    for (std::size_t j = 0; j < H; ++j) {
        horizons.push_back(static_cast<double>(j + 1));
        rel.push_back(var > 0 ? errs[j] / var : 0.0);
    }

    const PairedBatch paired =
        make_paired(with_shape(data.spec, tc + 1, c.eval.pairs), seeds::paired(c.seed), data.mode);
    const EquivarianceReport eq = equivariance_error(p, paired, tc, 1);
    const SequenceBatch orbit =
        make_dataset(with_shape(data.spec, tc + c.eval.shifts, c.eval.pairs), seeds::orbit(c.seed), data.mode);
    const HomogeneityReport hom = homogeneity_check(p, orbit, tc, c.eval.shifts);

    const auto ma = sequence_transitions(p, paired.first, tc), mb = sequence_transitions(p, paired.second, tc);
    const std::size_t ns = c.eval.spectrum_pairs;
    const SpectrumReport spec = spectrum_similarity(std::span<const Matrix>(ma.data(), ns),
                                                    std::span<const Matrix>(mb.data(), ns));
    const auto held_m = sequence_transitions(p, held, tc);
    const auto reg = regress_transition_params(held_m, velocity_targets(held), c.seed);

    json report{{"kind", "eval"},
                {"version", kVersion},
                {"config_hash", config_hash(c)},
                {"model",
                 {{"source", oracle ? "oracle" : "checkpoint"},
                  {"variant", to_string(p.variant)},
                  {"order", p.order},
                  {"T_c", tc},
                  {"a", p.a},
                  {"m", p.m}}},
                {"horizons", horizons},
                {"horizon_errors", errs},
                {"frame_variance", var},
                {"relative_errors", rel},
                {"equivariance", to_json(eq)},
                {"homogeneity", to_json(hom)},
                {"spectrum", to_json(spec)},
                {"regression", regression_json(reg)},
                {"artifacts", {rp.report().filename().string()}}};
    write_text(rp.report(), report.dump(2) + "\n");
    log().info("report {}", rp.report().string());
    return report;
}

// ---------------------------------------------------------------------------
// sbd
// ---------------------------------------------------------------------------

/// Mass of each block inside an averaged |V - I| map, as shares of the
/// in-block total.
inline std::vector<double> block_mass(const Matrix& e, const BlockStructure& blocks) {
    std::vector<double> out;
    double total = 0.0;
    for (const auto& b : blocks.blocks) {
        double s = 0.0;
        for (std::size_t i : b)
            for (std::size_t j : b) s += e(i, j);
        out.push_back(s);
        total += s;
    }
    if (total > 0)
        for (auto& v : out) v /= total;
    return out;
}

inline json run_sbd(const ExperimentConfig& c, bool oracle = false) {
    const RunPaths rp{c.out_dir};
    const SequenceBatch data = load_run_dataset(rp);
    const ModelParams p = run_model(c, data, oracle);
    const std::size_t tc = scoring_tc(p);
    if (data.length() < tc) throw DimensionError("dataset sequences are shorter than T_c");

    const std::size_t n = std::min(c.sbd.sequences, data.size());
    auto ms = sequence_transitions(p, data, tc);
    ms.resize(n);
    SbdOptions opt;
    opt.iters = c.sbd.iters;
    opt.lr = c.sbd.lr;
    opt.seed = c.seed;
    opt.restarts = c.sbd.restarts;
    opt.perturb = c.sbd.perturb;
    opt.threshold = c.sbd.threshold;
    const SbdResult res = fit_sbd(ms, opt);

    const std::size_t min_t = data.mode == Mode::velocity ? 3 : 4;
    std::vector<std::pair<std::string, std::string>> files{
        {"sbd_all.svg", svg::heatmap(mean_abs_deviation(res.v), "mean |V* - I|, all sequences")}};
    json factors = json::array();
    for (std::size_t j = 0; j < data.spec.k; ++j) {
        const SequenceBatch fd = make_single_factor(with_shape(data.spec, std::max(tc, min_t), c.sbd.factor_sequences),
                                                    seeds::factor(c.seed, j), data.mode, j);
        const auto fv = conjugate_all(res.u, sequence_transitions(p, fd, tc));
        const Matrix e = mean_abs_deviation(fv);
        const auto mass = block_mass(e, res.blocks);
        const auto best = std::max_element(mass.begin(), mass.end()) - mass.begin();
        files.emplace_back("sbd_factor" + std::to_string(j) + ".svg",
                           svg::heatmap(e, "mean |V* - I|, factor " + std::to_string(j) + " only"));
        factors.push_back({{"factor", j}, {"block_mass", mass}, {"block", best}});
    }
    json out = to_json(res);
    json artifacts = json::array({rp.sbd().filename().string()});
    for (const auto& [name, body] : files) {
        write_text(rp.dir / name, body);
        artifacts.push_back(name);
    }
    out["factors"] = factors;
    out["config_hash"] = config_hash(c);
    out["version"] = kVersion;
    out["artifacts"] = artifacts;
    write_text(rp.sbd(), out.dump(2) + "\n");
    log().info("sbd: {} blocks, loss {:.6g}", res.blocks.size(), res.loss);
    return out;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
    require_input(path, "metrics");
    std::ifstream in(path);
    std::vector<MetricsRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("metrics: malformed line " + std::to_string(out.size() + 1));
        }
        MetricsRecord r;
        r.iter = binio::field<std::size_t>(j, "iter");
        r.loss = binio::field<double>(j, "loss");
        const auto opt = [&](const char* k) -> std::optional<double> {
            if (!j.contains(k) || j[k].is_null()) return std::nullopt;
            return binio::field<double>(j, k);
        };
        r.loss_eval = opt("loss_eval");
        r.ortho_defect = opt("ortho_defect");
        r.wall_ms = opt("wall_ms");
        out.push_back(r);
    }
    if (out.empty()) throw MissingInputError("metrics file is empty: " + path.string());
    return out;
}

/// Renders charts from a run directory; returns the files written. All
/// inputs are read before anything is written.
inline std::vector<std::string> run_report(const std::filesystem::path& dir) {
    const RunPaths rp{dir};
    const auto metrics = read_metrics(rp.metrics());
    std::optional<json> report;
    if (std::filesystem::exists(rp.report())) report = json::parse(binio::read_file(rp.report()));

    svg::Series loss{"train loss", {}, {}}, held{"held-out loss", {}, {}}, ortho{"||I - M M^T||^2", {}, {}};
    for (const auto& r : metrics) {
        loss.x.push_back(static_cast<double>(r.iter));
        loss.y.push_back(r.loss);
        if (r.loss_eval) held.x.push_back(static_cast<double>(r.iter)), held.y.push_back(*r.loss_eval);
        if (r.ortho_defect) ortho.x.push_back(static_cast<double>(r.iter)), ortho.y.push_back(*r.ortho_defect);
    }
    std::vector<svg::Series> ls{loss};
    if (!held.x.empty()) ls.push_back(held);
    std::vector<std::pair<std::string, std::string>> files{
        {"loss.svg", svg::line_chart(ls, "training loss", "iteration", "loss (log10)", true)},
        {"ortho.svg", svg::line_chart({ortho}, "orthogonality defect", "iteration", "||I - M M^T||_F^2")}};
    if (report) {
        svg::Series h{"L^p", binio::field<std::vector<double>>(*report, "horizons"),
                      binio::field<std::vector<double>>(*report, "horizon_errors")};
        files.emplace_back("horizons.svg", svg::line_chart({h}, "prediction error by horizon", "T_p", "L^p (log10)", true));
    }
    std::vector<std::string> written;
    for (const auto& [name, body] : files) {
        write_text(rp.dir / name, body);
        written.push_back(name);
    }
    log().info("report: wrote {} charts", written.size());
    return written;
}

}  // namespace msp
