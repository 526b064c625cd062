// msp: generate datasets, train, evaluate, block-diagonalize and plot.
#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "msp/experiment.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kAbort = 3, kShape = 4, kMissing = 5 };

int guarded(const std::function<void()>& fn) {
    try {
        fn();
        return kOk;
    } catch (const msp::ValidationError& e) {
        for (const auto& f : e.fields()) msp::log().error("config: {}", f);
        return kConfig;
    } catch (const msp::TrainingAborted& e) {
        msp::log().error("training aborted: {} (last good checkpoint kept)", e.what());
        return kAbort;
    } catch (const msp::MissingInputError& e) {
        msp::log().error("{}", e.what());
        return kMissing;
    } catch (const msp::DimensionError& e) {
        msp::log().error("shape mismatch: {}", e.what());
        return kShape;
    } catch (const msp::FormatError& e) {
        msp::log().error("format error: {}", e.what());
        return kShape;
    } catch (const msp::ContractError& e) {
        msp::log().error("{}", e.what());
        return kConfig;
    } catch (const std::exception& e) {
        msp::log().error("{}", e.what());
        return kFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-sequential prediction experiments"};
    app.require_subcommand(1);

    std::string config;
    msp::Overrides ov;
    std::uint64_t seed = 0;
    std::string out, variant;
    int order = 1;
    std::size_t iters = 0, horizons = 0;
    bool oracle = false;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment config (JSON)")->required();
        sub->add_option("--out", out, "run directory (overrides out_dir)");
        sub->add_option("--seed", seed, "master seed (overrides seed)");
    };
    auto* gen = app.add_subcommand("generate", "write the dataset and its SHA-256");
    common(gen);
    auto* tr = app.add_subcommand("train", "train a model on the run's dataset");
    common(tr);
    tr->add_option("--variant", variant, "msp | rec_model | fixed_blocks | neural_mstar");
    tr->add_option("--order", order, "transition order")->check(CLI::IsMember({1, 2}));
    tr->add_option("--iters", iters, "training iterations");
    auto* ev = app.add_subcommand("eval", "score the checkpoint on held-out data");
    common(ev);
    ev->add_option("--horizons", horizons, "largest prediction horizon")->check(CLI::PositiveNumber);
    ev->add_flag("--oracle", oracle, "evaluate the exact linear oracle instead of the checkpoint (debug)");
    auto* sb = app.add_subcommand("sbd", "block-diagonalize the learned transitions");
    common(sb);
    sb->add_flag("--oracle", oracle, "use the exact linear oracle instead of the checkpoint (debug)");
    std::string run_dir;
    auto* rep = app.add_subcommand("report", "render SVG charts for a run directory");
    rep->add_option("--out", run_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    const auto load = [&](CLI::App* sub) {
        if (sub->count("--seed")) ov.seed = seed;
        if (sub->count("--out")) ov.out_dir = out;
        if (sub->get_option_no_throw("--variant") && sub->count("--variant")) ov.variant = variant;
        if (sub->get_option_no_throw("--order") && sub->count("--order")) ov.order = order;
        if (sub->get_option_no_throw("--iters") && sub->count("--iters")) ov.iters = iters;
        if (sub->get_option_no_throw("--horizons") && sub->count("--horizons")) ov.horizons = horizons;
        return msp::load_experiment_config(config, ov);
    };

    if (*gen) return guarded([&] { msp::run_generate(load(gen)); });
    if (*tr) return guarded([&] { msp::run_train(load(tr)); });
    if (*ev) return guarded([&] { msp::run_eval(load(ev), oracle); });
    if (*sb) return guarded([&] { msp::run_sbd(load(sb), oracle); });
    if (*rep) return guarded([&] { msp::run_report(run_dir); });
    return kFailure;
}
