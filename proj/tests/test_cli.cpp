#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "msp/experiment.hpp"

namespace fs = std::filesystem;
using msp::json;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("msp_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    static json base_config() {
        return json::parse(R"({
            "seed": 4,
            "generator": {"k": 2, "obs_dim": 8, "T": 3, "num_sequences": 200},
            "train": {"a": 4, "m": 6, "hidden": [16], "iters": 25, "log_interval": 10},
            "eval": {"horizons": 4, "sequences": 20, "pairs": 10, "spectrum_pairs": 5, "shifts": 3, "monitor": 0},
            "sbd": {"iters": 30, "restarts": 3, "sequences": 32, "factor_sequences": 8}
        })");
    }

    fs::path write_config(json j, const std::string& name = "config.in.json", const std::string& run = "run") {
        j["out_dir"] = (dir / run).string();
        const fs::path p = dir / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }

    CliResult cli(const std::string& args) const {
        const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
        const std::string cmd = std::string(MSP_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
    }

    fs::path run_dir(const std::string& run = "run") const { return dir / run; }
};

/// Minimal XML well-formedness check: balanced tags, quoted attributes, no
/// stray '<' or unescaped '&' in text.
bool well_formed(const std::string& s, std::string& why) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    static const std::regex entity("^&(amp|lt|gt|quot|apos|#[0-9]+);");
    while (i < s.size()) {
        if (s[i] == '&') {
            if (!std::regex_search(s.substr(i, 8), entity)) return why = "bad entity at " + std::to_string(i), false;
            ++i;
            continue;
        }
        if (s[i] != '<') {
            ++i;
            continue;
        }
        const std::size_t close = s.find('>', i);
        if (close == std::string::npos) return why = "unterminated tag", false;
        std::string tag = s.substr(i + 1, close - i - 1);
        i = close + 1;
        if (tag.starts_with("?") || tag.starts_with("!")) continue;
        if (tag.find('<') != std::string::npos) return why = "'<' inside tag", false;
        if (std::count(tag.begin(), tag.end(), '"') % 2) return why = "unbalanced quotes in <" + tag + ">", false;
        if (tag.starts_with("/")) {
            if (stack.empty() || stack.back() != tag.substr(1)) return why = "mismatched </" + tag.substr(1) + ">", false;
            stack.pop_back();
            continue;
        }
        const bool self = tag.ends_with("/");
        const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
        if (name.empty()) return why = "empty tag name", false;
        if (!self) stack.push_back(name);
    }
    if (!stack.empty()) return why = "unclosed <" + stack.back() + ">", false;
    return true;
}

std::vector<std::pair<double, double>> polyline_points(const std::string& svg) {
    std::vector<std::pair<double, double>> out;
    static const std::regex poly("points=\"([^\"]*)\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it) {
        std::istringstream ss((*it)[1].str());
        std::string tok;
        while (ss >> tok) {
            const auto c = tok.find(',');
            out.emplace_back(std::stod(tok.substr(0, c)), std::stod(tok.substr(c + 1)));
        }
    }
    return out;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(CliTest, MissingFieldExitsTwoAndNamesIt) {
    json j = base_config();
    j["train"].erase("a");
    const auto cfg = write_config(j);
    const CliResult r = cli("generate --config " + cfg.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("train.a"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(run_dir() / "dataset.mspdat"));
}

TEST_F(CliTest, UnknownFieldAndMissingConfig) {
    json j = base_config();
    j["generator"]["colour"] = 1;
    EXPECT_EQ(cli("generate --config " + write_config(j).string()).code, 2);
    EXPECT_NE(cli("generate --config " + (dir / "nope.json").string()).code, 0);
}

TEST_F(CliTest, GenerateIsReproducibleAndRoundTrips) {
    const auto cfg = write_config(base_config());
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    const std::string sha1 = slurp(run_dir() / "dataset.sha256");
    const std::string bytes1 = slurp(run_dir() / "dataset.mspdat");
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    EXPECT_EQ(slurp(run_dir() / "dataset.sha256"), sha1);
    EXPECT_EQ(sha1.substr(0, 64), msp::sha256_hex(bytes1));

    const auto c = msp::load_experiment_config(cfg);
    EXPECT_EQ(msp::load_dataset(run_dir() / "dataset.mspdat"), msp::make_dataset(c.generator, c.seed, c.mode));
    const json canon = json::parse(slurp(run_dir() / "config.json"));
    EXPECT_EQ(canon, msp::canonical_json(c));

    ASSERT_EQ(cli("generate --config " + cfg.string() + " --seed 5").code, 0);
    EXPECT_NE(slurp(run_dir() / "dataset.sha256"), sha1);
}

TEST_F(CliTest, NothingOnStdout) {
    const auto cfg = write_config(base_config());
    const CliResult r = cli("generate --config " + cfg.string());
    ASSERT_EQ(r.code, 0);
    EXPECT_TRUE(r.out.empty()) << r.out;
}

TEST_F(CliTest, TrainMetricsCheckpointAndDeterminism) {
    const auto cfg = write_config(base_config());
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("train --config " + cfg.string()).code, 0);
    EXPECT_EQ(count_lines(slurp(run_dir() / "metrics.jsonl")), 3u);  // ceil(25 / 10)
    const std::string ck = slurp(run_dir() / "checkpoint.mspckp");
    ASSERT_EQ(cli("train --config " + cfg.string()).code, 0);
    EXPECT_EQ(slurp(run_dir() / "checkpoint.mspckp"), ck);

    ASSERT_EQ(cli("train --config " + cfg.string() + " --iters 7").code, 0);
    EXPECT_EQ(count_lines(slurp(run_dir() / "metrics.jsonl")), 1u);

    // library call on the same config gives the same bytes
    const auto c = msp::load_experiment_config(cfg);
    const auto res = msp::train(c.train, msp::load_dataset(run_dir() / "dataset.mspdat"));
    EXPECT_EQ(msp::encode_checkpoint(res.params, &c.train), ck);
}

TEST_F(CliTest, ZeroItersWritesInitialization) {
    const auto cfg = write_config(base_config());
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("train --config " + cfg.string() + " --iters 0").code, 0);
    msp::Overrides ov;
    ov.iters = 0;
    const auto c = msp::load_experiment_config(cfg, ov);
    EXPECT_EQ(msp::load_checkpoint(run_dir() / "checkpoint.mspckp").params, msp::ModelParams::init(c.train, 8));
    EXPECT_EQ(count_lines(slurp(run_dir() / "metrics.jsonl")), 0u);
}

TEST_F(CliTest, VariantsAndOrders) {
    json j = base_config();
    j["generator"]["T"] = 4;
    j["train"]["iters"] = 3;
    const auto cfg = write_config(j);
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    for (const char* v : {"msp", "rec_model", "fixed_blocks", "neural_mstar"}) {
        ASSERT_EQ(cli("train --config " + cfg.string() + " --variant " + v).code, 0) << v;
        EXPECT_EQ(msp::to_string(msp::load_checkpoint(run_dir() / "checkpoint.mspckp").params.variant), v);
    }
    EXPECT_EQ(cli("train --config " + cfg.string() + " --variant bogus").code, 2);
    EXPECT_NE(cli("train --config " + cfg.string() + " --order 3").code, 0);
}

TEST_F(CliTest, SecondOrderTrains) {
    json j = base_config();
    j["generator"]["mode"] = "acceleration";
    j["generator"]["T"] = 10;
    j["train"]["order"] = 2;
    j["train"]["iters"] = 3;
    const auto cfg = write_config(j);
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("train --config " + cfg.string()).code, 0);
    EXPECT_EQ(msp::load_checkpoint(run_dir() / "checkpoint.mspckp").params.order, 2);
}

TEST_F(CliTest, TrainWithoutDatasetExitsFive) {
    const auto cfg = write_config(base_config());
    EXPECT_EQ(cli("train --config " + cfg.string()).code, 5);
}

TEST_F(CliTest, OracleEvalIsExact) {
    json j = base_config();
    j["generator"]["nonlinearity"] = 0.0;
    const auto cfg = write_config(j);
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("eval --config " + cfg.string() + " --oracle --horizons 6").code, 0);
    const json rep = json::parse(slurp(run_dir() / "report.json"));
    ASSERT_EQ(rep["horizon_errors"].size(), 6u);
    for (double e : rep["horizon_errors"]) EXPECT_LT(e, 1e-10);
    EXPECT_EQ(rep["model"]["source"], "oracle");
}

TEST_F(CliTest, EvalReportSchemaAndLibraryEquality) {
    const auto cfg = write_config(base_config());
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("train --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("eval --config " + cfg.string()).code, 0);
    const json rep = json::parse(slurp(run_dir() / "report.json"));
    for (const char* k : {"kind", "version", "config_hash", "model", "horizons", "horizon_errors", "frame_variance",
                          "relative_errors", "equivariance", "homogeneity", "spectrum", "regression", "artifacts"})
        EXPECT_TRUE(rep.contains(k)) << k;
    EXPECT_EQ(rep["kind"], "eval");
    EXPECT_EQ(rep["horizons"].size(), 4u);

    const auto c = msp::load_experiment_config(cfg);
    EXPECT_EQ(rep["config_hash"], msp::config_hash(c));
    EXPECT_EQ(rep["config_hash"].get<std::string>().size(), 64u);
    const auto p = msp::load_checkpoint(run_dir() / "checkpoint.mspckp").params;
    const auto data = msp::load_dataset(run_dir() / "dataset.mspdat");
    const auto held = msp::make_dataset(msp::with_shape(data.spec, 2 + 4, 20), msp::seeds::heldout(c.seed), data.mode);
    EXPECT_EQ(rep["horizon_errors"].get<std::vector<double>>(), msp::horizon_errors(p, held, 2, 4));
}

TEST_F(CliTest, ShapeMismatchExitsFour) {
    const auto cfg = write_config(base_config());
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("train --config " + cfg.string() + " --iters 0").code, 0);
    json j = base_config();
    j["generator"]["obs_dim"] = 12;
    const auto other = write_config(j, "other.json");
    ASSERT_EQ(cli("generate --config " + other.string()).code, 0);
    EXPECT_EQ(cli("eval --config " + other.string()).code, 4);
    EXPECT_EQ(cli("sbd --config " + other.string()).code, 4);
}

TEST_F(CliTest, OracleSbdFindsPlantedBlocks) {
    json j = base_config();
    j["generator"]["nonlinearity"] = 0.0;
    j["sbd"]["restarts"] = 10;
    j["sbd"]["iters"] = 100;
    const auto cfg = write_config(j);
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    const CliResult r = cli("sbd --config " + cfg.string() + " --oracle");
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string first = slurp(run_dir() / "sbd.json");
    const json res = json::parse(first);
    ASSERT_EQ(res["blocks"]["blocks"].size(), 2u) << res["blocks"].dump();
    for (const auto& b : res["blocks"]["blocks"]) EXPECT_EQ(b.size(), 2u);
    std::set<std::size_t> owners;
    for (const auto& f : res["factors"]) owners.insert(f["block"].get<std::size_t>());
    EXPECT_EQ(owners.size(), 2u);
    for (const auto& name : res["artifacts"]) {
        const std::string n = name.get<std::string>();
        if (!n.ends_with(".svg")) continue;
        std::string why;
        EXPECT_TRUE(well_formed(slurp(run_dir() / n), why)) << n << ": " << why;
    }
    ASSERT_EQ(cli("sbd --config " + cfg.string() + " --oracle").code, 0);
    EXPECT_EQ(slurp(run_dir() / "sbd.json"), first);
}

TEST_F(CliTest, ReportEmptyMetricsExitsFiveWithoutFiles) {
    fs::create_directories(run_dir());
    std::ofstream(run_dir() / "metrics.jsonl").close();
    EXPECT_EQ(cli("report --out " + run_dir().string()).code, 5);
    for (const auto& e : fs::directory_iterator(run_dir())) EXPECT_NE(e.path().extension(), ".svg") << e.path();
    fs::remove(run_dir() / "metrics.jsonl");
    EXPECT_EQ(cli("report --out " + run_dir().string()).code, 5);
}

TEST_F(CliTest, ReportChartsAreWellFormedAndReproducible) {
    json j = base_config();
    j["eval"]["monitor"] = 10;
    const auto cfg = write_config(j);
    ASSERT_EQ(cli("generate --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("train --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("eval --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli("report --out " + run_dir().string()).code, 0);
    std::map<std::string, std::string> first;
    for (const char* n : {"loss.svg", "ortho.svg", "horizons.svg"}) {
        ASSERT_TRUE(fs::exists(run_dir() / n)) << n;
        first[n] = slurp(run_dir() / n);
        std::string why;
        EXPECT_TRUE(well_formed(first[n], why)) << n << ": " << why;
        // plot area is [80, 620] x [40, 360]
        for (const auto& [x, y] : polyline_points(first[n])) {
            EXPECT_GE(x, 80 - 1e-6);
            EXPECT_LE(x, 620 + 1e-6);
            EXPECT_GE(y, 40 - 1e-6);
            EXPECT_LE(y, 360 + 1e-6);
        }
    }
    ASSERT_EQ(cli("report --out " + run_dir().string()).code, 0);
    for (const auto& [n, body] : first) EXPECT_EQ(slurp(run_dir() / n), body) << n;
}

TEST(Svg, WellFormedCheckerRejectsBrokenXml) {
    std::string why;
    EXPECT_TRUE(well_formed("<svg><g a=\"1\"/><text>a &amp; b</text></svg>", why)) << why;
    EXPECT_FALSE(well_formed("<svg><g></svg>", why));
    EXPECT_FALSE(well_formed("<svg><text>a & b</text></svg>", why));
    EXPECT_FALSE(well_formed("<svg a=\"1></svg>", why));
}

TEST(Svg, AxisRangeCoversExtrema) {
    const msp::svg::Series s{"s", {1, 2, 3}, {-5, 0.5, 7}};
    const auto [xr, yr] = msp::svg::extent({s}, false);
    EXPECT_LE(xr.lo, 1);
    EXPECT_GE(xr.hi, 3);
    EXPECT_LE(yr.lo, -5);
    EXPECT_GE(yr.hi, 7);
    std::string why;
    EXPECT_TRUE(well_formed(msp::svg::line_chart({s}, "a < b & c", "x", "y"), why)) << why;
    EXPECT_TRUE(well_formed(msp::svg::heatmap(msp::Matrix{{0, 1}, {2, 3}}, "h"), why)) << why;
}
