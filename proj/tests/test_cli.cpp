#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pguide/checkpoint.hpp"
#include "pguide/cli.hpp"
#include "pguide/errors.hpp"

using namespace pguide;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pguide_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "pguide");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("defaults carry the documented hyperparameters") {
    const json d = cli::default_config();
    CHECK(d["prior"]["epochs"] == 200);
    CHECK(d["prior"]["lr"] == 0.05);
    CHECK(d["flow"]["steps"] == 20000);
    CHECK(d["flow"]["lr"] == 0.001);
    CHECK(d["flow"]["dropout_p"] == 0.1);
    CHECK(d["flow"]["hidden"] == json::array({128, 128, 128}));
    CHECK(d["sampling"]["steps"] == 50);
    CHECK(d["dataset"]["n"] == 10000);
}

TEST_CASE("config file, --set, --seed and --out layer in order") {
    const auto dir = scratch_dir("layering");
    const auto path = dir / "cfg.json";
    std::ofstream(path) << R"({"seed": 3, "prior": {"epochs": 7}, "checkpoints": {"prior": null}})";
    cli::Overrides o;
    o.config_path = path;
    o.sets = {"prior.epochs=9", "sampling.mode=dual_cfg", "sampling.w=[1, 2]"};
    json cfg = cli::resolve_config(o);
    CHECK(cfg["seed"] == 3);
    CHECK(cfg["prior"]["epochs"] == 9);
    CHECK(cfg["prior"]["lr"] == 0.05);
    CHECK(cfg["sampling"]["mode"] == "dual_cfg");
    CHECK(cfg["sampling"]["w"] == json::array({1, 2}));
    CHECK(cfg["checkpoints"].contains("prior"));
    o.seed = 11;
    o.out = dir / "out";
    cfg = cli::resolve_config(o);
    CHECK(cfg["seed"] == 11);
    CHECK(cfg["out"] == (dir / "out").string());
}

TEST_CASE("unknown keys and malformed overrides are config errors") {
    cli::Overrides o;
    o.sets = {"prior.epoch=3"};
    CHECK_THROWS_AS(cli::resolve_config(o), ConfigError);
    o.sets = {"noequals"};
    CHECK_THROWS_AS(cli::resolve_config(o), ConfigError);

    const auto dir = scratch_dir("unknown");
    std::ofstream(dir / "cfg.json") << R"({"flow": {"stepz": 1}})";
    cli::Overrides f;
    f.config_path = dir / "cfg.json";
    try {
        cli::resolve_config(f);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("flow.stepz") != std::string::npos);
    }
}

TEST_CASE("config hash ignores the output root only") {
    json a = cli::default_config();
    json b = a;
    b["out"] = "elsewhere";
    CHECK(cli::config_hash(a) == cli::config_hash(b));
    b["seed"] = 1;
    CHECK(cli::config_hash(a) != cli::config_hash(b));
}

TEST_CASE("exit codes: success, gated failure, config error") {
    const auto dir = scratch_dir("exit_codes");
    const std::string out = (dir / "runs").string();
    CHECK(run_cli({"verify", "--out", out}) == cli::kSuccess);
    CHECK(run_cli({"train-prior", "--out", out, "--set", "bogus=1"}) == cli::kConfigError);
    CHECK(run_cli({"train-flow", "--out", out, "--set", "flow.steps=1"}) == cli::kConfigError);
    CHECK(run_cli({"sample", "--out", out}) == cli::kConfigError);
    CHECK(run_cli({"no-such-command"}) == cli::kConfigError);

    // An untrained prior fails the Bayes-optimality gate.
    CHECK(run_cli({"train-prior", "--out", out, "--set", "prior.epochs=0", "--set",
                   "dataset.n=200"}) == cli::kSuccess);
    fs::path prior;
    for (const auto& e : fs::recursive_directory_iterator(out))
        if (e.path().filename() == "prior.ckpt.json") prior = e.path();
    REQUIRE_FALSE(prior.empty());
    CHECK(run_cli({"verify", "--out", out, "--set", "checkpoints.prior=" + json(prior.string()).dump(),
                   "--set", "dataset.n=200"}) == cli::kGateFailed);
}

TEST_CASE("stage-2 training without a prior names the missing field") {
    json cfg = cli::default_config();
    cfg["out"] = scratch_dir("stage2").string();
    try {
        cli::cmd_train_flow(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("checkpoints.prior") != std::string::npos);
    }
}

TEST_CASE("corrupted checkpoint magic produces a load error naming the file") {
    const auto dir = scratch_dir("corrupt");
    PriorModel p = PriorModel::create(2, 2, VarianceMode::learnable);
    const auto path = dir / "prior.ckpt.json";
    save_prior(path, p);
    json j = read_json_file(path);
    j["magic"] = "PGUIDE-PRIOR-v0";
    write_json_file(path, j);
    try {
        load_prior(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
    CHECK(run_cli({"sample", "--out", (dir / "runs").string(), "--set",
                   "checkpoints.prior=" + json(path.string()).dump(), "--set",
                   "checkpoints.flow=" + json(path.string()).dump()}) == cli::kConfigError);
}

TEST_CASE("checkpoints round-trip exactly") {
    Rng rng(4);
    PriorModel p = PriorModel::create(2, 2, VarianceMode::learnable);
    for (auto& v : p.mu.value.flat()) v = rng.normal() / 3.0;
    VelocityNetConfig nc;
    nc.hidden = {8, 8};
    VelocityNet net(nc, rng);
    for (auto* q : net.params())
        for (auto& v : q->value.flat()) v = rng.normal() / 7.0;
    const auto dir = scratch_dir("roundtrip");
    save_prior(dir / "p.json", p);
    save_flow(dir / "f.json", net);
    const PriorModel p2 = load_prior(dir / "p.json");
    const VelocityNet n2 = load_flow(dir / "f.json");
    CHECK(p2.mu.value == p.mu.value);
    CHECK(p2.log_sigma.value == p.log_sigma.value);
    for (std::size_t k = 0; k < net.params().size(); ++k)
        CHECK(n2.params()[k]->value == net.params()[k]->value);
}

TEST_CASE("reruns write byte-identical outputs") {
    const auto dir = scratch_dir("determinism");
    const std::vector<std::string> args{"train-prior", "--set", "prior.epochs=3", "--set",
                                        "dataset.n=300", "--out", dir.string()};
    REQUIRE(run_cli(args) == 0);
    const auto run_dir = fs::directory_iterator(dir)->path();
    std::vector<std::string> first;
    const char* files[] = {"prior.ckpt.json", "prior_history.csv", "prior_report.json", "config.json"};
    for (const char* f : files) first.push_back(slurp(run_dir / f));
    REQUIRE(run_cli(args) == 0);
    for (std::size_t k = 0; k < first.size(); ++k) {
        INFO(files[k]);
        CHECK(slurp(run_dir / files[k]) == first[k]);
    }
}
