#include "support.hpp"

#include "skatepose/checkpoint.hpp"
#include "skatepose/cli.hpp"
#include "skatepose/train.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace skatepose;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::string kFixture = SKATEPOSE_TEST_DATA "/segmentation";

// Shared small synthetic run used by several cases.
fs::path synth_dir() {
    static const fs::path dir = [] {
        const auto d = skatepose::testing::temp_dir("cli_synth");
        const auto r = run_cli({"synth", "--out", d.string(), "--per-class", "2", "--pool-size", "40", "--frames", "12"});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("evaluate with prediction equal to ground truth") {
    const auto out = skatepose::testing::temp_dir("cli_eval");
    const auto r = run_cli({"evaluate", "--level", "element", "--pred", kFixture + "/gt", "--gt", kFixture + "/gt",
                            "--out", out.string()});
    CHECK(r.code == cli::kExitOk);
    const auto report = read_json(out / "report.json");
    CHECK(report["frame_accuracy"] == 100.0);
    for (const auto& s : report["f1"]) CHECK(s["f1"] == 100.0);
    const auto manifest = read_json(out / "manifest.json");
    CHECK(manifest["command"] == "evaluate");
    CHECK(manifest["passed"] == true);
    CHECK(manifest["outputs"]["report"] == (out / "report.json").string());
    CHECK(manifest["checksums"]["outputs"]["report"] == cli::sha256_file(out / "report.json"));
    CHECK(manifest["checksums"]["inputs"]["gt"].size() == 3);
}

TEST_CASE("evaluate reproduces the golden fixture") {
    const auto out = skatepose::testing::temp_dir("cli_golden");
    const auto r = run_cli({"evaluate", "--level", "element", "--pred", kFixture + "/pred", "--gt", kFixture + "/gt",
                            "--out", out.string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto report = read_json(out / "report.json");
    const auto golden = read_json(kFixture + "/golden_report.json");
    CHECK(report["frame_accuracy"].get<double>() == doctest::Approx(golden["frame_accuracy"].get<double>()));
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(report["f1"][i]["tp"] == golden["scores"][i]["tp"]);
        CHECK(report["f1"][i]["f1"].get<double>() == doctest::Approx(golden["scores"][i]["f1"].get<double>()));
    }
}

TEST_CASE("pretrain with zero learning rate writes the initialization") {
    const auto out = skatepose::testing::temp_dir("cli_pretrain_lr0");
    const auto r = run_cli({"pretrain", "--poses", (synth_dir() / "pool.jsonl").string(), "--out", out.string(), "--lr",
                            "0", "--epochs", "2", "--batch-size", "8", "--seed", "3"});
    REQUIRE(r.code == cli::kExitOk);
    const auto got = encoder_from_checkpoint(load_checkpoint(out / "encoder.ckpt"));
    const auto manifest = read_json(out / "manifest.json");
    PretrainConfig cfg;
    apply_json(manifest["config"]["pretrain"], cfg);
    const auto want = initial_encoder(cfg.encoder, 3);
    const auto a = tensor_list(got), b = tensor_list(want);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->data == b[i]->data);
    CHECK(manifest["seed"] == 3);
    CHECK(manifest["config"]["pretrain"]["optimizer"]["learning_rate"] == 0.0);
}

TEST_CASE("flags override the config file") {
    const auto dir = skatepose::testing::temp_dir("cli_config");
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"pretrain": {"epochs": 1, "batch_size": 8}, "seed": 4})";
    }
    const auto r = run_cli({"pretrain", "--poses", (synth_dir() / "pool.jsonl").string(), "--config",
                            (dir / "cfg.json").string(), "--epochs", "2", "--out", (dir / "run").string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto m = read_json(dir / "run" / "manifest.json");
    CHECK(m["config"]["pretrain"]["epochs"] == 2);
    CHECK(m["config"]["pretrain"]["batch_size"] == 8);
    CHECK(m["seed"] == 4);

    {
        std::ofstream cfg(dir / "bad.json");
        cfg << R"({"pretrian": {}})";
    }
    const auto bad = run_cli({"pretrain", "--poses", (synth_dir() / "pool.jsonl").string(), "--config",
                              (dir / "bad.json").string(), "--out", (dir / "bad").string()});
    CHECK(bad.code == cli::kExitFailure);
}

TEST_CASE("rerun reproduces every output bit for bit") {
    const auto dir = skatepose::testing::temp_dir("cli_rerun");
    const auto pre = run_cli({"pretrain", "--poses", (synth_dir() / "pool.jsonl").string(), "--out",
                              (dir / "pre").string(), "--epochs", "2", "--batch-size", "8", "--threads", "1"});
    REQUIRE(pre.code == 0);
    const auto fine = run_cli({"finetune", "--checkpoint", (dir / "pre" / "encoder.ckpt").string(), "--train",
                               (synth_dir() / "train.jsonl").string(), "--test", (synth_dir() / "test.jsonl").string(),
                               "--epochs", "2", "--out", (dir / "fine").string()});
    REQUIRE(fine.code == 0);
    for (const char* step : {"pre", "fine"}) {
        const auto first = dir / step;
        const auto again = dir / (std::string(step) + "_again");
        const auto r = run_cli({"rerun", (first / "manifest.json").string(), "--out", again.string()});
        REQUIRE(r.code == 0);
        const auto m1 = read_json(first / "manifest.json");
        const auto m2 = read_json(again / "manifest.json");
        CHECK(m2["rerun_of"] == fs::absolute(first / "manifest.json").lexically_normal().string());
        CHECK(m2["config"] == m1["config"]);
        REQUIRE(m1["outputs"].size() == m2["outputs"].size());
        for (const auto& entry : fs::directory_iterator(first)) {
            if (entry.path().filename() == "manifest.json") continue;
            CHECK(slurp(entry.path()) == slurp(again / entry.path().filename()));
        }
    }
}

TEST_CASE("exit codes") {
    CHECK(run_cli({}).code == cli::kExitUsage);
    CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run_cli({"gradcheck", "--bogus", "--out", "/tmp/x"}).code == cli::kExitUsage);
    CHECK(run_cli({"gradcheck"}).code == cli::kExitUsage);
    const auto dir = skatepose::testing::temp_dir("cli_codes");
    CHECK(run_cli({"finetune", "--train", (synth_dir() / "train.jsonl").string(), "--out", (dir / "f").string()}).code ==
          cli::kExitUsage);
    CHECK(run_cli({"synth", "--frames", "1", "--out", (dir / "s").string()}).code == cli::kExitFailure);
    CHECK(run_cli({"evaluate", "--pred", kFixture + "/gt", "--gt", kFixture + "/gt", "--out", (dir / "e").string()})
              .code == cli::kExitFailure);
    CHECK(run_cli({"--help"}).code == cli::kExitOk);

    // Through the installed binary as a process.
    const std::string bin = SKATEPOSE_CLI_PATH;
    const int status = std::system((bin + " synth --bogus-flag --out " + (dir / "p").string() + " >/dev/null 2>&1").c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == cli::kExitUsage);
}

TEST_CASE("sha256 of a known file") {
    const auto dir = skatepose::testing::temp_dir("cli_sha");
    {
        std::ofstream f(dir / "abc.txt", std::ios::binary);
        f << "abc";
    }
    CHECK(cli::sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
