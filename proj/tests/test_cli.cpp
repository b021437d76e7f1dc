#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "relaybp/dataio.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Spawns the installed CLI binary and captures exit code and both streams.
CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out = fs::temp_directory_path() / ("cli-out-" + std::to_string(counter));
    const fs::path err = fs::temp_directory_path() / ("cli-err-" + std::to_string(counter));
    ++counter;
    const std::string cmd = std::string(RELAYBP_CLI_PATH) + " " + args + " > " + out.string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

const fs::path kWork = fs::temp_directory_path() / "cli-work";

// Data generated once for the whole suite.
const fs::path& data_dir() {
    static fs::path dir = [] {
        fs::path d = kWork / "data";
        fs::create_directories(d);
        CliResult r = run_cli("make-data --out " + d.string() + " --train 60 --test 20 --seed 4");
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

json base_config_json() {
    const fs::path& d = data_dir();
    json arch = {
        {"input", {1, 28, 28}},
        {"classes", 10},
        {"segments",
         json::array({json::array({json{{"type", "flatten"}},
                                   json{{"type", "dense"}, {"units", 16}},
                                   json{{"type", "relu"}}}),
                      json::array({json{{"type", "dense"}, {"units", 12}},
                                   json{{"type", "relu"}}})})},
        {"heads",
         json::array({json{{"kind", "primary"},
                           {"attach", 2},
                           {"low_segment", 2},
                           {"layers", json::array({json{{"type", "dense"}, {"units", 10}}})}},
                      json{{"kind", "auxiliary"},
                           {"attach", 1},
                           {"loss_weight", 0.3},
                           {"layers", json::array({json{{"type", "dense"}, {"units", 10}}})}}})}};
    json cfg;
    cfg["arch"] = arch;
    cfg["mode"] = "relay";
    cfg["seed"] = 11;
    cfg["element_width"] = 32;
    cfg["dataset"] = {{"kind", "idx"},
                      {"train_images", (d / "train-images-idx3-ubyte").string()},
                      {"train_labels", (d / "train-labels-idx1-ubyte").string()},
                      {"test_images", (d / "t10k-images-idx3-ubyte").string()},
                      {"test_labels", (d / "t10k-labels-idx1-ubyte").string()}};
    cfg["batch_size"] = 20;
    cfg["epochs"] = 1;
    cfg["schedule"] = {{"kind", "none"}};
    cfg["telemetry_stride"] = 1;
    cfg["out_dir"] = (kWork / "run").string();
    return cfg;
}

fs::path write_config(const json& cfg, const std::string& name) {
    fs::create_directories(kWork);
    fs::path p = kWork / name;
    std::ofstream(p) << cfg.dump(2);
    return p;
}

}  // namespace

TEST_CASE("make-data emits loadable IDX files") {
    const fs::path& d = data_dir();
    relaybp::Dataset train =
        relaybp::load_idx_dataset(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte");
    CHECK(train.count == 60);
    relaybp::Dataset test =
        relaybp::load_idx_dataset(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte");
    CHECK(test.count == 20);
}

TEST_CASE("train then eval: artifacts land and exit codes are zero") {
    fs::path cfg = write_config(base_config_json(), "train.json");
    CliResult tr = run_cli("train --config " + cfg.string());
    CHECK(tr.code == 0);
    CHECK(tr.out.find("final val_top1_err=") != std::string::npos);
    CHECK(fs::exists(kWork / "run" / "checkpoint.rgc"));
    CHECK(fs::exists(kWork / "run" / "metrics.csv"));
    CHECK(fs::exists(kWork / "run" / "telemetry.csv"));

    CliResult ev = run_cli("eval --config " + cfg.string() + " --checkpoint " +
                           (kWork / "run" / "checkpoint.rgc").string());
    CHECK(ev.code == 0);
    CHECK(ev.out.find("top1_err=") != std::string::npos);
    CHECK(ev.out.find("top5_err=") != std::string::npos);
    CHECK(ev.out.find("n=20") != std::string::npos);
}

TEST_CASE("--seed and --out override the config") {
    json cfg = base_config_json();
    cfg.erase("seed");
    fs::path p = write_config(cfg, "noseed.json");

    // Without a seed anywhere the run is refused.
    CliResult no_seed = run_cli("train --config " + p.string());
    CHECK(no_seed.code == 2);
    CHECK(no_seed.err.find("seed") != std::string::npos);

    const fs::path out2 = kWork / "run-override";
    CliResult with_seed =
        run_cli("train --config " + p.string() + " --seed 5 --out " + out2.string());
    CHECK(with_seed.code == 0);
    CHECK(fs::exists(out2 / "checkpoint.rgc"));
}

TEST_CASE("validate-routing prints the coverage report and JSON") {
    json cfg = base_config_json();
    cfg["arch"] = "conv5";
    fs::path p = write_config(cfg, "validate.json");
    CliResult r = run_cli("validate-routing --config " + p.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("head") != std::string::npos);
    CHECK(r.out.find("segment") != std::string::npos);

    CliResult rj = run_cli("validate-routing --config " + p.string() + " --json");
    CHECK(rj.code == 0);
    json rep = json::parse(rj.out);
    CHECK(rep.at("valid").get<bool>());
    CHECK(rep.at("overlap_segments") == json::array({4}));
    CHECK(rep.at("uncovered_segments").empty());
}

TEST_CASE("validate-routing rejects spans that leave segments untrained") {
    json cfg = base_config_json();
    // Pull the aux head's span up so segment 1 is uncovered.
    cfg["arch"]["heads"][1]["low_segment"] = 2;
    cfg["arch"]["heads"][1]["attach"] = 2;
    fs::path p = write_config(cfg, "uncovered.json");
    CliResult r = run_cli("validate-routing --config " + p.string());
    CHECK(r.code == 2);
    CHECK(r.out.find("uncovered") != std::string::npos);

    CliResult rj = run_cli("validate-routing --config " + p.string() + " --json");
    CHECK(rj.code == 2);
    json rep = json::parse(rj.out);
    CHECK_FALSE(rep.at("valid").get<bool>());
    CHECK(rep.at("uncovered_segments") == json::array({1}));
}

TEST_CASE("config mistakes exit 2 with the problem named") {
    json cfg = base_config_json();
    cfg["learning_rate"] = 0.1;
    fs::path p = write_config(cfg, "badkey.json");
    CliResult r = run_cli("train --config " + p.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("learning_rate") != std::string::npos);

    fs::path not_json = kWork / "notjson.json";
    std::ofstream(not_json) << "{ nope";
    CliResult r2 = run_cli("train --config " + not_json.string());
    CHECK(r2.code == 2);

    CliResult r3 = run_cli("train --config /no/such/file.json");
    CHECK(r3.code == 4);
}

TEST_CASE("data problems exit 4") {
    json cfg = base_config_json();
    cfg["dataset"]["train_images"] = (kWork / "missing-images").string();
    fs::path p = write_config(cfg, "missingdata.json");
    CliResult r = run_cli("train --config " + p.string());
    CHECK(r.code == 4);

    // A non-checkpoint file handed to eval is a format error.
    fs::path junk = kWork / "junk.rgc";
    std::ofstream(junk) << "not a checkpoint";
    fs::path good = write_config(base_config_json(), "evaljunk.json");
    CliResult r2 = run_cli("eval --config " + good.string() + " --checkpoint " + junk.string());
    CHECK(r2.code == 4);
}

TEST_CASE("numeric blowups exit 3") {
    json cfg = base_config_json();
    cfg["optimizer"] = {{"lr", 1e20}};
    cfg["epochs"] = 2;
    cfg["telemetry_stride"] = 0;
    cfg["out_dir"] = (kWork / "nan-run").string();
    fs::path p = write_config(cfg, "nan.json");
    CliResult r = run_cli("train --config " + p.string());
    CHECK(r.code == 3);
    CHECK(r.err.find("numeric") != std::string::npos);
}

TEST_CASE("compare emits the three-mode table and CSV") {
    json cfg = base_config_json();
    cfg["out_dir"] = (kWork / "cmp").string();
    fs::path p = write_config(cfg, "compare.json");
    CliResult r = run_cli("compare --config " + p.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("standard") != std::string::npos);
    CHECK(r.out.find("multiloss") != std::string::npos);
    CHECK(r.out.find("relay") != std::string::npos);
    CHECK(r.out.find("(+0.00)") != std::string::npos);  // standard vs itself
    CHECK(fs::exists(kWork / "cmp" / "compare.csv"));
    const std::string csv = slurp(kWork / "cmp" / "compare.csv");
    CHECK(csv.find("mode,top1_err_pct,top5_err_pct,delta_top1_vs_standard_pct") == 0);
}

TEST_CASE("bad invocations exit 2, help exits 0") {
    CliResult none = run_cli("");
    CHECK(none.code == 2);
    CliResult unknown = run_cli("frobnicate");
    CHECK(unknown.code == 2);
    CliResult help = run_cli("--help");
    CHECK(help.code == 0);
    CHECK(help.out.find("train") != std::string::npos);
    CliResult no_cfg = run_cli("train");
    CHECK(no_cfg.code == 2);
}
