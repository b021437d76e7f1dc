#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relaybp/synthdata.hpp"
#include "relaybp/trainer.hpp"
#include "test_support.hpp"

using namespace relaybp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// Small shared dataset for the suite: 400 train / 100 test images.
struct Fixture {
    fs::path dir;
    SynthPaths paths;
    Fixture() {
        dir = fs::temp_directory_path() / "trainer-data";
        fs::create_directories(dir);
        SynthOptions opt;
        opt.train_count = 400;
        opt.test_count = 100;
        opt.seed = 3;
        paths = write_synth_idx_dataset(dir, opt);
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

ArchSpec small_two_head() {
    ArchSpec a;
    a.input = {1, 28, 28};
    a.classes = 10;
    LayerSpecCfg relu{.type = "relu"};
    a.segments = {{LayerSpecCfg{.type = "flatten"},
                   LayerSpecCfg{.type = "dense", .units = 32}, relu},
                  {LayerSpecCfg{.type = "dense", .units = 24}, relu}};
    HeadSpecCfg primary;
    primary.kind = "primary";
    primary.attach = 2;
    primary.low_segment = 2;
    primary.layers = {LayerSpecCfg{.type = "dense", .units = 10}};
    HeadSpecCfg aux;
    aux.kind = "auxiliary";
    aux.attach = 1;
    aux.loss_weight = 0.3;
    aux.layers = {LayerSpecCfg{.type = "dense", .units = 10}};
    a.heads = {primary, aux};
    return a;
}

RunConfig base_config(const std::string& out_tag) {
    const Fixture& f = fixture();
    RunConfig cfg;
    cfg.arch = small_two_head();
    cfg.mode = "relay";
    cfg.seed = 9;
    cfg.seed_set = true;
    cfg.element_width = 64;
    cfg.train_images = f.paths.train_images;
    cfg.train_labels = f.paths.train_labels;
    cfg.test_images = f.paths.test_images;
    cfg.test_labels = f.paths.test_labels;
    cfg.batch_size = 50;
    cfg.epochs = 2;
    cfg.sgd.lr = 0.05;
    cfg.schedule.kind = "none";
    cfg.telemetry_stride = 4;
    cfg.out_dir = fs::temp_directory_path() / out_tag;
    return cfg;
}

}  // namespace

TEST_CASE("synthetic digit files are canonical IDX and deterministic") {
    const Fixture& f = fixture();
    Dataset train = load_idx_dataset(f.paths.train_images, f.paths.train_labels);
    CHECK(train.count == 400);
    CHECK(train.height == 28);
    CHECK(train.width == 28);
    std::set<int> seen(train.labels.begin(), train.labels.end());
    CHECK(seen.size() == 10);  // every digit appears

    // Pixels span a real range rather than being blank or saturated.
    int dark = 0, bright = 0;
    for (std::uint8_t p : train.pixels) {
        if (p == 0) ++dark;
        if (p > 128) ++bright;
    }
    CHECK(dark > 0);
    CHECK(bright > 0);

    // Same seed writes identical bytes; the test split differs from train.
    fs::path dir2 = fs::temp_directory_path() / "trainer-data-again";
    fs::create_directories(dir2);
    SynthOptions opt;
    opt.train_count = 400;
    opt.test_count = 100;
    opt.seed = 3;
    SynthPaths again = write_synth_idx_dataset(dir2, opt);
    CHECK(slurp(again.train_images) == slurp(f.paths.train_images));
    CHECK(slurp(again.test_images) == slurp(f.paths.test_images));
    CHECK(slurp(f.paths.train_images) != slurp(f.paths.test_images));
}

TEST_CASE("same config and seed reproduce metrics and checkpoint bit-for-bit") {
    RunConfig a = base_config("trainer-det-a");
    RunConfig b = base_config("trainer-det-b");
    std::ostringstream log_a, log_b;
    TrainResult ra = run_training<double>(a, log_a);
    TrainResult rb = run_training<double>(b, log_b);
    CHECK(slurp(ra.metrics_path) == slurp(rb.metrics_path));
    CHECK(slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path));
    CHECK(slurp(ra.telemetry_path) == slurp(rb.telemetry_path));
    CHECK(ra.final_eval.top1_err_pct == rb.final_eval.top1_err_pct);

    // A different seed diverges.
    RunConfig c = base_config("trainer-det-c");
    c.seed = 10;
    std::ostringstream log_c;
    TrainResult rc = run_training<double>(c, log_c);
    CHECK(slurp(ra.checkpoint_path) != slurp(rc.checkpoint_path));
}

TEST_CASE("metrics CSV carries one loss column per head plus the error rate") {
    RunConfig cfg = base_config("trainer-metrics");
    std::ostringstream log;
    TrainResult r = run_training<double>(cfg, log);
    std::istringstream in(slurp(r.metrics_path));
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,mode,loss_head0,loss_head1,val_top1_err_pct");
    std::string line;
    int rows = 0;
    long last_iter = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::istringstream ls(line);
        std::string iter_s, mode_s, l0, l1, err_s;
        std::getline(ls, iter_s, ',');
        std::getline(ls, mode_s, ',');
        std::getline(ls, l0, ',');
        std::getline(ls, l1, ',');
        std::getline(ls, err_s, ',');
        CHECK(mode_s == "relay");
        CHECK(std::stod(l0) > 0.0);
        CHECK(std::stod(l1) > 0.0);
        CHECK(std::stod(err_s) >= 0.0);
        last_iter = std::stol(iter_s);
    }
    // 400/50 = 8 iterations per epoch, 2 epochs, eval once per epoch.
    CHECK(rows == 2);
    CHECK(last_iter == 16);
    CHECK(r.iterations == 16);
    CHECK(r.metrics.back().head_losses.size() == 2);

    // Telemetry landed at the configured stride with trunk layers first.
    std::istringstream tel(slurp(r.telemetry_path));
    std::getline(tel, header);
    CHECK(header == "iteration,layer,avg_grad_mag,avg_weight_mag,rel_mag");
    std::getline(tel, line);
    CHECK(line.find("0,seg1.l1,") == 0);
}

TEST_CASE("training digests the data: error well under chance, top5 <= top1") {
    RunConfig cfg = base_config("trainer-learns");
    cfg.epochs = 6;
    std::ostringstream log;
    TrainResult r = run_training<double>(cfg, log);
    CHECK(r.final_eval.top1_err_pct < 60.0);  // chance is 90%
    CHECK(r.final_eval.top5_err_pct <= r.final_eval.top1_err_pct);
    CHECK(r.final_eval.count == 100);
    // The log narrates every evaluation.
    CHECK(slurp(r.metrics_path).size() > 0);
    CHECK(log.str().find("val_top1_err=") != std::string::npos);
}

TEST_CASE("ten memorized images evaluate at exactly zero error") {
    // Overfit fixture: train and eval on the same ten images, one per class.
    const Fixture& f = fixture();
    Dataset train = load_idx_dataset(f.paths.train_images, f.paths.train_labels);
    std::vector<Index> pick;
    std::set<int> have;
    for (Index i = 0; i < train.count && have.size() < 10; ++i)
        if (have.insert(train.labels[static_cast<std::size_t>(i)]).second) pick.push_back(i);
    REQUIRE(pick.size() == 10);

    fs::path dir = fs::temp_directory_path() / "trainer-memorize";
    fs::create_directories(dir);
    std::vector<std::uint8_t> img_bytes, lab_bytes;
    auto be32 = [](std::vector<std::uint8_t>& v, std::uint32_t x) {
        v.push_back(x >> 24 & 0xff);
        v.push_back(x >> 16 & 0xff);
        v.push_back(x >> 8 & 0xff);
        v.push_back(x & 0xff);
    };
    be32(img_bytes, 2051);
    be32(img_bytes, 10);
    be32(img_bytes, 28);
    be32(img_bytes, 28);
    be32(lab_bytes, 2049);
    be32(lab_bytes, 10);
    for (Index i : pick) {
        const std::size_t off = static_cast<std::size_t>(i) * 28 * 28;
        img_bytes.insert(img_bytes.end(), train.pixels.begin() + off,
                         train.pixels.begin() + off + 28 * 28);
        lab_bytes.push_back(static_cast<std::uint8_t>(train.labels[static_cast<std::size_t>(i)]));
    }
    std::ofstream(dir / "imgs", std::ios::binary)
        .write(reinterpret_cast<char*>(img_bytes.data()),
               static_cast<std::streamsize>(img_bytes.size()));
    std::ofstream(dir / "labs", std::ios::binary)
        .write(reinterpret_cast<char*>(lab_bytes.data()),
               static_cast<std::streamsize>(lab_bytes.size()));

    RunConfig cfg = base_config("trainer-memorize-out");
    cfg.train_images = dir / "imgs";
    cfg.train_labels = dir / "labs";
    cfg.test_images = dir / "imgs";  // evaluate on the training fixture
    cfg.test_labels = dir / "labs";
    cfg.batch_size = 10;
    cfg.epochs = 300;
    cfg.sgd.lr = 0.1;
    cfg.telemetry_stride = 100;
    std::ostringstream log;
    TrainResult r = run_training<double>(cfg, log);
    CHECK(r.final_eval.top1_err_pct == 0.0);
    CHECK(r.final_eval.top5_err_pct == 0.0);

    // Reloading the checkpoint reproduces the same zero error.
    EvalResult again = run_eval<double>(cfg, r.checkpoint_path);
    CHECK(again.top1_err_pct == 0.0);
}

TEST_CASE("a diverging run raises a numeric error naming the iteration") {
    RunConfig cfg = base_config("trainer-nan");
    cfg.sgd.lr = 1e20;
    cfg.telemetry_stride = 0;
    cfg.epochs = 4;
    std::ostringstream log;
    try {
        run_training<double>(cfg, log);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("runs without an explicit seed are refused") {
    RunConfig cfg = base_config("trainer-noseed");
    cfg.seed_set = false;
    std::ostringstream log;
    CHECK_THROWS_AS(run_training<double>(cfg, log), ConfigError);
}

TEST_CASE("stripping aux heads changes neither eval error nor logits") {
    RunConfig cfg = base_config("trainer-strip");
    std::ostringstream log;
    TrainResult r = run_training<double>(cfg, log);

    NetworkGraph<double> full = build_network<double>(cfg.arch, cfg.seed);
    load_checkpoint(r.checkpoint_path, full);
    NetworkGraph<double> lean = strip_aux_heads(full);
    CHECK(lean.topo.heads.size() == 1);
    CHECK(lean.params.size() < full.params.size());

    LoadedData<double> data = load_run_data<double>(cfg);
    EvalResult ev_full = evaluate(full, data.test_images, data.test_labels, cfg.batch_size);
    EvalResult ev_lean = evaluate(lean, data.test_images, data.test_labels, cfg.batch_size);
    CHECK(ev_full.top1_err_pct == ev_lean.top1_err_pct);
    CHECK(ev_full.top5_err_pct == ev_lean.top5_err_pct);

    // The stripped checkpoint loads into a primary-only architecture.
    const fs::path lean_path = fs::temp_directory_path() / "trainer-strip-lean.rgc";
    save_checkpoint(lean_path, lean);
    ArchSpec lean_arch = cfg.arch;
    lean_arch.heads.resize(1);
    NetworkGraph<double> reloaded = build_network<double>(lean_arch, 1);
    load_checkpoint(lean_path, reloaded);
    EvalResult ev_re = evaluate(reloaded, data.test_images, data.test_labels, cfg.batch_size);
    CHECK(ev_re.top1_err_pct == ev_full.top1_err_pct);
}

TEST_CASE("class-aware sampling trains deterministically end to end") {
    RunConfig a = base_config("trainer-ca-a");
    a.sampler = "class_aware";
    RunConfig b = base_config("trainer-ca-b");
    b.sampler = "class_aware";
    std::ostringstream log;
    TrainResult ra = run_training<double>(a, log);
    TrainResult rb = run_training<double>(b, log);
    CHECK(slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path));
}

TEST_CASE("compare runs all three modes and the table deltas recompute exactly") {
    RunConfig cfg = base_config("trainer-compare");
    cfg.epochs = 1;
    std::ostringstream log;
    CompareResult cr = run_compare<double>(cfg, log);
    REQUIRE(cr.rows.size() == 3);
    CHECK(cr.rows[0].mode == "standard");
    CHECK(cr.rows[1].mode == "multiloss");
    CHECK(cr.rows[2].mode == "relay");
    CHECK(cr.rows[0].delta_top1_pct == 0.0);
    for (const CompareRow& r : cr.rows) {
        const long expect = std::lround(r.top1_err_pct * 100.0) -
                            std::lround(cr.rows[0].top1_err_pct * 100.0);
        CHECK(std::lround(r.delta_top1_pct * 100.0) == expect);
    }

    // Table text: header plus three bracketed delta rows.
    std::istringstream t(cr.table_text);
    std::string line;
    std::getline(t, line);
    CHECK(line.find("mode") == 0);
    for (int i = 0; i < 3; ++i) {
        std::getline(t, line);
        CHECK(line.find('(') != std::string::npos);
        CHECK(line.find(')') != std::string::npos);
    }

    // CSV columns recompute the same way.
    std::istringstream csv(slurp(cr.csv_path));
    std::getline(csv, line);
    CHECK(line == "mode,top1_err_pct,top5_err_pct,delta_top1_vs_standard_pct");
    double std_top1 = 0.0;
    for (int i = 0; i < 3; ++i) {
        std::getline(csv, line);
        std::istringstream ls(line);
        std::string mode, top1, top5, delta;
        std::getline(ls, mode, ',');
        std::getline(ls, top1, ',');
        std::getline(ls, top5, ',');
        std::getline(ls, delta, ',');
        if (i == 0) std_top1 = std::stod(top1);
        CHECK(std::lround(std::stod(delta) * 100.0) ==
              std::lround(std::stod(top1) * 100.0) - std::lround(std_top1 * 100.0));
    }
}
