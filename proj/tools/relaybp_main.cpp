#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "relaybp/checkpoint.hpp"
#include "relaybp/config.hpp"
#include "relaybp/errors.hpp"
#include "relaybp/gradrouter.hpp"
#include "relaybp/synthdata.hpp"
#include "relaybp/trainer.hpp"

#include <nlohmann/json.hpp>

namespace {

using namespace relaybp;

struct CommonFlags {
    std::string config_path;
    std::int64_t seed = -1;  // -1: keep the config's seed
    std::string out_dir;
};

RunConfig load_with_overrides(const CommonFlags& flags) {
    RunConfig cfg = load_config_file(flags.config_path);
    if (flags.seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(flags.seed);
        cfg.seed_set = true;
    }
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    return cfg;
}

// Runs f with the run's element width; config decides between f32 and f64.
template <typename F>
int with_width(int width, F f) {
    if (width == 64) return f(double{});
    return f(float{});
}

int cmd_train(const CommonFlags& flags) {
    RunConfig cfg = load_with_overrides(flags);
    return with_width(cfg.element_width, [&](auto tag) {
        using S = decltype(tag);
        TrainResult r = run_training<S>(cfg, std::cout);
        std::cout << "final val_top1_err=" << r.final_eval.top1_err_pct
                  << "% val_top5_err=" << r.final_eval.top5_err_pct << "%\n"
                  << "checkpoint: " << r.checkpoint_path.string() << "\n"
                  << "metrics: " << r.metrics_path.string() << "\n";
        return exit_code::ok;
    });
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint) {
    RunConfig cfg = load_with_overrides(flags);
    const int width = checkpoint_element_width(checkpoint);
    if (width != cfg.element_width)
        std::cerr << "note: checkpoint stores " << width << "-bit elements; using that width\n";
    return with_width(width, [&](auto tag) {
        using S = decltype(tag);
        EvalResult r = run_eval<S>(cfg, checkpoint);
        std::printf("top1_err=%.4f%% top5_err=%.4f%% n=%lld\n", r.top1_err_pct, r.top5_err_pct,
                    static_cast<long long>(r.count));
        return exit_code::ok;
    });
}

int cmd_validate_routing(const CommonFlags& flags, bool as_json) {
    RunConfig cfg = load_with_overrides(flags);
    GraphTopology topo = build_topology(cfg.arch);
    RoutingSpec spec;
    if (cfg.mode == "standard")
        spec = RoutingSpec::standard(topo);
    else if (cfg.mode == "multiloss")
        spec = RoutingSpec::multiloss(topo);
    else
        spec = RoutingSpec::relay(topo);
    ValidationReport rep = validate_routing(spec, topo);
    if (as_json)
        std::cout << validation_report_to_json(rep).dump(2) << "\n";
    else
        std::cout << rep.text();
    return rep.valid() ? exit_code::ok : exit_code::config;
}

int cmd_compare(const CommonFlags& flags) {
    RunConfig cfg = load_with_overrides(flags);
    return with_width(cfg.element_width, [&](auto tag) {
        using S = decltype(tag);
        CompareResult r = run_compare<S>(cfg, std::cout);
        std::cout << r.table_text << "csv: " << r.csv_path.string() << "\n";
        return exit_code::ok;
    });
}

int cmd_make_data(const std::string& out_dir, std::int64_t train_count, std::int64_t test_count,
                  std::int64_t seed) {
    SynthOptions opt;
    opt.train_count = train_count;
    opt.test_count = test_count;
    opt.seed = static_cast<std::uint64_t>(seed);
    SynthPaths p = write_synth_idx_dataset(out_dir, opt);
    std::cout << "wrote " << p.train_images.string() << " (+labels), "
              << p.test_images.string() << " (+labels)\n";
    return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Segment-routed backpropagation trainer"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string checkpoint;
    bool json_report = false;
    std::string data_out = "data";
    std::int64_t train_count = 60000, test_count = 10000, data_seed = 1;

    auto add_common = [&flags](CLI::App* sub, bool need_config = true) {
        auto* c = sub->add_option("--config", flags.config_path, "run config (JSON)");
        if (need_config) c->required();
        sub->add_option("--seed", flags.seed, "override the config's seed");
        sub->add_option("--out", flags.out_dir, "override the config's output directory");
    };

    CLI::App* train = app.add_subcommand("train", "train a network");
    add_common(train);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    CLI::App* validate = app.add_subcommand("validate-routing",
                                            "check the config's routing spec");
    add_common(validate);
    validate->add_flag("--json", json_report, "emit the report as JSON");
    CLI::App* compare =
        app.add_subcommand("compare", "train standard, multiloss, and relay with one seed");
    add_common(compare);
    CLI::App* make_data =
        app.add_subcommand("make-data", "generate the synthetic digit dataset (IDX files)");
    make_data->add_option("--out", data_out, "output directory");
    make_data->add_option("--train", train_count, "training image count");
    make_data->add_option("--test", test_count, "test image count");
    make_data->add_option("--seed", data_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : relaybp::exit_code::config;
    }

    try {
        if (*train) return cmd_train(flags);
        if (*eval) return cmd_eval(flags, checkpoint);
        if (*validate) return cmd_validate_routing(flags, json_report);
        if (*compare) return cmd_compare(flags);
        if (*make_data) return cmd_make_data(data_out, train_count, test_count, data_seed);
    } catch (const relaybp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return relaybp::exit_code::config;
    } catch (const relaybp::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return relaybp::exit_code::numeric;
    } catch (const relaybp::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return relaybp::exit_code::io;
    } catch (const relaybp::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return relaybp::exit_code::io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
