#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "relaybp/checkpoint.hpp"
#include "relaybp/config.hpp"
#include "relaybp/dataio.hpp"
#include "relaybp/gradrouter.hpp"
#include "relaybp/netgraph.hpp"
#include "relaybp/optimizer.hpp"
#include "relaybp/sampler.hpp"
#include "relaybp/telemetry.hpp"

namespace relaybp {

struct EvalResult {
    double top1_err_pct = 0.0;
    double top5_err_pct = 0.0;
    Index count = 0;
};

struct MetricsRow {
    long iteration = 0;
    std::string mode;
    std::vector<double> head_losses;  // one per head, graph order
    double val_top1_err_pct = 0.0;
};

struct TrainResult {
    std::filesystem::path checkpoint_path, metrics_path, telemetry_path;
    EvalResult final_eval;
    std::vector<MetricsRow> metrics;
    long iterations = 0;
    double wall_seconds = 0.0;
};

template <typename S>
struct LoadedData {
    Tensor<S> train_images{Shape{1}};
    std::vector<int> train_labels;
    Tensor<S> test_images{Shape{1}};
    std::vector<int> test_labels;
};

// Loads both splits, scales to [0,1], and subtracts the training set's
// per-pixel mean from both.
template <typename S>
LoadedData<S> load_run_data(const RunConfig& cfg) {
    Dataset train, test;
    if (cfg.dataset_kind == "idx") {
        if (cfg.train_images.empty() || cfg.test_images.empty())
            throw ConfigError("dataset paths missing: idx runs need train_images/train_labels/"
                              "test_images/test_labels");
        train = load_idx_dataset(cfg.train_images, cfg.train_labels);
        test = load_idx_dataset(cfg.test_images, cfg.test_labels);
    } else {
        train = load_cifar_bin(cfg.cifar_train);
        test = load_cifar_bin(cfg.cifar_test);
    }
    LoadedData<S> d;
    d.train_images = dataset_to_tensor<S>(train);
    d.train_labels = std::move(train.labels);
    d.test_images = dataset_to_tensor<S>(test);
    d.test_labels = std::move(test.labels);
    const Tensor<S> mean = pixel_mean(d.train_images);
    subtract_mean(d.train_images, mean);
    subtract_mean(d.test_images, mean);
    return d;
}

// Top-1 / top-5 error over a labeled set, batched inference. A prediction
// counts as top-5 correct when fewer than five logits strictly exceed the
// label's logit.
template <typename S>
EvalResult evaluate(const NetworkGraph<S>& g, const Tensor<S>& images,
                    const std::vector<int>& labels, Index batch_size) {
    const Index n = images.shape()[0];
    if (static_cast<Index>(labels.size()) != n)
        throw ConsistencyError("evaluate needs one label per image");
    Index top1_wrong = 0, top5_wrong = 0;
    std::vector<Index> idx;
    for (Index start = 0; start < n; start += batch_size) {
        const Index count = std::min(batch_size, n - start);
        idx.resize(static_cast<std::size_t>(count));
        std::iota(idx.begin(), idx.end(), start);
        Tensor<S> batch = gather_batch(images, idx);
        ForwardTrace<S> trace = forward(g, batch, {}, Mode::infer);
        const Tensor<S>& logits = trace.primary_logits;
        const Index classes = logits.shape()[1];
        for (Index i = 0; i < count; ++i) {
            const S* row = logits.data() + i * classes;
            const int label = labels[static_cast<std::size_t>(start + i)];
            if (label < 0 || label >= classes)
                throw IndexError("label " + std::to_string(label) + " outside [0, " +
                                 std::to_string(classes) + ")");
            Index argmax = 0, greater = 0;
            for (Index c = 1; c < classes; ++c)
                if (row[c] > row[argmax]) argmax = c;
            for (Index c = 0; c < classes; ++c)
                if (row[c] > row[label]) ++greater;
            if (argmax != label) ++top1_wrong;
            if (greater >= 5) ++top5_wrong;
        }
    }
    EvalResult r;
    r.count = n;
    r.top1_err_pct = 100.0 * static_cast<double>(top1_wrong) / static_cast<double>(n);
    r.top5_err_pct = 100.0 * static_cast<double>(top5_wrong) / static_cast<double>(n);
    return r;
}

namespace detail {

inline std::string metrics_header(std::size_t heads) {
    std::string h = "iteration,mode";
    for (std::size_t i = 0; i < heads; ++i) h += ",loss_head" + std::to_string(i);
    h += ",val_top1_err_pct";
    return h;
}

inline std::string metrics_line(const MetricsRow& r) {
    char buf[64];
    std::string line = std::to_string(r.iteration) + "," + r.mode;
    for (double l : r.head_losses) {
        std::snprintf(buf, sizeof buf, ",%.9g", l);
        line += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.4f", r.val_top1_err_pct);
    line += buf;
    return line;
}

}  // namespace detail

// One full training run: build, route, iterate, evaluate, persist. The
// text log gets one line per evaluation; artifacts land in cfg.out_dir.
template <typename S>
TrainResult run_training(const RunConfig& cfg, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!cfg.seed_set)
        throw ConfigError("config has no seed; runs must be seeded explicitly");

    LoadedData<S> data = load_run_data<S>(cfg);
    NetworkGraph<S> graph = build_network<S>(cfg.arch, cfg.seed);

    RoutingSpec route;
    if (cfg.mode == "standard")
        route = RoutingSpec::standard(graph.topo);
    else if (cfg.mode == "multiloss")
        route = RoutingSpec::multiloss(graph.topo);
    else
        route = RoutingSpec::relay(graph.topo);
    require_valid(validate_routing(route, graph.topo));

    SgdState<S> opt = sgd_init(graph, cfg.sgd);
    ScheduleState sched;

    const Index n_train = data.train_images.shape()[0];
    const long iters_per_epoch = static_cast<long>(n_train / cfg.batch_size);
    if (iters_per_epoch < 1)
        throw ConfigError("batch size " + std::to_string(cfg.batch_size) +
                          " exceeds the training set of " + std::to_string(n_train));
    const long total_iters = iters_per_epoch * cfg.epochs;
    const long eval_every = cfg.eval_interval > 0 ? cfg.eval_interval : iters_per_epoch;

    Rng augment_rng = Rng(cfg.seed).fork(0x617567);  // augmentation stream
    Rng shuffle_rng = Rng(cfg.seed).fork(0x73687566);
    SamplerState sampler;
    const bool class_aware = cfg.sampler == "class_aware";
    if (class_aware) sampler = init_sampler(data.train_labels, cfg.seed);

    std::filesystem::create_directories(cfg.out_dir);
    TrainResult result;
    result.checkpoint_path = cfg.out_dir / "checkpoint.rgc";
    result.metrics_path = cfg.out_dir / "metrics.csv";
    result.telemetry_path = cfg.out_dir / "telemetry.csv";

    std::vector<GradStatRow> telemetry;
    std::vector<Index> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), Index{0});
    std::vector<Index> batch_idx;
    std::vector<int> batch_labels;
    std::vector<double> last_losses(graph.topo.heads.size(), 0.0);

    for (long iter = 0; iter < total_iters; ++iter) {
        const long epoch_pos = iter % iters_per_epoch;
        if (!class_aware && epoch_pos == 0) shuffle_rng.shuffle(order);

        if (class_aware) {
            batch_idx = next_batch(sampler, cfg.batch_size);
        } else {
            batch_idx.assign(order.begin() + epoch_pos * cfg.batch_size,
                             order.begin() + (epoch_pos + 1) * cfg.batch_size);
        }
        batch_labels.resize(batch_idx.size());
        for (std::size_t i = 0; i < batch_idx.size(); ++i)
            batch_labels[i] = data.train_labels[static_cast<std::size_t>(batch_idx[i])];

        Tensor<S> batch = gather_batch(data.train_images, batch_idx);
        if (cfg.augment_hflip || cfg.augment_crop_pad > 0)
            augment_batch(batch, augment_rng, cfg.augment_hflip, cfg.augment_crop_pad);

        ForwardTrace<S> trace = forward(graph, batch, batch_labels, Mode::train);
        double total_loss = 0.0;
        for (const HeadDef& h : graph.topo.heads) {
            last_losses[h.id] = trace.heads[h.id].loss;
            total_loss += h.loss_weight * trace.heads[h.id].loss;
        }
        if (!std::isfinite(total_loss))
            throw NumericError("non-finite training loss at iteration " + std::to_string(iter));

        GradientSet<S> grads = backward_relay(graph, trace, route);
        sgd_step(graph, grads, opt, cfg.sgd);

        if (cfg.telemetry_stride > 0 && iter % cfg.telemetry_stride == 0) {
            auto rows = record_grad_stats(graph, grads, iter);
            telemetry.insert(telemetry.end(), rows.begin(), rows.end());
        }

        if ((iter + 1) % eval_every == 0 || iter + 1 == total_iters) {
            EvalResult ev = evaluate(graph, data.test_images, data.test_labels, cfg.batch_size);
            MetricsRow row;
            row.iteration = iter + 1;
            row.mode = cfg.mode;
            row.head_losses = last_losses;
            row.val_top1_err_pct = ev.top1_err_pct;
            result.metrics.push_back(row);
            result.final_eval = ev;
            const bool dropped =
                schedule_step(sched, cfg.schedule, iter + 1, ev.top1_err_pct / 100.0, opt.lr);
            log << "iter " << (iter + 1) << "/" << total_iters << " mode=" << cfg.mode
                << " loss=" << total_loss << " val_top1_err=" << ev.top1_err_pct << "%"
                << " lr=" << opt.lr << (dropped ? " (lr dropped)" : "") << "\n";
            if (iter + 1 == total_iters) break;
        }
    }
    result.iterations = total_iters;

    save_checkpoint(result.checkpoint_path, graph);
    {
        std::ofstream m(result.metrics_path, std::ios::binary);
        if (!m) throw IoError("cannot open '" + result.metrics_path.string() + "'");
        m << detail::metrics_header(graph.topo.heads.size()) << "\n";
        for (const MetricsRow& r : result.metrics) m << detail::metrics_line(r) << "\n";
    }
    if (!telemetry.empty()) write_stats_csv(telemetry, result.telemetry_path);

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// Evaluate a checkpoint against the configured test split.
template <typename S>
EvalResult run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
    LoadedData<S> data = load_run_data<S>(cfg);
    NetworkGraph<S> graph = build_network<S>(cfg.arch, cfg.seed_set ? cfg.seed : 0);
    load_checkpoint(checkpoint, graph);
    return evaluate(graph, data.test_images, data.test_labels, cfg.batch_size);
}

struct CompareRow {
    std::string mode;
    double top1_err_pct = 0.0, top5_err_pct = 0.0;
    double delta_top1_pct = 0.0;  // vs standard, from the rounded hundredths
};

struct CompareResult {
    std::vector<CompareRow> rows;
    std::filesystem::path csv_path;
    std::string table_text;
};

// Same seed and data, three backward modes. Deltas are computed on the
// rounded hundredths so re-deriving them from the printed values is exact.
template <typename S>
CompareResult run_compare(const RunConfig& base, std::ostream& log) {
    const char* modes[3] = {"standard", "multiloss", "relay"};
    CompareResult out;
    long hundredths[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i) {
        RunConfig cfg = base;
        cfg.mode = modes[i];
        cfg.out_dir = base.out_dir / modes[i];
        log << "=== mode " << modes[i] << " ===\n";
        TrainResult tr = run_training<S>(cfg, log);
        CompareRow row;
        row.mode = modes[i];
        row.top1_err_pct = tr.final_eval.top1_err_pct;
        row.top5_err_pct = tr.final_eval.top5_err_pct;
        hundredths[i] = std::lround(row.top1_err_pct * 100.0);
        out.rows.push_back(row);
    }
    for (int i = 0; i < 3; ++i)
        out.rows[i].delta_top1_pct = static_cast<double>(hundredths[i] - hundredths[0]) / 100.0;

    char buf[128];
    std::string t = "mode        top1_err%   top5_err%   vs_standard\n";
    for (const CompareRow& r : out.rows) {
        std::snprintf(buf, sizeof buf, "%-12s%-12.2f%-12.2f(%+.2f)\n", r.mode.c_str(),
                      r.top1_err_pct, r.top5_err_pct, r.delta_top1_pct);
        t += buf;
    }
    out.table_text = t;

    std::filesystem::create_directories(base.out_dir);
    out.csv_path = base.out_dir / "compare.csv";
    std::ofstream csv(out.csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot open '" + out.csv_path.string() + "'");
    csv << "mode,top1_err_pct,top5_err_pct,delta_top1_vs_standard_pct\n";
    for (const CompareRow& r : out.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.2f,%.2f,%.2f\n", r.mode.c_str(), r.top1_err_pct,
                      r.top5_err_pct, r.delta_top1_pct);
        csv << buf;
    }
    return out;
}

}  // namespace relaybp
