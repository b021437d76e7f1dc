#include "relaybp/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "relaybp/errors.hpp"

namespace relaybp {

namespace {

const std::set<std::string> kKnownKeys = {
    "arch",        "mode",          "seed",          "element_width", "dataset",
    "batch_size",  "epochs",        "optimizer",     "schedule",      "sampler",
    "augment",     "telemetry_stride", "eval_interval", "out_dir",
};

std::vector<std::filesystem::path> paths_from(const nlohmann::json& j) {
    std::vector<std::filesystem::path> out;
    for (const auto& p : j) out.emplace_back(p.get<std::string>());
    return out;
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!kKnownKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");

    RunConfig cfg;
    try {
        if (!j.contains("arch")) throw ConfigError("config needs an \"arch\" entry");
        cfg.arch = archspec_from_json(j.at("arch"));

        cfg.mode = j.value("mode", std::string("standard"));
        if (cfg.mode != "standard" && cfg.mode != "multiloss" && cfg.mode != "relay")
            throw ConfigError("mode must be standard, multiloss, or relay; got '" + cfg.mode +
                              "'");

        if (j.contains("seed")) {
            if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
                throw ConfigError("seed must be an integer");
            const auto s = j.at("seed").get<std::int64_t>();
            if (s < 0) throw ConfigError("seed must be non-negative");
            cfg.seed = static_cast<std::uint64_t>(s);
            cfg.seed_set = true;
        }

        cfg.element_width = j.value("element_width", 32);
        if (cfg.element_width != 32 && cfg.element_width != 64)
            throw ConfigError("element_width must be 32 or 64, got " +
                              std::to_string(cfg.element_width));

        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            cfg.dataset_kind = d.value("kind", std::string("idx"));
            if (cfg.dataset_kind == "idx") {
                cfg.train_images = d.value("train_images", std::string());
                cfg.train_labels = d.value("train_labels", std::string());
                cfg.test_images = d.value("test_images", std::string());
                cfg.test_labels = d.value("test_labels", std::string());
            } else if (cfg.dataset_kind == "cifar10") {
                if (d.contains("train_files")) cfg.cifar_train = paths_from(d.at("train_files"));
                if (d.contains("test_files")) cfg.cifar_test = paths_from(d.at("test_files"));
            } else {
                throw ConfigError("dataset kind must be idx or cifar10, got '" +
                                  cfg.dataset_kind + "'");
            }
        }

        cfg.batch_size = j.value("batch_size", Index{64});
        if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
        cfg.epochs = j.value("epochs", 10);
        if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");

        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            cfg.sgd.lr = o.value("lr", cfg.sgd.lr);
            cfg.sgd.momentum = o.value("momentum", cfg.sgd.momentum);
            cfg.sgd.weight_decay = o.value("weight_decay", cfg.sgd.weight_decay);
            if (!(cfg.sgd.lr > 0)) throw ConfigError("lr must be positive");
            if (cfg.sgd.momentum < 0 || cfg.sgd.momentum >= 1)
                throw ConfigError("momentum must be in [0,1)");
            if (cfg.sgd.weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
        }

        if (j.contains("schedule")) {
            const auto& s = j.at("schedule");
            cfg.schedule.kind = s.value("kind", cfg.schedule.kind);
            cfg.schedule.drop_factor = s.value("drop_factor", cfg.schedule.drop_factor);
            cfg.schedule.patience = s.value("patience", cfg.schedule.patience);
            cfg.schedule.min_delta = s.value("min_delta", cfg.schedule.min_delta);
            if (s.contains("steps")) cfg.schedule.steps = s.at("steps").get<std::vector<long>>();
            if (cfg.schedule.kind != "plateau" && cfg.schedule.kind != "fixed_steps" &&
                cfg.schedule.kind != "none")
                throw ConfigError("schedule kind must be plateau, fixed_steps, or none");
            if (!(cfg.schedule.drop_factor > 1))
                throw ConfigError("schedule drop_factor must be > 1");
            if (cfg.schedule.patience < 1) throw ConfigError("schedule patience must be >= 1");
        }

        cfg.sampler = j.value("sampler", std::string("shuffle"));
        if (cfg.sampler != "shuffle" && cfg.sampler != "class_aware")
            throw ConfigError("sampler must be shuffle or class_aware, got '" + cfg.sampler +
                              "'");

        if (j.contains("augment")) {
            const auto& a = j.at("augment");
            cfg.augment_hflip = a.value("hflip", false);
            cfg.augment_crop_pad = a.value("crop_pad", Index{0});
            if (cfg.augment_crop_pad < 0) throw ConfigError("crop_pad must be >= 0");
        }

        cfg.telemetry_stride = j.value("telemetry_stride", 100L);
        if (cfg.telemetry_stride < 0) throw ConfigError("telemetry_stride must be >= 0");
        cfg.eval_interval = j.value("eval_interval", 0L);
        if (cfg.eval_interval < 0) throw ConfigError("eval_interval must be >= 0");
        cfg.out_dir = j.value("out_dir", std::string("out"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    }
    return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["arch"] = archspec_to_json(cfg.arch);
    j["mode"] = cfg.mode;
    if (cfg.seed_set) j["seed"] = cfg.seed;
    j["element_width"] = cfg.element_width;
    nlohmann::json d;
    d["kind"] = cfg.dataset_kind;
    if (cfg.dataset_kind == "idx") {
        d["train_images"] = cfg.train_images.string();
        d["train_labels"] = cfg.train_labels.string();
        d["test_images"] = cfg.test_images.string();
        d["test_labels"] = cfg.test_labels.string();
    } else {
        nlohmann::json tr = nlohmann::json::array(), te = nlohmann::json::array();
        for (const auto& p : cfg.cifar_train) tr.push_back(p.string());
        for (const auto& p : cfg.cifar_test) te.push_back(p.string());
        d["train_files"] = std::move(tr);
        d["test_files"] = std::move(te);
    }
    j["dataset"] = std::move(d);
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["optimizer"] = {{"lr", cfg.sgd.lr},
                      {"momentum", cfg.sgd.momentum},
                      {"weight_decay", cfg.sgd.weight_decay}};
    nlohmann::json s;
    s["kind"] = cfg.schedule.kind;
    s["drop_factor"] = cfg.schedule.drop_factor;
    s["patience"] = cfg.schedule.patience;
    s["min_delta"] = cfg.schedule.min_delta;
    if (!cfg.schedule.steps.empty()) s["steps"] = cfg.schedule.steps;
    j["schedule"] = std::move(s);
    j["sampler"] = cfg.sampler;
    j["augment"] = {{"hflip", cfg.augment_hflip}, {"crop_pad", cfg.augment_crop_pad}};
    j["telemetry_stride"] = cfg.telemetry_stride;
    j["eval_interval"] = cfg.eval_interval;
    j["out_dir"] = cfg.out_dir.string();
    return j;
}

RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace relaybp
