#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relaybp/archspec.hpp"
#include "relaybp/optimizer.hpp"

namespace relaybp {

// Everything a training or evaluation run depends on. Seeds are explicit;
// nothing reads the clock.
struct RunConfig {
    ArchSpec arch;
    std::string mode = "standard";  // standard | multiloss | relay
    std::uint64_t seed = 0;
    bool seed_set = false;
    int element_width = 32;  // 32 | 64

    std::string dataset_kind = "idx";  // idx | cifar10
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::vector<std::filesystem::path> cifar_train, cifar_test;

    Index batch_size = 64;
    int epochs = 10;
    SgdConfig sgd;
    ScheduleConfig schedule;
    std::string sampler = "shuffle";  // shuffle | class_aware
    bool augment_hflip = false;
    Index augment_crop_pad = 0;
    long telemetry_stride = 100;  // iterations between telemetry rows; 0 disables
    long eval_interval = 0;       // iterations between evals; 0 = once per epoch
    std::filesystem::path out_dir = "out";
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config_file(const std::filesystem::path& path);

}  // namespace relaybp
