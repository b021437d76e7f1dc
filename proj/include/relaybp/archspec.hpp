#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relaybp/tensor.hpp"

namespace relaybp {

// Declarative architecture description, as written in the run config. A
// network is an ordered chain of segments (each a layer list); loss heads
// attach after a segment and carry their own branch layers. Segment ids are
// 1..S from lower to higher layers.

struct LayerSpecCfg {
    std::string type;     // conv2d | maxpool2d | relu | dense | flatten | global_avg_pool
    Index filters = 0;    // conv2d
    Index kernel = 0;     // conv2d receptive field
    Index stride = 1;     // conv2d / maxpool2d
    Index pad = 0;        // conv2d
    Index window = 0;     // maxpool2d
    Index units = 0;      // dense

    bool operator==(const LayerSpecCfg&) const = default;
};

struct HeadSpecCfg {
    std::string kind;     // "primary" | "auxiliary"
    int attach = 0;       // segment id whose output feeds this head
    double loss_weight = 1.0;
    int low_segment = 1;  // lowest segment this head's gradient may reach (relay mode)
    std::vector<LayerSpecCfg> layers;

    bool operator==(const HeadSpecCfg&) const = default;
};

struct ArchSpec {
    std::string preset;  // non-empty when the spec came from a named preset
    Shape input;         // per-sample shape, e.g. [1,28,28]
    int classes = 0;
    std::vector<std::vector<LayerSpecCfg>> segments;
    std::vector<HeadSpecCfg> heads;

    bool operator==(const ArchSpec&) const = default;
};

// Named presets.
//   mlp3:  six dense trunk layers in three segments, one auxiliary head.
//   conv5: five conv stages at 1/16 of the usual large-scale widths, pooling
//          between the first three stages, auxiliary head after stage 4.
ArchSpec preset_archspec(const std::string& name);

ArchSpec archspec_from_json(const nlohmann::json& j);
nlohmann::json archspec_to_json(const ArchSpec& spec);

}  // namespace relaybp
