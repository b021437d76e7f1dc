#include "relaybp/archspec.hpp"

#include <nlohmann/json.hpp>

#include "relaybp/errors.hpp"

namespace relaybp {

namespace {

LayerSpecCfg conv(Index filters, Index kernel, Index stride, Index pad) {
    LayerSpecCfg l;
    l.type = "conv2d";
    l.filters = filters;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    return l;
}

LayerSpecCfg maxpool(Index window, Index stride) {
    LayerSpecCfg l;
    l.type = "maxpool2d";
    l.window = window;
    l.stride = stride;
    return l;
}

LayerSpecCfg relu() {
    LayerSpecCfg l;
    l.type = "relu";
    return l;
}

LayerSpecCfg dense(Index units) {
    LayerSpecCfg l;
    l.type = "dense";
    l.units = units;
    return l;
}

LayerSpecCfg flatten() {
    LayerSpecCfg l;
    l.type = "flatten";
    return l;
}

LayerSpecCfg gap() {
    LayerSpecCfg l;
    l.type = "global_avg_pool";
    return l;
}

// Three segments of two dense+relu blocks each; auxiliary head taps the
// middle segment. Small enough for exhaustive numeric checks.
ArchSpec make_mlp3() {
    ArchSpec a;
    a.preset = "mlp3";
    a.input = {1, 28, 28};
    a.classes = 10;
    a.segments = {
        {flatten(), dense(128), relu(), dense(64), relu()},
        {dense(64), relu(), dense(32), relu()},
        {dense(32), relu(), dense(32), relu()},
    };
    HeadSpecCfg primary;
    primary.kind = "primary";
    primary.attach = 3;
    primary.loss_weight = 1.0;
    primary.low_segment = 2;
    primary.layers = {dense(10)};
    HeadSpecCfg aux;
    aux.kind = "auxiliary";
    aux.attach = 2;
    aux.loss_weight = 0.3;
    aux.low_segment = 1;
    aux.layers = {dense(10)};
    a.heads = {primary, aux};
    return a;
}

// Five conv stages, 2x pooling after the first three. Channel widths are
// 1/16 of the usual large-scale stage widths. The auxiliary head attaches
// after stage 4 and its gradient span covers stages 1..4; the primary
// head's span covers stages 4..5, so the two overlap on stage 4 only.
ArchSpec make_conv5() {
    ArchSpec a;
    a.preset = "conv5";
    a.input = {1, 28, 28};
    a.classes = 10;
    a.segments = {
        {conv(4, 3, 1, 1), relu(), conv(4, 3, 1, 1), relu(), maxpool(2, 2)},    // 28 -> 14
        {conv(8, 3, 1, 1), relu(), conv(8, 3, 1, 1), relu(), maxpool(2, 2)},    // 14 -> 7
        {conv(16, 3, 1, 1), relu(), conv(16, 3, 1, 1), relu(), maxpool(2, 2)},  // 7 -> 3
        {conv(32, 3, 1, 1), relu(), conv(32, 3, 1, 1), relu()},
        {conv(16, 3, 1, 1), relu(), conv(16, 3, 1, 1), relu()},
    };
    HeadSpecCfg primary;
    primary.kind = "primary";
    primary.attach = 5;
    primary.loss_weight = 1.0;
    primary.low_segment = 4;
    primary.layers = {flatten(), dense(64), relu(), dense(10)};
    HeadSpecCfg aux;
    aux.kind = "auxiliary";
    aux.attach = 4;
    aux.loss_weight = 0.3;
    aux.low_segment = 1;
    aux.layers = {gap(), dense(10)};
    a.heads = {primary, aux};
    return a;
}

LayerSpecCfg layer_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("type"))
        throw ConfigError("layer spec must be an object with a \"type\" field");
    LayerSpecCfg l;
    l.type = j.at("type").get<std::string>();
    l.filters = j.value("filters", Index{0});
    l.kernel = j.value("kernel", Index{0});
    l.stride = j.value("stride", Index{1});
    l.pad = j.value("pad", Index{0});
    l.window = j.value("window", Index{0});
    l.units = j.value("units", Index{0});
    return l;
}

nlohmann::json layer_to_json(const LayerSpecCfg& l) {
    nlohmann::json j;
    j["type"] = l.type;
    if (l.type == "conv2d") {
        j["filters"] = l.filters;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["pad"] = l.pad;
    } else if (l.type == "maxpool2d") {
        j["window"] = l.window;
        j["stride"] = l.stride;
    } else if (l.type == "dense") {
        j["units"] = l.units;
    }
    return j;
}

}  // namespace

ArchSpec preset_archspec(const std::string& name) {
    if (name == "mlp3") return make_mlp3();
    if (name == "conv5") return make_conv5();
    throw ConfigError("unknown architecture preset '" + name +
                      "' (available: mlp3, conv5)");
}

ArchSpec archspec_from_json(const nlohmann::json& j) {
    if (j.is_string()) return preset_archspec(j.get<std::string>());
    if (!j.is_object()) throw ConfigError("architecture must be a preset name or an object");
    if (j.contains("preset")) {
        ArchSpec a = preset_archspec(j.at("preset").get<std::string>());
        return a;
    }
    ArchSpec a;
    try {
        a.input = j.at("input").get<Shape>();
        a.classes = j.at("classes").get<int>();
        for (const auto& seg : j.at("segments")) {
            std::vector<LayerSpecCfg> layers;
            for (const auto& lj : seg) layers.push_back(layer_from_json(lj));
            a.segments.push_back(std::move(layers));
        }
        for (const auto& hj : j.at("heads")) {
            HeadSpecCfg h;
            h.kind = hj.at("kind").get<std::string>();
            h.attach = hj.at("attach").get<int>();
            h.loss_weight = hj.value("loss_weight", 1.0);
            h.low_segment = hj.value("low_segment", 1);
            for (const auto& lj : hj.at("layers")) h.layers.push_back(layer_from_json(lj));
            a.heads.push_back(std::move(h));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed architecture spec: ") + e.what());
    }
    return a;
}

nlohmann::json archspec_to_json(const ArchSpec& spec) {
    if (!spec.preset.empty()) return nlohmann::json{{"preset", spec.preset}};
    nlohmann::json j;
    j["input"] = spec.input;
    j["classes"] = spec.classes;
    j["segments"] = nlohmann::json::array();
    for (const auto& seg : spec.segments) {
        nlohmann::json sj = nlohmann::json::array();
        for (const auto& l : seg) sj.push_back(layer_to_json(l));
        j["segments"].push_back(std::move(sj));
    }
    j["heads"] = nlohmann::json::array();
    for (const auto& h : spec.heads) {
        nlohmann::json hj;
        hj["kind"] = h.kind;
        hj["attach"] = h.attach;
        hj["loss_weight"] = h.loss_weight;
        hj["low_segment"] = h.low_segment;
        hj["layers"] = nlohmann::json::array();
        for (const auto& l : h.layers) hj["layers"].push_back(layer_to_json(l));
        j["heads"].push_back(std::move(hj));
    }
    return j;
}

}  // namespace relaybp
