#include "relaybp/netgraph.hpp"

#include <numeric>
#include <set>

namespace relaybp {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::relu: return "relu";
        case LayerKind::dense: return "dense";
        case LayerKind::flatten: return "flatten";
        case LayerKind::global_avg_pool: return "global_avg_pool";
    }
    return "?";
}

namespace {

LayerKind parse_kind(const std::string& type, const std::string& where) {
    if (type == "conv2d") return LayerKind::conv2d;
    if (type == "maxpool2d") return LayerKind::maxpool2d;
    if (type == "relu") return LayerKind::relu;
    if (type == "dense") return LayerKind::dense;
    if (type == "flatten") return LayerKind::flatten;
    if (type == "global_avg_pool") return LayerKind::global_avg_pool;
    throw ConfigError("unknown layer type '" + type + "' at " + where);
}

Index checked_out_extent(Index in, Index pad, Index k, Index stride, const std::string& where) {
    const Index padded = in + 2 * pad;
    if (k > padded)
        throw ConfigError("window " + std::to_string(k) + " exceeds padded input extent " +
                          std::to_string(padded) + " at " + where);
    return (padded - k) / stride + 1;
}

// Resolve one declared layer against its input shape, registering any
// parameters. Throws ConfigError with the layer's name on any mismatch.
LayerDef resolve_layer(const LayerSpecCfg& cfg, const Shape& in, const std::string& name,
                       OwnerKind owner_kind, int owner_id, std::vector<ParamDesc>& params) {
    LayerDef def;
    def.kind = parse_kind(cfg.type, name);
    def.name = name;
    def.in_shape = in;

    auto add_param = [&](ParamRole role, Shape shape, Index fan_in) {
        ParamDesc p;
        p.name = name + (role == ParamRole::weight ? ".weight" : ".bias");
        p.shape = std::move(shape);
        p.role = role;
        p.owner_kind = owner_kind;
        p.owner_id = owner_id;
        p.fan_in = fan_in;
        params.push_back(std::move(p));
        return static_cast<int>(params.size() - 1);
    };

    switch (def.kind) {
        case LayerKind::conv2d: {
            if (in.size() != 3)
                throw ConfigError("conv2d needs a [channels,height,width] input, got " +
                                  shape_str(in) + " at " + name);
            if (cfg.filters < 1 || cfg.kernel < 1 || cfg.stride < 1 || cfg.pad < 0)
                throw ConfigError("bad conv2d geometry at " + name);
            def.filters = cfg.filters;
            def.kernel = cfg.kernel;
            def.stride = cfg.stride;
            def.pad = cfg.pad;
            const Index oh = checked_out_extent(in[1], def.pad, def.kernel, def.stride, name);
            const Index ow = checked_out_extent(in[2], def.pad, def.kernel, def.stride, name);
            def.out_shape = {def.filters, oh, ow};
            const Index fan_in = in[0] * def.kernel * def.kernel;
            def.weight_param =
                add_param(ParamRole::weight, {def.filters, in[0], def.kernel, def.kernel}, fan_in);
            def.bias_param = add_param(ParamRole::bias, {def.filters}, fan_in);
            break;
        }
        case LayerKind::maxpool2d: {
            if (in.size() != 3)
                throw ConfigError("maxpool2d needs a [channels,height,width] input, got " +
                                  shape_str(in) + " at " + name);
            if (cfg.window < 1 || cfg.stride < 1)
                throw ConfigError("bad maxpool2d geometry at " + name);
            def.window = cfg.window;
            def.stride = cfg.stride;
            const Index oh = checked_out_extent(in[1], 0, def.window, def.stride, name);
            const Index ow = checked_out_extent(in[2], 0, def.window, def.stride, name);
            def.out_shape = {in[0], oh, ow};
            break;
        }
        case LayerKind::relu:
            def.out_shape = in;
            break;
        case LayerKind::dense: {
            if (in.size() != 1)
                throw ConfigError("dense needs a flat input, got " + shape_str(in) + " at " +
                                  name + " (insert flatten or global_avg_pool)");
            if (cfg.units < 1) throw ConfigError("dense needs units >= 1 at " + name);
            def.units = cfg.units;
            def.out_shape = {def.units};
            def.weight_param = add_param(ParamRole::weight, {in[0], def.units}, in[0]);
            def.bias_param = add_param(ParamRole::bias, {def.units}, in[0]);
            break;
        }
        case LayerKind::flatten:
            def.out_shape = {shape_numel(in)};
            break;
        case LayerKind::global_avg_pool:
            if (in.size() != 3)
                throw ConfigError("global_avg_pool needs a [channels,height,width] input, got " +
                                  shape_str(in) + " at " + name);
            def.out_shape = {in[0]};
            break;
    }
    return def;
}

}  // namespace

GraphTopology build_topology(const ArchSpec& spec) {
    if (spec.segments.empty()) throw ConfigError("architecture has zero segments");
    if (spec.input.empty()) throw ConfigError("architecture input shape is empty");
    for (Index d : spec.input)
        if (d < 1) throw ConfigError("architecture input shape has non-positive extent");
    if (spec.classes < 2) throw ConfigError("architecture needs at least 2 classes");
    if (spec.heads.empty()) throw ConfigError("architecture has no loss heads");

    GraphTopology topo;
    topo.arch = spec;
    topo.input_shape = spec.input;
    topo.classes = spec.classes;

    const int S = static_cast<int>(spec.segments.size());
    Shape cur = spec.input;
    std::vector<Shape> segment_out;
    for (int s = 0; s < S; ++s) {
        SegmentDef seg;
        seg.id = s + 1;
        if (spec.segments[s].empty())
            throw ConfigError("segment " + std::to_string(seg.id) + " has no layers");
        for (std::size_t li = 0; li < spec.segments[s].size(); ++li) {
            const std::string name =
                "seg" + std::to_string(seg.id) + ".l" + std::to_string(li);
            LayerDef def = resolve_layer(spec.segments[s][li], cur, name, OwnerKind::segment,
                                         seg.id, topo.params);
            cur = def.out_shape;
            seg.layers.push_back(std::move(def));
        }
        segment_out.push_back(cur);
        topo.segments.push_back(std::move(seg));
    }

    int primaries = 0;
    for (std::size_t hi = 0; hi < spec.heads.size(); ++hi) {
        const HeadSpecCfg& cfg = spec.heads[hi];
        HeadDef head;
        head.id = static_cast<int>(hi);
        head.name = "head" + std::to_string(head.id);
        if (cfg.kind == "primary")
            head.primary = true;
        else if (cfg.kind != "auxiliary")
            throw ConfigError("head kind must be \"primary\" or \"auxiliary\", got '" +
                              cfg.kind + "' at " + head.name);
        if (cfg.attach < 1 || cfg.attach > S)
            throw ConfigError(head.name + " attaches to unknown segment " +
                              std::to_string(cfg.attach) + " (graph has " + std::to_string(S) +
                              ")");
        if (head.primary && cfg.attach != S)
            throw ConfigError("primary head must attach to the last segment " +
                              std::to_string(S) + ", got " + std::to_string(cfg.attach));
        if (!(cfg.loss_weight > 0.0))
            throw ConfigError(head.name + " loss weight must be positive");
        if (head.primary && cfg.loss_weight != 1.0)
            throw ConfigError("primary head loss weight must be 1");
        if (cfg.low_segment < 1 || cfg.low_segment > cfg.attach)
            throw ConfigError(head.name + " low segment " + std::to_string(cfg.low_segment) +
                              " outside [1, " + std::to_string(cfg.attach) + "]");
        if (cfg.layers.empty()) throw ConfigError(head.name + " has no layers");
        head.attach_segment = cfg.attach;
        head.low_segment = cfg.low_segment;
        head.loss_weight = cfg.loss_weight;

        Shape hcur = segment_out[cfg.attach - 1];
        for (std::size_t li = 0; li < cfg.layers.size(); ++li) {
            const std::string name = head.name + ".l" + std::to_string(li);
            LayerDef def =
                resolve_layer(cfg.layers[li], hcur, name, OwnerKind::head, head.id, topo.params);
            hcur = def.out_shape;
            head.layers.push_back(std::move(def));
        }
        if (hcur != Shape{static_cast<Index>(spec.classes)})
            throw ConfigError(head.name + " must end with " + std::to_string(spec.classes) +
                              " logits, got " + shape_str(hcur));
        primaries += head.primary ? 1 : 0;
        topo.heads.push_back(std::move(head));
    }
    if (primaries != 1)
        throw ConfigError("architecture needs exactly one primary head, got " +
                          std::to_string(primaries));

    // Registry partition check: names unique, each owned by one bucket.
    std::set<std::string> names;
    for (const ParamDesc& p : topo.params)
        if (!names.insert(p.name).second)
            throw ConfigError("duplicate parameter name '" + p.name + "'");
    return topo;
}

std::uint64_t GraphTopology::fingerprint() const {
    // FNV-1a over the structural fields that backward depends on.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    auto mix_str = [&](const std::string& s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        mix(s.size());
    };
    for (Index d : input_shape) mix(static_cast<std::uint64_t>(d));
    mix(static_cast<std::uint64_t>(classes));
    for (const SegmentDef& seg : segments) {
        mix(static_cast<std::uint64_t>(seg.id));
        for (const LayerDef& l : seg.layers) {
            mix_str(l.name);
            mix(static_cast<std::uint64_t>(l.kind));
            for (Index d : l.out_shape) mix(static_cast<std::uint64_t>(d));
        }
    }
    for (const HeadDef& hd : heads) {
        mix_str(hd.name);
        mix(static_cast<std::uint64_t>(hd.attach_segment));
        mix(static_cast<std::uint64_t>(hd.low_segment));
        mix(static_cast<std::uint64_t>(hd.primary));
        for (const LayerDef& l : hd.layers) {
            mix_str(l.name);
            mix(static_cast<std::uint64_t>(l.kind));
        }
    }
    for (const ParamDesc& p : params) {
        mix_str(p.name);
        for (Index d : p.shape) mix(static_cast<std::uint64_t>(d));
    }
    return h;
}

}  // namespace relaybp
