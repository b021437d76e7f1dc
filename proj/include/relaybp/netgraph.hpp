#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relaybp/archspec.hpp"
#include "relaybp/errors.hpp"
#include "relaybp/kernels.hpp"
#include "relaybp/rng.hpp"
#include "relaybp/tensor.hpp"

namespace relaybp {

enum class LayerKind { conv2d, maxpool2d, relu, dense, flatten, global_avg_pool };

const char* layer_kind_name(LayerKind k);

// A layer with shapes resolved against the network input. Shapes are
// per-sample; the batch dimension is prepended at run time.
struct LayerDef {
    LayerKind kind = LayerKind::relu;
    std::string name;  // "seg2.l0", "head1.l1"
    Index filters = 0, kernel = 0, stride = 1, pad = 0, window = 0, units = 0;
    Shape in_shape, out_shape;
    int weight_param = -1;  // index into GraphTopology::params, -1 if none
    int bias_param = -1;
};

enum class ParamRole { weight, bias };
enum class OwnerKind { segment, head };

struct ParamDesc {
    std::string name;  // "<layer name>.weight" / "<layer name>.bias"
    Shape shape;
    ParamRole role = ParamRole::weight;
    OwnerKind owner_kind = OwnerKind::segment;
    int owner_id = 0;   // segment id (1-based) or head id (0-based)
    Index fan_in = 0;   // inputs feeding one output unit; drives init scale
};

struct SegmentDef {
    int id = 0;  // 1..S, low to high
    std::vector<LayerDef> layers;
};

struct HeadDef {
    int id = 0;  // position in the architecture's head list
    std::string name;
    bool primary = false;
    int attach_segment = 0;
    int low_segment = 1;  // default lower bound of this head's gradient span
    double loss_weight = 1.0;
    std::vector<LayerDef> layers;
};

// Structural description shared by every scalar instantiation: resolved
// layers, the parameter registry, and head attachment points. The registry
// is a partition: each parameter belongs to exactly one segment or head.
struct GraphTopology {
    ArchSpec arch;
    Shape input_shape;
    int classes = 0;
    std::vector<SegmentDef> segments;
    std::vector<HeadDef> heads;
    std::vector<ParamDesc> params;

    int num_segments() const { return static_cast<int>(segments.size()); }

    int primary_head() const {
        for (const HeadDef& h : heads)
            if (h.primary) return h.id;
        throw ConsistencyError("topology has no primary head");
    }

    int param_index(const std::string& name) const {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == name) return static_cast<int>(i);
        throw ConsistencyError("unknown parameter '" + name + "'");
    }

    // Order-sensitive structural digest; used to reject traces or gradient
    // sets produced against a different graph.
    std::uint64_t fingerprint() const;
};

GraphTopology build_topology(const ArchSpec& spec);

template <typename S>
struct NetworkGraph {
    GraphTopology topo;
    std::vector<Tensor<S>> params;  // aligned with topo.params
};

// He-normal init for weights (std = sqrt(2 / fan_in)), zero biases. Draw
// order follows the parameter registry, so equal seeds give equal networks.
template <typename S>
NetworkGraph<S> build_network(const ArchSpec& spec, std::uint64_t seed) {
    NetworkGraph<S> g;
    g.topo = build_topology(spec);
    g.params.reserve(g.topo.params.size());
    Rng rng = Rng(seed).fork(0x696e6974);  // "init"
    for (const ParamDesc& p : g.topo.params) {
        Tensor<S> t(p.shape);
        if (p.role == ParamRole::weight) {
            const double stddev = std::sqrt(2.0 / static_cast<double>(p.fan_in));
            for (Index i = 0; i < t.size(); ++i)
                t.data()[i] = static_cast<S>(rng.next_normal() * stddev);
        }
        g.params.push_back(std::move(t));
    }
    return g;
}

enum class Mode { train, infer };

// Per-layer forward cache. `input` is kept for layers whose backward needs
// it; maxpool keeps winner indices instead.
template <typename S>
struct LayerTrace {
    Tensor<S> input;
    Tensor<Index> argmax{Shape{1}};
    Shape in_shape;
};

template <typename S>
struct HeadTrace {
    bool evaluated = false;
    std::vector<LayerTrace<S>> layers;
    Tensor<S> logits{Shape{1}};
    Tensor<S> probs{Shape{1}};
    double loss = 0.0;
};

template <typename S>
struct ForwardTrace {
    Mode mode = Mode::train;
    std::uint64_t topo_fingerprint = 0;
    Index batch = 0;
    std::vector<int> labels;
    std::vector<std::vector<LayerTrace<S>>> trunk;  // [segment][layer]
    std::vector<HeadTrace<S>> heads;
    Tensor<S> primary_logits{Shape{1}};
    std::vector<std::string> touched_params;  // execution order, duplicates preserved
};

namespace detail {

template <typename S>
Tensor<S> layer_forward(const LayerDef& def, const Tensor<S>& x,
                        const std::vector<Tensor<S>>& params, LayerTrace<S>* tr,
                        std::vector<std::string>* touched) {
    if (touched) {
        if (def.weight_param >= 0) touched->push_back(def.name + ".weight");
        if (def.bias_param >= 0) touched->push_back(def.name + ".bias");
    }
    switch (def.kind) {
        case LayerKind::conv2d: {
            if (tr) tr->input = x;
            return kernels::conv2d_forward(x, params[def.weight_param],
                                           params[def.bias_param], def.stride, def.pad);
        }
        case LayerKind::maxpool2d: {
            auto r = kernels::maxpool2d_forward(x, def.window, def.stride);
            if (tr) {
                tr->argmax = std::move(r.argmax);
                tr->in_shape = x.shape();
            }
            return std::move(r.output);
        }
        case LayerKind::relu: {
            if (tr) tr->input = x;
            return kernels::relu_forward(x);
        }
        case LayerKind::dense: {
            if (tr) tr->input = x;
            Tensor<S> y = kernels::matmul_forward(x, params[def.weight_param]);
            return kernels::add_bias_forward(y, params[def.bias_param]);
        }
        case LayerKind::flatten: {
            if (tr) tr->in_shape = x.shape();
            return kernels::flatten_forward(x);
        }
        case LayerKind::global_avg_pool: {
            if (tr) tr->in_shape = x.shape();
            return kernels::global_avg_pool_forward(x);
        }
    }
    throw ConsistencyError("unhandled layer kind");
}

// Gradient of the loss w.r.t. this layer's input, given the gradient w.r.t.
// its output. Pure in the trace: callable once per gradient flow.
template <typename S>
Tensor<S> layer_backward_input(const LayerDef& def, const Tensor<S>& upstream,
                               const LayerTrace<S>& tr, const std::vector<Tensor<S>>& params) {
    switch (def.kind) {
        case LayerKind::conv2d:
            return kernels::conv2d_backward_input(upstream, tr.input.shape(),
                                                  params[def.weight_param], def.stride, def.pad);
        case LayerKind::maxpool2d:
            return kernels::maxpool2d_backward(upstream, tr.argmax, tr.in_shape);
        case LayerKind::relu:
            return kernels::relu_backward(upstream, tr.input);
        case LayerKind::dense:
            return kernels::matmul_backward_input(upstream, params[def.weight_param]);
        case LayerKind::flatten:
            return kernels::flatten_backward(upstream, tr.in_shape);
        case LayerKind::global_avg_pool:
            return kernels::global_avg_pool_backward(upstream, tr.in_shape);
    }
    throw ConsistencyError("unhandled layer kind");
}

// Accumulate parameter gradients for this layer into `grads` (aligned with
// the registry). Layers without parameters are no-ops.
template <typename S>
void layer_backward_params(const LayerDef& def, const Tensor<S>& upstream,
                           const LayerTrace<S>& tr, std::vector<Tensor<S>>& grads) {
    switch (def.kind) {
        case LayerKind::conv2d: {
            auto [gw, gb] = kernels::conv2d_backward_weights(
                upstream, tr.input, grads[def.weight_param], def.stride, def.pad);
            grads[def.weight_param].array() += gw.array();
            grads[def.bias_param].array() += gb.array();
            return;
        }
        case LayerKind::dense: {
            grads[def.weight_param].array() +=
                kernels::matmul_backward_weight(upstream, tr.input).array();
            grads[def.bias_param].array() += kernels::add_bias_backward_bias(upstream).array();
            return;
        }
        default:
            return;
    }
}

}  // namespace detail

// Run the network on a batch. Train mode evaluates every head against
// `labels` and keeps the caches backward needs; infer mode runs the trunk
// and the primary head only and keeps no caches, so auxiliary branches can
// never influence predictions.
template <typename S>
ForwardTrace<S> forward(const NetworkGraph<S>& g, const Tensor<S>& batch,
                        const std::vector<int>& labels, Mode mode) {
    const GraphTopology& topo = g.topo;
    if (batch.ndim() < 1) throw ShapeError("batch tensor needs a leading batch dimension");
    Shape per_sample(batch.shape().begin() + 1, batch.shape().end());
    if (per_sample != topo.input_shape)
        throw ShapeError("batch sample shape " + shape_str(per_sample) +
                         " does not match network input " + shape_str(topo.input_shape));
    const Index n = batch.shape()[0];
    if (mode == Mode::train && static_cast<Index>(labels.size()) != n)
        throw ConsistencyError("train forward needs one label per sample: got " +
                               std::to_string(labels.size()) + " labels for batch " +
                               std::to_string(n));

    ForwardTrace<S> trace;
    trace.mode = mode;
    trace.topo_fingerprint = topo.fingerprint();
    trace.batch = n;
    trace.labels = labels;
    const bool cache = (mode == Mode::train);

    std::vector<Tensor<S>> segment_out;
    segment_out.reserve(topo.segments.size());
    Tensor<S> x = batch;
    for (const SegmentDef& seg : topo.segments) {
        std::vector<LayerTrace<S>> seg_traces(cache ? seg.layers.size() : 0);
        for (std::size_t li = 0; li < seg.layers.size(); ++li) {
            LayerTrace<S>* tr = cache ? &seg_traces[li] : nullptr;
            x = detail::layer_forward(seg.layers[li], x, g.params, tr, &trace.touched_params);
        }
        trace.trunk.push_back(std::move(seg_traces));
        segment_out.push_back(x);
    }

    trace.heads.resize(topo.heads.size());
    for (const HeadDef& head : topo.heads) {
        if (mode == Mode::infer && !head.primary) continue;
        HeadTrace<S>& ht = trace.heads[head.id];
        ht.evaluated = true;
        Tensor<S> h = segment_out[head.attach_segment - 1];
        ht.layers.resize(cache ? head.layers.size() : 0);
        for (std::size_t li = 0; li < head.layers.size(); ++li) {
            LayerTrace<S>* tr = cache ? &ht.layers[li] : nullptr;
            h = detail::layer_forward(head.layers[li], h, g.params, tr, &trace.touched_params);
        }
        ht.logits = std::move(h);
        if (mode == Mode::train) {
            auto r = kernels::softmax_xent_forward(ht.logits, labels);
            ht.loss = static_cast<double>(r.loss);
            ht.probs = std::move(r.probs);
        }
        if (head.primary) trace.primary_logits = ht.logits;
    }
    return trace;
}

// Sum of loss_weight * head loss over all heads; the train objective.
template <typename S>
double weighted_total_loss(const NetworkGraph<S>& g, const ForwardTrace<S>& trace) {
    if (trace.mode != Mode::train)
        throw ConsistencyError("weighted_total_loss needs a train-mode trace");
    double total = 0.0;
    for (const HeadDef& head : g.topo.heads) total += head.loss_weight * trace.heads[head.id].loss;
    return total;
}

// Copy of the graph with auxiliary heads removed. Trunk and primary-head
// parameter values are carried over bitwise; only registry indices shift.
template <typename S>
NetworkGraph<S> strip_aux_heads(const NetworkGraph<S>& g) {
    ArchSpec spec = g.topo.arch;
    spec.preset.clear();
    std::vector<HeadSpecCfg> kept;
    std::vector<int> kept_old_ids;  // head ids renumber; map new -> old for lookups
    for (std::size_t i = 0; i < spec.heads.size(); ++i) {
        if (spec.heads[i].kind == "primary") {
            kept.push_back(spec.heads[i]);
            kept_old_ids.push_back(static_cast<int>(i));
        }
    }
    spec.heads = std::move(kept);

    NetworkGraph<S> out;
    out.topo = build_topology(spec);
    out.params.resize(out.topo.params.size(), Tensor<S>(Shape{1}));
    for (std::size_t i = 0; i < out.topo.params.size(); ++i) {
        const ParamDesc& p = out.topo.params[i];
        std::string src_name = p.name;
        if (p.owner_kind == OwnerKind::head) {
            const int old_id = kept_old_ids[p.owner_id];
            const std::string new_prefix = "head" + std::to_string(p.owner_id) + ".";
            src_name = "head" + std::to_string(old_id) + "." +
                       p.name.substr(new_prefix.size());
        }
        out.params[i] = g.params[g.topo.param_index(src_name)];
    }
    return out;
}

}  // namespace relaybp
