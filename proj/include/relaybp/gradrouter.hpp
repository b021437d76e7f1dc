#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relaybp/netgraph.hpp"

namespace relaybp {

// One head's backward route: its gradient enters the trunk at the segment it
// attaches to and propagates down only as far as low_segment. The activation
// gradient crossing the boundary below low_segment is dropped.
struct HeadRoute {
    int head_id = 0;
    int low_segment = 1;
    int attach_segment = 0;
    double weight = 1.0;
};

struct RoutingSpec {
    std::vector<HeadRoute> heads;

    // Primary head only, full span. Backward then equals single-loss
    // backprop on the trunk + primary branch.
    static RoutingSpec standard(const GraphTopology& topo);
    // Every head, full span, graph loss weights. Conventional multi-loss
    // backprop.
    static RoutingSpec multiloss(const GraphTopology& topo);
    // Every head with its declared span (HeadDef::low_segment) and graph
    // loss weights.
    static RoutingSpec relay(const GraphTopology& topo);
};

// validate_routing never throws on bad routes; it returns the findings so
// callers can print them. require_valid turns errors into ConfigError.
struct ValidationReport {
    struct Row {
        int head_id;
        std::string head_name;
        int low_segment, attach_segment;
        double weight;
    };
    std::vector<Row> rows;
    std::vector<std::vector<int>> covering_heads;  // [segment-1] -> head ids
    std::vector<int> overlap_segments;             // covered by >1 head
    std::vector<int> uncovered_segments;
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool valid() const { return errors.empty(); }
    std::string text() const;
};

ValidationReport validate_routing(const RoutingSpec& spec, const GraphTopology& topo,
                                  bool allow_uncovered = false);
void require_valid(const ValidationReport& report);
nlohmann::json validation_report_to_json(const ValidationReport& report);

// Work counters for one backward invocation. A trunk data pass is one
// layer-level input-gradient computation inside a segment; a weight pass is
// one layer-level parameter-gradient accumulation.
struct BackwardStats {
    std::size_t trunk_data_passes = 0;
    std::size_t trunk_weight_passes = 0;
    std::size_t branch_layer_passes = 0;
};

template <typename S>
struct GradientSet {
    std::vector<Tensor<S>> fused;                       // aligned with topo.params
    std::map<int, std::vector<Tensor<S>>> per_head;     // audit mode only, unweighted
    BackwardStats stats;
};

namespace detail {

template <typename S>
std::vector<Tensor<S>> zero_like_params(const GraphTopology& topo) {
    std::vector<Tensor<S>> out;
    out.reserve(topo.params.size());
    for (const ParamDesc& p : topo.params) out.emplace_back(p.shape);
    return out;
}

template <typename S>
void check_trace(const NetworkGraph<S>& g, const ForwardTrace<S>& trace,
                 const RoutingSpec& spec) {
    if (trace.topo_fingerprint != g.topo.fingerprint())
        throw ConsistencyError("forward trace was produced by a different graph");
    if (trace.mode != Mode::train)
        throw ConsistencyError("backward needs a train-mode trace");
    for (const HeadRoute& r : spec.heads) {
        if (r.head_id < 0 || r.head_id >= static_cast<int>(g.topo.heads.size()))
            throw ConsistencyError("routing spec names unknown head " +
                                   std::to_string(r.head_id));
        if (!trace.heads[r.head_id].evaluated)
            throw ConsistencyError("trace has no evaluation for head " +
                                   std::to_string(r.head_id));
    }
}

// Gradient of route-weight * head loss w.r.t. the head's attach activation;
// parameter gradients along the branch go into `grads`.
template <typename S>
Tensor<S> head_backward(const NetworkGraph<S>& g, const ForwardTrace<S>& trace, int head_id,
                        S seed_weight, std::vector<Tensor<S>>& grads, BackwardStats& stats) {
    const HeadDef& head = g.topo.heads[head_id];
    const HeadTrace<S>& ht = trace.heads[head_id];
    Tensor<S> gflow = kernels::softmax_xent_backward(ht.probs, trace.labels, seed_weight);
    for (std::size_t li = head.layers.size(); li-- > 0;) {
        const LayerDef& def = head.layers[li];
        layer_backward_params(def, gflow, ht.layers[li], grads);
        gflow = layer_backward_input(def, gflow, ht.layers[li], g.params);
        ++stats.branch_layer_passes;
    }
    return gflow;
}

}  // namespace detail

// Routed backward pass. Gradient flows are merged by weighted summation
// where spans overlap and dropped at each flow's low-segment boundary, in a
// single sweep from the top segment down. Parameters in segments outside
// every span get exactly zero gradient.
//
// audit=true keeps per-head unweighted gradients alongside the fused set
// (one truncated flow per head instead of merging flows that share a lower
// bound); fused values are then formed as the weighted sum of the per-head
// sets. Costs |heads| times more trunk work on overlapping spans.
template <typename S>
GradientSet<S> backward_relay(const NetworkGraph<S>& g, const ForwardTrace<S>& trace,
                              const RoutingSpec& spec, bool audit = false) {
    require_valid(validate_routing(spec, g.topo, /*allow_uncovered=*/true));
    detail::check_trace(g, trace, spec);
    const GraphTopology& topo = g.topo;

    GradientSet<S> out;
    out.fused = detail::zero_like_params<S>(topo);

    // Active gradient flows, keyed by the segment at whose lower boundary
    // the flow stops. In audit mode flows are keyed by head instead, and
    // kept separate all the way down.
    struct Flow {
        int low = 1;
        Tensor<S> grad{Shape{1}};
        int head_id = -1;  // audit mode
    };
    std::vector<Flow> flows;

    auto add_flow = [&](int low, Tensor<S> grad, int head_id) {
        if (!audit) {
            for (Flow& f : flows) {
                if (f.low == low) {
                    f.grad.array() += grad.array();
                    return;
                }
            }
        }
        flows.push_back(Flow{low, std::move(grad), head_id});
    };

    if (audit)
        for (const HeadRoute& r : spec.heads) out.per_head[r.head_id] = detail::zero_like_params<S>(topo);

    for (int s = topo.num_segments(); s >= 1; --s) {
        // Seed flows from heads attached above this boundary.
        for (const HeadRoute& r : spec.heads) {
            if (r.attach_segment != s) continue;
            if (audit) {
                BackwardStats branch_stats;
                Tensor<S> gseed = detail::head_backward(g, trace, r.head_id, S(1),
                                                        out.per_head[r.head_id], branch_stats);
                out.stats.branch_layer_passes += branch_stats.branch_layer_passes;
                add_flow(r.low_segment, std::move(gseed), r.head_id);
            } else {
                Tensor<S> gseed = detail::head_backward(g, trace, r.head_id,
                                                        static_cast<S>(r.weight), out.fused,
                                                        out.stats);
                add_flow(r.low_segment, std::move(gseed), r.head_id);
            }
        }
        if (flows.empty()) continue;

        const std::vector<LayerDef>& layers = topo.segments[s - 1].layers;
        const std::vector<LayerTrace<S>>& traces = trace.trunk[s - 1];
        for (std::size_t li = layers.size(); li-- > 0;) {
            const LayerDef& def = layers[li];
            // Parameter gradients come from the merged upstream; per-flow
            // splitting is only needed for the data path.
            if (def.weight_param >= 0) {
                if (audit) {
                    for (Flow& f : flows)
                        detail::layer_backward_params(def, f.grad, traces[li],
                                                      out.per_head[f.head_id]);
                    out.stats.trunk_weight_passes += flows.size();
                } else if (flows.size() == 1) {
                    detail::layer_backward_params(def, flows[0].grad, traces[li], out.fused);
                    ++out.stats.trunk_weight_passes;
                } else {
                    Tensor<S> total = flows[0].grad;
                    for (std::size_t fi = 1; fi < flows.size(); ++fi)
                        total.array() += flows[fi].grad.array();
                    detail::layer_backward_params(def, total, traces[li], out.fused);
                    ++out.stats.trunk_weight_passes;
                }
            }
            // Flows that stop at this segment's lower boundary do not need
            // an input gradient through the segment's first layer.
            for (Flow& f : flows) {
                if (li == 0 && f.low == s) continue;
                f.grad = detail::layer_backward_input(def, f.grad, traces[li], g.params);
                ++out.stats.trunk_data_passes;
            }
        }
        // Drop flows at their boundary.
        std::vector<Flow> kept;
        for (Flow& f : flows)
            if (f.low < s) kept.push_back(std::move(f));
        flows = std::move(kept);
    }

    if (audit) {
        for (const HeadRoute& r : spec.heads) {
            const std::vector<Tensor<S>>& hg = out.per_head[r.head_id];
            for (std::size_t p = 0; p < hg.size(); ++p)
                out.fused[p].array() += static_cast<S>(r.weight) * hg[p].array();
        }
    }
    return out;
}

// Single-loss backprop: the relay pass with the primary head spanning the
// whole trunk. Auxiliary parameters get zero gradient.
template <typename S>
GradientSet<S> backward_standard(const NetworkGraph<S>& g, const ForwardTrace<S>& trace) {
    return backward_relay(g, trace, RoutingSpec::standard(g.topo));
}

// Conventional multi-loss backprop: every head's gradient reaches segment 1.
// `weights` overrides the graph loss weights when non-empty (one per head).
template <typename S>
GradientSet<S> backward_multiloss(const NetworkGraph<S>& g, const ForwardTrace<S>& trace,
                                  const std::vector<double>& weights = {}) {
    RoutingSpec spec = RoutingSpec::multiloss(g.topo);
    if (!weights.empty()) {
        if (weights.size() != spec.heads.size())
            throw ConfigError("multiloss weight override needs one weight per head: got " +
                              std::to_string(weights.size()) + " for " +
                              std::to_string(spec.heads.size()) + " heads");
        for (std::size_t i = 0; i < weights.size(); ++i) spec.heads[i].weight = weights[i];
    }
    return backward_relay(g, trace, spec);
}

// Reference implementation of the routed semantics: one full per-head
// backward pass each, with the activation gradient zeroed at the boundary
// below the head's low segment, then a weighted sum. Linear in the number
// of heads; kept simple on purpose so the fused single-sweep pass can be
// checked against it.
template <typename S>
GradientSet<S> oracle_relay_grads(const NetworkGraph<S>& g, const ForwardTrace<S>& trace,
                                  const RoutingSpec& spec) {
    require_valid(validate_routing(spec, g.topo, /*allow_uncovered=*/true));
    detail::check_trace(g, trace, spec);
    const GraphTopology& topo = g.topo;

    GradientSet<S> out;
    out.fused = detail::zero_like_params<S>(topo);
    for (const HeadRoute& r : spec.heads) {
        std::vector<Tensor<S>> hg = detail::zero_like_params<S>(topo);
        Tensor<S> gflow = detail::head_backward(g, trace, r.head_id, S(1), hg, out.stats);
        for (int s = r.attach_segment; s >= 1; --s) {
            const std::vector<LayerDef>& layers = topo.segments[s - 1].layers;
            const std::vector<LayerTrace<S>>& traces = trace.trunk[s - 1];
            for (std::size_t li = layers.size(); li-- > 0;) {
                detail::layer_backward_params(layers[li], gflow, traces[li], hg);
                gflow = detail::layer_backward_input(layers[li], gflow, traces[li], g.params);
                ++out.stats.trunk_data_passes;
                ++out.stats.trunk_weight_passes;
            }
            if (s == r.low_segment) gflow.array().setZero();  // stop-gradient at the span's lower boundary
        }
        for (std::size_t p = 0; p < hg.size(); ++p)
            out.fused[p].array() += static_cast<S>(r.weight) * hg[p].array();
        out.per_head[r.head_id] = std::move(hg);
    }
    return out;
}

}  // namespace relaybp
