#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "relaybp/gradrouter.hpp"
#include "relaybp/netgraph.hpp"

namespace relaybp {

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0002;  // applied to weights only, never biases
};

template <typename S>
struct SgdState {
    std::vector<Tensor<S>> velocity;  // aligned with the parameter registry
    double lr = 0.0;                  // live rate; schedules anneal it here
};

template <typename S>
SgdState<S> sgd_init(const NetworkGraph<S>& g, const SgdConfig& cfg) {
    SgdState<S> st;
    st.lr = cfg.lr;
    st.velocity.reserve(g.topo.params.size());
    for (const ParamDesc& p : g.topo.params) st.velocity.emplace_back(p.shape);
    return st;
}

// v <- momentum * v + grad + decay * param   (decay only on weights)
// param <- param - lr * v
template <typename S>
void sgd_step(NetworkGraph<S>& g, const GradientSet<S>& grads, SgdState<S>& st,
              const SgdConfig& cfg) {
    if (grads.fused.size() != g.params.size() || st.velocity.size() != g.params.size())
        throw ConsistencyError("optimizer state, gradients, and graph disagree on parameter count");
    const S mom = static_cast<S>(cfg.momentum);
    const S lr = static_cast<S>(st.lr);
    for (std::size_t i = 0; i < g.params.size(); ++i) {
        if (grads.fused[i].shape() != g.params[i].shape())
            throw ConsistencyError("gradient shape mismatch at parameter '" +
                                   g.topo.params[i].name + "'");
        auto& v = st.velocity[i].array();
        auto& p = g.params[i].array();
        const S decay = g.topo.params[i].role == ParamRole::weight
                            ? static_cast<S>(cfg.weight_decay)
                            : S(0);
        v = mom * v + grads.fused[i].array() + decay * p;
        p -= lr * v;
    }
}

// Learning-rate schedules, stepped once per evaluation.
//   plateau:     divide lr by drop_factor after `patience` consecutive evals
//                whose metric failed to improve on the best seen by at least
//                min_delta (absolute; metric is lower-better).
//   fixed_steps: divide lr at each listed iteration threshold.
//   none:        constant lr.
struct ScheduleConfig {
    std::string kind = "plateau";
    double drop_factor = 10.0;
    int patience = 3;
    double min_delta = 0.001;
    std::vector<long> steps;  // fixed_steps thresholds, ascending
};

struct ScheduleState {
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    int drops = 0;
};

// Returns true when this call dropped the rate.
inline bool schedule_step(ScheduleState& st, const ScheduleConfig& cfg, long iteration,
                          double metric, double& lr) {
    if (cfg.kind == "none") return false;
    if (cfg.kind == "fixed_steps") {
        bool dropped = false;
        while (st.drops < static_cast<int>(cfg.steps.size()) &&
               iteration >= cfg.steps[st.drops]) {
            lr /= cfg.drop_factor;
            ++st.drops;
            dropped = true;
        }
        return dropped;
    }
    if (cfg.kind != "plateau")
        throw ConfigError("unknown schedule kind '" + cfg.kind +
                          "' (available: plateau, fixed_steps, none)");
    if (st.best - metric >= cfg.min_delta) {
        st.best = metric;
        st.stale = 0;
        return false;
    }
    if (++st.stale >= cfg.patience) {
        lr /= cfg.drop_factor;
        ++st.drops;
        st.stale = 0;
        return true;
    }
    return false;
}

}  // namespace relaybp
