#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "relaybp/gradrouter.hpp"
#include "relaybp/netgraph.hpp"

namespace relaybp {

// One row per weight-bearing layer: mean |gradient|, mean |weight|, and
// their ratio. Means are L1 (mean of absolute values), accumulated in
// double regardless of the run's element width.
struct GradStatRow {
    long iteration = 0;
    std::string layer;
    double avg_grad_mag = 0.0;
    double avg_weight_mag = 0.0;
    double rel_mag = 0.0;
};

template <typename S>
std::vector<GradStatRow> record_grad_stats(const NetworkGraph<S>& g,
                                           const GradientSet<S>& grads, long iteration) {
    if (grads.fused.size() != g.params.size())
        throw ConsistencyError("gradient set does not match the graph's parameter registry");
    std::vector<GradStatRow> rows;
    for (std::size_t i = 0; i < g.topo.params.size(); ++i) {
        const ParamDesc& p = g.topo.params[i];
        if (p.role != ParamRole::weight) continue;
        GradStatRow row;
        row.iteration = iteration;
        row.layer = p.name.substr(0, p.name.size() - std::string(".weight").size());
        double gsum = 0.0, wsum = 0.0;
        const Tensor<S>& gt = grads.fused[i];
        const Tensor<S>& wt = g.params[i];
        for (Index k = 0; k < gt.size(); ++k) {
            const double gv = static_cast<double>(gt.data()[k]);
            const double wv = static_cast<double>(wt.data()[k]);
            if (!std::isfinite(gv))
                throw NumericError("non-finite gradient in layer '" + row.layer + "'");
            if (!std::isfinite(wv))
                throw NumericError("non-finite weight in layer '" + row.layer + "'");
            gsum += std::abs(gv);
            wsum += std::abs(wv);
        }
        row.avg_grad_mag = gsum / static_cast<double>(gt.size());
        row.avg_weight_mag = wsum / static_cast<double>(wt.size());
        // All-zero weights make the ratio undefined; report 0 rather than
        // NaN or Inf so downstream plots stay finite.
        row.rel_mag = row.avg_weight_mag == 0.0 ? 0.0 : row.avg_grad_mag / row.avg_weight_mag;
        rows.push_back(std::move(row));
    }
    return rows;
}

// CSV with header "iteration,layer,avg_grad_mag,avg_weight_mag,rel_mag".
void write_stats_csv(const std::vector<GradStatRow>& rows, const std::filesystem::path& path);
void append_stats_csv(const std::vector<GradStatRow>& rows, std::ostream& out,
                      bool write_header);

}  // namespace relaybp
