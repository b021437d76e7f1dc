#include "relaybp/gradrouter.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace relaybp {

RoutingSpec RoutingSpec::standard(const GraphTopology& topo) {
    RoutingSpec spec;
    const HeadDef& primary = topo.heads[topo.primary_head()];
    spec.heads.push_back(HeadRoute{primary.id, 1, primary.attach_segment, 1.0});
    return spec;
}

RoutingSpec RoutingSpec::multiloss(const GraphTopology& topo) {
    RoutingSpec spec;
    for (const HeadDef& h : topo.heads)
        spec.heads.push_back(HeadRoute{h.id, 1, h.attach_segment, h.loss_weight});
    return spec;
}

RoutingSpec RoutingSpec::relay(const GraphTopology& topo) {
    RoutingSpec spec;
    for (const HeadDef& h : topo.heads)
        spec.heads.push_back(HeadRoute{h.id, h.low_segment, h.attach_segment, h.loss_weight});
    return spec;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << "}";
    return os.str();
}

}  // namespace

ValidationReport validate_routing(const RoutingSpec& spec, const GraphTopology& topo,
                                  bool allow_uncovered) {
    ValidationReport rep;
    const int S = topo.num_segments();
    rep.covering_heads.assign(static_cast<std::size_t>(S), {});

    std::set<int> seen;
    for (const HeadRoute& r : spec.heads) {
        ValidationReport::Row row{r.head_id, "head" + std::to_string(r.head_id), r.low_segment,
                                  r.attach_segment, r.weight};
        if (r.head_id < 0 || r.head_id >= static_cast<int>(topo.heads.size())) {
            rep.errors.push_back("route names unknown head " + std::to_string(r.head_id));
            rep.rows.push_back(row);
            continue;
        }
        const HeadDef& head = topo.heads[r.head_id];
        row.head_name = head.name;
        rep.rows.push_back(row);
        if (!seen.insert(r.head_id).second)
            rep.errors.push_back("head " + head.name + " routed twice");
        if (r.attach_segment != head.attach_segment)
            rep.errors.push_back("route for " + head.name + " claims attach segment " +
                                 std::to_string(r.attach_segment) + " but the head attaches to " +
                                 std::to_string(head.attach_segment));
        if (r.low_segment < 1 || r.low_segment > S || r.attach_segment < 1 ||
            r.attach_segment > S) {
            rep.errors.push_back("route for " + head.name + " references unknown segment (graph has " +
                                 std::to_string(S) + ")");
            continue;
        }
        if (r.low_segment > r.attach_segment) {
            rep.errors.push_back("route for " + head.name + " has low segment " +
                                 std::to_string(r.low_segment) + " above attach segment " +
                                 std::to_string(r.attach_segment));
            continue;
        }
        if (r.weight < 0.0)
            rep.errors.push_back("route for " + head.name + " has negative weight");
        else if (r.weight == 0.0)
            rep.warnings.push_back("route for " + head.name +
                                   " has zero weight and contributes no gradient");
        for (int s = r.low_segment; s <= r.attach_segment; ++s)
            rep.covering_heads[s - 1].push_back(r.head_id);
    }

    for (int s = 1; s <= S; ++s) {
        const auto& cover = rep.covering_heads[s - 1];
        if (cover.empty())
            rep.uncovered_segments.push_back(s);
        else if (cover.size() > 1)
            rep.overlap_segments.push_back(s);
    }
    if (!rep.uncovered_segments.empty()) {
        const std::string msg =
            "uncovered segments " + join_ints(rep.uncovered_segments) +
            ": no head's span reaches them, their parameters would never train";
        if (allow_uncovered)
            rep.warnings.push_back(msg);
        else
            rep.errors.push_back(msg);
    }
    if (spec.heads.size() >= 2 && rep.overlap_segments.empty())
        rep.warnings.push_back(
            "no two spans overlap: gradient flows never fuse at any segment");
    return rep;
}

void require_valid(const ValidationReport& report) {
    if (report.valid()) return;
    std::ostringstream os;
    os << "invalid routing spec:";
    for (const std::string& e : report.errors) os << "\n  " << e;
    throw ConfigError(os.str());
}

nlohmann::json validation_report_to_json(const ValidationReport& report) {
    nlohmann::json j;
    j["valid"] = report.valid();
    j["heads"] = nlohmann::json::array();
    for (const ValidationReport::Row& r : report.rows)
        j["heads"].push_back({{"head", r.head_name},
                              {"low_segment", r.low_segment},
                              {"attach_segment", r.attach_segment},
                              {"weight", r.weight}});
    j["covering_heads"] = report.covering_heads;
    j["overlap_segments"] = report.overlap_segments;
    j["uncovered_segments"] = report.uncovered_segments;
    j["warnings"] = report.warnings;
    j["errors"] = report.errors;
    return j;
}

std::string ValidationReport::text() const {
    std::ostringstream os;
    os << "routing validation: " << (valid() ? "OK" : "INVALID") << "\n";
    os << "head        span        weight\n";
    for (const Row& r : rows) {
        os << r.head_name;
        for (std::size_t pad = r.head_name.size(); pad < 12; ++pad) os << ' ';
        std::string span = "[" + std::to_string(r.low_segment) + "," +
                           std::to_string(r.attach_segment) + "]";
        os << span;
        for (std::size_t pad = span.size(); pad < 12; ++pad) os << ' ';
        os << r.weight << "\n";
    }
    for (std::size_t s = 0; s < covering_heads.size(); ++s) {
        os << "segment " << (s + 1) << ": covered by";
        if (covering_heads[s].empty()) os << " (none)";
        for (int h : covering_heads[s]) os << " head" << h;
        os << "\n";
    }
    if (!overlap_segments.empty())
        os << "overlap segments " << join_ints(overlap_segments) << "\n";
    if (!uncovered_segments.empty())
        os << "uncovered segments " << join_ints(uncovered_segments) << "\n";
    for (const std::string& w : warnings) os << "warning: " << w << "\n";
    for (const std::string& e : errors) os << "error: " << e << "\n";
    return os.str();
}

}  // namespace relaybp
