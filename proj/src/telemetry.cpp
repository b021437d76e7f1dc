#include "relaybp/telemetry.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace relaybp {

namespace {

// %.9g round-trips float32 exactly and keeps files byte-stable across
// platforms; the C locale is implied by snprintf with no locale calls.
std::string format_row(const GradStatRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld,%s,%.9g,%.9g,%.9g\n", r.iteration, r.layer.c_str(),
                  r.avg_grad_mag, r.avg_weight_mag, r.rel_mag);
    return buf;
}

}  // namespace

void append_stats_csv(const std::vector<GradStatRow>& rows, std::ostream& out,
                      bool write_header) {
    if (write_header) out << "iteration,layer,avg_grad_mag,avg_weight_mag,rel_mag\n";
    for (const GradStatRow& r : rows) out << format_row(r);
}

void write_stats_csv(const std::vector<GradStatRow>& rows, const std::filesystem::path& path) {
    if (rows.empty()) throw ConfigError("refusing to write an empty telemetry CSV");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    append_stats_csv(rows, out, true);
    out.flush();
    if (!out) throw IoError("write failed on '" + path.string() + "'");
}

}  // namespace relaybp
