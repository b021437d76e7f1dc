#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "relaybp/archspec.hpp"
#include "relaybp/checkpoint.hpp"
#include "relaybp/netgraph.hpp"
#include "test_support.hpp"

using namespace relaybp;
namespace fs = std::filesystem;

namespace {

ArchSpec micro(Index units = 4) {
    ArchSpec a;
    a.input = {5};
    a.classes = 3;
    a.segments = {{LayerSpecCfg{.type = "dense", .units = units}, LayerSpecCfg{.type = "relu"}}};
    HeadSpecCfg primary;
    primary.kind = "primary";
    primary.attach = 1;
    primary.layers = {LayerSpecCfg{.type = "dense", .units = 3}};
    a.heads = {primary};
    return a;
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("checkpoints round-trip bitwise at both element widths") {
    NetworkGraph<double> g64 = build_network<double>(micro(), 101);
    const fs::path p64 = tmp("ckpt-rt64.rgc");
    save_checkpoint(p64, g64);
    CHECK(checkpoint_element_width(p64) == 64);
    NetworkGraph<double> other64 = build_network<double>(micro(), 999);
    load_checkpoint(p64, other64);
    for (std::size_t i = 0; i < g64.params.size(); ++i)
        CHECK(testsup::bitwise_equal(g64.params[i], other64.params[i]));

    NetworkGraph<float> g32 = build_network<float>(micro(), 102);
    const fs::path p32 = tmp("ckpt-rt32.rgc");
    save_checkpoint(p32, g32);
    CHECK(checkpoint_element_width(p32) == 32);
    NetworkGraph<float> other32 = build_network<float>(micro(), 999);
    load_checkpoint(p32, other32);
    for (std::size_t i = 0; i < g32.params.size(); ++i)
        CHECK(testsup::bitwise_equal(g32.params[i], other32.params[i]));
}

TEST_CASE("width mismatch is a configuration error, not a silent cast") {
    NetworkGraph<float> g32 = build_network<float>(micro(), 103);
    const fs::path p = tmp("ckpt-width.rgc");
    save_checkpoint(p, g32);
    NetworkGraph<double> g64 = build_network<double>(micro(), 103);
    try {
        load_checkpoint(p, g64);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("32-bit") != std::string::npos);
        CHECK(msg.find("64-bit") != std::string::npos);
    }
}

TEST_CASE("non-checkpoint bytes are rejected by magic") {
    const fs::path p = tmp("ckpt-magic.rgc");
    std::ofstream(p, std::ios::binary) << "definitely not a checkpoint";
    CHECK_THROWS_AS(checkpoint_element_width(p), FormatError);
    NetworkGraph<double> g = build_network<double>(micro(), 104);
    CHECK_THROWS_AS(load_checkpoint(p, g), FormatError);
    CHECK_THROWS_AS(load_checkpoint(tmp("ckpt-missing.rgc"), g), IoError);
}

TEST_CASE("truncated checkpoints fail loudly") {
    NetworkGraph<double> g = build_network<double>(micro(), 105);
    const fs::path p = tmp("ckpt-trunc.rgc");
    save_checkpoint(p, g);
    std::ifstream in(p, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    const fs::path cut = tmp("ckpt-cut.rgc");
    std::ofstream(cut, std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    NetworkGraph<double> g2 = build_network<double>(micro(), 105);
    CHECK_THROWS_AS(load_checkpoint(cut, g2), FormatError);
}

TEST_CASE("architecture drift is reported at the first differing parameter") {
    NetworkGraph<double> narrow = build_network<double>(micro(4), 106);
    const fs::path p = tmp("ckpt-drift.rgc");
    save_checkpoint(p, narrow);

    // Same parameter names, wider first layer: shape mismatch named.
    NetworkGraph<double> wide = build_network<double>(micro(6), 106);
    try {
        load_checkpoint(p, wide);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("seg1.l0.weight") != std::string::npos);
        CHECK(msg.find("[5,4]") != std::string::npos);
        CHECK(msg.find("[5,6]") != std::string::npos);
    }

    // Same tensors, dense at a different layer index: name mismatch.
    ArchSpec shifted = micro(4);
    shifted.segments = {{LayerSpecCfg{.type = "relu"},
                         LayerSpecCfg{.type = "dense", .units = 4}}};
    NetworkGraph<double> renamed = build_network<double>(shifted, 106);
    REQUIRE(renamed.params.size() == narrow.params.size());
    try {
        load_checkpoint(p, renamed);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("mismatch at parameter") != std::string::npos);
    }

    // Different parameter count reports totals.
    ArchSpec deeper = micro(4);
    deeper.segments.push_back({LayerSpecCfg{.type = "dense", .units = 4}});
    deeper.heads[0].attach = 2;
    NetworkGraph<double> big = build_network<double>(deeper, 106);
    try {
        load_checkpoint(p, big);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("parameters") != std::string::npos);
    }
}

TEST_CASE("loading restores exactly what training saved") {
    // Values far from the init distribution prove the load overwrote.
    NetworkGraph<double> g = build_network<double>(micro(), 107);
    for (Tensor<double>& p : g.params) p.array().setConstant(123.456);
    const fs::path p = tmp("ckpt-exact.rgc");
    save_checkpoint(p, g);
    NetworkGraph<double> fresh = build_network<double>(micro(), 1);
    load_checkpoint(p, fresh);
    for (const Tensor<double>& t : fresh.params)
        for (Index k = 0; k < t.size(); ++k) CHECK(t[k] == 123.456);
}
