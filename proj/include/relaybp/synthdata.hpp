#pragma once

#include <cstdint>
#include <filesystem>

#include "relaybp/tensor.hpp"

namespace relaybp {

// Deterministic generator for a handwritten-digit-like IDX dataset: 28x28
// grayscale digits rendered from a 5x7 glyph font under random rotation,
// shear, scale, translation, intensity, and pixel noise. Files use the
// standard IDX magics (2051 images, 2049 labels) so the normal loader path
// is exercised end to end.
struct SynthOptions {
    Index train_count = 60000;
    Index test_count = 10000;
    std::uint64_t seed = 1;
};

struct SynthPaths {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
};

SynthPaths write_synth_idx_dataset(const std::filesystem::path& dir, const SynthOptions& opt);

}  // namespace relaybp
