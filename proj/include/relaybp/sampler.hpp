#pragma once

#include <cstdint>
#include <vector>

#include "relaybp/rng.hpp"
#include "relaybp/tensor.hpp"

namespace relaybp {

// Class-aware batch sampler. Classes are visited in a shuffled rotation,
// one image per visit, so each successive block of C draws touches every
// class exactly once regardless of how skewed the dataset is. Each class
// keeps its own shuffled image list, reshuffled independently when it runs
// out; the rotation itself is reshuffled every C draws.
struct SamplerState {
    std::vector<int> class_list;                 // shuffled rotation of class ids
    std::size_t class_cursor = 0;
    std::vector<std::vector<Index>> per_class;   // shuffled image indices per class
    std::vector<std::size_t> image_cursor;       // per class
    Rng rng{0};
};

SamplerState init_sampler(const std::vector<int>& labels, std::uint64_t seed);

std::vector<Index> next_batch(SamplerState& st, Index batch_size);

}  // namespace relaybp
