#include "relaybp/sampler.hpp"

#include <algorithm>
#include <string>

#include "relaybp/errors.hpp"

namespace relaybp {

SamplerState init_sampler(const std::vector<int>& labels, std::uint64_t seed) {
    if (labels.empty()) throw ConfigError("sampler needs a non-empty label list");
    int classes = 0;
    for (int l : labels) {
        if (l < 0) throw ConfigError("negative label " + std::to_string(l));
        classes = std::max(classes, l + 1);
    }

    SamplerState st;
    st.rng = Rng(seed).fork(0x73616d70);  // "samp"
    st.per_class.assign(static_cast<std::size_t>(classes), {});
    for (std::size_t i = 0; i < labels.size(); ++i)
        st.per_class[labels[i]].push_back(static_cast<Index>(i));
    for (int c = 0; c < classes; ++c) {
        if (st.per_class[c].empty())
            throw ConfigError("class " + std::to_string(c) +
                              " has no images; class-aware sampling cannot balance it");
        st.rng.shuffle(st.per_class[c]);
    }
    st.image_cursor.assign(static_cast<std::size_t>(classes), 0);
    st.class_list.resize(classes);
    for (int c = 0; c < classes; ++c) st.class_list[c] = c;
    st.rng.shuffle(st.class_list);
    st.class_cursor = 0;
    return st;
}

std::vector<Index> next_batch(SamplerState& st, Index batch_size) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (Index i = 0; i < batch_size; ++i) {
        if (st.class_cursor == st.class_list.size()) {
            st.rng.shuffle(st.class_list);
            st.class_cursor = 0;
        }
        const int c = st.class_list[st.class_cursor++];
        auto& images = st.per_class[c];
        std::size_t& cur = st.image_cursor[c];
        if (cur == images.size()) {
            st.rng.shuffle(images);
            cur = 0;
        }
        out.push_back(images[cur++]);
    }
    return out;
}

}  // namespace relaybp
