#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "relaybp/errors.hpp"
#include "relaybp/rng.hpp"
#include "relaybp/tensor.hpp"

namespace relaybp {

// Raw labeled image set as stored on disk: byte pixels, [N,C,H,W] order.
struct Dataset {
    Index count = 0, channels = 0, height = 0, width = 0;
    std::vector<std::uint8_t> pixels;
    std::vector<int> labels;
};

// IDX image/label file pair (big-endian headers, magics 2051 and 2049).
Dataset load_idx_dataset(const std::filesystem::path& images,
                         const std::filesystem::path& labels);

// Concatenated 3073-byte records: one label byte, then 3x32x32 pixels.
Dataset load_cifar_bin(const std::vector<std::filesystem::path>& files);

// Pixels scaled to [0,1].
template <typename S>
Tensor<S> dataset_to_tensor(const Dataset& d) {
    Tensor<S> t(Shape{d.count, d.channels, d.height, d.width});
    const S inv = S(1) / S(255);
    for (Index i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<S>(d.pixels[static_cast<std::size_t>(i)]) * inv;
    return t;
}

// Mean over the batch dimension, one value per (channel, pixel) position.
template <typename S>
Tensor<S> pixel_mean(const Tensor<S>& images) {
    if (images.ndim() != 4) throw ShapeError("pixel_mean needs [N,C,H,W], got " +
                                             shape_str(images.shape()));
    const Index n = images.shape()[0];
    const Index per = images.size() / n;
    Tensor<S> mean(Shape{images.shape()[1], images.shape()[2], images.shape()[3]});
    for (Index i = 0; i < n; ++i)
        mean.array() += images.array().segment(i * per, per);
    mean.array() /= static_cast<S>(n);
    return mean;
}

template <typename S>
void subtract_mean(Tensor<S>& images, const Tensor<S>& mean) {
    if (images.ndim() != 4) throw ShapeError("subtract_mean needs [N,C,H,W]");
    const Index n = images.shape()[0];
    const Index per = images.size() / n;
    if (mean.size() != per)
        throw ShapeError("mean has " + std::to_string(mean.size()) +
                         " values for samples of " + std::to_string(per));
    for (Index i = 0; i < n; ++i)
        images.array().segment(i * per, per) -= mean.array();
}

// Horizontal mirror of one [C,H,W] sample inside a batch tensor.
template <typename S>
void hflip_sample(Tensor<S>& batch, Index sample) {
    const Shape& sh = batch.shape();
    const Index c = sh[1], h = sh[2], w = sh[3];
    S* base = batch.data() + sample * c * h * w;
    for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < h; ++y) {
            S* row = base + (ci * h + y) * w;
            for (Index x = 0; x < w / 2; ++x) std::swap(row[x], row[w - 1 - x]);
        }
}

// Zero-pad one sample by `pad` on each side, then take the H x W window at
// offset (dy, dx) with dy, dx in [0, 2*pad].
template <typename S>
void crop_sample(Tensor<S>& batch, Index sample, Index pad, Index dy, Index dx) {
    const Shape& sh = batch.shape();
    const Index c = sh[1], h = sh[2], w = sh[3];
    S* base = batch.data() + sample * c * h * w;
    std::vector<S> src(static_cast<std::size_t>(c * h * w));
    std::copy(base, base + c * h * w, src.begin());
    for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                const Index sy = y + dy - pad;  // source row in the unpadded sample
                const Index sx = x + dx - pad;
                const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
                base[(ci * h + y) * w + x] =
                    inside ? src[static_cast<std::size_t>((ci * h + sy) * w + sx)] : S(0);
            }
}

// Per-sample augmentation. Draw order per sample: flip coin (if enabled),
// then crop dy, then dx (if enabled); fixed so runs reproduce bit-for-bit.
template <typename S>
void augment_batch(Tensor<S>& batch, Rng& rng, bool hflip, Index crop_pad) {
    if (batch.ndim() != 4) throw ShapeError("augment_batch needs [N,C,H,W]");
    const Index n = batch.shape()[0];
    for (Index i = 0; i < n; ++i) {
        if (hflip && rng.next_bernoulli(0.5)) hflip_sample(batch, i);
        if (crop_pad > 0) {
            const Index dy = static_cast<Index>(rng.next_below(2 * crop_pad + 1));
            const Index dx = static_cast<Index>(rng.next_below(2 * crop_pad + 1));
            crop_sample(batch, i, crop_pad, dy, dx);
        }
    }
}

// Gather `indices` rows of [N,C,H,W] images into a batch tensor.
template <typename S>
Tensor<S> gather_batch(const Tensor<S>& images, const std::vector<Index>& indices) {
    if (images.ndim() != 4) throw ShapeError("gather_batch needs [N,C,H,W]");
    const Index n = images.shape()[0];
    const Index per = images.size() / n;
    Tensor<S> out(Shape{static_cast<Index>(indices.size()), images.shape()[1],
                        images.shape()[2], images.shape()[3]});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= n)
            throw IndexError("batch index " + std::to_string(indices[i]) +
                             " outside dataset of " + std::to_string(n));
        out.array().segment(static_cast<Index>(i) * per, per) =
            images.array().segment(indices[i] * per, per);
    }
    return out;
}

}  // namespace relaybp
