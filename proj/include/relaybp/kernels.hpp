#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "relaybp/tensor.hpp"

// Forward/backward numeric kernels. Every kernel is a pure free function:
// inputs in, outputs out, no hidden state. Backward consumes the upstream
// gradient of the forward output's shape and returns gradients matching each
// input's shape. Single-threaded and deterministic.
//
// Layout conventions:
//   activations  [N,C,H,W]  (row-major flat)
//   conv weights [K,C,kh,kw], cross-correlation (no kernel flip)
//   fc weights   [M,K] applied as Y = X*W with X:[N,M]

namespace relaybp::kernels {

// ---------------------------------------------------------------------------
// matmul

template <typename S>
Tensor<S> matmul_forward(const Tensor<S>& x, const Tensor<S>& w) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0))
        throw ShapeError("matmul: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    Tensor<S> y({x.dim(0), w.dim(1)});
    y.as_matrix().noalias() = x.as_matrix() * w.as_matrix();
    RELAYBP_DEBUG_CHECK_FINITE(y, "matmul_forward");
    return y;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> matmul_backward(const Tensor<S>& upstream, const Tensor<S>& x,
                                                const Tensor<S>& w) {
    require_shape(upstream, {x.dim(0), w.dim(1)}, "matmul_backward upstream");
    Tensor<S> gx(x.shape());
    Tensor<S> gw(w.shape());
    gx.as_matrix().noalias() = upstream.as_matrix() * w.as_matrix().transpose();
    gw.as_matrix().noalias() = x.as_matrix().transpose() * upstream.as_matrix();
    return {std::move(gx), std::move(gw)};
}

template <typename S>
Tensor<S> matmul_backward_input(const Tensor<S>& upstream, const Tensor<S>& w) {
    Tensor<S> gx({upstream.dim(0), w.dim(0)});
    gx.as_matrix().noalias() = upstream.as_matrix() * w.as_matrix().transpose();
    return gx;
}

template <typename S>
Tensor<S> matmul_backward_weight(const Tensor<S>& upstream, const Tensor<S>& x) {
    Tensor<S> gw({x.dim(1), upstream.dim(1)});
    gw.as_matrix().noalias() = x.as_matrix().transpose() * upstream.as_matrix();
    return gw;
}

// ---------------------------------------------------------------------------
// add_bias: the only broadcast in the engine. 2-d adds b over columns,
// 4-d adds b over the channel axis.

template <typename S>
Tensor<S> add_bias_forward(const Tensor<S>& x, const Tensor<S>& b) {
    Tensor<S> y = x;
    if (x.ndim() == 2) {
        if (b.size() != x.dim(1))
            throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " vs " +
                             shape_str(x.shape()));
        auto m = y.matrix(x.dim(0), x.dim(1));
        for (Index j = 0; j < x.dim(1); ++j) m.col(j).array() += b[j];
    } else if (x.ndim() == 4) {
        if (b.size() != x.dim(1))
            throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " vs " +
                             shape_str(x.shape()));
        const Index plane = x.dim(2) * x.dim(3);
        S* d = y.data();
        for (Index n = 0; n < x.dim(0); ++n)
            for (Index c = 0; c < x.dim(1); ++c) {
                const S bv = b[c];
                S* p = d + (n * x.dim(1) + c) * plane;
                for (Index i = 0; i < plane; ++i) p[i] += bv;
            }
    } else {
        throw ShapeError("add_bias: rank " + std::to_string(x.ndim()));
    }
    RELAYBP_DEBUG_CHECK_FINITE(y, "add_bias_forward");
    return y;
}

template <typename S>
Tensor<S> add_bias_backward_bias(const Tensor<S>& upstream) {
    if (upstream.ndim() == 2) {
        Tensor<S> gb({upstream.dim(1)});
        auto m = upstream.matrix(upstream.dim(0), upstream.dim(1));
        for (Index j = 0; j < upstream.dim(1); ++j) gb[j] = m.col(j).sum();
        return gb;
    }
    if (upstream.ndim() == 4) {
        Tensor<S> gb({upstream.dim(1)});
        const Index plane = upstream.dim(2) * upstream.dim(3);
        const S* d = upstream.data();
        for (Index n = 0; n < upstream.dim(0); ++n)
            for (Index c = 0; c < upstream.dim(1); ++c) {
                S acc = 0;
                const S* p = d + (n * upstream.dim(1) + c) * plane;
                for (Index i = 0; i < plane; ++i) acc += p[i];
                gb[c] += acc;
            }
        return gb;
    }
    throw ShapeError("add_bias_backward: rank " + std::to_string(upstream.ndim()));
}

// ---------------------------------------------------------------------------
// relu

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x) {
    Tensor<S> y(x.shape());
    y.array() = x.array().max(S(0));
    return y;
}

// Subgradient at exactly 0 is 0: mask passes strictly positive inputs only.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& upstream, const Tensor<S>& saved_input) {
    require_shape(upstream, saved_input.shape(), "relu_backward upstream");
    Tensor<S> gx(saved_input.shape());
    gx.array() = (saved_input.array() > S(0)).select(upstream.array(), S(0));
    return gx;
}

// ---------------------------------------------------------------------------
// conv2d (im2col + GEMM)

struct Conv2dDims {
    Index n, c, h, w;      // input
    Index k, kh, kw;       // filters
    Index stride, pad;
    Index oh, ow;          // output plane
};

template <typename S>
Conv2dDims conv2d_dims(const Tensor<S>& input, const Tensor<S>& weight, Index stride, Index pad) {
    if (input.ndim() != 4) throw ShapeError("conv2d: input rank " + std::to_string(input.ndim()));
    if (weight.ndim() != 4)
        throw ShapeError("conv2d: weight rank " + std::to_string(weight.ndim()));
    if (stride < 1) throw ShapeError("conv2d: stride " + std::to_string(stride));
    if (pad < 0) throw ShapeError("conv2d: pad " + std::to_string(pad));
    Conv2dDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 weight.dim(0), weight.dim(2), weight.dim(3), stride, pad, 0, 0};
    if (weight.dim(1) != d.c)
        throw ShapeError("conv2d: input channels " + std::to_string(d.c) + " vs weight channels " +
                         std::to_string(weight.dim(1)));
    if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
                         " exceeds padded input " + std::to_string(d.h + 2 * pad) + "x" +
                         std::to_string(d.w + 2 * pad));
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

// Column matrix over the whole batch: row (c*kh+ki)*kw+kj, column (n*oh+y)*ow+x.
// Out-of-image taps (from padding) stay zero.
template <typename S>
Tensor<S> im2col(const Tensor<S>& input, const Conv2dDims& d) {
    Tensor<S> cols({d.c * d.kh * d.kw, d.n * d.oh * d.ow});
    const Index ncols = d.n * d.oh * d.ow;
    S* cd = cols.data();
    const S* in = input.data();
    for (Index c = 0; c < d.c; ++c)
        for (Index ki = 0; ki < d.kh; ++ki)
            for (Index kj = 0; kj < d.kw; ++kj) {
                S* row = cd + ((c * d.kh + ki) * d.kw + kj) * ncols;
                for (Index n = 0; n < d.n; ++n) {
                    const S* plane = in + (n * d.c + c) * d.h * d.w;
                    for (Index y = 0; y < d.oh; ++y) {
                        const Index iy = y * d.stride - d.pad + ki;
                        S* dst = row + (n * d.oh + y) * d.ow;
                        if (iy < 0 || iy >= d.h) {
                            std::fill(dst, dst + d.ow, S(0));
                            continue;
                        }
                        const S* src = plane + iy * d.w;
                        for (Index x = 0; x < d.ow; ++x) {
                            const Index ix = x * d.stride - d.pad + kj;
                            dst[x] = (ix >= 0 && ix < d.w) ? src[ix] : S(0);
                        }
                    }
                }
            }
    return cols;
}

// Scatter-add of a column matrix back into an input-shaped tensor.
template <typename S>
void col2im_add(const Tensor<S>& cols, const Conv2dDims& d, Tensor<S>& grad_input) {
    const Index ncols = d.n * d.oh * d.ow;
    const S* cd = cols.data();
    S* gi = grad_input.data();
    for (Index c = 0; c < d.c; ++c)
        for (Index ki = 0; ki < d.kh; ++ki)
            for (Index kj = 0; kj < d.kw; ++kj) {
                const S* row = cd + ((c * d.kh + ki) * d.kw + kj) * ncols;
                for (Index n = 0; n < d.n; ++n) {
                    S* plane = gi + (n * d.c + c) * d.h * d.w;
                    for (Index y = 0; y < d.oh; ++y) {
                        const Index iy = y * d.stride - d.pad + ki;
                        if (iy < 0 || iy >= d.h) continue;
                        const S* src = row + (n * d.oh + y) * d.ow;
                        S* dst = plane + iy * d.w;
                        for (Index x = 0; x < d.ow; ++x) {
                            const Index ix = x * d.stride - d.pad + kj;
                            if (ix >= 0 && ix < d.w) dst[ix] += src[x];
                        }
                    }
                }
            }
}

// [K, n*oh*ow] GEMM layout <-> [N,K,oh,ow] tensor layout.
template <typename S>
void conv_gemm_to_nchw(const Tensor<S>& gemm_out, const Conv2dDims& d, Tensor<S>& out) {
    const Index plane = d.oh * d.ow;
    const S* src = gemm_out.data();
    S* dst = out.data();
    for (Index n = 0; n < d.n; ++n)
        for (Index k = 0; k < d.k; ++k)
            std::copy(src + k * d.n * plane + n * plane, src + k * d.n * plane + (n + 1) * plane,
                      dst + (n * d.k + k) * plane);
}

template <typename S>
Tensor<S> conv_nchw_to_gemm(const Tensor<S>& t, const Conv2dDims& d) {
    Tensor<S> g({d.k, d.n * d.oh * d.ow});
    const Index plane = d.oh * d.ow;
    const S* src = t.data();
    S* dst = g.data();
    for (Index n = 0; n < d.n; ++n)
        for (Index k = 0; k < d.k; ++k)
            std::copy(src + (n * d.k + k) * plane, src + (n * d.k + k + 1) * plane,
                      dst + k * d.n * plane + n * plane);
    return g;
}

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                         Index stride, Index pad) {
    const Conv2dDims d = conv2d_dims(input, weight, stride, pad);
    if (bias.size() != d.k)
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(d.k) + " filters");
    const Tensor<S> cols = im2col(input, d);
    Tensor<S> gemm_out({d.k, d.n * d.oh * d.ow});
    gemm_out.matrix(d.k, d.n * d.oh * d.ow).noalias() =
        weight.matrix(d.k, d.c * d.kh * d.kw) * cols.as_matrix();
    Tensor<S> out({d.n, d.k, d.oh, d.ow});
    conv_gemm_to_nchw(gemm_out, d, out);
    out = add_bias_forward(out, bias);
    RELAYBP_DEBUG_CHECK_FINITE(out, "conv2d_forward");
    return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> conv2d_backward_weights(const Tensor<S>& upstream,
                                                        const Tensor<S>& saved_input,
                                                        const Tensor<S>& weight, Index stride,
                                                        Index pad) {
    const Conv2dDims d = conv2d_dims(saved_input, weight, stride, pad);
    require_shape(upstream, {d.n, d.k, d.oh, d.ow}, "conv2d_backward upstream");
    const Tensor<S> cols = im2col(saved_input, d);
    const Tensor<S> up = conv_nchw_to_gemm(upstream, d);
    Tensor<S> gw(weight.shape());
    gw.matrix(d.k, d.c * d.kh * d.kw).noalias() = up.as_matrix() * cols.as_matrix().transpose();
    Tensor<S> gb = add_bias_backward_bias(upstream);
    return {std::move(gw), std::move(gb)};
}

template <typename S>
Tensor<S> conv2d_backward_input(const Tensor<S>& upstream, const Shape& input_shape,
                                const Tensor<S>& weight, Index stride, Index pad) {
    const Conv2dDims d = conv2d_dims(Tensor<S>(input_shape), weight, stride, pad);
    require_shape(upstream, {d.n, d.k, d.oh, d.ow}, "conv2d_backward upstream");
    const Tensor<S> up = conv_nchw_to_gemm(upstream, d);
    Tensor<S> gcols({d.c * d.kh * d.kw, d.n * d.oh * d.ow});
    gcols.as_matrix().noalias() =
        weight.matrix(d.k, d.c * d.kh * d.kw).transpose() * up.as_matrix();
    Tensor<S> gi(input_shape);
    col2im_add(gcols, d, gi);
    return gi;
}

/// Full backward triple (gradInput, gradWeight, gradBias).
template <typename S>
std::tuple<Tensor<S>, Tensor<S>, Tensor<S>> conv2d_backward(const Tensor<S>& upstream,
                                                            const Tensor<S>& saved_input,
                                                            const Tensor<S>& weight, Index stride,
                                                            Index pad) {
    auto [gw, gb] = conv2d_backward_weights(upstream, saved_input, weight, stride, pad);
    Tensor<S> gi = conv2d_backward_input(upstream, saved_input.shape(), weight, stride, pad);
    return {std::move(gi), std::move(gw), std::move(gb)};
}

// ---------------------------------------------------------------------------
// maxpool2d

template <typename S>
struct MaxPoolResult {
    Tensor<S> output;
    Tensor<Index> argmax;  // flat indices into the input tensor
};

// Ties go to the first maximal index in row-major window order, so backward
// routing is deterministic.
template <typename S>
MaxPoolResult<S> maxpool2d_forward(const Tensor<S>& input, Index window, Index stride) {
    if (input.ndim() != 4)
        throw ShapeError("maxpool2d: input rank " + std::to_string(input.ndim()));
    if (window < 1 || stride < 1)
        throw ShapeError("maxpool2d: window " + std::to_string(window) + ", stride " +
                         std::to_string(stride));
    const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (window > h || window > w)
        throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                         std::to_string(h) + "x" + std::to_string(w));
    const Index oh = (h - window) / stride + 1;
    const Index ow = (w - window) / stride + 1;
    MaxPoolResult<S> r{Tensor<S>({n, c, oh, ow}), Tensor<Index>({n, c, oh, ow})};
    const S* in = input.data();
    for (Index ni = 0; ni < n; ++ni)
        for (Index ci = 0; ci < c; ++ci) {
            const Index base = (ni * c + ci) * h * w;
            for (Index y = 0; y < oh; ++y)
                for (Index x = 0; x < ow; ++x) {
                    Index best = base + (y * stride) * w + (x * stride);
                    S best_v = in[best];
                    for (Index ki = 0; ki < window; ++ki)
                        for (Index kj = 0; kj < window; ++kj) {
                            const Index idx = base + (y * stride + ki) * w + (x * stride + kj);
                            if (in[idx] > best_v) {
                                best_v = in[idx];
                                best = idx;
                            }
                        }
                    const Index o = ((ni * c + ci) * oh + y) * ow + x;
                    r.output[o] = best_v;
                    r.argmax[o] = best;
                }
        }
    return r;
}

template <typename S>
Tensor<S> maxpool2d_backward(const Tensor<S>& upstream, const Tensor<Index>& argmax,
                             const Shape& input_shape) {
    require_shape(upstream, argmax.shape(), "maxpool2d_backward upstream");
    Tensor<S> gi(input_shape);
    for (Index i = 0; i < upstream.size(); ++i) gi[argmax[i]] += upstream[i];
    return gi;
}

// ---------------------------------------------------------------------------
// flatten / global_avg_pool

template <typename S>
Tensor<S> flatten_forward(const Tensor<S>& input) {
    if (input.ndim() < 2) throw ShapeError("flatten: rank " + std::to_string(input.ndim()));
    return input.reshaped({input.dim(0), input.size() / input.dim(0)});
}

template <typename S>
Tensor<S> flatten_backward(const Tensor<S>& upstream, const Shape& input_shape) {
    return upstream.reshaped(input_shape);
}

template <typename S>
Tensor<S> global_avg_pool_forward(const Tensor<S>& input) {
    if (input.ndim() != 4)
        throw ShapeError("global_avg_pool: input rank " + std::to_string(input.ndim()));
    const Index n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
    Tensor<S> out({n, c});
    const S* in = input.data();
    for (Index i = 0; i < n * c; ++i) {
        S acc = 0;
        for (Index j = 0; j < plane; ++j) acc += in[i * plane + j];
        out[i] = acc / static_cast<S>(plane);
    }
    return out;
}

template <typename S>
Tensor<S> global_avg_pool_backward(const Tensor<S>& upstream, const Shape& input_shape) {
    const Index n = input_shape[0], c = input_shape[1], plane = input_shape[2] * input_shape[3];
    require_shape(upstream, {n, c}, "global_avg_pool_backward upstream");
    Tensor<S> gi(input_shape);
    S* gd = gi.data();
    for (Index i = 0; i < n * c; ++i) {
        const S v = upstream[i] / static_cast<S>(plane);
        for (Index j = 0; j < plane; ++j) gd[i * plane + j] = v;
    }
    return gi;
}

// ---------------------------------------------------------------------------
// softmax + cross-entropy (fused head loss)

template <typename S>
struct SoftmaxXentResult {
    S loss;           // mean over the batch
    Tensor<S> probs;  // softmax(logits), the backward cache
};

template <typename S>
SoftmaxXentResult<S> softmax_xent_forward(const Tensor<S>& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2)
        throw ShapeError("softmax_xent: logits rank " + std::to_string(logits.ndim()));
    const Index n = logits.dim(0), c = logits.dim(1);
    if (static_cast<Index>(labels.size()) != n)
        throw ConsistencyError("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(n) + " rows");
    SoftmaxXentResult<S> r{S(0), Tensor<S>({n, c})};
    const S* lg = logits.data();
    S* pr = r.probs.data();
    S loss = 0;
    for (Index i = 0; i < n; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= c)
            throw IndexError("softmax_xent: label " + std::to_string(label) + " outside [0," +
                             std::to_string(c) + ") at row " + std::to_string(i));
        const S* row = lg + i * c;
        S m = row[0];
        for (Index j = 1; j < c; ++j) m = std::max(m, row[j]);
        S z = 0;
        for (Index j = 0; j < c; ++j) {
            const S e = std::exp(row[j] - m);
            pr[i * c + j] = e;
            z += e;
        }
        for (Index j = 0; j < c; ++j) pr[i * c + j] /= z;
        loss -= std::log(pr[i * c + label]);
    }
    r.loss = loss / static_cast<S>(n);
    RELAYBP_DEBUG_CHECK_FINITE(r.probs, "softmax_xent_forward");
    return r;
}

/// Gradient of `scale * mean_xent` w.r.t. the logits.
template <typename S>
Tensor<S> softmax_xent_backward(const Tensor<S>& probs, const std::vector<int>& labels, S scale) {
    const Index n = probs.dim(0), c = probs.dim(1);
    Tensor<S> g(probs.shape());
    const S inv_n = scale / static_cast<S>(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < c; ++j) g[i * c + j] = probs[i * c + j] * inv_n;
        g[i * c + labels[static_cast<std::size_t>(i)]] -= inv_n;
    }
    return g;
}

}  // namespace relaybp::kernels
