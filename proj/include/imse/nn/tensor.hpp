#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "imse/error.hpp"

namespace imse::nn {

/// Activation tensor stored channel-major as [C][N][H][W]. Keeping the
/// channel outermost lets a convolution write its GEMM result in place and
/// makes channel concatenation a plain append.
template <class T>
struct Tensor {
    int64_t channels = 0;
    int64_t batch = 0;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int64_t c, int64_t n, int64_t h, int64_t w, T fill = T{})
        : channels(c), batch(n), height(h), width(w), data(static_cast<size_t>(c * n * h * w), fill) {}

    int64_t plane() const { return height * width; }
    int64_t channel_stride() const { return batch * height * width; }
    int64_t size() const { return channels * batch * height * width; }

    T *channel(int64_t c) { return data.data() + c * channel_stride(); }
    const T *channel(int64_t c) const { return data.data() + c * channel_stride(); }
    T *image(int64_t c, int64_t n) { return channel(c) + n * plane(); }
    const T *image(int64_t c, int64_t n) const { return channel(c) + n * plane(); }

    bool same_shape(const Tensor &o) const {
        return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
    }
};

template <class T>
Tensor<T> concat_channels(const Tensor<T> &a, const Tensor<T> &b) {
    detail::require(a.batch == b.batch && a.height == b.height && a.width == b.width, errc::shape_mismatch,
                    "concat_channels spatial mismatch");
    Tensor<T> out(a.channels + b.channels, a.batch, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
    return out;
}

/// Splits a gradient of concat_channels(a, b) back into its two parts.
template <class T>
void split_channels(const Tensor<T> &g, int64_t first_channels, Tensor<T> &ga, Tensor<T> &gb) {
    ga = Tensor<T>(first_channels, g.batch, g.height, g.width);
    gb = Tensor<T>(g.channels - first_channels, g.batch, g.height, g.width);
    std::copy(g.data.begin(), g.data.begin() + ga.size(), ga.data.begin());
    std::copy(g.data.begin() + ga.size(), g.data.end(), gb.data.begin());
}

template <class T>
void add_inplace(Tensor<T> &a, const Tensor<T> &b) {
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

/// Nearest-neighbour 2x upsampling.
template <class T>
Tensor<T> upsample2(const Tensor<T> &in) {
    Tensor<T> out(in.channels, in.batch, in.height * 2, in.width * 2);
    const int64_t w2 = out.width;
    for (int64_t c = 0; c < in.channels; ++c) {
        for (int64_t n = 0; n < in.batch; ++n) {
            const T *src = in.image(c, n);
            T *dst = out.image(c, n);
            for (int64_t y = 0; y < in.height; ++y) {
                for (int64_t x = 0; x < in.width; ++x) {
                    const T v = src[y * in.width + x];
                    T *d = dst + (2 * y) * w2 + 2 * x;
                    d[0] = v;
                    d[1] = v;
                    d[w2] = v;
                    d[w2 + 1] = v;
                }
            }
        }
    }
    return out;
}

template <class T>
Tensor<T> upsample2_backward(const Tensor<T> &g) {
    Tensor<T> out(g.channels, g.batch, g.height / 2, g.width / 2);
    const int64_t w2 = g.width;
    for (int64_t c = 0; c < g.channels; ++c) {
        for (int64_t n = 0; n < g.batch; ++n) {
            const T *src = g.image(c, n);
            T *dst = out.image(c, n);
            for (int64_t y = 0; y < out.height; ++y) {
                for (int64_t x = 0; x < out.width; ++x) {
                    const T *s = src + (2 * y) * w2 + 2 * x;
                    dst[y * out.width + x] = s[0] + s[1] + s[w2] + s[w2 + 1];
                }
            }
        }
    }
    return out;
}

} // namespace imse::nn
