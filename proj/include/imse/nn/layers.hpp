#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "imse/nn/tensor.hpp"
#include "imse/rng.hpp"

namespace imse::nn {

template <class T>
struct Param {
    std::vector<T> value;
    std::vector<T> grad;

    explicit Param(size_t n = 0) : value(n, T(0)), grad(n, T(0)) {}
    size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline constexpr double kLeakySlope = 0.2;

/// 3x3 convolution, padding 1, stride 1 or 2, computed as im2col + GEMM.
template <class T>
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(int64_t in_channels, int64_t out_channels, int64_t stride)
        : cin_(in_channels), cout_(out_channels), stride_(stride),
          weight_(static_cast<size_t>(out_channels * in_channels * 9)), bias_(static_cast<size_t>(out_channels)) {}

    /// He-normal initialisation scaled by `gain`; gain 0 gives an all-zero layer.
    void init(seed_stream &rng, double gain = 1.0) {
        const double fan_in = double(cin_ * 9);
        const double std = gain * std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
        for (auto &w : weight_.value) w = static_cast<T>(std * rng.normal());
        std::fill(bias_.value.begin(), bias_.value.end(), T(0));
    }

    Tensor<T> forward(const Tensor<T> &in) {
        detail::require(in.channels == cin_, errc::shape_mismatch, "conv input channel mismatch");
        in_c_ = in.channels;
        in_n_ = in.batch;
        in_h_ = in.height;
        in_w_ = in.width;
        const int64_t oh = (in.height + stride_ - 1) / stride_;
        const int64_t ow = (in.width + stride_ - 1) / stride_;
        im2col(in, oh, ow);
        Tensor<T> out(cout_, in.batch, oh, ow);
        const int64_t cols = in.batch * oh * ow;
        MatrixMap<T> o(out.data.data(), cout_, cols);
        ConstMatrixMap<T> w(weight_.value.data(), cout_, cin_ * 9);
        ConstMatrixMap<T> c(col_.data(), cin_ * 9, cols);
        o.noalias() = w * c;
        for (int64_t k = 0; k < cout_; ++k) o.row(k).array() += bias_.value[k];
        return out;
    }

    /// Accumulates parameter gradients when `param_grads` is set and returns
    /// the input gradient when `input_grad` is set (empty tensor otherwise).
    Tensor<T> backward(const Tensor<T> &dout, bool input_grad = true, bool param_grads = true) {
        const int64_t cols = dout.batch * dout.height * dout.width;
        ConstMatrixMap<T> g(dout.data.data(), cout_, cols);
        ConstMatrixMap<T> c(col_.data(), cin_ * 9, cols);
        if (param_grads) {
            MatrixMap<T> dw(weight_.grad.data(), cout_, cin_ * 9);
            dw.noalias() += g * c.transpose();
            // Plain loop: Eigen's vectorised sum peels by address, so its
            // rounding would depend on where the allocator put the buffer.
            for (int64_t k = 0; k < cout_; ++k) {
                const T *row = dout.data.data() + k * cols;
                T acc = 0;
                for (int64_t i = 0; i < cols; ++i) acc += row[i];
                bias_.grad[k] += acc;
            }
        }
        if (!input_grad) return {};
        std::vector<T> dcol(static_cast<size_t>(cin_ * 9 * cols));
        MatrixMap<T> dc(dcol.data(), cin_ * 9, cols);
        ConstMatrixMap<T> w(weight_.value.data(), cout_, cin_ * 9);
        dc.noalias() = w.transpose() * g;
        return col2im(dcol, dout.height, dout.width);
    }

    Param<T> &weight() { return weight_; }
    Param<T> &bias() { return bias_; }
    int64_t in_channels() const { return cin_; }
    int64_t out_channels() const { return cout_; }
    int64_t parameter_count() const { return static_cast<int64_t>(weight_.size() + bias_.size()); }
    void release_cache() { std::vector<T>().swap(col_); }

  private:
    void im2col(const Tensor<T> &in, int64_t oh, int64_t ow) {
        const int64_t cols = in.batch * oh * ow;
        col_.resize(static_cast<size_t>(cin_ * 9 * cols));
        for (int64_t ci = 0; ci < cin_; ++ci) {
            for (int64_t ky = 0; ky < 3; ++ky) {
                for (int64_t kx = 0; kx < 3; ++kx) {
                    T *row = col_.data() + ((ci * 9 + ky * 3 + kx) * cols);
                    for (int64_t n = 0; n < in.batch; ++n) {
                        const T *src = in.image(ci, n);
                        for (int64_t oy = 0; oy < oh; ++oy) {
                            T *dst = row + (n * oh + oy) * ow;
                            const int64_t iy = oy * stride_ + ky - 1;
                            if (iy < 0 || iy >= in.height) {
                                std::fill(dst, dst + ow, T(0));
                                continue;
                            }
                            const T *srow = src + iy * in.width;
                            if (stride_ == 1) {
                                const int64_t shift = kx - 1;
                                const int64_t x0 = std::max<int64_t>(0, -shift);
                                const int64_t x1 = std::min<int64_t>(ow, in.width - shift);
                                for (int64_t ox = 0; ox < x0; ++ox) dst[ox] = T(0);
                                for (int64_t ox = x0; ox < x1; ++ox) dst[ox] = srow[ox + shift];
                                for (int64_t ox = std::max(x1, x0); ox < ow; ++ox) dst[ox] = T(0);
                            } else {
                                for (int64_t ox = 0; ox < ow; ++ox) {
                                    const int64_t ix = ox * stride_ + kx - 1;
                                    dst[ox] = (ix >= 0 && ix < in.width) ? srow[ix] : T(0);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor<T> col2im(const std::vector<T> &dcol, int64_t oh, int64_t ow) const {
        Tensor<T> din(in_c_, in_n_, in_h_, in_w_, T(0));
        const int64_t cols = in_n_ * oh * ow;
        for (int64_t ci = 0; ci < cin_; ++ci) {
            for (int64_t ky = 0; ky < 3; ++ky) {
                for (int64_t kx = 0; kx < 3; ++kx) {
                    const T *row = dcol.data() + ((ci * 9 + ky * 3 + kx) * cols);
                    for (int64_t n = 0; n < in_n_; ++n) {
                        T *dst = din.image(ci, n);
                        for (int64_t oy = 0; oy < oh; ++oy) {
                            const int64_t iy = oy * stride_ + ky - 1;
                            if (iy < 0 || iy >= in_h_) continue;
                            const T *src = row + (n * oh + oy) * ow;
                            T *drow = dst + iy * in_w_;
                            if (stride_ == 1) {
                                const int64_t shift = kx - 1;
                                const int64_t x0 = std::max<int64_t>(0, -shift);
                                const int64_t x1 = std::min<int64_t>(ow, in_w_ - shift);
                                for (int64_t ox = x0; ox < x1; ++ox) drow[ox + shift] += src[ox];
                            } else {
                                for (int64_t ox = 0; ox < ow; ++ox) {
                                    const int64_t ix = ox * stride_ + kx - 1;
                                    if (ix >= 0 && ix < in_w_) drow[ix] += src[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        return din;
    }

    int64_t cin_ = 0, cout_ = 0, stride_ = 1;
    Param<T> weight_, bias_;
    std::vector<T> col_;
    int64_t in_c_ = 0, in_n_ = 0, in_h_ = 0, in_w_ = 0;
};

template <class T>
void leaky_relu_inplace(Tensor<T> &t) {
    for (auto &v : t.data) v = v > T(0) ? v : static_cast<T>(kLeakySlope) * v;
}

/// Gradient through a leaky ReLU given its output (sign is preserved).
template <class T>
void leaky_relu_backward_inplace(Tensor<T> &grad, const Tensor<T> &out) {
    for (size_t i = 0; i < grad.data.size(); ++i) {
        if (!(out.data[i] > T(0))) grad.data[i] *= static_cast<T>(kLeakySlope);
    }
}

} // namespace imse::nn
