#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "imse/nn/layers.hpp"
#include "imse/nn/tensor.hpp"

namespace imse::nn {

/// Collects parameter blocks in a fixed order for optimisers and
/// (de)serialisation.
template <class T>
class ParamList {
  public:
    void add(Param<T> &p) { params_.push_back(&p); }
    void add(Conv2d<T> &c) {
        add(c.weight());
        add(c.bias());
    }

    int64_t count() const {
        int64_t n = 0;
        for (auto *p : params_) n += static_cast<int64_t>(p->size());
        return n;
    }
    void zero_grad() {
        for (auto *p : params_) p->zero_grad();
    }
    std::vector<std::vector<T> *> values() {
        std::vector<std::vector<T> *> v;
        for (auto *p : params_) v.push_back(&p->value);
        return v;
    }
    std::vector<const std::vector<T> *> grads() const {
        std::vector<const std::vector<T> *> v;
        for (auto *p : params_) v.push_back(&p->grad);
        return v;
    }
    std::vector<float> flatten() const {
        std::vector<float> flat;
        flat.reserve(static_cast<size_t>(count()));
        for (auto *p : params_) {
            for (T v : p->value) flat.push_back(static_cast<float>(v));
        }
        return flat;
    }
    void load(const std::vector<float> &flat) {
        detail::require(static_cast<int64_t>(flat.size()) == count(), errc::shape_mismatch,
                        "weight vector length does not match the architecture");
        size_t k = 0;
        for (auto *p : params_) {
            for (T &v : p->value) v = static_cast<T>(flat[k++]);
        }
    }
    std::vector<float> flatten_grads() const {
        std::vector<float> flat;
        for (auto *p : params_) {
            for (T v : p->grad) flat.push_back(static_cast<float>(v));
        }
        return flat;
    }

  private:
    std::vector<Param<T> *> params_;
};

struct EvaluatorArch {
    std::array<int64_t, 3> channels{16, 32, 64};
    int64_t res_blocks = 4;
    bool operator==(const EvaluatorArch &) const = default;
};

/// Three-stage convolutional encoder, residual trunk at 1/4 resolution and
/// a two-stage decoder with additive skips. Input: 2 channels (reference,
/// moving). Output: 1 channel bounded to [-2, 2] by 2 tanh.
template <class T>
class EvaluatorNet {
  public:
    static constexpr int64_t kDownsample = 4;

    EvaluatorNet(const EvaluatorNet &) = delete;
    EvaluatorNet &operator=(const EvaluatorNet &) = delete;

    explicit EvaluatorNet(EvaluatorArch arch = {}) : arch_(arch) {
        const auto [c0, c1, c2] = arch.channels;
        enc0_ = Conv2d<T>(2, c0, 1);
        enc1_ = Conv2d<T>(c0, c1, 2);
        enc2_ = Conv2d<T>(c1, c2, 2);
        res_.resize(static_cast<size_t>(arch.res_blocks));
        for (auto &blk : res_) blk = {Conv2d<T>(c2, c2, 1), Conv2d<T>(c2, c2, 1)};
        dec1_ = Conv2d<T>(c2, c1, 1);
        dec0_ = Conv2d<T>(c1, c0, 1);
        out_ = Conv2d<T>(c0, 1, 1);
        params_.add(enc0_);
        params_.add(enc1_);
        params_.add(enc2_);
        for (auto &blk : res_) {
            params_.add(blk[0]);
            params_.add(blk[1]);
        }
        params_.add(dec1_);
        params_.add(dec0_);
        params_.add(out_);
    }

    void init(seed_stream &rng) {
        enc0_.init(rng);
        enc1_.init(rng);
        enc2_.init(rng);
        for (auto &blk : res_) {
            blk[0].init(rng);
            blk[1].init(rng, 0.5);
        }
        dec1_.init(rng);
        dec0_.init(rng);
        out_.init(rng, 0.1);
    }

    /// Input [2][N][H][W] with H and W divisible by 4.
    Tensor<T> forward(const Tensor<T> &in) {
        detail::require(in.channels == 2 && in.height % kDownsample == 0 && in.width % kDownsample == 0,
                        errc::shape_mismatch, "evaluator input must be 2 channels with sides divisible by 4");
        a0_ = enc0_.forward(in);
        leaky_relu_inplace(a0_);
        a1_ = enc1_.forward(a0_);
        leaky_relu_inplace(a1_);
        a2_ = enc2_.forward(a1_);
        leaky_relu_inplace(a2_);
        Tensor<T> r = a2_;
        res_hidden_.resize(res_.size());
        for (size_t b = 0; b < res_.size(); ++b) {
            res_hidden_[b] = res_[b][0].forward(r);
            leaky_relu_inplace(res_hidden_[b]);
            add_inplace(r, res_[b][1].forward(res_hidden_[b]));
        }
        z1_ = dec1_.forward(upsample2(r));
        leaky_relu_inplace(z1_);
        Tensor<T> d1 = z1_;
        add_inplace(d1, a1_);
        z0_ = dec0_.forward(upsample2(d1));
        leaky_relu_inplace(z0_);
        Tensor<T> d0 = z0_;
        add_inplace(d0, a0_);
        y_ = out_.forward(d0);
        for (auto &v : y_.data) v = T(2) * std::tanh(v);
        return y_;
    }

    /// Backward from d(loss)/d(output). Returns d(loss)/d(input) when
    /// `input_grad`; accumulates parameter gradients when `param_grads`.
    Tensor<T> backward(const Tensor<T> &dout, bool input_grad = true, bool param_grads = true) {
        Tensor<T> g = dout;
        for (size_t i = 0; i < g.data.size(); ++i) {
            const T t = y_.data[i] / T(2);
            g.data[i] *= T(2) * (T(1) - t * t);
        }
        Tensor<T> gd0 = out_.backward(g, true, param_grads);
        Tensor<T> ga0 = gd0; // skip into a0
        leaky_relu_backward_inplace(gd0, z0_);
        Tensor<T> gd1 = upsample2_backward(dec0_.backward(gd0, true, param_grads));
        Tensor<T> ga1 = gd1; // skip into a1
        leaky_relu_backward_inplace(gd1, z1_);
        Tensor<T> gr = upsample2_backward(dec1_.backward(gd1, true, param_grads));
        for (size_t bi = res_.size(); bi-- > 0;) {
            Tensor<T> gh = res_[bi][1].backward(gr, true, param_grads);
            leaky_relu_backward_inplace(gh, res_hidden_[bi]);
            add_inplace(gr, res_[bi][0].backward(gh, true, param_grads));
        }
        leaky_relu_backward_inplace(gr, a2_);
        add_inplace(ga1, enc2_.backward(gr, true, param_grads));
        leaky_relu_backward_inplace(ga1, a1_);
        add_inplace(ga0, enc1_.backward(ga1, true, param_grads));
        leaky_relu_backward_inplace(ga0, a0_);
        return enc0_.backward(ga0, input_grad, param_grads);
    }

    ParamList<T> &params() { return params_; }
    const ParamList<T> &params() const { return params_; }
    const EvaluatorArch &arch() const { return arch_; }

  private:
    EvaluatorArch arch_;
    Conv2d<T> enc0_, enc1_, enc2_, dec1_, dec0_, out_;
    std::vector<std::array<Conv2d<T>, 2>> res_;
    ParamList<T> params_;
    Tensor<T> a0_, a1_, a2_, z1_, z0_, y_;
    std::vector<Tensor<T>> res_hidden_;
};

struct RegistrationArch {
    int64_t base_channels = 16;
    bool operator==(const RegistrationArch &) const = default;
};

/// Three-level U-Net mapping (moving, target) to a 2-channel displacement
/// field (dy, dx) in pixels. The final layer starts at zero so an untrained
/// network predicts the identity transform.
template <class T>
class RegistrationNet {
  public:
    static constexpr int64_t kDownsample = 4;

    RegistrationNet(const RegistrationNet &) = delete;
    RegistrationNet &operator=(const RegistrationNet &) = delete;

    explicit RegistrationNet(RegistrationArch arch = {}) : arch_(arch) {
        const int64_t b = arch.base_channels;
        e0_ = Conv2d<T>(2, b, 1);
        e1_ = Conv2d<T>(b, 2 * b, 2);
        e2_ = Conv2d<T>(2 * b, 2 * b, 2);
        mid_ = Conv2d<T>(2 * b, 2 * b, 1);
        d1_ = Conv2d<T>(4 * b, 2 * b, 1);
        d0_ = Conv2d<T>(3 * b, b, 1);
        flow_ = Conv2d<T>(b, 2, 1);
        for (auto *c : {&e0_, &e1_, &e2_, &mid_, &d1_, &d0_, &flow_}) params_.add(*c);
    }

    void init(seed_stream &rng) {
        for (auto *c : {&e0_, &e1_, &e2_, &mid_, &d1_, &d0_}) c->init(rng);
        flow_.init(rng, 0.0);
    }

    Tensor<T> forward(const Tensor<T> &in) {
        detail::require(in.channels == 2 && in.height % kDownsample == 0 && in.width % kDownsample == 0,
                        errc::shape_mismatch, "registration input must be 2 channels with sides divisible by 4");
        x0_ = e0_.forward(in);
        leaky_relu_inplace(x0_);
        x1_ = e1_.forward(x0_);
        leaky_relu_inplace(x1_);
        x2_ = e2_.forward(x1_);
        leaky_relu_inplace(x2_);
        m_ = mid_.forward(x2_);
        leaky_relu_inplace(m_);
        u1_ = d1_.forward(concat_channels(upsample2(m_), x1_));
        leaky_relu_inplace(u1_);
        u0_ = d0_.forward(concat_channels(upsample2(u1_), x0_));
        leaky_relu_inplace(u0_);
        return flow_.forward(u0_);
    }

    void backward(const Tensor<T> &dflow) {
        const int64_t b = arch_.base_channels;
        Tensor<T> g = flow_.backward(dflow);
        leaky_relu_backward_inplace(g, u0_);
        Tensor<T> gcat0 = d0_.backward(g);
        Tensor<T> gup0, gx0;
        split_channels(gcat0, 2 * b, gup0, gx0);
        Tensor<T> gu1 = upsample2_backward(gup0);
        leaky_relu_backward_inplace(gu1, u1_);
        Tensor<T> gcat1 = d1_.backward(gu1);
        Tensor<T> gup1, gx1;
        split_channels(gcat1, 2 * b, gup1, gx1);
        Tensor<T> gm = upsample2_backward(gup1);
        leaky_relu_backward_inplace(gm, m_);
        Tensor<T> gx2 = mid_.backward(gm);
        leaky_relu_backward_inplace(gx2, x2_);
        add_inplace(gx1, e2_.backward(gx2));
        leaky_relu_backward_inplace(gx1, x1_);
        add_inplace(gx0, e1_.backward(gx1));
        leaky_relu_backward_inplace(gx0, x0_);
        e0_.backward(gx0, false, true);
    }

    ParamList<T> &params() { return params_; }
    const ParamList<T> &params() const { return params_; }
    const RegistrationArch &arch() const { return arch_; }

  private:
    RegistrationArch arch_;
    Conv2d<T> e0_, e1_, e2_, mid_, d1_, d0_, flow_;
    ParamList<T> params_;
    Tensor<T> x0_, x1_, x2_, m_, u1_, u0_;
};

} // namespace imse::nn
