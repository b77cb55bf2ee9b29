#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace imse::nn {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive-moment gradient descent over a fixed list of parameter blocks.
template <class T>
class Adam {
  public:
    explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

    /// One update of every block; `values[i]` and `grads[i]` pair up.
    void step(std::span<std::vector<T> *const> values, std::span<const std::vector<T> *const> grads) {
        if (m_.empty()) {
            for (auto *v : values) {
                m_.emplace_back(v->size(), 0.0);
                v_.emplace_back(v->size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, double(t_));
        const double lr = opts_.learning_rate;
        for (size_t b = 0; b < values.size(); ++b) {
            auto &val = *values[b];
            const auto &g = *grads[b];
            auto &m = m_[b];
            auto &v = v_[b];
            for (size_t i = 0; i < val.size(); ++i) {
                const double gi = double(g[i]);
                m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * gi;
                v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * gi * gi;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                val[i] = static_cast<T>(double(val[i]) - lr * mhat / (std::sqrt(vhat) + opts_.epsilon));
            }
        }
    }

    void set_learning_rate(double lr) { opts_.learning_rate = lr; }
    long steps() const { return t_; }
    const AdamOptions &options() const { return opts_; }

  private:
    AdamOptions opts_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

} // namespace imse::nn
