#include <gtest/gtest.h>

#include "imse/nn/adam.hpp"
#include "imse/nn/networks.hpp"
#include "test_support.hpp"

using namespace imse;
using namespace imse::nn;

namespace {

template <class T>
Tensor<T> random_tensor(seed_stream &rng, int64_t c, int64_t n, int64_t h, int64_t w) {
    Tensor<T> t(c, n, h, w);
    for (auto &v : t.data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    return t;
}

double dot(const Tensor<double> &a, const Tensor<double> &b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

// Checks d<probe, net(input)>/d(param) and d/d(input) against central
// differences on a sample of entries.
template <class Net>
void check_network_gradients(Net &net, Tensor<double> input, const Tensor<double> &probe, bool check_input) {
    net.params().zero_grad();
    net.forward(input);
    Tensor<double> din = net.backward(probe);
    auto objective = [&]() { return dot(probe, net.forward(input)); };
    const double step = 1e-6;
    auto values = net.params().values();
    auto grads = net.params().grads();
    int checked = 0;
    for (size_t b = 0; b < values.size(); ++b) {
        auto &vals = *values[b];
        const size_t stride = std::max<size_t>(1, vals.size() / 7);
        for (size_t i = 0; i < vals.size(); i += stride) {
            const double num = test::central_difference(vals, i, step, objective);
            EXPECT_LT(test::rel_error((*grads[b])[i], num, 1e-7), 1e-5) << "block " << b << " entry " << i;
            ++checked;
        }
    }
    if (check_input) {
        for (size_t i = 0; i < input.data.size(); i += 5) {
            const double num = test::central_difference(input.data, i, step, objective);
            EXPECT_LT(test::rel_error(din.data[i], num, 1e-7), 1e-5) << "input " << i;
            ++checked;
        }
    }
    EXPECT_GT(checked, 20);
}

} // namespace

TEST(Conv2d, MatchesDirectConvolution) {
    seed_stream rng(1);
    for (int64_t stride : {1, 2}) {
        Conv2d<double> conv(3, 4, stride);
        conv.init(rng);
        for (auto &b : conv.bias().value) b = rng.uniform(-1.0, 1.0);
        const auto in = random_tensor<double>(rng, 3, 2, 7, 6);
        const auto out = conv.forward(in);
        const int64_t oh = (7 + stride - 1) / stride, ow = (6 + stride - 1) / stride;
        ASSERT_EQ(out.height, oh);
        ASSERT_EQ(out.width, ow);
        for (int64_t co = 0; co < 4; ++co) {
            for (int64_t n = 0; n < 2; ++n) {
                for (int64_t y = 0; y < oh; ++y) {
                    for (int64_t x = 0; x < ow; ++x) {
                        double acc = conv.bias().value[co];
                        for (int64_t ci = 0; ci < 3; ++ci) {
                            for (int ky = 0; ky < 3; ++ky) {
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int64_t iy = y * stride + ky - 1, ix = x * stride + kx - 1;
                                    if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                                    acc += conv.weight().value[(co * 3 + ci) * 9 + ky * 3 + kx] * in.image(ci, n)[iy * 6 + ix];
                                }
                            }
                        }
                        EXPECT_NEAR(out.image(co, n)[y * ow + x], acc, 1e-12);
                    }
                }
            }
        }
    }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    seed_stream rng(2);
    for (int64_t stride : {1, 2}) {
        Conv2d<double> conv(2, 3, stride);
        conv.init(rng);
        auto in = random_tensor<double>(rng, 2, 2, 6, 5);
        const auto out = conv.forward(in);
        const auto probe = random_tensor<double>(rng, out.channels, out.batch, out.height, out.width);
        conv.weight().zero_grad();
        conv.bias().zero_grad();
        const auto din = conv.backward(probe);
        auto f = [&]() { return dot(probe, conv.forward(in)); };
        for (size_t i = 0; i < conv.weight().value.size(); ++i) {
            EXPECT_NEAR(conv.weight().grad[i], test::central_difference(conv.weight().value, i, 1e-6, f), 1e-7);
        }
        for (size_t i = 0; i < conv.bias().value.size(); ++i) {
            EXPECT_NEAR(conv.bias().grad[i], test::central_difference(conv.bias().value, i, 1e-6, f), 1e-7);
        }
        for (size_t i = 0; i < in.data.size(); ++i) {
            EXPECT_NEAR(din.data[i], test::central_difference(in.data, i, 1e-6, f), 1e-7);
        }
    }
}

TEST(Upsample, BackwardIsAdjoint) {
    seed_stream rng(3);
    const auto x = random_tensor<double>(rng, 2, 2, 3, 4);
    const auto g = random_tensor<double>(rng, 2, 2, 6, 8);
    EXPECT_NEAR(dot(upsample2(x), g), dot(x, upsample2_backward(g)), 1e-12);
}

TEST(EvaluatorNet, OutputShapeAndBound) {
    seed_stream rng(4);
    EvaluatorNet<float> net;
    net.init(rng);
    auto in = random_tensor<float>(rng, 2, 2, 16, 12);
    for (auto &v : in.data) v *= 50.0f; // saturate on purpose
    const auto out = net.forward(in);
    EXPECT_EQ(out.channels, 1);
    EXPECT_EQ(out.height, 16);
    EXPECT_EQ(out.width, 12);
    for (float v : out.data) {
        EXPECT_GE(v, -2.0f);
        EXPECT_LE(v, 2.0f);
    }
    EXPECT_THROW(net.forward(random_tensor<float>(rng, 2, 1, 10, 12)), error);
}

TEST(EvaluatorNet, ParameterCountOfDefaultArch) {
    EvaluatorNet<float> net;
    // 3 encoder convs, 8 residual convs, 2 decoder convs, 1 head.
    const int64_t expected = (2 * 16 * 9 + 16) + (16 * 32 * 9 + 32) + (32 * 64 * 9 + 64) + 8 * (64 * 64 * 9 + 64) +
                             (64 * 32 * 9 + 32) + (32 * 16 * 9 + 16) + (16 * 9 + 1);
    EXPECT_EQ(net.params().count(), expected);
}

TEST(EvaluatorNet, GradientsMatchFiniteDifferences) {
    seed_stream rng(5);
    EvaluatorNet<double> net(EvaluatorArch{{3, 4, 5}, 1});
    net.init(rng);
    // Larger head gain so tanh is not near-linear and biases are non-zero.
    for (auto *v : net.params().values()) {
        for (auto &x : *v) x += rng.uniform(-0.05, 0.05);
    }
    const auto in = random_tensor<double>(rng, 2, 2, 8, 8);
    const auto probe = random_tensor<double>(rng, 1, 2, 8, 8);
    check_network_gradients(net, in, probe, true);
}

TEST(RegistrationNet, StartsAtIdentityAndHasCorrectGradients) {
    seed_stream rng(6);
    RegistrationNet<double> net(RegistrationArch{3});
    net.init(rng);
    const auto in = random_tensor<double>(rng, 2, 2, 8, 8);
    for (double v : net.forward(in).data) EXPECT_EQ(v, 0.0);
    for (auto *v : net.params().values()) {
        for (auto &x : *v) x += rng.uniform(-0.1, 0.1);
    }
    struct Wrapper {
        RegistrationNet<double> &n;
        ParamList<double> &params() { return n.params(); }
        Tensor<double> forward(const Tensor<double> &x) { return n.forward(x); }
        Tensor<double> backward(const Tensor<double> &g) {
            n.backward(g);
            return {};
        }
    } wrap{net};
    const auto probe = random_tensor<double>(rng, 2, 2, 8, 8);
    check_network_gradients(wrap, in, probe, false);
}

TEST(ParamList, FlattenLoadRoundTrip) {
    seed_stream rng(7);
    EvaluatorNet<float> a(EvaluatorArch{{4, 4, 4}, 1}), b(EvaluatorArch{{4, 4, 4}, 1});
    a.init(rng);
    b.params().load(a.params().flatten());
    EXPECT_EQ(a.params().flatten(), b.params().flatten());
    EXPECT_THROW(b.params().load(std::vector<float>(3)), error);
}

TEST(Adam, MinimisesQuadratic) {
    std::vector<double> x{3.0, -2.0};
    std::vector<double> g(2);
    Adam<double> opt({0.1});
    for (int i = 0; i < 500; ++i) {
        g[0] = 2.0 * (x[0] - 1.0);
        g[1] = 2.0 * (x[1] + 0.5);
        std::vector<double> *vals[] = {&x};
        const std::vector<double> *grads[] = {&g};
        opt.step(vals, grads);
    }
    EXPECT_NEAR(x[0], 1.0, 1e-3);
    EXPECT_NEAR(x[1], -0.5, 1e-3);
    EXPECT_EQ(opt.steps(), 500);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
    std::vector<double> x{0.0, 0.0}, g{5.0, -0.01};
    Adam<double> opt({0.25});
    std::vector<double> *vals[] = {&x};
    const std::vector<double> *grads[] = {&g};
    opt.step(vals, grads);
    EXPECT_NEAR(x[0], -0.25, 1e-6);
    EXPECT_NEAR(x[1], 0.25, 1e-4);
}
