#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "imse/error.hpp"
#include "imse/image_core.hpp"
#include "imse/nn/adam.hpp"
#include "imse/nn/networks.hpp"
#include "imse/parallel.hpp"
#include "imse/rng.hpp"
#include "imse/spatial_transforms.hpp"

namespace imse {

struct EvaluatorConfig {
    nn::EvaluatorArch arch{};
    // 2e-4 plateaus well above the target L1 within 2000 desk steps; a larger
    // rate with cosine decay converges in the same budget.
    double learning_rate = 1e-3;
    int64_t steps = 2000;
    int64_t batch_size = 8;
    /// Cosine decay of the learning rate to zero over the step budget.
    bool cosine_decay = true;
    uint64_t seed = 0;
    std::string modality = "A";
    PairConfig pair{};

    void validate() const {
        for (auto c : arch.channels) detail::require(c >= 1, errc::bad_config, "evaluator channels must be >= 1");
        detail::require(arch.res_blocks >= 0, errc::bad_config, "res_blocks must be >= 0");
        detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), errc::bad_config,
                        "learning rate must be > 0");
        detail::require(steps >= 0 && batch_size >= 1, errc::bad_config, "steps >= 0 and batch size >= 1 required");
        detail::require(pair.n_min >= 1 && pair.n_min <= pair.n_max, errc::bad_config, "bad remap control range");
        detail::require(pair.aligned_fraction >= 0.0 && pair.aligned_fraction <= 1.0, errc::bad_config,
                        "aligned_fraction must be in [0, 1]");
        pair.deformation.validate();
    }
};

/// Trained (or freshly initialised) evaluator weights plus provenance.
struct EvaluatorModel {
    nn::EvaluatorArch arch{};
    std::vector<float> weights;
    int64_t steps_trained = 0;
    double final_loss = 0.0;
    std::string modality = "A";
    std::string noise = "shuffle_remap";
    int n_min = 2;
    int n_max = 50;

    bool operator==(const EvaluatorModel &) const = default;
};

inline EvaluatorModel init_evaluator(const EvaluatorConfig &config) {
    config.validate();
    nn::EvaluatorNet<float> net(config.arch);
    seed_stream rng(config.seed);
    net.init(rng);
    EvaluatorModel m;
    m.arch = config.arch;
    m.weights = net.params().flatten();
    m.modality = config.modality;
    m.noise = to_string(config.pair.noise);
    m.n_min = config.pair.n_min;
    m.n_max = config.pair.n_max;
    return m;
}

namespace detail {

inline int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

/// Replicate-pads a h x w image to ph x pw (bottom/right) into `dst`.
template <class T>
void pad_into(const double *src, int64_t h, int64_t w, T *dst, int64_t ph, int64_t pw) {
    for (int64_t y = 0; y < ph; ++y) {
        const int64_t sy = std::min(y, h - 1);
        for (int64_t x = 0; x < pw; ++x) dst[y * pw + x] = static_cast<T>(src[sy * w + std::min(x, w - 1)]);
    }
}

/// Adjoint of pad_into.
template <class T>
void unpad_grad(const T *g, int64_t ph, int64_t pw, double *dst, int64_t h, int64_t w) {
    std::fill(dst, dst + h * w, 0.0);
    for (int64_t y = 0; y < ph; ++y) {
        const int64_t sy = std::min(y, h - 1);
        for (int64_t x = 0; x < pw; ++x) dst[sy * w + std::min(x, w - 1)] += double(g[y * pw + x]);
    }
}

} // namespace detail

/// Inference / backprop runtime for an EvaluatorModel. Not shareable across
/// threads (it caches activations); build one per thread.
template <class T = float>
class Evaluator {
  public:
    explicit Evaluator(const EvaluatorModel &model) : net_(std::make_unique<nn::EvaluatorNet<T>>(model.arch)) {
        net_->params().load(model.weights);
    }

    /// E(reference, moving) for a batch of equally sized image pairs, as raw
    /// row-major buffers of h * w values.
    std::vector<std::vector<double>> forward(const std::vector<const double *> &references,
                                             const std::vector<const double *> &movings, int64_t h, int64_t w) {
        detail::require(references.size() == movings.size() && !references.empty(), errc::shape_mismatch,
                        "evaluator batch mismatch");
        h_ = h;
        w_ = w;
        ph_ = detail::round_up(h, nn::EvaluatorNet<T>::kDownsample);
        pw_ = detail::round_up(w, nn::EvaluatorNet<T>::kDownsample);
        const auto n = static_cast<int64_t>(references.size());
        nn::Tensor<T> in(2, n, ph_, pw_);
        for (int64_t b = 0; b < n; ++b) {
            detail::pad_into(references[b], h, w, in.image(0, b), ph_, pw_);
            detail::pad_into(movings[b], h, w, in.image(1, b), ph_, pw_);
        }
        const nn::Tensor<T> out = net_->forward(in);
        std::vector<std::vector<double>> result(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(h * w)));
        for (int64_t b = 0; b < n; ++b) {
            const T *o = out.image(0, b);
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < w; ++x) result[b][y * w + x] = double(o[y * pw_ + x]);
            }
        }
        return result;
    }

    /// Gradient of the loss with respect to the moving inputs of the last
    /// forward call, given d(loss)/d(output) per sample. Weights are not
    /// touched.
    std::vector<std::vector<double>> backward_moving(const std::vector<std::vector<double>> &d_out) {
        const auto n = static_cast<int64_t>(d_out.size());
        nn::Tensor<T> g(1, n, ph_, pw_, T(0));
        for (int64_t b = 0; b < n; ++b) {
            T *gp = g.image(0, b);
            for (int64_t y = 0; y < h_; ++y) {
                for (int64_t x = 0; x < w_; ++x) gp[y * pw_ + x] = static_cast<T>(d_out[b][y * w_ + x]);
            }
        }
        const nn::Tensor<T> din = net_->backward(g, true, false);
        std::vector<std::vector<double>> result(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(h_ * w_)));
        for (int64_t b = 0; b < n; ++b) detail::unpad_grad(din.image(1, b), ph_, pw_, result[b].data(), h_, w_);
        return result;
    }

    ErrorMap predict(const ImageGrid &reference, const ImageGrid &moving) {
        detail::require_same_shape(reference, moving, "predict_error_map");
        auto out = forward({reference.values().data()}, {moving.values().data()}, reference.height(), reference.width());
        return ErrorMap::clamped(reference.height(), reference.width(), std::move(out[0]));
    }

    nn::EvaluatorNet<T> &network() { return *net_; }

  private:
    std::unique_ptr<nn::EvaluatorNet<T>> net_;
    int64_t h_ = 0, w_ = 0, ph_ = 0, pw_ = 0;
};

/// E(reference, moving): predicted reference - moving, with moving
/// re-expressed in the reference's intensity distribution.
inline ErrorMap predict_error_map(const EvaluatorModel &model, const ImageGrid &reference, const ImageGrid &moving) {
    Evaluator<float> ev(model);
    return ev.predict(reference, moving);
}

/// Translation by subtraction: reference - E(reference, source), clamped.
inline ImageGrid translate(const EvaluatorModel &model, const ImageGrid &reference, const ImageGrid &source) {
    const ErrorMap e = predict_error_map(model, reference, source);
    std::vector<double> out(static_cast<size_t>(reference.size()));
    for (int64_t i = 0; i < reference.size(); ++i) out[i] = reference[i] - e[i];
    return ImageGrid::clamped(reference.height(), reference.width(), std::move(out));
}

struct EvaluatorTraining {
    EvaluatorModel model;
    std::vector<double> loss_trace;
};

/// Self-supervised training on single-modality images: each step draws a
/// fresh batch of synthesized pairs and minimises the mean absolute error
/// between E(x2, x1 + noise) and the label x2 - x1.
inline EvaluatorTraining train_evaluator(const EvaluatorModel &initial, const std::vector<ImageGrid> &source_images,
                                         const EvaluatorConfig &config) {
    config.validate();
    detail::require(!source_images.empty(), errc::empty_dataset, "train_evaluator needs at least one image");
    const int64_t h = source_images.front().height(), w = source_images.front().width();
    for (const auto &img : source_images) detail::require_same_shape(img, source_images.front(), "train_evaluator");
    const int64_t ph = detail::round_up(h, 4), pw = detail::round_up(w, 4);

    nn::EvaluatorNet<float> net(initial.arch);
    net.params().load(initial.weights);
    nn::Adam<float> opt({config.learning_rate});
    seed_stream rng(config.seed ^ 0x5EEDE7A1ULL);
    const int64_t bs = config.batch_size;
    const double inv = 1.0 / double(bs * h * w);

    EvaluatorTraining result;
    result.loss_trace.reserve(static_cast<size_t>(config.steps));
    std::vector<TrainingSample> batch(static_cast<size_t>(bs));
    for (int64_t step = 0; step < config.steps; ++step) {
        if (config.cosine_decay) {
            opt.set_learning_rate(0.5 * config.learning_rate *
                                  (1.0 + std::cos(std::numbers::pi * double(step) / double(config.steps))));
        }
        std::vector<seed_stream> streams;
        for (int64_t b = 0; b < bs; ++b) streams.push_back(rng.split());
        parallel_for(bs, [&](int64_t b) {
            const auto idx = static_cast<size_t>(streams[b].uniform_int(0, int64_t(source_images.size()) - 1));
            batch[b] = make_training_pair(source_images[idx], streams[b], config.pair);
        });

        nn::Tensor<float> in(2, bs, ph, pw);
        for (int64_t b = 0; b < bs; ++b) {
            detail::pad_into(batch[b].reference.values().data(), h, w, in.image(0, b), ph, pw);
            detail::pad_into(batch[b].noisy_moving.values().data(), h, w, in.image(1, b), ph, pw);
        }
        const nn::Tensor<float> out = net.forward(in);
        nn::Tensor<float> g(1, bs, ph, pw, 0.0f);
        double loss = 0.0;
        for (int64_t b = 0; b < bs; ++b) {
            const float *o = out.image(0, b);
            float *gp = g.image(0, b);
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < w; ++x) {
                    const double d = double(o[y * pw + x]) - batch[b].label(y, x);
                    loss += std::abs(d);
                    gp[y * pw + x] = static_cast<float>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv);
                }
            }
        }
        loss *= inv;
        if (!std::isfinite(loss)) throw error(errc::diverged_training, "evaluator loss became non-finite at step " + std::to_string(step));
        result.loss_trace.push_back(loss);
        net.params().zero_grad();
        net.backward(g, false, true);
        auto values = net.params().values();
        auto grads = net.params().grads();
        opt.step(values, grads);
    }

    result.model = initial;
    result.model.arch = config.arch;
    result.model.weights = net.params().flatten();
    result.model.steps_trained = initial.steps_trained + config.steps;
    result.model.final_loss = result.loss_trace.empty() ? initial.final_loss : result.loss_trace.back();
    result.model.modality = config.modality;
    result.model.noise = to_string(config.pair.noise);
    result.model.n_min = config.pair.n_min;
    result.model.n_max = config.pair.n_max;
    for (float v : result.model.weights) {
        if (!std::isfinite(v)) throw error(errc::diverged_training, "evaluator weights became non-finite");
    }
    return result;
}

// Checkpoint: "IMSEEVAL" magic, uint32 LE header length, JSON header, then
// the float32 LE weights.

inline nlohmann::json evaluator_header(const EvaluatorModel &m) {
    return {{"format", "imse-evaluator"},
            {"version", 1},
            {"architecture",
             {{"channels", m.arch.channels}, {"res_blocks", m.arch.res_blocks}, {"input_channels", 2},
              {"output_channels", 1}}},
            {"parameter_count", m.weights.size()},
            {"steps_trained", m.steps_trained},
            {"final_loss", m.final_loss},
            {"modality", m.modality},
            {"noise", m.noise},
            {"n_min", m.n_min},
            {"n_max", m.n_max}};
}

namespace detail {
inline void put_u32le(std::ostream &os, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char *>(b), 4);
}
inline uint32_t get_u32le(std::istream &is) {
    unsigned char b[4] = {};
    is.read(reinterpret_cast<char *>(b), 4);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}
inline void put_f32le(std::ostream &os, float f) {
    uint32_t u = 0;
    std::memcpy(&u, &f, 4);
    put_u32le(os, u);
}
inline float get_f32le(std::istream &is) {
    const uint32_t u = get_u32le(is);
    float f = 0.0f;
    std::memcpy(&f, &u, 4);
    return f;
}
} // namespace detail

inline void save_evaluator(const EvaluatorModel &m, const std::string &path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw error(errc::io, "cannot write " + path);
    const std::string header = evaluator_header(m).dump();
    os.write("IMSEEVAL", 8);
    detail::put_u32le(os, static_cast<uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (float v : m.weights) detail::put_f32le(os, v);
    if (!os) throw error(errc::io, "failed writing " + path);
}

inline EvaluatorModel load_evaluator(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw error(errc::io, "cannot read " + path);
    char magic[8] = {};
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "IMSEEVAL") throw error(errc::io, path + " is not an evaluator checkpoint");
    const uint32_t len = detail::get_u32le(is);
    std::string header(len, '\0');
    is.read(header.data(), len);
    if (!is) throw error(errc::io, "truncated checkpoint header in " + path);
    EvaluatorModel m;
    try {
        const auto j = nlohmann::json::parse(header);
        const auto &a = j.at("architecture");
        m.arch.channels = a.at("channels").get<std::array<int64_t, 3>>();
        m.arch.res_blocks = a.at("res_blocks").get<int64_t>();
        m.steps_trained = j.at("steps_trained").get<int64_t>();
        m.final_loss = j.at("final_loss").get<double>();
        m.modality = j.at("modality").get<std::string>();
        m.noise = j.at("noise").get<std::string>();
        m.n_min = j.at("n_min").get<int>();
        m.n_max = j.at("n_max").get<int>();
        m.weights.resize(j.at("parameter_count").get<size_t>());
    } catch (const nlohmann::json::exception &e) {
        throw error(errc::io, "bad checkpoint header in " + path + ": " + e.what());
    }
    for (float &v : m.weights) v = detail::get_f32le(is);
    if (!is) throw error(errc::io, "truncated checkpoint weights in " + path);
    nn::EvaluatorNet<float> probe(m.arch);
    detail::require(probe.params().count() == static_cast<int64_t>(m.weights.size()), errc::io,
                    "checkpoint parameter count does not match its architecture");
    return m;
}

} // namespace imse
