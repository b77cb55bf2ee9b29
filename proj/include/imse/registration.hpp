#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imse/error.hpp"
#include "imse/evaluator.hpp"
#include "imse/image_core.hpp"
#include "imse/mask_metrics.hpp"
#include "imse/nn/adam.hpp"
#include "imse/nn/networks.hpp"
#include "imse/rng.hpp"
#include "imse/similarity_metrics.hpp"

namespace imse {

namespace detail {

/// Mean squared forward difference over 4 * H * W terms (trailing
/// row/column differences are zero). Optionally accumulates the gradient
/// scaled by `scale` into gy / gx.
template <class T>
double smoothness_raw(const T *dy, const T *dx, int64_t h, int64_t w, T *gy = nullptr, T *gx = nullptr,
                      double scale = 1.0) {
    const double inv = 1.0 / double(4 * h * w);
    double acc = 0.0;
    auto term = [&](const T *f, T *g, int64_t i, int64_t j) {
        const double d = double(f[j]) - double(f[i]);
        acc += d * d;
        if (g) {
            const T gd = static_cast<T>(2.0 * d * inv * scale);
            g[j] += gd;
            g[i] -= gd;
        }
    };
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const int64_t i = y * w + x;
            if (y + 1 < h) {
                term(dy, gy, i, i + w);
                term(dx, gx, i, i + w);
            }
            if (x + 1 < w) {
                term(dy, gy, i, i + 1);
                term(dx, gx, i, i + 1);
            }
        }
    }
    return acc * inv;
}

} // namespace detail

/// ‖∇φ‖²: mean of squared finite-difference gradients over both components
/// and both directions.
inline double smoothness_loss(const DeformationField &field) {
    field.validate();
    return detail::smoothness_raw(field.dy.data.data(), field.dx.data.data(), field.height(), field.width());
}

/// Gradient of smoothness_loss with respect to every field entry.
inline DeformationField smoothness_gradient(const DeformationField &field) {
    DeformationField g(field.height(), field.width());
    detail::smoothness_raw(field.dy.data.data(), field.dx.data.data(), field.height(), field.width(),
                           g.dy.data.data(), g.dx.data.data());
    return g;
}

/// Similarity term of a registration objective: a classical metric or a
/// frozen evaluator (mean |E(target, warped)|). Lower is better. Copies
/// share the evaluator weights but not its activation cache.
template <class T = float>
class BasicSimilarity {
  public:
    static BasicSimilarity metric(MetricKind kind) {
        BasicSimilarity s;
        s.kind_ = kind;
        s.name_ = to_string(kind);
        return s;
    }

    static BasicSimilarity evaluator(std::shared_ptr<const EvaluatorModel> model, std::string name = "imse") {
        detail::require(model != nullptr, errc::bad_config, "imse loss needs an evaluator");
        BasicSimilarity s;
        s.model_ = std::move(model);
        s.name_ = std::move(name);
        return s;
    }

    BasicSimilarity(const BasicSimilarity &o) : kind_(o.kind_), model_(o.model_), name_(o.name_) {}
    BasicSimilarity &operator=(const BasicSimilarity &o) {
        kind_ = o.kind_;
        model_ = o.model_;
        name_ = o.name_;
        runtime_.reset();
        return *this;
    }
    BasicSimilarity(BasicSimilarity &&) noexcept = default;
    BasicSimilarity &operator=(BasicSimilarity &&) noexcept = default;

    const std::string &name() const { return name_; }
    bool uses_evaluator() const { return model_ != nullptr; }

    /// Loss for each (warped, target) pair; when `grads` is given,
    /// (*grads)[b] receives d loss_b / d warped_b.
    std::vector<double> evaluate(const std::vector<const double *> &warped, const std::vector<const double *> &targets,
                                 int64_t h, int64_t w, std::vector<std::vector<double>> *grads) {
        const size_t n = warped.size();
        std::vector<double> loss(n, 0.0);
        if (grads) grads->assign(n, std::vector<double>(static_cast<size_t>(h * w), 0.0));
        if (kind_) {
            const auto sz = static_cast<size_t>(h * w);
            for (size_t b = 0; b < n; ++b) {
                loss[b] = metric_loss(*kind_, {warped[b], sz}, {targets[b], sz}, h, w, grads ? (*grads)[b].data() : nullptr);
            }
            return loss;
        }
        if (!runtime_) runtime_ = std::make_unique<Evaluator<T>>(*model_);
        // Eq. 6 form with the target as the reference input.
        const auto e = runtime_->forward(targets, warped, h, w);
        const double inv = 1.0 / double(h * w);
        std::vector<std::vector<double>> d_out(n, std::vector<double>(static_cast<size_t>(h * w)));
        for (size_t b = 0; b < n; ++b) {
            double acc = 0.0;
            for (int64_t i = 0; i < h * w; ++i) {
                acc += std::abs(e[b][i]);
                d_out[b][i] = (e[b][i] > 0.0 ? inv : (e[b][i] < 0.0 ? -inv : 0.0));
            }
            loss[b] = acc * inv;
        }
        if (grads) *grads = runtime_->backward_moving(d_out);
        return loss;
    }

    double evaluate(const ImageGrid &warped, const ImageGrid &target, std::vector<double> *grad = nullptr) {
        detail::require_same_shape(warped, target, "similarity");
        std::vector<std::vector<double>> g;
        const auto l = evaluate({warped.values().data()}, {target.values().data()}, warped.height(), warped.width(),
                                grad ? &g : nullptr);
        if (grad) *grad = std::move(g[0]);
        return l[0];
    }

  private:
    BasicSimilarity() = default;

    std::optional<MetricKind> kind_;
    std::shared_ptr<const EvaluatorModel> model_;
    std::string name_;
    std::unique_ptr<Evaluator<T>> runtime_;
};

using Similarity = BasicSimilarity<float>;

/// Builds a similarity from a loss key (mae, mse, ncc, mi, mind, imse).
inline Similarity make_similarity(const std::string &key, std::shared_ptr<const EvaluatorModel> model = nullptr) {
    if (key == "imse" || key.rfind("imse-", 0) == 0) {
        if (!model) throw error(errc::bad_config, "loss '" + key + "' requires --evaluator");
        return Similarity::evaluator(std::move(model), key);
    }
    return Similarity::metric(parse_metric(key));
}

struct RegistrationConfig {
    std::string loss = "mae";
    double lambda = 1.0;
    int64_t iterations = 200;
    double learning_rate = 1.0;
    uint64_t seed = 0;
    // Network path.
    nn::RegistrationArch arch{};
    double network_learning_rate = 1e-4;
    int64_t steps = 1500;
    int64_t batch_size = 4;

    void validate() const {
        detail::require(std::isfinite(lambda) && lambda >= 0.0, errc::bad_config, "lambda must be >= 0");
        detail::require(iterations >= 1, errc::bad_config, "iterations must be >= 1");
        detail::require(learning_rate > 0.0 && network_learning_rate > 0.0, errc::bad_config,
                        "learning rates must be > 0");
        detail::require(steps >= 0 && batch_size >= 1, errc::bad_config, "steps >= 0 and batch size >= 1 required");
        detail::require(arch.base_channels >= 1, errc::bad_config, "base channels must be >= 1");
    }
};

struct RegistrationMetrics {
    double dice = 0.0;
    double hd95 = 0.0;
    double smoothness = 0.0;
};

struct RegistrationResult {
    DeformationField field;
    ImageGrid warped;
    std::vector<double> trace;
    std::optional<RegistrationMetrics> metrics;
};

/// Scores a field that maps moving onto target: structure-mean Dice and
/// HD95 of the warped moving masks against the target masks, plus ‖∇φ‖².
inline RegistrationMetrics score_registration(const DeformationField &field, const std::vector<BinaryMask> &masks_moving,
                                              const std::vector<BinaryMask> &masks_target) {
    const auto warped = warp_masks(masks_moving, field);
    return {mean_dice(warped, masks_target), mean_hd95(warped, masks_target), smoothness_loss(field)};
}

/// similarity(warp(moving, field), target) + lambda * smoothness(field);
/// writes d/d field into `grad` when non-null.
template <class T>
double registration_objective(const DeformationField &field, const ImageGrid &moving, const ImageGrid &target,
                              BasicSimilarity<T> &sim, double lambda, DeformationField *grad) {
    const int64_t h = moving.height(), w = moving.width();
    std::vector<double> warped(static_cast<size_t>(h * w));
    detail::warp_raw(moving.values().data(), field.dy.data.data(), field.dx.data.data(), warped.data(), h, w);
    std::vector<std::vector<double>> g;
    const double s = sim.evaluate({warped.data()}, {target.values().data()}, h, w, grad ? &g : nullptr)[0];
    double total = s;
    if (grad) {
        *grad = DeformationField(h, w);
        detail::warp_raw_backward<double>(moving.values().data(), field.dy.data.data(), field.dx.data.data(), g[0].data(),
                                          nullptr, grad->dy.data.data(), grad->dx.data.data(), h, w);
        total += lambda * detail::smoothness_raw(field.dy.data.data(), field.dx.data.data(), h, w, grad->dy.data.data(),
                                                 grad->dx.data.data(), lambda);
    } else {
        total += lambda * detail::smoothness_raw(field.dy.data.data(), field.dx.data.data(), h, w);
    }
    return total;
}

/// Traditional registration: a zero-initialised full-resolution field
/// optimised directly with Adam. trace[k] is the objective after k updates
/// (iterations + 1 entries); the lowest-objective iterate is returned.
template <class T>
RegistrationResult register_iterative(const ImageGrid &moving, const ImageGrid &target, const RegistrationConfig &config,
                                      BasicSimilarity<T> &sim) {
    config.validate();
    detail::require_same_shape(moving, target, "register_iterative");
    const int64_t h = moving.height(), w = moving.width();
    DeformationField field(h, w), best(h, w), grad;
    double best_loss = std::numeric_limits<double>::infinity();
    nn::Adam<double> opt({config.learning_rate});
    RegistrationResult r;
    r.trace.reserve(static_cast<size_t>(config.iterations + 1));
    for (int64_t it = 0; it <= config.iterations; ++it) {
        const bool last = it == config.iterations;
        const double loss = registration_objective(field, moving, target, sim, config.lambda, last ? nullptr : &grad);
        if (!std::isfinite(loss)) throw error(errc::non_finite_loss, "registration loss became non-finite at iteration " + std::to_string(it));
        r.trace.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best = field;
        }
        if (last) break;
        std::vector<double> *vals[] = {&field.dy.data, &field.dx.data};
        const std::vector<double> *grads[] = {&grad.dy.data, &grad.dx.data};
        opt.step(vals, grads);
    }
    r.field = std::move(best);
    r.warped = warp(moving, r.field);
    return r;
}

inline RegistrationResult register_iterative(const ImageGrid &moving, const ImageGrid &target,
                                             const RegistrationConfig &config,
                                             std::shared_ptr<const EvaluatorModel> model = nullptr) {
    Similarity sim = make_similarity(config.loss, std::move(model));
    return register_iterative(moving, target, config, sim);
}

/// Weights of the U-shaped registration network.
struct RegistrationModel {
    nn::RegistrationArch arch{};
    std::vector<float> weights;
    std::string loss;
    int64_t steps_trained = 0;

    bool operator==(const RegistrationModel &) const = default;
};

inline RegistrationModel init_registration_network(const nn::RegistrationArch &arch, uint64_t seed) {
    nn::RegistrationNet<float> net(arch);
    seed_stream rng(seed);
    net.init(rng);
    return {arch, net.params().flatten(), "", 0};
}

struct RegistrationPair {
    ImageGrid moving;
    ImageGrid target;
};

namespace detail {

/// Runs the network on a batch of (moving, target) pairs, padding to a
/// multiple of 4; returns fields cropped back to h x w.
inline std::vector<DeformationField> predict_fields(nn::RegistrationNet<float> &net,
                                                    const std::vector<const RegistrationPair *> &pairs) {
    const int64_t h = pairs[0]->moving.height(), w = pairs[0]->moving.width();
    const int64_t ph = round_up(h, 4), pw = round_up(w, 4);
    const auto n = static_cast<int64_t>(pairs.size());
    nn::Tensor<float> in(2, n, ph, pw);
    for (int64_t b = 0; b < n; ++b) {
        pad_into(pairs[b]->moving.values().data(), h, w, in.image(0, b), ph, pw);
        pad_into(pairs[b]->target.values().data(), h, w, in.image(1, b), ph, pw);
    }
    const nn::Tensor<float> flow = net.forward(in);
    std::vector<DeformationField> out;
    for (int64_t b = 0; b < n; ++b) {
        DeformationField f(h, w);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                f.dy(y, x) = double(flow.image(0, b)[y * pw + x]);
                f.dx(y, x) = double(flow.image(1, b)[y * pw + x]);
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

} // namespace detail

struct RegistrationTraining {
    RegistrationModel model;
    std::vector<double> loss_trace;
};

/// Learned registration (Eq. 6-7 form): minimises
/// similarity(warp(moving, R(moving, target)), target) + lambda ‖∇R‖² over
/// random mini-batches of the pair set. Only the network is updated; the
/// evaluator inside `sim` is used for gradients but never modified.
template <class T>
RegistrationTraining train_registration_network(const RegistrationModel &initial, const std::vector<RegistrationPair> &pairs,
                                                BasicSimilarity<T> &sim, const RegistrationConfig &config) {
    config.validate();
    detail::require(!pairs.empty(), errc::empty_dataset, "train_registration_network needs at least one pair");
    const int64_t h = pairs[0].moving.height(), w = pairs[0].moving.width();
    for (const auto &p : pairs) {
        detail::require_same_shape(p.moving, pairs[0].moving, "registration pair");
        detail::require_same_shape(p.target, pairs[0].moving, "registration pair");
    }
    const int64_t ph = detail::round_up(h, 4), pw = detail::round_up(w, 4);
    nn::RegistrationNet<float> net(initial.arch);
    net.params().load(initial.weights);
    nn::Adam<float> opt({config.network_learning_rate});
    seed_stream rng(config.seed ^ 0x4E6E7E8EULL);
    const int64_t bs = config.batch_size;

    RegistrationTraining result;
    result.loss_trace.reserve(static_cast<size_t>(config.steps));
    for (int64_t step = 0; step < config.steps; ++step) {
        std::vector<const RegistrationPair *> batch;
        for (int64_t b = 0; b < bs; ++b) {
            batch.push_back(&pairs[static_cast<size_t>(rng.uniform_int(0, int64_t(pairs.size()) - 1))]);
        }
        const auto fields = detail::predict_fields(net, batch);
        std::vector<std::vector<double>> warped(static_cast<size_t>(bs), std::vector<double>(static_cast<size_t>(h * w)));
        std::vector<const double *> wp, tp;
        for (int64_t b = 0; b < bs; ++b) {
            detail::warp_raw(batch[b]->moving.values().data(), fields[b].dy.data.data(), fields[b].dx.data.data(),
                             warped[b].data(), h, w);
            wp.push_back(warped[b].data());
            tp.push_back(batch[b]->target.values().data());
        }
        std::vector<std::vector<double>> g;
        const auto sims = sim.evaluate(wp, tp, h, w, &g);
        nn::Tensor<float> dflow(2, bs, ph, pw, 0.0f);
        double loss = 0.0;
        const double inv_b = 1.0 / double(bs);
        std::vector<double> gy(static_cast<size_t>(h * w)), gx(static_cast<size_t>(h * w));
        for (int64_t b = 0; b < bs; ++b) {
            for (auto &v : g[b]) v *= inv_b;
            std::fill(gy.begin(), gy.end(), 0.0);
            std::fill(gx.begin(), gx.end(), 0.0);
            detail::warp_raw_backward<double>(batch[b]->moving.values().data(), fields[b].dy.data.data(),
                                              fields[b].dx.data.data(), g[b].data(), nullptr, gy.data(), gx.data(), h, w);
            const double smooth = detail::smoothness_raw(fields[b].dy.data.data(), fields[b].dx.data.data(), h, w,
                                                         gy.data(), gx.data(), config.lambda * inv_b);
            loss += (sims[b] + config.lambda * smooth) * inv_b;
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < w; ++x) {
                    dflow.image(0, b)[y * pw + x] = static_cast<float>(gy[y * w + x]);
                    dflow.image(1, b)[y * pw + x] = static_cast<float>(gx[y * w + x]);
                }
            }
        }
        if (!std::isfinite(loss)) throw error(errc::diverged_training, "registration loss became non-finite at step " + std::to_string(step));
        result.loss_trace.push_back(loss);
        net.params().zero_grad();
        net.backward(dflow);
        auto values = net.params().values();
        auto grads = net.params().grads();
        opt.step(values, grads);
    }
    result.model = initial;
    result.model.weights = net.params().flatten();
    result.model.loss = sim.name();
    result.model.steps_trained = initial.steps_trained + config.steps;
    for (float v : result.model.weights) {
        if (!std::isfinite(v)) throw error(errc::diverged_training, "registration weights became non-finite");
    }
    return result;
}

/// One forward pass: field = R(moving, target), warped = warp(moving, field).
inline RegistrationResult register_with_network(const RegistrationModel &model, const ImageGrid &moving,
                                                const ImageGrid &target) {
    detail::require_same_shape(moving, target, "register_with_network");
    nn::RegistrationNet<float> net(model.arch);
    net.params().load(model.weights);
    const RegistrationPair pair{moving, target};
    RegistrationResult r;
    r.field = std::move(detail::predict_fields(net, {&pair})[0]);
    r.warped = warp(moving, r.field);
    return r;
}

/// Batched inference for many pairs (one network instance).
inline std::vector<DeformationField> predict_fields(const RegistrationModel &model, const std::vector<RegistrationPair> &pairs,
                                                    int64_t chunk = 16) {
    nn::RegistrationNet<float> net(model.arch);
    net.params().load(model.weights);
    std::vector<DeformationField> out;
    for (size_t s = 0; s < pairs.size(); s += static_cast<size_t>(chunk)) {
        std::vector<const RegistrationPair *> batch;
        for (size_t i = s; i < std::min(pairs.size(), s + size_t(chunk)); ++i) batch.push_back(&pairs[i]);
        for (auto &f : detail::predict_fields(net, batch)) out.push_back(std::move(f));
    }
    return out;
}

} // namespace imse
