#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "imse/benchmark.hpp"
#include "imse/error.hpp"
#include "imse/evaluator.hpp"
#include "imse/registration.hpp"
#include "imse/spatial_transforms.hpp"

namespace imse {

using json = nlohmann::json;

/// Reads keys out of a JSON object and rejects any key nobody asked for.
class ConfigReader {
  public:
    ConfigReader(const json &j, std::string context) : j_(j), ctx_(std::move(context)) {
        if (!j_.is_object()) throw error(errc::bad_config, ctx_ + " must be a JSON object");
    }

    template <class T>
    ConfigReader &get(const char *key, T &out) {
        seen_.insert(key);
        if (!j_.contains(key)) return *this;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception &e) {
            throw error(errc::bad_config, ctx_ + "." + key + ": " + e.what());
        }
        return *this;
    }

    /// Nested object handled by `fn(const json&, context)`.
    template <class Fn>
    ConfigReader &nested(const char *key, Fn &&fn) {
        seen_.insert(key);
        if (j_.contains(key)) fn(j_.at(key), ctx_ + "." + key);
        return *this;
    }

    void finish() const {
        for (const auto &[k, v] : j_.items()) {
            if (!seen_.count(k)) throw error(errc::bad_config, "unknown key '" + k + "' in " + ctx_);
        }
    }

  private:
    const json &j_;
    std::string ctx_;
    std::set<std::string> seen_;
};

inline json to_json(const DeformationConfig &c) {
    return {{"rotation_range", c.affine.rotation},
            {"translation_range", c.affine.translation},
            {"scale_range", c.affine.scale},
            {"elastic_alpha", c.elastic.alpha},
            {"elastic_sigma", c.elastic.sigma},
            {"deformation_strength", c.strength}};
}

inline void read_config(const json &j, const std::string &ctx, DeformationConfig &c) {
    ConfigReader(j, ctx)
        .get("rotation_range", c.affine.rotation)
        .get("translation_range", c.affine.translation)
        .get("scale_range", c.affine.scale)
        .get("elastic_alpha", c.elastic.alpha)
        .get("elastic_sigma", c.elastic.sigma)
        .get("deformation_strength", c.strength)
        .finish();
    try {
        c.validate();
    } catch (const error &e) {
        throw error(errc::bad_config, ctx + ": " + e.what());
    }
}

inline json to_json(const EvaluatorConfig &c) {
    return {{"channels", c.arch.channels},
            {"res_blocks", c.arch.res_blocks},
            {"learning_rate", c.learning_rate},
            {"cosine_decay", c.cosine_decay},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"modality", c.modality},
            {"noise", to_string(c.pair.noise)},
            {"n_min", c.pair.n_min},
            {"n_max", c.pair.n_max},
            {"aligned_fraction", c.pair.aligned_fraction},
            {"deformation", to_json(c.pair.deformation)}};
}

inline void read_config(const json &j, const std::string &ctx, EvaluatorConfig &c) {
    std::string noise = to_string(c.pair.noise);
    ConfigReader(j, ctx)
        .get("channels", c.arch.channels)
        .get("res_blocks", c.arch.res_blocks)
        .get("learning_rate", c.learning_rate)
        .get("cosine_decay", c.cosine_decay)
        .get("steps", c.steps)
        .get("batch_size", c.batch_size)
        .get("seed", c.seed)
        .get("modality", c.modality)
        .get("noise", noise)
        .get("n_min", c.pair.n_min)
        .get("n_max", c.pair.n_max)
        .get("aligned_fraction", c.pair.aligned_fraction)
        .nested("deformation", [&](const json &d, const std::string &cx) { read_config(d, cx, c.pair.deformation); })
        .finish();
    c.pair.noise = parse_noise_mode(noise);
    c.validate();
}

inline json to_json(const RegistrationConfig &c) {
    return {{"loss", c.loss},
            {"lambda", c.lambda},
            {"iterations", c.iterations},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"base_channels", c.arch.base_channels},
            {"network_learning_rate", c.network_learning_rate},
            {"steps", c.steps},
            {"batch_size", c.batch_size}};
}

inline void read_config(const json &j, const std::string &ctx, RegistrationConfig &c) {
    ConfigReader(j, ctx)
        .get("loss", c.loss)
        .get("lambda", c.lambda)
        .get("iterations", c.iterations)
        .get("learning_rate", c.learning_rate)
        .get("seed", c.seed)
        .get("base_channels", c.arch.base_channels)
        .get("network_learning_rate", c.network_learning_rate)
        .get("steps", c.steps)
        .get("batch_size", c.batch_size)
        .finish();
    c.validate();
}

inline json to_json(const BenchmarkConfig &c) {
    return {{"suite", c.suite},
            {"seed", c.seed},
            {"size", c.size},
            {"classes", c.classes},
            {"evaluator_images", c.evaluator_images},
            {"train_pairs", c.train_pairs},
            {"test_pairs", c.test_pairs},
            {"losses", c.losses},
            {"evaluator", to_json(c.evaluator)},
            {"registration", to_json(c.registration)},
            {"deformation", to_json(c.deformation)}};
}

/// Suite defaults come first, explicit keys override them.
inline void read_config(const json &j, const std::string &ctx, BenchmarkConfig &c) {
    if (j.contains("suite")) c = benchmark_config_for_suite(j.at("suite").get<std::string>());
    ConfigReader(j, ctx)
        .get("suite", c.suite)
        .get("seed", c.seed)
        .get("size", c.size)
        .get("classes", c.classes)
        .get("evaluator_images", c.evaluator_images)
        .get("train_pairs", c.train_pairs)
        .get("test_pairs", c.test_pairs)
        .get("losses", c.losses)
        .nested("evaluator", [&](const json &d, const std::string &cx) { read_config(d, cx, c.evaluator); })
        .nested("registration", [&](const json &d, const std::string &cx) { read_config(d, cx, c.registration); })
        .nested("deformation", [&](const json &d, const std::string &cx) { read_config(d, cx, c.deformation); })
        .finish();
    c.validate();
}

} // namespace imse
