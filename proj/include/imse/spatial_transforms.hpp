#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "imse/error.hpp"
#include "imse/image_core.hpp"
#include "imse/rng.hpp"
#include "imse/shuffle_remap.hpp"

namespace imse {

using Range = std::array<double, 2>;

struct AffineParams {
    double rotation_deg = 0.0;
    double translation_y = 0.0; // fraction of height
    double translation_x = 0.0; // fraction of width
    double scale = 1.0;
    bool operator==(const AffineParams &) const = default;
};

struct AffineRanges {
    Range rotation{-3.0, 3.0};
    Range translation{-0.08, 0.08};
    Range scale{0.92, 1.08};

    void validate() const {
        for (const Range *r : {&rotation, &translation, &scale}) {
            detail::require(std::isfinite((*r)[0]) && std::isfinite((*r)[1]) && (*r)[0] <= (*r)[1], errc::bad_range,
                            "affine range is inverted or non-finite");
        }
        detail::require(scale[0] > 0.0, errc::bad_range, "scale range must be positive");
    }

    /// Ranges widened or narrowed about the identity by `strength`.
    AffineRanges scaled(double strength) const {
        AffineRanges r;
        r.rotation = {rotation[0] * strength, rotation[1] * strength};
        r.translation = {translation[0] * strength, translation[1] * strength};
        r.scale = {1.0 + (scale[0] - 1.0) * strength, 1.0 + (scale[1] - 1.0) * strength};
        return r;
    }
};

struct ElasticParams {
    double alpha = 80.0; // max displacement in pixels at the 128-pixel reference size
    double sigma = 12.0; // Gaussian smoothing radius in pixels

    void validate() const {
        detail::require(std::isfinite(alpha) && alpha >= 0.0, errc::bad_range, "elastic alpha must be >= 0");
        detail::require(std::isfinite(sigma) && sigma > 0.0, errc::bad_range, "elastic sigma must be > 0");
    }
};

inline AffineParams sample_affine(seed_stream &rng, const AffineRanges &ranges = {}) {
    ranges.validate();
    AffineParams p;
    p.rotation_deg = rng.uniform(ranges.rotation[0], ranges.rotation[1]);
    p.translation_y = rng.uniform(ranges.translation[0], ranges.translation[1]);
    p.translation_x = rng.uniform(ranges.translation[0], ranges.translation[1]);
    p.scale = rng.uniform(ranges.scale[0], ranges.scale[1]);
    return p;
}

/// Pull field for "rotate and scale about the image centre, then translate":
/// output pixel p samples c + s R (p - c) + t.
inline DeformationField affine_to_field(const AffineParams &params, int64_t height, int64_t width) {
    DeformationField f(height, width);
    const double theta = params.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cy = 0.5 * double(height - 1), cx = 0.5 * double(width - 1);
    const double ty = params.translation_y * double(height), tx = params.translation_x * double(width);
    for (int64_t y = 0; y < height; ++y) {
        for (int64_t x = 0; x < width; ++x) {
            const double ry = double(y) - cy, rx = double(x) - cx;
            const double qy = cy + params.scale * (c * ry - s * rx) + ty;
            const double qx = cx + params.scale * (s * ry + c * rx) + tx;
            f.dy(y, x) = qy - double(y);
            f.dx(y, x) = qx - double(x);
        }
    }
    return f;
}

/// Uniform [-1, 1] noise per component, Gaussian-smoothed, then rescaled so
/// the largest displacement magnitude is alpha * min(H, W) / 128.
inline DeformationField sample_elastic_field(seed_stream &rng, const ElasticParams &params, int64_t height,
                                             int64_t width) {
    params.validate();
    Grid<double> ny(height, width), nx(height, width);
    for (auto &v : ny.data) v = rng.uniform(-1.0, 1.0);
    for (auto &v : nx.data) v = rng.uniform(-1.0, 1.0);
    DeformationField f(gaussian_smooth(ny, params.sigma), gaussian_smooth(nx, params.sigma));
    const double target = params.alpha * double(std::min(height, width)) / 128.0;
    const double peak = f.max_magnitude();
    f *= (peak > 0.0 && target > 0.0) ? target / peak : 0.0;
    return f;
}

/// Spatial perturbation family shared by training-pair synthesis and the
/// phantom test problems.
struct DeformationConfig {
    AffineRanges affine{};
    ElasticParams elastic{4.0, 12.0};
    double strength = 1.0;

    void validate() const {
        affine.validate();
        elastic.validate();
        detail::require(std::isfinite(strength) && strength >= 0.0, errc::bad_range,
                        "deformation strength must be >= 0");
    }
};

/// Affine plus elastic displacement (displacements summed).
inline DeformationField sample_deformation(seed_stream &rng, const DeformationConfig &cfg, int64_t height,
                                           int64_t width) {
    cfg.validate();
    const auto affine = sample_affine(rng, cfg.affine.scaled(cfg.strength));
    DeformationField f = affine_to_field(affine, height, width);
    ElasticParams e = cfg.elastic;
    e.alpha *= cfg.strength;
    f += sample_elastic_field(rng, e, height, width);
    return f;
}

enum class NoiseMode { shuffle_remap, bezier, none };

inline std::string to_string(NoiseMode m) {
    switch (m) {
        case NoiseMode::shuffle_remap: return "shuffle_remap";
        case NoiseMode::bezier: return "bezier";
        case NoiseMode::none: return "none";
    }
    return "none";
}

inline NoiseMode parse_noise_mode(const std::string &s) {
    if (s == "shuffle_remap") return NoiseMode::shuffle_remap;
    if (s == "bezier") return NoiseMode::bezier;
    if (s == "none") return NoiseMode::none;
    throw error(errc::bad_config, "unknown noise mode '" + s + "'");
}

struct PairConfig {
    DeformationConfig deformation{};
    NoiseMode noise = NoiseMode::shuffle_remap;
    int n_min = 2;
    int n_max = 50;
    /// Share of pairs drawn with T2 = T1 (label exactly zero), so that the
    /// aligned end of the registration trajectory is covered too.
    double aligned_fraction = 0.125;
};

/// One evaluator training example. `label` is reference - moving, computed
/// before the style noise is applied to `moving`.
struct TrainingSample {
    ImageGrid moving;
    ImageGrid noisy_moving;
    ImageGrid reference;
    ErrorMap label;
};

inline ImageGrid apply_noise(const ImageGrid &image, const PairConfig &cfg, seed_stream &rng) {
    switch (cfg.noise) {
        case NoiseMode::shuffle_remap: return apply_remap(image, sample_remap(rng, cfg.n_min, cfg.n_max));
        case NoiseMode::bezier: return bezier_shift(image, rng);
        case NoiseMode::none: return image;
    }
    return image;
}

inline TrainingSample make_training_pair(const ImageGrid &x, seed_stream &rng, const PairConfig &cfg = {}) {
    const int64_t h = x.height(), w = x.width();
    const DeformationField t1 = sample_deformation(rng, cfg.deformation, h, w);
    const bool aligned = cfg.aligned_fraction > 0.0 && rng.uniform() < cfg.aligned_fraction;
    const DeformationField t2 = aligned ? t1 : sample_deformation(rng, cfg.deformation, h, w);
    ImageGrid x1 = warp(x, t1);
    ImageGrid x2 = warp(x, t2);
    std::vector<double> label(static_cast<size_t>(x.size()));
    for (int64_t i = 0; i < x.size(); ++i) label[i] = x2[i] - x1[i];
    ImageGrid noisy = apply_noise(x1, cfg, rng);
    return TrainingSample{std::move(x1), std::move(noisy), std::move(x2), ErrorMap(h, w, std::move(label))};
}

} // namespace imse
