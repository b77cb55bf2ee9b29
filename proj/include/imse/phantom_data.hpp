#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "imse/error.hpp"
#include "imse/image_core.hpp"
#include "imse/mask_metrics.hpp"
#include "imse/rng.hpp"
#include "imse/spatial_transforms.hpp"

namespace imse {

/// Synthetic anatomy: class 0 is background, class 1 the body outline and
/// classes >= 2 smooth organ blobs inside the body.
struct Phantom {
    ImageGrid image;
    Grid<uint8_t> class_map;
    int classes = 0;
    /// masks[k - 1] is the structure of class k (background has no mask).
    std::vector<BinaryMask> masks;
    std::vector<std::string> names;

    int64_t height() const { return class_map.height; }
    int64_t width() const { return class_map.width; }
};

/// Per-class intensity with smooth texture jitter, optional partial-volume
/// blur and a global gamma nonlinearity; the result is clamped to [-1, 1].
struct ModalityMap {
    std::vector<double> intensities;
    double jitter = 0.05;
    double texture_sigma = 1.5;
    double blur = 0.7;
    double gamma = 1.0;

    void validate(int classes) const {
        detail::require(static_cast<int>(intensities.size()) >= classes, errc::bad_config,
                        "modality map needs one intensity per class");
        for (double v : intensities) {
            detail::require(std::isfinite(v) && v >= -1.0 && v <= 1.0, errc::bad_config,
                            "modality intensities must lie in [-1,1]");
        }
        detail::require(std::isfinite(jitter) && jitter >= 0.0, errc::bad_config, "jitter must be >= 0");
        detail::require(texture_sigma > 0.0 && blur >= 0.0 && gamma > 0.0, errc::bad_config,
                        "texture sigma and gamma must be > 0, blur >= 0");
    }
};

inline constexpr int kDefaultClasses = 5;
inline constexpr int64_t kDefaultPhantomSize = 64;

/// Modality A: dark background, foreground intensities rising with class.
inline ModalityMap modality_a(int classes = kDefaultClasses) {
    ModalityMap m;
    m.intensities.push_back(-1.0);
    const int fg = classes - 1;
    for (int i = 0; i < fg; ++i) m.intensities.push_back(fg == 1 ? 0.3 : -0.5 + 1.4 * i / (fg - 1));
    return m;
}

/// Modality B: same dark background, foreground order reversed and a gamma
/// bend, so the A-to-B intensity relation is non-monotone.
inline ModalityMap modality_b(int classes = kDefaultClasses) {
    ModalityMap m = modality_a(classes);
    std::reverse(m.intensities.begin() + 1, m.intensities.begin() + classes);
    if (classes == 2) m.intensities[1] = 0.9;
    m.gamma = 1.4;
    return m;
}

namespace detail {

/// Smoothed uniform noise rescaled to max |value| = 1.
inline Grid<double> smooth_noise(seed_stream &rng, int64_t h, int64_t w, double sigma) {
    Grid<double> g(h, w, 0.0);
    for (auto &v : g.data) v = rng.uniform(-1.0, 1.0);
    g = gaussian_smooth(g, sigma);
    double peak = 0.0;
    for (double v : g.data) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
        for (auto &v : g.data) v /= peak;
    }
    return g;
}

} // namespace detail

inline Phantom generate_phantom(seed_stream &rng, int64_t size = kDefaultPhantomSize, int classes = kDefaultClasses) {
    detail::require(size >= 32, errc::bad_range, "phantom size must be >= 32");
    detail::require(classes >= 2 && classes <= 8, errc::bad_range, "phantom class count must be in [2,8]");
    const int64_t n = size;
    Grid<uint8_t> cm(n, n, 0);

    const double cy = 0.5 * double(n - 1) + rng.uniform(-0.05, 0.05) * double(n);
    const double cx = 0.5 * double(n - 1) + rng.uniform(-0.05, 0.05) * double(n);
    const double ry = rng.uniform(0.30, 0.42) * double(n);
    const double rx = rng.uniform(0.30, 0.42) * double(n);
    const Grid<double> wobble = detail::smooth_noise(rng, n, n, double(n) / 8.0);
    std::vector<int64_t> body;
    for (int64_t y = 0; y < n; ++y) {
        for (int64_t x = 0; x < n; ++x) {
            const double r = std::pow((double(y) - cy) / ry, 2) + std::pow((double(x) - cx) / rx, 2);
            if (r < 1.0 + 0.15 * wobble(y, x)) {
                cm(y, x) = 1;
                body.push_back(y * n + x);
            }
        }
    }

    // Organ blobs: threshold smoothed noise at a quantile of its values over
    // the body so each organ takes a controlled share of the body area.
    for (int k = 2; k < classes; ++k) {
        const double share = 0.5 / double(classes - 2) * rng.uniform(0.6, 1.0);
        const Grid<double> blob = detail::smooth_noise(rng, n, n, double(n) / 12.0);
        std::vector<double> vals;
        vals.reserve(body.size());
        for (int64_t i : body) vals.push_back(blob.data[i]);
        std::sort(vals.begin(), vals.end());
        const double thr = vals[static_cast<size_t>((1.0 - share) * double(vals.size() - 1))];
        int64_t placed = 0;
        for (int64_t i : body) {
            if (blob.data[i] > thr) {
                cm.data[i] = static_cast<uint8_t>(k);
                ++placed;
            }
        }
        if (placed == 0) cm.data[body[body.size() / 2]] = static_cast<uint8_t>(k);
    }

    Phantom p;
    p.classes = classes;
    p.class_map = std::move(cm);
    // Later organs may overwrite earlier ones entirely; re-seed any class
    // left empty so every class keeps at least one pixel.
    for (int k = 1; k < classes; ++k) {
        if (std::find(p.class_map.data.begin(), p.class_map.data.end(), static_cast<uint8_t>(k)) ==
            p.class_map.data.end()) {
            for (int64_t i : body) {
                if (p.class_map.data[i] == 1 && k != 1) {
                    p.class_map.data[i] = static_cast<uint8_t>(k);
                    break;
                }
            }
        }
    }
    for (int k = 1; k < classes; ++k) {
        Grid<uint8_t> m(n, n, 0);
        for (int64_t i = 0; i < m.size(); ++i) m.data[i] = p.class_map.data[i] == k;
        p.masks.emplace_back(std::move(m));
        p.names.push_back(k == 1 ? "body" : "organ" + std::to_string(k - 1));
    }

    std::vector<double> img(static_cast<size_t>(n * n));
    const ModalityMap ref = modality_a(classes);
    for (int64_t i = 0; i < n * n; ++i) img[i] = ref.intensities[p.class_map.data[i]];
    p.image = ImageGrid(n, n, std::move(img));
    return p;
}

inline ImageGrid simulate_modality(const Phantom &phantom, const ModalityMap &map, seed_stream &rng) {
    map.validate(phantom.classes);
    const int64_t h = phantom.height(), w = phantom.width();
    Grid<double> g(h, w, 0.0);
    for (int64_t i = 0; i < g.size(); ++i) g.data[i] = map.intensities[phantom.class_map.data[i]];
    if (map.jitter > 0.0) {
        const Grid<double> tex = detail::smooth_noise(rng, h, w, map.texture_sigma);
        for (int64_t i = 0; i < g.size(); ++i) g.data[i] += map.jitter * tex.data[i];
    }
    if (map.blur > 0.0) g = gaussian_smooth(g, map.blur);
    for (auto &v : g.data) {
        v = std::clamp(v, -1.0, 1.0);
        if (map.gamma != 1.0) v = 2.0 * std::pow(0.5 * (v + 1.0), map.gamma) - 1.0;
        v = std::clamp(v, -1.0, 1.0);
    }
    return ImageGrid(h, w, std::move(g.data));
}

/// Index into Phantom::masks of the structure with the most pixels.
inline size_t largest_structure(const std::vector<BinaryMask> &masks) {
    size_t best = 0;
    for (size_t k = 1; k < masks.size(); ++k) {
        if (masks[k].count() > masks[best].count()) best = k;
    }
    return best;
}

/// A registration problem with known answer. `true_field` deformed the
/// moving image away from the target; `correction` is its approximate
/// inverse, i.e. the field a perfect registration of moving onto target
/// would find.
struct GroundTruthPair {
    ImageGrid moving;
    ImageGrid target;
    std::vector<BinaryMask> masks_moving;
    std::vector<BinaryMask> masks_target;
    DeformationField true_field;
    DeformationField correction;
};

inline constexpr double kMisalignedDice = 0.9;
inline constexpr int kPairRetries = 24;

inline GroundTruthPair generate_ground_truth_pair(const Phantom &phantom, const ModalityMap &target_modality,
                                                  const ModalityMap &moving_modality,
                                                  const DeformationConfig &deformation, seed_stream &rng) {
    deformation.validate();
    const int64_t h = phantom.height(), w = phantom.width();
    GroundTruthPair gt;
    gt.target = simulate_modality(phantom, target_modality, rng);
    const ImageGrid moving_aligned = simulate_modality(phantom, moving_modality, rng);
    gt.masks_target = phantom.masks;
    const size_t largest = largest_structure(phantom.masks);

    // Resample until the largest structure is visibly misaligned; after half
    // the budget the perturbation is progressively amplified.
    for (int attempt = 0; attempt < kPairRetries; ++attempt) {
        DeformationField f = sample_deformation(rng, deformation, h, w);
        if (attempt >= kPairRetries / 2) f *= std::pow(1.25, attempt - kPairRetries / 2 + 1);
        auto warped_masks = warp_masks(phantom.masks, f);
        const bool zero = f.max_magnitude() == 0.0;
        const bool done = zero || dice(warped_masks[largest], phantom.masks[largest]) < kMisalignedDice;
        gt.true_field = std::move(f);
        gt.masks_moving = std::move(warped_masks);
        if (done) break;
    }
    gt.moving = warp(moving_aligned, gt.true_field);
    gt.correction = invert_field(gt.true_field);
    return gt;
}

} // namespace imse
