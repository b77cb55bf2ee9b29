#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "imse/image_core.hpp"
#include "imse/rng.hpp"

namespace imse::test {

inline ImageGrid random_image(seed_stream &rng, int64_t h, int64_t w, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(h * w));
    for (auto &x : v) x = rng.uniform(lo, hi);
    return ImageGrid(h, w, std::move(v));
}

/// Smooth-ish test image: sum of two sinusoids, inside (-0.9, 0.9).
inline ImageGrid smooth_image(int64_t h, int64_t w, double phase = 0.0) {
    std::vector<double> v(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            v[y * w + x] = 0.45 * std::sin(0.7 * double(x) + phase) + 0.45 * std::cos(0.5 * double(y) - phase);
        }
    }
    return ImageGrid(h, w, std::move(v));
}

inline DeformationField random_field(seed_stream &rng, int64_t h, int64_t w, double amp) {
    DeformationField f(h, w);
    for (auto &v : f.dy.data) v = rng.uniform(-amp, amp);
    for (auto &v : f.dx.data) v = rng.uniform(-amp, amp);
    return f;
}

/// Central finite difference of a scalar function of one vector entry.
inline double central_difference(std::vector<double> &x, size_t i, double step, const std::function<double()> &f) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f();
    x[i] = keep - step;
    const double down = f();
    x[i] = keep;
    return (up - down) / (2.0 * step);
}

/// Relative error with an absolute floor so tiny gradients do not dominate.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

} // namespace imse::test
