#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "imse/error.hpp"
#include "imse/image_core.hpp"
#include "imse/rng.hpp"

namespace imse {

/// Shuffle Remap state: control points p_0 = -1 < p_1 < ... < p_N = 1 cut the
/// intensity range into N segments; segment i is mapped linearly onto
/// segment permutation[i].
struct RemapSpec {
    std::vector<double> control_points;
    std::vector<int> permutation;

    int segment_count() const { return static_cast<int>(permutation.size()); }

    void validate() const {
        const auto n = control_points.size();
        detail::require(n >= 2, errc::invalid_spec, "remap spec needs at least one segment");
        detail::require(permutation.size() + 1 == n, errc::invalid_spec,
                        "permutation size must equal the number of segments");
        detail::require(control_points.front() == -1.0 && control_points.back() == 1.0, errc::invalid_spec,
                        "control points must start at -1 and end at 1");
        for (size_t i = 0; i + 1 < n; ++i) {
            detail::require(std::isfinite(control_points[i + 1]) && control_points[i] < control_points[i + 1],
                            errc::invalid_spec, "control points must be strictly increasing");
        }
        std::vector<char> seen(permutation.size(), 0);
        for (int p : permutation) {
            detail::require(p >= 0 && p < static_cast<int>(permutation.size()) && !seen[p], errc::invalid_spec,
                            "permutation is not a bijection");
            seen[p] = 1;
        }
    }

    /// Source segment of intensity x; segments are half-open except the last,
    /// which also owns x == 1.
    int segment_of(double x) const {
        const auto it = std::upper_bound(control_points.begin(), control_points.end(), x);
        const int idx = static_cast<int>(it - control_points.begin()) - 1;
        return std::clamp(idx, 0, segment_count() - 1);
    }

    double map(double x) const {
        const int i = segment_of(x);
        const int j = permutation[i];
        const double p0 = control_points[i], p1 = control_points[i + 1];
        const double q0 = control_points[j], q1 = control_points[j + 1];
        return std::clamp((x - p0) / (p1 - p0) * (q1 - q0) + q0, -1.0, 1.0);
    }

    bool operator==(const RemapSpec &) const = default;
};

inline constexpr double kMinControlGap = 1e-4;

/// Draws `count` in [n_min, n_max] interior control points uniformly on
/// (-1, 1) and a uniform permutation of the count + 1 segments. Draws that put
/// two points closer than kMinControlGap are rejected and redrawn.
inline RemapSpec sample_remap(seed_stream &rng, int n_min = 2, int n_max = 50) {
    detail::require(n_min >= 1 && n_min <= n_max, errc::bad_range,
                    "remap control point range must satisfy 1 <= n_min <= n_max");
    const int count = static_cast<int>(rng.uniform_int(n_min, n_max));
    RemapSpec spec;
    for (;;) {
        std::vector<double> pts(static_cast<size_t>(count));
        for (double &p : pts) p = rng.uniform(-1.0, 1.0);
        pts.push_back(-1.0);
        pts.push_back(1.0);
        std::sort(pts.begin(), pts.end());
        bool ok = true;
        for (size_t i = 0; i + 1 < pts.size(); ++i) ok = ok && (pts[i + 1] - pts[i] >= kMinControlGap);
        if (ok) {
            spec.control_points = std::move(pts);
            break;
        }
    }
    spec.permutation.resize(static_cast<size_t>(count + 1));
    std::iota(spec.permutation.begin(), spec.permutation.end(), 0);
    rng.shuffle(spec.permutation.begin(), spec.permutation.end());
    return spec;
}

inline ImageGrid apply_remap(const ImageGrid &image, const RemapSpec &spec) {
    spec.validate();
    std::vector<double> out(static_cast<size_t>(image.size()));
    for (int64_t i = 0; i < image.size(); ++i) out[i] = spec.map(image[i]);
    return ImageGrid(image.height(), image.width(), std::move(out));
}

/// Monotone cubic Bezier intensity curve with abscissae fixed at
/// -1, -1/3, 1/3, 1, so x(t) = 2t - 1 and only the ordinates are free.
struct BezierSpec {
    std::array<double, 4> ordinates{-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};

    void validate() const {
        detail::require(ordinates[0] == -1.0 && ordinates[3] == 1.0, errc::invalid_spec,
                        "bezier endpoints must be -1 and 1");
        for (int i = 0; i < 3; ++i) {
            detail::require(ordinates[i] <= ordinates[i + 1], errc::invalid_spec, "bezier ordinates must be sorted");
        }
    }

    double curve(double t) const {
        const double s = 1.0 - t;
        return s * s * s * ordinates[0] + 3.0 * s * s * t * ordinates[1] + 3.0 * s * t * t * ordinates[2] +
               t * t * t * ordinates[3];
    }
};

inline constexpr int kBezierTableSize = 1024;

inline BezierSpec sample_bezier(seed_stream &rng) {
    double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
    if (a > b) std::swap(a, b);
    return BezierSpec{{-1.0, a, b, 1.0}};
}

/// Histogram shift through a monotone Bezier curve, evaluated from a
/// 1024-entry lookup table with linear interpolation.
inline ImageGrid bezier_shift(const ImageGrid &image, const BezierSpec &spec) {
    spec.validate();
    std::array<double, kBezierTableSize> table{};
    for (int k = 0; k < kBezierTableSize; ++k) table[k] = spec.curve(double(k) / double(kBezierTableSize - 1));
    std::vector<double> out(static_cast<size_t>(image.size()));
    for (int64_t i = 0; i < image.size(); ++i) {
        const double u = (image[i] + 1.0) * 0.5 * double(kBezierTableSize - 1);
        const int k = std::clamp(static_cast<int>(std::floor(u)), 0, kBezierTableSize - 2);
        const double f = u - double(k);
        out[i] = std::clamp(table[k] + f * (table[k + 1] - table[k]), -1.0, 1.0);
    }
    return ImageGrid(image.height(), image.width(), std::move(out));
}

inline ImageGrid bezier_shift(const ImageGrid &image, seed_stream &rng) { return bezier_shift(image, sample_bezier(rng)); }

} // namespace imse
