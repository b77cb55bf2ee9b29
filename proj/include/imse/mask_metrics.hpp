#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "imse/error.hpp"
#include "imse/image_core.hpp"

namespace imse {

/// 2|a ∩ b| / (|a| + |b|).
inline double dice(const BinaryMask &a, const BinaryMask &b) {
    detail::require_same_shape(a, b, "dice");
    int64_t inter = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        na += a[i];
        nb += b[i];
        inter += a[i] && b[i];
    }
    if (na + nb == 0) throw error(errc::both_empty, "dice of two empty masks is undefined");
    return 2.0 * double(inter) / double(na + nb);
}

namespace detail {

/// Mask pixels with at least one 8-neighbour outside the mask (pixels beyond
/// the image border count as outside).
inline std::vector<std::pair<int64_t, int64_t>> boundary_pixels(const BinaryMask &m) {
    std::vector<std::pair<int64_t, int64_t>> out;
    const int64_t h = m.height(), w = m.width();
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            if (!m(y, x)) continue;
            bool edge = false;
            for (int64_t dy = -1; dy <= 1 && !edge; ++dy) {
                for (int64_t dx = -1; dx <= 1; ++dx) {
                    const int64_t yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w || !m(yy, xx)) {
                        edge = true;
                        break;
                    }
                }
            }
            if (edge) out.emplace_back(y, x);
        }
    }
    return out;
}

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * double(v.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

} // namespace detail

/// 95th percentile of the pooled boundary-to-boundary nearest distances in
/// both directions, in pixels.
inline double hd95(const BinaryMask &a, const BinaryMask &b) {
    detail::require_same_shape(a, b, "hd95");
    if (a.empty() || b.empty()) throw error(errc::empty_mask, "hd95 needs two non-empty masks");
    const auto ba = detail::boundary_pixels(a);
    const auto bb = detail::boundary_pixels(b);
    std::vector<double> d;
    d.reserve(ba.size() + bb.size());
    auto nearest = [](const auto &from, const auto &to, std::vector<double> &out) {
        for (const auto &[y, x] : from) {
            int64_t best = std::numeric_limits<int64_t>::max();
            for (const auto &[v, u] : to) best = std::min(best, (y - v) * (y - v) + (x - u) * (x - u));
            out.push_back(std::sqrt(double(best)));
        }
    };
    nearest(ba, bb, d);
    nearest(bb, ba, d);
    return detail::percentile(std::move(d), 95.0);
}

/// Mean Dice over structures, skipping structures empty in both sets.
inline double mean_dice(const std::vector<BinaryMask> &a, const std::vector<BinaryMask> &b) {
    detail::require(a.size() == b.size() && !a.empty(), errc::shape_mismatch, "mask sets differ in size");
    double sum = 0.0;
    int n = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        if (a[k].empty() && b[k].empty()) continue;
        sum += dice(a[k], b[k]);
        ++n;
    }
    if (n == 0) throw error(errc::both_empty, "all structures empty");
    return sum / n;
}

/// Mean HD95 over structures present in both sets.
inline double mean_hd95(const std::vector<BinaryMask> &a, const std::vector<BinaryMask> &b) {
    detail::require(a.size() == b.size() && !a.empty(), errc::shape_mismatch, "mask sets differ in size");
    double sum = 0.0;
    int n = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        if (a[k].empty() || b[k].empty()) continue;
        sum += hd95(a[k], b[k]);
        ++n;
    }
    if (n == 0) throw error(errc::empty_mask, "no structure present in both mask sets");
    return sum / n;
}

inline BinaryMask warp_mask(const BinaryMask &m, const DeformationField &field) {
    return BinaryMask(warp_nearest(m.grid(), field));
}

inline std::vector<BinaryMask> warp_masks(const std::vector<BinaryMask> &ms, const DeformationField &field) {
    std::vector<BinaryMask> out;
    out.reserve(ms.size());
    for (const auto &m : ms) out.push_back(warp_mask(m, field));
    return out;
}

} // namespace imse
