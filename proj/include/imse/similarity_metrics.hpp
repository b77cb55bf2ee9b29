#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "imse/error.hpp"
#include "imse/image_core.hpp"

namespace imse {

enum class Direction { lower_better, higher_better };

struct MetricValue {
    double value = 0.0;
    Direction direction = Direction::lower_better;
};

inline constexpr int kDefaultNccWindow = 9;
inline constexpr double kNccEpsilon = 1e-5;
inline constexpr int kDefaultMiBins = 32;
inline constexpr double kMindVarianceFloor = 1e-6;

namespace metric_kernels {

// All kernels take flat row-major buffers. When grad_a is non-null it
// receives d(value)/d(a) and must hold a.size() entries.

inline double mae(std::span<const double> a, std::span<const double> b, double *grad_a = nullptr) {
    const double n = double(a.size());
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += std::abs(d);
        if (grad_a) grad_a[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    return acc / n;
}

inline double mse(std::span<const double> a, std::span<const double> b, double *grad_a = nullptr) {
    const double n = double(a.size());
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
        if (grad_a) grad_a[i] = 2.0 * d / n;
    }
    return acc / n;
}

/// Summed-area table with one row/column of zero padding.
class BoxSum {
  public:
    BoxSum(const double *v, int64_t h, int64_t w) : h_(h), w_(w), s_(static_cast<size_t>((h + 1) * (w + 1)), 0.0) {
        for (int64_t y = 0; y < h; ++y) {
            double row = 0.0;
            for (int64_t x = 0; x < w; ++x) {
                row += v[y * w + x];
                at(y + 1, x + 1) = at(y, x + 1) + row;
            }
        }
    }
    /// Sum over the (2r+1)^2 window centred at (y, x), clipped to the grid.
    double window(int64_t y, int64_t x, int64_t r) const {
        const int64_t y0 = std::max<int64_t>(0, y - r), y1 = std::min<int64_t>(h_, y + r + 1);
        const int64_t x0 = std::max<int64_t>(0, x - r), x1 = std::min<int64_t>(w_, x + r + 1);
        return at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
    }
    static double count(int64_t y, int64_t x, int64_t r, int64_t h, int64_t w) {
        const int64_t y0 = std::max<int64_t>(0, y - r), y1 = std::min<int64_t>(h, y + r + 1);
        const int64_t x0 = std::max<int64_t>(0, x - r), x1 = std::min<int64_t>(w, x + r + 1);
        return double((y1 - y0) * (x1 - x0));
    }

  private:
    double &at(int64_t y, int64_t x) { return s_[static_cast<size_t>(y * (w_ + 1) + x)]; }
    double at(int64_t y, int64_t x) const { return s_[static_cast<size_t>(y * (w_ + 1) + x)]; }
    int64_t h_, w_;
    std::vector<double> s_;
};

/// Mean over pixels of the zero-normalized cross-correlation inside a
/// window x window neighbourhood (clipped at the border).
inline double ncc(std::span<const double> a, std::span<const double> b, int64_t h, int64_t w, int window,
                  double *grad_a = nullptr) {
    const int64_t r = window / 2;
    const size_t n = a.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (size_t i = 0; i < n; ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const BoxSum sa(a.data(), h, w), sb(b.data(), h, w), saa(aa.data(), h, w), sbb(bb.data(), h, w),
        sab(ab.data(), h, w);

    std::vector<double> alpha, alpha_mb, beta, beta_ma;
    if (grad_a) {
        alpha.assign(n, 0.0);
        alpha_mb.assign(n, 0.0);
        beta.assign(n, 0.0);
        beta_ma.assign(n, 0.0);
    }
    double total = 0.0;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const double cnt = BoxSum::count(y, x, r, h, w);
            const double ma = sa.window(y, x, r) / cnt, mb = sb.window(y, x, r) / cnt;
            const double va = std::max(0.0, saa.window(y, x, r) / cnt - ma * ma) + kNccEpsilon;
            const double vb = std::max(0.0, sbb.window(y, x, r) / cnt - mb * mb) + kNccEpsilon;
            const double cov = sab.window(y, x, r) / cnt - ma * mb;
            const double denom = std::sqrt(va * vb);
            const double cc = cov / denom;
            total += cc;
            if (grad_a) {
                const size_t i = static_cast<size_t>(y * w + x);
                alpha[i] = 1.0 / (cnt * denom);
                alpha_mb[i] = alpha[i] * mb;
                beta[i] = cc / (cnt * va);
                beta_ma[i] = beta[i] * ma;
            }
        }
    }
    const double pixels = double(n);
    if (grad_a) {
        const BoxSum s1(alpha.data(), h, w), s2(alpha_mb.data(), h, w), s3(beta.data(), h, w), s4(beta_ma.data(), h, w);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y * w + x);
                grad_a[i] = (b[i] * s1.window(y, x, r) - s2.window(y, x, r) - a[i] * s3.window(y, x, r) +
                             s4.window(y, x, r)) /
                            pixels;
            }
        }
    }
    return total / pixels;
}

/// Linear partial-volume bin assignment over [-1, 1] with bin centres at
/// -1 + 2k / (bins - 1).
struct SoftBin {
    int lower;
    double upper_weight;
};

inline SoftBin soft_bin(double v, int bins) {
    const double u = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * double(bins - 1);
    const int k = std::clamp(static_cast<int>(std::floor(u)), 0, bins - 2);
    return SoftBin{k, u - double(k)};
}

inline std::vector<double> soft_histogram(std::span<const double> a, int bins) {
    std::vector<double> p(static_cast<size_t>(bins), 0.0);
    const double inv_n = 1.0 / double(a.size());
    for (double v : a) {
        const SoftBin s = soft_bin(v, bins);
        p[s.lower] += (1.0 - s.upper_weight) * inv_n;
        p[s.lower + 1] += s.upper_weight * inv_n;
    }
    return p;
}

inline double entropy(std::span<const double> a, int bins) {
    double h = 0.0;
    for (double p : soft_histogram(a, bins)) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

inline double mutual_information(std::span<const double> a, std::span<const double> b, int bins,
                                 double *grad_a = nullptr) {
    const size_t n = a.size();
    const double inv_n = 1.0 / double(n);
    std::vector<SoftBin> ba(n), bb(n);
    for (size_t i = 0; i < n; ++i) {
        ba[i] = soft_bin(a[i], bins);
        bb[i] = soft_bin(b[i], bins);
    }
    const size_t B = static_cast<size_t>(bins);
    std::vector<double> joint(B * B, 0.0), pa(B, 0.0), pb(B, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const double wa[2] = {1.0 - ba[i].upper_weight, ba[i].upper_weight};
        const double wb[2] = {1.0 - bb[i].upper_weight, bb[i].upper_weight};
        for (int u = 0; u < 2; ++u) {
            for (int v = 0; v < 2; ++v) {
                joint[(ba[i].lower + u) * B + bb[i].lower + v] += wa[u] * wb[v] * inv_n;
            }
        }
    }
    for (size_t i = 0; i < B; ++i) {
        for (size_t j = 0; j < B; ++j) {
            pa[i] += joint[i * B + j];
            pb[j] += joint[i * B + j];
        }
    }
    double mi = 0.0;
    std::vector<double> g(grad_a ? B * B : 0, 0.0);
    for (size_t i = 0; i < B; ++i) {
        for (size_t j = 0; j < B; ++j) {
            const double p = joint[i * B + j];
            if (p <= 0.0) continue;
            mi += p * std::log(p / (pa[i] * pb[j]));
            if (grad_a) g[i * B + j] = std::log(p) - std::log(pa[i]);
        }
    }
    if (grad_a) {
        const double slope = 0.5 * double(bins - 1);
        for (size_t i = 0; i < n; ++i) {
            const double u = (a[i] + 1.0) * 0.5 * double(bins - 1);
            // Outside the binning window the assignment is constant.
            if (u <= 0.0 || u >= double(bins - 1)) {
                grad_a[i] = 0.0;
                continue;
            }
            const double wb[2] = {1.0 - bb[i].upper_weight, bb[i].upper_weight};
            double acc = 0.0;
            for (int v = 0; v < 2; ++v) {
                const size_t j = static_cast<size_t>(bb[i].lower + v);
                acc += wb[v] * (g[(ba[i].lower + 1) * B + j] - g[ba[i].lower * B + j]);
            }
            grad_a[i] = slope * inv_n * acc;
        }
    }
    return std::max(0.0, mi);
}

inline constexpr std::array<std::array<int, 2>, 4> kMindOffsets{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

inline std::array<double, 9> mind_patch_weights() {
    std::array<double, 9> g{};
    double sum = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const double v = std::exp(-double(dy * dy + dx * dx) / (2.0 * 0.5 * 0.5));
            g[(dy + 1) * 3 + dx + 1] = v;
            sum += v;
        }
    }
    for (double &v : g) v /= sum;
    return g;
}

/// Per-pixel patch distances d_k and variance estimate V for one image.
struct MindState {
    std::array<std::vector<double>, 4> dist;
    std::array<std::vector<double>, 4> desc;
    std::vector<double> variance;
    std::vector<char> floored;
};

inline MindState mind_state(std::span<const double> img, int64_t h, int64_t w) {
    const size_t n = img.size();
    const auto g = mind_patch_weights();
    MindState s;
    s.variance.assign(n, 0.0);
    s.floored.assign(n, 0);
    std::array<std::vector<double>, 4> sq;
    for (int k = 0; k < 4; ++k) {
        sq[k].assign(n, 0.0);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const int64_t sy = std::clamp<int64_t>(y + kMindOffsets[k][0], 0, h - 1);
                const int64_t sx = std::clamp<int64_t>(x + kMindOffsets[k][1], 0, w - 1);
                const double d = img[y * w + x] - img[sy * w + sx];
                sq[k][y * w + x] = d * d;
            }
        }
        s.dist[k].assign(n, 0.0);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int qy = -1; qy <= 1; ++qy) {
                    for (int qx = -1; qx <= 1; ++qx) {
                        const int64_t ry = std::clamp<int64_t>(y + qy, 0, h - 1);
                        const int64_t rx = std::clamp<int64_t>(x + qx, 0, w - 1);
                        acc += g[(qy + 1) * 3 + qx + 1] * sq[k][ry * w + rx];
                    }
                }
                s.dist[k][y * w + x] = acc;
            }
        }
    }
    for (size_t i = 0; i < n; ++i) {
        const double v = 0.25 * (s.dist[0][i] + s.dist[1][i] + s.dist[2][i] + s.dist[3][i]);
        s.floored[i] = v < kMindVarianceFloor;
        s.variance[i] = std::max(v, kMindVarianceFloor);
    }
    for (int k = 0; k < 4; ++k) {
        s.desc[k].resize(n);
        for (size_t i = 0; i < n; ++i) s.desc[k][i] = std::exp(-s.dist[k][i] / s.variance[i]);
    }
    return s;
}

inline double mind(std::span<const double> a, std::span<const double> b, int64_t h, int64_t w,
                   double *grad_a = nullptr) {
    const size_t n = a.size();
    const MindState sa = mind_state(a, h, w);
    const MindState sb = mind_state(b, h, w);
    const double norm = 1.0 / (4.0 * double(n));
    double loss = 0.0;
    for (int k = 0; k < 4; ++k) {
        for (size_t i = 0; i < n; ++i) loss += std::abs(sa.desc[k][i] - sb.desc[k][i]);
    }
    if (grad_a) {
        const auto g = mind_patch_weights();
        std::fill(grad_a, grad_a + n, 0.0);
        std::array<std::vector<double>, 4> d_dist;
        for (int k = 0; k < 4; ++k) d_dist[k].assign(n, 0.0);
        for (size_t i = 0; i < n; ++i) {
            std::array<double, 4> gd{};
            double shared = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double diff = sa.desc[k][i] - sb.desc[k][i];
                gd[k] = (diff > 0.0 ? norm : (diff < 0.0 ? -norm : 0.0)) * sa.desc[k][i];
                shared += gd[k] * sa.dist[k][i];
            }
            const double v = sa.variance[i];
            const double dv = sa.floored[i] ? 0.0 : 0.25 * shared / (v * v);
            for (int k = 0; k < 4; ++k) d_dist[k][i] = -gd[k] / v + dv;
        }
        for (int k = 0; k < 4; ++k) {
            // Scatter the patch sums back onto the squared differences, then
            // onto the two pixels of each difference.
            std::vector<double> d_sq(n, 0.0);
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < w; ++x) {
                    const double up = d_dist[k][y * w + x];
                    for (int qy = -1; qy <= 1; ++qy) {
                        for (int qx = -1; qx <= 1; ++qx) {
                            const int64_t ry = std::clamp<int64_t>(y + qy, 0, h - 1);
                            const int64_t rx = std::clamp<int64_t>(x + qx, 0, w - 1);
                            d_sq[ry * w + rx] += g[(qy + 1) * 3 + qx + 1] * up;
                        }
                    }
                }
            }
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < w; ++x) {
                    const int64_t sy = std::clamp<int64_t>(y + kMindOffsets[k][0], 0, h - 1);
                    const int64_t sx = std::clamp<int64_t>(x + kMindOffsets[k][1], 0, w - 1);
                    const double d = a[y * w + x] - a[sy * w + sx];
                    const double gsq = 2.0 * d * d_sq[y * w + x];
                    grad_a[y * w + x] += gsq;
                    grad_a[sy * w + sx] -= gsq;
                }
            }
        }
    }
    return loss * norm;
}

} // namespace metric_kernels

inline MetricValue mae(const ImageGrid &a, const ImageGrid &b) {
    detail::require_same_shape(a, b, "mae");
    return {metric_kernels::mae(a.values(), b.values()), Direction::lower_better};
}

inline MetricValue mse(const ImageGrid &a, const ImageGrid &b) {
    detail::require_same_shape(a, b, "mse");
    return {metric_kernels::mse(a.values(), b.values()), Direction::lower_better};
}

inline MetricValue ncc(const ImageGrid &a, const ImageGrid &b, int window = kDefaultNccWindow) {
    detail::require_same_shape(a, b, "ncc");
    detail::require(window >= 1 && window % 2 == 1, errc::bad_range, "ncc window must be odd and >= 1");
    return {metric_kernels::ncc(a.values(), b.values(), a.height(), a.width(), window), Direction::higher_better};
}

inline MetricValue mutual_information(const ImageGrid &a, const ImageGrid &b, int bins = kDefaultMiBins) {
    detail::require_same_shape(a, b, "mutual_information");
    detail::require(bins >= 2, errc::bad_range, "mutual information needs at least 2 bins");
    return {metric_kernels::mutual_information(a.values(), b.values(), bins), Direction::higher_better};
}

inline double histogram_entropy(const ImageGrid &a, int bins = kDefaultMiBins) {
    detail::require(bins >= 2, errc::bad_range, "entropy needs at least 2 bins");
    return metric_kernels::entropy(a.values(), bins);
}

inline MetricValue mind_loss(const ImageGrid &a, const ImageGrid &b) {
    detail::require_same_shape(a, b, "mind_loss");
    return {metric_kernels::mind(a.values(), b.values(), a.height(), a.width()), Direction::lower_better};
}

/// MIND descriptor channels (one per 4-neighbour offset), values in (0, 1].
inline std::array<Grid<double>, 4> mind_descriptors(const ImageGrid &a) {
    auto s = metric_kernels::mind_state(a.values(), a.height(), a.width());
    std::array<Grid<double>, 4> out;
    for (int k = 0; k < 4; ++k) out[k] = Grid<double>(a.height(), a.width(), std::move(s.desc[k]));
    return out;
}

enum class MetricKind { mae, mse, ncc, mi, mind };

inline MetricKind parse_metric(const std::string &key) {
    if (key == "mae") return MetricKind::mae;
    if (key == "mse") return MetricKind::mse;
    if (key == "ncc") return MetricKind::ncc;
    if (key == "mi") return MetricKind::mi;
    if (key == "mind") return MetricKind::mind;
    throw error(errc::bad_config, "unknown metric '" + key + "'");
}

inline std::string to_string(MetricKind k) {
    switch (k) {
        case MetricKind::mae: return "mae";
        case MetricKind::mse: return "mse";
        case MetricKind::ncc: return "ncc";
        case MetricKind::mi: return "mi";
        case MetricKind::mind: return "mind";
    }
    return "mae";
}

/// Metric turned into a lower-is-better loss: higher-better metrics are
/// negated. Gradient is with respect to `a`.
inline double metric_loss(MetricKind kind, std::span<const double> a, std::span<const double> b, int64_t h, int64_t w,
                          double *grad_a) {
    double v = 0.0;
    switch (kind) {
        case MetricKind::mae: return metric_kernels::mae(a, b, grad_a);
        case MetricKind::mse: return metric_kernels::mse(a, b, grad_a);
        case MetricKind::ncc: v = -metric_kernels::ncc(a, b, h, w, kDefaultNccWindow, grad_a); break;
        case MetricKind::mi: v = -metric_kernels::mutual_information(a, b, kDefaultMiBins, grad_a); break;
        case MetricKind::mind: return metric_kernels::mind(a, b, h, w, grad_a);
    }
    if (grad_a) {
        for (size_t i = 0; i < a.size(); ++i) grad_a[i] = -grad_a[i];
    }
    return v;
}

} // namespace imse
