#pragma once

// Brute-force reference implementations shared by unit and acceptance tests.
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "imse/rng.hpp"
#include "imse/shuffle_remap.hpp"
#include "imse/similarity_metrics.hpp"

namespace imse::test {

// Independent evaluation of the piecewise-linear remap: linear scan for the
// source segment, last segment closed at 1.
inline double remap_oracle(const RemapSpec &s, double x) {
    const int n = s.segment_count();
    int i = n - 1;
    for (int k = 0; k < n; ++k) {
        if (x >= s.control_points[k] && x < s.control_points[k + 1]) {
            i = k;
            break;
        }
    }
    const int j = s.permutation[i];
    const auto &p = s.control_points;
    return (x - p[i]) / (p[i + 1] - p[i]) * (p[j + 1] - p[j]) + p[j];
}

// Direct-loop local NCC (no summed-area tables).
inline double ncc_oracle(const ImageGrid &a, const ImageGrid &b, int window) {
    const int64_t h = a.height(), w = a.width(), r = window / 2;
    double total = 0.0;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            std::vector<double> va, vb;
            for (int64_t yy = std::max<int64_t>(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
                for (int64_t xx = std::max<int64_t>(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
                    va.push_back(a(yy, xx));
                    vb.push_back(b(yy, xx));
                }
            }
            const double n = double(va.size());
            double ma = 0, mb = 0;
            for (size_t i = 0; i < va.size(); ++i) {
                ma += va[i] / n;
                mb += vb[i] / n;
            }
            double saa = 0, sbb = 0, sab = 0;
            for (size_t i = 0; i < va.size(); ++i) {
                saa += (va[i] - ma) * (va[i] - ma) / n;
                sbb += (vb[i] - mb) * (vb[i] - mb) / n;
                sab += (va[i] - ma) * (vb[i] - mb) / n;
            }
            total += sab / std::sqrt((saa + kNccEpsilon) * (sbb + kNccEpsilon));
        }
    }
    return total / double(h * w);
}

// Image whose values sit exactly on bin centres, so soft binning reduces to
// hard counting.
inline ImageGrid bin_centre_image(seed_stream &rng, int64_t h, int64_t w, int bins, std::vector<int> &idx) {
    idx.resize(static_cast<size_t>(h * w));
    std::vector<double> v(idx.size());
    for (size_t i = 0; i < v.size(); ++i) {
        idx[i] = int(rng.uniform_int(0, bins - 1));
        v[i] = -1.0 + 2.0 * idx[i] / double(bins - 1);
    }
    return ImageGrid(h, w, std::move(v));
}

inline double entropy_oracle(const std::vector<int> &a) {
    std::map<int, double> p;
    for (int v : a) p[v] += 1.0 / double(a.size());
    double h = 0.0;
    for (auto [k, q] : p) h -= q * std::log(q);
    return h;
}

inline double mi_oracle(const std::vector<int> &a, const std::vector<int> &b) {
    std::map<std::pair<int, int>, double> pj;
    std::map<int, double> pa, pb;
    const double inv = 1.0 / double(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        pj[{a[i], b[i]}] += inv;
        pa[a[i]] += inv;
        pb[b[i]] += inv;
    }
    double mi = 0.0;
    for (auto [k, p] : pj) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    return mi;
}

// MIND with explicit patch loops: d_k(p) = sum_q G(q) (I(r) - I(clamp(r + o_k)))^2,
// r = clamp(p + q).
inline std::array<std::vector<double>, 4> mind_oracle(const ImageGrid &img) {
    const int64_t h = img.height(), w = img.width();
    const int off[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    double g[3][3], gs = 0.0;
    for (int a = -1; a <= 1; ++a) {
        for (int b = -1; b <= 1; ++b) gs += g[a + 1][b + 1] = std::exp(-(a * a + b * b) / 0.5);
    }
    auto cl = [](int64_t v, int64_t n) { return std::min(std::max<int64_t>(v, 0), n - 1); };
    std::array<std::vector<double>, 4> d, desc;
    for (int k = 0; k < 4; ++k) d[k].assign(h * w, 0.0);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int k = 0; k < 4; ++k) {
                double acc = 0.0;
                for (int a = -1; a <= 1; ++a) {
                    for (int b = -1; b <= 1; ++b) {
                        const int64_t ry = cl(y + a, h), rx = cl(x + b, w);
                        const double diff = img(ry, rx) - img(cl(ry + off[k][0], h), cl(rx + off[k][1], w));
                        acc += g[a + 1][b + 1] / gs * diff * diff;
                    }
                }
                d[k][y * w + x] = acc;
            }
        }
    }
    for (int k = 0; k < 4; ++k) desc[k].resize(h * w);
    for (int64_t i = 0; i < h * w; ++i) {
        const double v = std::max(1e-6, (d[0][i] + d[1][i] + d[2][i] + d[3][i]) / 4.0);
        for (int k = 0; k < 4; ++k) desc[k][i] = std::exp(-d[k][i] / v);
    }
    return desc;
}

} // namespace imse::test
