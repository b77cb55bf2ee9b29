#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "imse/error.hpp"

namespace imse {

/// Plain row-major H x W array. The validated image types below are built on
/// top of it; it is also used for class maps, masks and intermediate buffers.
template <class T>
struct Grid {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int64_t h, int64_t w, T fill = T{}) : height(h), width(w), data(static_cast<size_t>(h * w), fill) {}
    Grid(int64_t h, int64_t w, std::vector<T> values) : height(h), width(w), data(std::move(values)) {
        detail::require(static_cast<int64_t>(data.size()) == h * w, errc::shape_mismatch,
                        "grid data size does not match " + std::to_string(h) + "x" + std::to_string(w));
    }

    int64_t size() const { return height * width; }
    T &operator()(int64_t y, int64_t x) { return data[static_cast<size_t>(y * width + x)]; }
    const T &operator()(int64_t y, int64_t x) const { return data[static_cast<size_t>(y * width + x)]; }
    bool same_shape(int64_t h, int64_t w) const { return height == h && width == w; }
    template <class U>
    bool same_shape(const Grid<U> &o) const { return height == o.height && width == o.width; }
    bool operator==(const Grid &) const = default;
};

namespace detail {

inline void require_finite(std::span<const double> v, const char *what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw error(errc::non_finite_input, std::string(what) + " contains a non-finite value");
    }
}

template <class A, class B>
void require_same_shape(const A &a, const B &b, const char *what) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw error(errc::shape_mismatch, std::string(what) + ": " + std::to_string(a.height()) + "x" +
                                              std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                                              "x" + std::to_string(b.width()));
    }
}

} // namespace detail

/// Bounded scalar image. `Bound` is the symmetric value limit: 1 for
/// intensity images, 2 for signed error maps (difference of two images).
template <int Bound>
class BoundedImage {
  public:
    static constexpr double bound = Bound;

    BoundedImage() = default;

    BoundedImage(int64_t h, int64_t w, double fill) : grid_(h, w, fill) {
        check_shape(h, w);
        check_values();
    }

    /// Validating constructor: values must be finite and within [-bound, bound].
    BoundedImage(int64_t h, int64_t w, std::vector<double> values) : grid_(h, w, std::move(values)) {
        check_shape(h, w);
        check_values();
    }

    /// Clamps finite out-of-range values into [-bound, bound].
    static BoundedImage clamped(int64_t h, int64_t w, std::vector<double> values) {
        detail::require_finite(values, "image");
        for (double &v : values) v = std::clamp(v, -bound, bound);
        return BoundedImage(h, w, std::move(values));
    }

    int64_t height() const { return grid_.height; }
    int64_t width() const { return grid_.width; }
    int64_t size() const { return grid_.size(); }
    double operator()(int64_t y, int64_t x) const { return grid_(y, x); }
    double operator[](int64_t i) const { return grid_.data[static_cast<size_t>(i)]; }
    std::span<const double> values() const { return grid_.data; }
    const Grid<double> &grid() const { return grid_; }
    bool operator==(const BoundedImage &) const = default;

  private:
    static void check_shape(int64_t h, int64_t w) {
        detail::require(h >= 2 && w >= 2, errc::shape_mismatch, "images need at least 2x2 pixels");
    }
    void check_values() const {
        detail::require_finite(grid_.data, "image");
        for (double v : grid_.data) {
            if (v < -bound || v > bound) {
                throw error(errc::out_of_range, "image value " + std::to_string(v) + " outside [-" +
                                                    std::to_string(Bound) + "," + std::to_string(Bound) + "]");
            }
        }
    }

    Grid<double> grid_;
};

/// Intensities normalized to [-1, 1].
using ImageGrid = BoundedImage<1>;
/// Signed spatial error, the difference of two [-1, 1] images.
using ErrorMap = BoundedImage<2>;

/// Output-referenced displacement field in pixels: output pixel p samples
/// the source image at p + (dy, dx).
struct DeformationField {
    Grid<double> dy;
    Grid<double> dx;

    DeformationField() = default;
    DeformationField(int64_t h, int64_t w) : dy(h, w, 0.0), dx(h, w, 0.0) {}
    DeformationField(Grid<double> y, Grid<double> x) : dy(std::move(y)), dx(std::move(x)) {
        detail::require(dy.same_shape(dx), errc::shape_mismatch, "field components differ in shape");
    }

    int64_t height() const { return dy.height; }
    int64_t width() const { return dy.width; }
    int64_t size() const { return dy.size(); }

    void validate() const {
        detail::require(dy.same_shape(dx), errc::shape_mismatch, "field components differ in shape");
        detail::require_finite(dy.data, "field");
        detail::require_finite(dx.data, "field");
    }

    double max_magnitude() const {
        double m = 0.0;
        for (int64_t i = 0; i < size(); ++i) m = std::max(m, std::hypot(dy.data[i], dx.data[i]));
        return m;
    }

    DeformationField &operator+=(const DeformationField &o) {
        for (int64_t i = 0; i < size(); ++i) {
            dy.data[i] += o.dy.data[i];
            dx.data[i] += o.dx.data[i];
        }
        return *this;
    }

    DeformationField &operator*=(double s) {
        for (auto &v : dy.data) v *= s;
        for (auto &v : dx.data) v *= s;
        return *this;
    }

    bool operator==(const DeformationField &) const = default;
};

/// H x W boolean mask (stored as bytes).
class BinaryMask {
  public:
    BinaryMask() = default;
    BinaryMask(int64_t h, int64_t w, bool fill = false) : grid_(h, w, fill ? 1 : 0) {}
    explicit BinaryMask(Grid<uint8_t> g) : grid_(std::move(g)) {
        for (auto &v : grid_.data) v = v ? 1 : 0;
    }

    int64_t height() const { return grid_.height; }
    int64_t width() const { return grid_.width; }
    int64_t size() const { return grid_.size(); }
    bool operator()(int64_t y, int64_t x) const { return grid_(y, x) != 0; }
    void set(int64_t y, int64_t x, bool v) { grid_(y, x) = v ? 1 : 0; }
    bool operator[](int64_t i) const { return grid_.data[static_cast<size_t>(i)] != 0; }
    int64_t count() const {
        int64_t n = 0;
        for (auto v : grid_.data) n += v;
        return n;
    }
    bool empty() const { return count() == 0; }
    const Grid<uint8_t> &grid() const { return grid_; }
    bool operator==(const BinaryMask &) const = default;

  private:
    Grid<uint8_t> grid_;
};

/// Affine map of [lo, hi] onto [-1, 1]; values outside the window are clamped.
inline ImageGrid normalize(const Grid<double> &raw, double lo, double hi) {
    detail::require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, errc::degenerate_range,
                    "normalize needs lo < hi, got lo=" + std::to_string(lo) + " hi=" + std::to_string(hi));
    detail::require_finite(raw.data, "raw image");
    std::vector<double> out(raw.data.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = std::clamp(raw.data[i], lo, hi);
        out[i] = std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0);
    }
    return ImageGrid(raw.height, raw.width, std::move(out));
}

namespace detail {

/// Clamped bilinear sample at fractional (y, x). When `grad` is given it
/// receives d(sample)/dy and d(sample)/dx; a clamped coordinate has zero
/// derivative.
template <class T>
inline T bilinear(const T *img, int64_t h, int64_t w, T y, T x, T *dsdy = nullptr, T *dsdx = nullptr) {
    const T ymax = static_cast<T>(h - 1);
    const T xmax = static_cast<T>(w - 1);
    const bool y_clamped = !(y > T(0) && y < ymax);
    const bool x_clamped = !(x > T(0) && x < xmax);
    const T yc = std::clamp(y, T(0), ymax);
    const T xc = std::clamp(x, T(0), xmax);
    int64_t y0 = static_cast<int64_t>(std::floor(yc));
    int64_t x0 = static_cast<int64_t>(std::floor(xc));
    y0 = std::min(y0, h - 1);
    x0 = std::min(x0, w - 1);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const T wy = yc - static_cast<T>(y0);
    const T wx = xc - static_cast<T>(x0);
    const T v00 = img[y0 * w + x0];
    const T v01 = img[y0 * w + x1];
    const T v10 = img[y1 * w + x0];
    const T v11 = img[y1 * w + x1];
    const T top = v00 + wx * (v01 - v00);
    const T bot = v10 + wx * (v11 - v10);
    if (dsdy) *dsdy = y_clamped ? T(0) : (bot - top);
    if (dsdx) *dsdx = x_clamped ? T(0) : ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
    return top + wy * (bot - top);
}

/// Raw warp kernel shared by the image path and the batched network path.
template <class T>
inline void warp_raw(const T *img, const T *dy, const T *dx, T *out, int64_t h, int64_t w) {
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const int64_t i = y * w + x;
            out[i] = bilinear(img, h, w, static_cast<T>(y) + dy[i], static_cast<T>(x) + dx[i]);
        }
    }
}

/// Backward of warp_raw: accumulates into d_img (if non-null) and writes
/// d_dy / d_dx (if non-null).
template <class T>
inline void warp_raw_backward(const T *img, const T *dy, const T *dx, const T *d_out, T *d_img, T *d_dy, T *d_dx,
                              int64_t h, int64_t w) {
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const int64_t i = y * w + x;
            const T sy = static_cast<T>(y) + dy[i];
            const T sx = static_cast<T>(x) + dx[i];
            T gy{}, gx{};
            bilinear(img, h, w, sy, sx, &gy, &gx);
            if (d_dy) d_dy[i] = d_out[i] * gy;
            if (d_dx) d_dx[i] = d_out[i] * gx;
            if (d_img) {
                const T yc = std::clamp(sy, T(0), static_cast<T>(h - 1));
                const T xc = std::clamp(sx, T(0), static_cast<T>(w - 1));
                const int64_t y0 = std::min(static_cast<int64_t>(std::floor(yc)), h - 1);
                const int64_t x0 = std::min(static_cast<int64_t>(std::floor(xc)), w - 1);
                const int64_t y1 = std::min(y0 + 1, h - 1);
                const int64_t x1 = std::min(x0 + 1, w - 1);
                const T wy = yc - static_cast<T>(y0);
                const T wx = xc - static_cast<T>(x0);
                d_img[y0 * w + x0] += d_out[i] * (T(1) - wy) * (T(1) - wx);
                d_img[y0 * w + x1] += d_out[i] * (T(1) - wy) * wx;
                d_img[y1 * w + x0] += d_out[i] * wy * (T(1) - wx);
                d_img[y1 * w + x1] += d_out[i] * wy * wx;
            }
        }
    }
}

} // namespace detail

/// Backward (pull) warp with clamped bilinear sampling.
inline ImageGrid warp(const ImageGrid &image, const DeformationField &field) {
    detail::require_same_shape(image, field, "warp");
    field.validate();
    const int64_t h = image.height(), w = image.width();
    std::vector<double> out(static_cast<size_t>(h * w));
    detail::warp_raw(image.values().data(), field.dy.data.data(), field.dx.data.data(), out.data(), h, w);
    // Bilinear weights are convex, so the result stays inside the input range
    // up to rounding; clamp removes the last ulp.
    for (double &v : out) v = std::clamp(v, -1.0, 1.0);
    return ImageGrid(h, w, std::move(out));
}

struct WarpGradient {
    std::vector<double> d_image;
    DeformationField d_field;
};

/// Vector-Jacobian product of `warp` for an upstream gradient `d_out`.
inline WarpGradient warp_backward(const ImageGrid &image, const DeformationField &field, std::span<const double> d_out) {
    detail::require_same_shape(image, field, "warp_backward");
    detail::require(static_cast<int64_t>(d_out.size()) == image.size(), errc::shape_mismatch,
                    "warp_backward upstream gradient size");
    const int64_t h = image.height(), w = image.width();
    WarpGradient g{std::vector<double>(static_cast<size_t>(h * w), 0.0), DeformationField(h, w)};
    detail::warp_raw_backward(image.values().data(), field.dy.data.data(), field.dx.data.data(), d_out.data(),
                              g.d_image.data(), g.d_field.dy.data.data(), g.d_field.dx.data.data(), h, w);
    return g;
}

/// Nearest-neighbour warp for label-like grids (masks, class maps).
template <class T>
Grid<T> warp_nearest(const Grid<T> &src, const DeformationField &field) {
    detail::require(src.same_shape(field.dy), errc::shape_mismatch, "warp_nearest shape");
    Grid<T> out(src.height, src.width);
    for (int64_t y = 0; y < src.height; ++y) {
        for (int64_t x = 0; x < src.width; ++x) {
            const double sy = std::clamp(static_cast<double>(y) + field.dy(y, x), 0.0, double(src.height - 1));
            const double sx = std::clamp(static_cast<double>(x) + field.dx(y, x), 0.0, double(src.width - 1));
            out(y, x) = src(static_cast<int64_t>(std::lround(sy)), static_cast<int64_t>(std::lround(sx)));
        }
    }
    return out;
}

/// Forward differences of each field component along y and x, zero on the
/// trailing row / column.
struct FieldGradient {
    Grid<double> dy_dy, dy_dx, dx_dy, dx_dx;

    int64_t term_count() const { return 4 * dy_dy.size(); }
};

inline FieldGradient spatial_gradient(const DeformationField &field) {
    field.validate();
    const int64_t h = field.height(), w = field.width();
    FieldGradient g{Grid<double>(h, w, 0.0), Grid<double>(h, w, 0.0), Grid<double>(h, w, 0.0),
                    Grid<double>(h, w, 0.0)};
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            if (y + 1 < h) {
                g.dy_dy(y, x) = field.dy(y + 1, x) - field.dy(y, x);
                g.dx_dy(y, x) = field.dx(y + 1, x) - field.dx(y, x);
            }
            if (x + 1 < w) {
                g.dy_dx(y, x) = field.dy(y, x + 1) - field.dy(y, x);
                g.dx_dx(y, x) = field.dx(y, x + 1) - field.dx(y, x);
            }
        }
    }
    return g;
}

/// Separable Gaussian smoothing truncated at 3 sigma. Border taps that fall
/// outside the grid are dropped and the remaining weights renormalized.
inline Grid<double> gaussian_smooth(const Grid<double> &in, double sigma) {
    detail::require(sigma > 0.0 && std::isfinite(sigma), errc::bad_range, "gaussian sigma must be > 0");
    const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    for (int64_t i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * double(i * i) / (sigma * sigma));

    const int64_t h = in.height, w = in.width;
    Grid<double> tmp(h, w, 0.0), out(h, w, 0.0);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            const int64_t lo = std::max<int64_t>(-radius, -x), hi = std::min<int64_t>(radius, w - 1 - x);
            for (int64_t d = lo; d <= hi; ++d) {
                acc += k[d + radius] * in(y, x + d);
                norm += k[d + radius];
            }
            tmp(y, x) = acc / norm;
        }
    }
    for (int64_t y = 0; y < h; ++y) {
        const int64_t lo = std::max<int64_t>(-radius, -y), hi = std::min<int64_t>(radius, h - 1 - y);
        for (int64_t x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (int64_t d = lo; d <= hi; ++d) {
                acc += k[d + radius] * tmp(y + d, x);
                norm += k[d + radius];
            }
            out(y, x) = acc / norm;
        }
    }
    return out;
}

/// Approximate inverse by fixed-point iteration v(p) = -u(p + v(p)). Used
/// only for scoring recovered fields against a known perturbation.
inline DeformationField invert_field(const DeformationField &u, int iterations = 30) {
    u.validate();
    const int64_t h = u.height(), w = u.width();
    DeformationField v(h, w);
    for (int it = 0; it < iterations; ++it) {
        DeformationField next(h, w);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const double sy = double(y) + v.dy(y, x), sx = double(x) + v.dx(y, x);
                next.dy(y, x) = -detail::bilinear(u.dy.data.data(), h, w, sy, sx);
                next.dx(y, x) = -detail::bilinear(u.dx.data.data(), h, w, sy, sx);
            }
        }
        v = std::move(next);
    }
    return v;
}

} // namespace imse
