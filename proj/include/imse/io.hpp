#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <png.h>

#include "imse/error.hpp"
#include "imse/evaluator.hpp"
#include "imse/image_core.hpp"
#include "imse/phantom_data.hpp"
#include "imse/registration.hpp"

namespace imse::io {

namespace fs = std::filesystem;

inline void ensure_parent(const fs::path &p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline void write_text(const fs::path &p, const std::string &text) {
    ensure_parent(p);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw error(errc::io, "cannot write " + p.string());
    os << text;
    if (!os) throw error(errc::io, "failed writing " + p.string());
}

inline std::string read_text(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw error(errc::io, "cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_json(const fs::path &p, const nlohmann::json &j) { write_text(p, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path &p) {
    try {
        return nlohmann::json::parse(read_text(p));
    } catch (const nlohmann::json::parse_error &e) {
        throw error(errc::io, p.string() + ": " + e.what());
    }
}

// --- PGM (binary P5, 8 or 16 bit) -----------------------------------------

/// Writes intensities in [-1, 1] linearly onto [0, maxval].
inline void write_pgm(const fs::path &p, const Grid<double> &g, int maxval = 65535) {
    detail::require(maxval == 255 || maxval == 65535, errc::io, "pgm maxval must be 255 or 65535");
    ensure_parent(p);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw error(errc::io, "cannot write " + p.string());
    os << "P5\n" << g.width << " " << g.height << "\n" << maxval << "\n";
    for (double v : g.data) {
        const auto q = static_cast<uint32_t>(std::lround((std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * maxval));
        if (maxval == 255) {
            os.put(static_cast<char>(q));
        } else {
            os.put(static_cast<char>(q >> 8));
            os.put(static_cast<char>(q & 0xFF));
        }
    }
    if (!os) throw error(errc::io, "failed writing " + p.string());
}

inline void write_pgm(const fs::path &p, const ImageGrid &img, int maxval = 65535) { write_pgm(p, img.grid(), maxval); }

/// Masks as 8-bit PGM with 0 / 255.
inline void write_mask_pgm(const fs::path &p, const BinaryMask &m) {
    Grid<double> g(m.height(), m.width(), -1.0);
    for (int64_t i = 0; i < m.size(); ++i) g.data[i] = m[i] ? 1.0 : -1.0;
    write_pgm(p, g, 255);
}

inline Grid<double> read_pgm_grid(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw error(errc::io, "cannot read " + p.string());
    std::string magic;
    is >> magic;
    if (magic != "P5") throw error(errc::io, p.string() + " is not a binary PGM");
    auto next_int = [&]() {
        int v = 0;
        for (;;) {
            is >> std::ws;
            if (is.peek() == '#') {
                std::string line;
                std::getline(is, line);
                continue;
            }
            break;
        }
        is >> v;
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    is.get();
    if (!is || w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw error(errc::io, "bad PGM header in " + p.string());
    Grid<double> g(h, w, 0.0);
    for (auto &v : g.data) {
        int q = 0;
        if (maxval < 256) {
            q = is.get();
        } else {
            const int hi = is.get(), lo = is.get();
            q = (hi << 8) | lo;
        }
        v = 2.0 * double(q) / double(maxval) - 1.0;
    }
    if (!is) throw error(errc::io, "truncated PGM " + p.string());
    return g;
}

inline ImageGrid read_pgm(const fs::path &p) {
    auto g = read_pgm_grid(p);
    return ImageGrid::clamped(g.height, g.width, std::move(g.data));
}

inline BinaryMask read_mask_pgm(const fs::path &p) {
    const auto g = read_pgm_grid(p);
    Grid<uint8_t> m(g.height, g.width, 0);
    for (int64_t i = 0; i < g.size(); ++i) m.data[i] = g.data[i] > 0.0;
    return BinaryMask(std::move(m));
}

// --- raw float32 + JSON sidecar --------------------------------------------

inline void write_raw(const fs::path &p, const std::vector<const std::vector<double> *> &components, int64_t h, int64_t w,
                      const std::string &kind) {
    ensure_parent(p);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw error(errc::io, "cannot write " + p.string());
    for (const auto *c : components) {
        for (double v : *c) detail::put_f32le(os, static_cast<float>(v));
    }
    if (!os) throw error(errc::io, "failed writing " + p.string());
    fs::path side = p;
    side.replace_extension(".json");
    write_json(side, {{"height", h}, {"width", w}, {"components", components.size()}, {"dtype", "float32le"},
                      {"kind", kind}});
}

inline std::vector<std::vector<double>> read_raw(const fs::path &p, int64_t &h, int64_t &w) {
    fs::path side = p;
    side.replace_extension(".json");
    const auto j = read_json(side);
    size_t comps = 0;
    try {
        h = j.at("height").get<int64_t>();
        w = j.at("width").get<int64_t>();
        comps = j.at("components").get<size_t>();
    } catch (const nlohmann::json::exception &e) {
        throw error(errc::io, side.string() + ": " + e.what());
    }
    std::ifstream is(p, std::ios::binary);
    if (!is) throw error(errc::io, "cannot read " + p.string());
    std::vector<std::vector<double>> out(comps, std::vector<double>(static_cast<size_t>(h * w)));
    for (auto &c : out) {
        for (auto &v : c) v = double(detail::get_f32le(is));
    }
    if (!is) throw error(errc::io, "truncated raw file " + p.string());
    return out;
}

inline void write_image_raw(const fs::path &p, const ImageGrid &img) {
    write_raw(p, {&img.grid().data}, img.height(), img.width(), "image");
}

inline ImageGrid read_image_raw(const fs::path &p) {
    int64_t h = 0, w = 0;
    auto c = read_raw(p, h, w);
    detail::require(c.size() == 1, errc::io, p.string() + " is not a single-component image");
    return ImageGrid::clamped(h, w, std::move(c[0]));
}

inline void write_field_raw(const fs::path &p, const DeformationField &f) {
    write_raw(p, {&f.dy.data, &f.dx.data}, f.height(), f.width(), "field");
}

inline DeformationField read_field_raw(const fs::path &p) {
    int64_t h = 0, w = 0;
    auto c = read_raw(p, h, w);
    detail::require(c.size() == 2, errc::io, p.string() + " is not a two-component field");
    DeformationField f(Grid<double>(h, w, std::move(c[0])), Grid<double>(h, w, std::move(c[1])));
    f.validate();
    return f;
}

/// Reads an image from .pgm or .raw (with sidecar) by extension.
inline ImageGrid read_image(const fs::path &p) {
    return p.extension() == ".pgm" ? read_pgm(p) : read_image_raw(p);
}

// --- CSV -------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_trace_csv(const fs::path &p, const std::vector<double> &trace) {
    std::ostringstream os;
    os << "step,loss\n";
    for (size_t i = 0; i < trace.size(); ++i) os << i << "," << format_double(trace[i]) << "\n";
    write_text(p, os.str());
}

// --- PNG scatter plot ------------------------------------------------------

/// Minimal scatter plot (x vs y) with a frame, as an 8-bit grey PNG.
inline void write_scatter_png(const fs::path &p, const std::vector<double> &xs, const std::vector<double> &ys,
                              int size = 320) {
    detail::require(xs.size() == ys.size(), errc::shape_mismatch, "scatter data size mismatch");
    ensure_parent(p);
    const int margin = 20;
    std::vector<uint8_t> px(static_cast<size_t>(size * size), 255);
    auto put = [&](int x, int y, uint8_t v) {
        if (x >= 0 && x < size && y >= 0 && y < size) px[static_cast<size_t>(y * size + x)] = v;
    };
    for (int i = margin; i < size - margin; ++i) {
        put(i, margin, 160);
        put(i, size - margin, 160);
        put(margin, i, 160);
        put(size - margin, i, 160);
    }
    auto range = [](const std::vector<double> &v) {
        double lo = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
        double hi = v.empty() ? 1.0 : *std::max_element(v.begin(), v.end());
        if (hi <= lo) hi = lo + 1.0;
        return std::pair{lo, hi};
    };
    const auto [x0, x1] = range(xs);
    const auto [y0, y1] = range(ys);
    const double span = double(size - 2 * margin);
    for (size_t i = 0; i < xs.size(); ++i) {
        const int cx = margin + static_cast<int>(std::lround((xs[i] - x0) / (x1 - x0) * span));
        const int cy = size - margin - static_cast<int>(std::lround((ys[i] - y0) / (y1 - y0) * span));
        for (int dy = -2; dy <= 2; ++dy) {
            for (int dx = -2; dx <= 2; ++dx) {
                if (dx * dx + dy * dy <= 5) put(cx + dx, cy + dy, 0);
            }
        }
    }

    FILE *fp = std::fopen(p.string().c_str(), "wb");
    if (!fp) throw error(errc::io, "cannot write " + p.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw error(errc::io, "libpng failed writing " + p.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(size), static_cast<png_uint_32>(size), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < size; ++y) png_write_row(png, px.data() + static_cast<size_t>(y * size));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// --- registration network checkpoint ---------------------------------------

inline void save_registration_network(const RegistrationModel &m, const fs::path &p) {
    ensure_parent(p);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw error(errc::io, "cannot write " + p.string());
    const std::string header = nlohmann::json{{"format", "imse-registration"},
                                              {"version", 1},
                                              {"base_channels", m.arch.base_channels},
                                              {"parameter_count", m.weights.size()},
                                              {"loss", m.loss},
                                              {"steps_trained", m.steps_trained}}
                                   .dump();
    os.write("IMSEREGN", 8);
    detail::put_u32le(os, static_cast<uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (float v : m.weights) detail::put_f32le(os, v);
    if (!os) throw error(errc::io, "failed writing " + p.string());
}

inline RegistrationModel load_registration_network(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw error(errc::io, "cannot read " + p.string());
    char magic[8] = {};
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "IMSEREGN") throw error(errc::io, p.string() + " is not a registration network");
    const uint32_t len = detail::get_u32le(is);
    std::string header(len, '\0');
    is.read(header.data(), len);
    RegistrationModel m;
    try {
        const auto j = nlohmann::json::parse(header);
        m.arch.base_channels = j.at("base_channels").get<int64_t>();
        m.loss = j.at("loss").get<std::string>();
        m.steps_trained = j.at("steps_trained").get<int64_t>();
        m.weights.resize(j.at("parameter_count").get<size_t>());
    } catch (const nlohmann::json::exception &e) {
        throw error(errc::io, "bad network header in " + p.string() + ": " + e.what());
    }
    for (float &v : m.weights) v = detail::get_f32le(is);
    if (!is) throw error(errc::io, "truncated network weights in " + p.string());
    nn::RegistrationNet<float> probe(m.arch);
    detail::require(probe.params().count() == static_cast<int64_t>(m.weights.size()), errc::io,
                    "network parameter count does not match its architecture");
    return m;
}

// --- dataset layout: pair_<k>/{moving.raw,target.raw,*.json,masks/*.pgm,true_field.raw} ---

struct StoredPair {
    GroundTruthPair pair;
    std::vector<std::string> names;
};

inline void write_pair(const fs::path &dir, const GroundTruthPair &gt, const std::vector<std::string> &names,
                       const nlohmann::json &meta) {
    fs::create_directories(dir / "masks");
    write_image_raw(dir / "moving.raw", gt.moving);
    write_image_raw(dir / "target.raw", gt.target);
    write_pgm(dir / "moving.pgm", gt.moving);
    write_pgm(dir / "target.pgm", gt.target);
    write_field_raw(dir / "true_field.raw", gt.true_field);
    write_field_raw(dir / "correction.raw", gt.correction);
    for (size_t k = 0; k < names.size(); ++k) {
        write_mask_pgm(dir / "masks" / ("moving_" + names[k] + ".pgm"), gt.masks_moving[k]);
        write_mask_pgm(dir / "masks" / ("target_" + names[k] + ".pgm"), gt.masks_target[k]);
    }
    nlohmann::json j = meta;
    j["structures"] = names;
    write_json(dir / "pair.json", j);
}

inline StoredPair read_pair(const fs::path &dir) {
    StoredPair sp;
    const auto j = read_json(dir / "pair.json");
    try {
        sp.names = j.at("structures").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception &e) {
        throw error(errc::io, (dir / "pair.json").string() + ": " + e.what());
    }
    sp.pair.moving = read_image_raw(dir / "moving.raw");
    sp.pair.target = read_image_raw(dir / "target.raw");
    sp.pair.true_field = read_field_raw(dir / "true_field.raw");
    sp.pair.correction = read_field_raw(dir / "correction.raw");
    for (const auto &n : sp.names) {
        sp.pair.masks_moving.push_back(read_mask_pgm(dir / "masks" / ("moving_" + n + ".pgm")));
        sp.pair.masks_target.push_back(read_mask_pgm(dir / "masks" / ("target_" + n + ".pgm")));
    }
    return sp;
}

/// pair_* subdirectories of a dataset, in numeric order.
inline std::vector<fs::path> list_pairs(const fs::path &root) {
    if (!fs::is_directory(root)) throw error(errc::io, root.string() + " is not a directory");
    std::vector<std::pair<long, fs::path>> found;
    for (const auto &e : fs::directory_iterator(root)) {
        const std::string name = e.path().filename().string();
        if (e.is_directory() && name.rfind("pair_", 0) == 0) {
            try {
                found.emplace_back(std::stol(name.substr(5)), e.path());
            } catch (const std::exception &) {
            }
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto &f : found) out.push_back(std::move(f.second));
    return out;
}

} // namespace imse::io
