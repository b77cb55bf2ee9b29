#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "imse/error.hpp"
#include "imse/evaluator.hpp"
#include "imse/image_core.hpp"
#include "imse/mask_metrics.hpp"
#include "imse/parallel.hpp"
#include "imse/registration.hpp"
#include "imse/rng.hpp"
#include "imse/spatial_transforms.hpp"

namespace imse {

/// Same quantity as smoothness_loss (one implementation).
inline double field_smoothness(const DeformationField &field) { return smoothness_loss(field); }

namespace detail {

inline BinaryMask mask_union(const std::vector<BinaryMask> &a, const std::vector<BinaryMask> &b) {
    detail::require(!a.empty() || !b.empty(), errc::empty_region, "no masks given");
    const BinaryMask &ref = a.empty() ? b.front() : a.front();
    BinaryMask u(ref.height(), ref.width());
    for (const auto *set : {&a, &b}) {
        for (const auto &m : *set) {
            detail::require_same_shape(m, ref, "mask union");
            for (int64_t y = 0; y < m.height(); ++y) {
                for (int64_t x = 0; x < m.width(); ++x) {
                    if (m(y, x)) u.set(y, x, true);
                }
            }
        }
    }
    return u;
}

inline double score_from_map(const std::vector<double> &e, const BinaryMask &region) {
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t i = 0; i < region.size(); ++i) {
        if (!region[i]) continue;
        acc += std::min(std::abs(e[static_cast<size_t>(i)]), 2.0);
        ++n;
    }
    if (n == 0) throw error(errc::empty_region, "alignment score region is empty");
    return 1.0 - (acc / double(n)) / 2.0;
}

} // namespace detail

/// 1 - mean|E(target, moving)| / 2 over the union of the two masks.
inline double imse_alignment_score(Evaluator<float> &ev, const ImageGrid &moving, const ImageGrid &target,
                                   const BinaryMask &mask_moving, const BinaryMask &mask_target) {
    detail::require_same_shape(moving, target, "imse_alignment_score");
    detail::require_same_shape(mask_moving, moving, "imse_alignment_score mask");
    detail::require_same_shape(mask_target, moving, "imse_alignment_score mask");
    const BinaryMask region = detail::mask_union({mask_moving}, {mask_target});
    if (region.empty()) throw error(errc::empty_region, "alignment score region is empty");
    const auto e = ev.forward({target.values().data()}, {moving.values().data()}, target.height(), target.width());
    return detail::score_from_map(e[0], region);
}

inline double imse_alignment_score(const EvaluatorModel &model, const ImageGrid &moving, const ImageGrid &target,
                                   const BinaryMask &mask_moving, const BinaryMask &mask_target) {
    Evaluator<float> ev(model);
    return imse_alignment_score(ev, moving, target, mask_moving, mask_target);
}

/// The score formula on a precomputed error map (exposed for property tests).
inline double alignment_score_from_map(const ErrorMap &e, const BinaryMask &region) {
    detail::require_same_shape(e, region, "alignment score");
    return detail::score_from_map(std::vector<double>(e.values().begin(), e.values().end()), region);
}

// --- correlation ----------------------------------------------------------

/// Average ranks (ties share the mean of their positions), 1-based.
inline std::vector<double> average_ranks(const std::vector<double> &v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < idx.size();) {
        size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = 0.5 * double(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double> &a, const std::vector<double> &b) {
    detail::require(a.size() == b.size() && a.size() >= 3, errc::degenerate_scores, "correlation needs >= 3 points");
    const double n = double(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw error(errc::degenerate_scores, "correlation undefined for constant input");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double spearman(const std::vector<double> &a, const std::vector<double> &b) {
    return pearson(average_ranks(a), average_ranks(b));
}

struct CorrelationPoint {
    double score = 0.0;
    double dice = 0.0;
    bool operator==(const CorrelationPoint &) const = default;
};

struct CorrelationReport {
    std::vector<CorrelationPoint> points;
    double spearman = 0.0;
    double pearson = 0.0;
    uint64_t seed = 0;
    int64_t transforms = 0;
    bool operator==(const CorrelationReport &) const = default;
};

inline nlohmann::json to_json(const CorrelationReport &r) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto &p : r.points) pts.push_back({{"score", p.score}, {"dice", p.dice}});
    return {{"spearman", r.spearman}, {"pearson", r.pearson}, {"seed", r.seed}, {"transforms", r.transforms},
            {"points", pts}};
}

inline CorrelationReport correlation_report_from_json(const nlohmann::json &j) {
    CorrelationReport r;
    try {
        r.spearman = j.at("spearman").get<double>();
        r.pearson = j.at("pearson").get<double>();
        r.seed = j.at("seed").get<uint64_t>();
        r.transforms = j.at("transforms").get<int64_t>();
        for (const auto &p : j.at("points")) r.points.push_back({p.at("score").get<double>(), p.at("dice").get<double>()});
    } catch (const nlohmann::json::exception &e) {
        throw error(errc::io, std::string("bad correlation report: ") + e.what());
    }
    return r;
}

/// An aligned (or partly aligned) pair with per-structure masks.
struct AssessmentPair {
    ImageGrid moving;
    ImageGrid target;
    std::vector<BinaryMask> masks_moving;
    std::vector<BinaryMask> masks_target;
};

struct CorrelationConfig {
    DeformationConfig deformation{};
    /// Each transform draws its strength uniformly from [0, max_strength].
    double max_strength = 1.5;
};

/// Perturbs base pairs with random transforms and pairs the resulting
/// alignment score with the structure-mean Dice against the target masks.
inline CorrelationReport correlation_experiment(const EvaluatorModel &model, const std::vector<AssessmentPair> &base,
                                                int64_t transforms, uint64_t seed, const CorrelationConfig &config = {}) {
    detail::require(!base.empty(), errc::empty_dataset, "correlation_experiment needs at least one base pair");
    detail::require(transforms >= 3, errc::bad_config, "correlation_experiment needs >= 3 transforms");
    detail::require(std::isfinite(config.max_strength) && config.max_strength >= 0.0, errc::bad_config,
                    "max_strength must be >= 0");
    seed_stream rng(seed);
    std::vector<seed_stream> streams;
    for (int64_t t = 0; t < transforms; ++t) streams.push_back(rng.split());
    CorrelationReport rep;
    rep.seed = seed;
    rep.transforms = transforms;
    rep.points.resize(static_cast<size_t>(transforms));
    parallel_for(transforms, [&](int64_t t) {
        const AssessmentPair &p = base[static_cast<size_t>(t) % base.size()];
        DeformationConfig dc = config.deformation;
        dc.strength = streams[t].uniform(0.0, config.max_strength) * config.deformation.strength;
        const DeformationField f = sample_deformation(streams[t], dc, p.moving.height(), p.moving.width());
        const ImageGrid moved = warp(p.moving, f);
        const auto masks = warp_masks(p.masks_moving, f);
        Evaluator<float> ev(model);
        const auto e = ev.forward({p.target.values().data()}, {moved.values().data()}, moved.height(), moved.width());
        rep.points[t] = {detail::score_from_map(e[0], detail::mask_union(masks, p.masks_target)),
                         mean_dice(masks, p.masks_target)};
    });
    std::vector<double> s, d;
    for (const auto &pt : rep.points) {
        s.push_back(pt.score);
        d.push_back(pt.dice);
    }
    if (std::all_of(s.begin(), s.end(), [&](double v) { return v == s.front(); })) {
        throw error(errc::degenerate_scores, "all alignment scores are identical");
    }
    rep.spearman = spearman(s, d);
    rep.pearson = pearson(s, d);
    return rep;
}

// --- translation fidelity --------------------------------------------------

/// Mean absolute error normalised by the [-1, 1] intensity range.
inline double nmae(const ImageGrid &a, const ImageGrid &b) {
    detail::require_same_shape(a, b, "nmae");
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / double(a.size()) / 2.0;
}

/// PSNR in dB with peak-to-peak range 2.
inline double psnr(const ImageGrid &a, const ImageGrid &b) {
    detail::require_same_shape(a, b, "psnr");
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = acc / double(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(4.0 / mse);
}

/// SSIM with a Gaussian window (sigma 1.5) and data range 2.
inline double ssim(const ImageGrid &a, const ImageGrid &b) {
    detail::require_same_shape(a, b, "ssim");
    const double c1 = std::pow(0.01 * 2.0, 2), c2 = std::pow(0.03 * 2.0, 2);
    const int64_t h = a.height(), w = a.width();
    Grid<double> ga = a.grid(), gb = b.grid(), aa(h, w), bb(h, w), ab(h, w);
    for (int64_t i = 0; i < a.size(); ++i) {
        aa.data[i] = a[i] * a[i];
        bb.data[i] = b[i] * b[i];
        ab.data[i] = a[i] * b[i];
    }
    const auto ma = gaussian_smooth(ga, 1.5), mb = gaussian_smooth(gb, 1.5);
    const auto saa = gaussian_smooth(aa, 1.5), sbb = gaussian_smooth(bb, 1.5), sab = gaussian_smooth(ab, 1.5);
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double va = saa.data[i] - ma.data[i] * ma.data[i];
        const double vb = sbb.data[i] - mb.data[i] * mb.data[i];
        const double cov = sab.data[i] - ma.data[i] * mb.data[i];
        acc += ((2 * ma.data[i] * mb.data[i] + c1) * (2 * cov + c2)) /
               ((ma.data[i] * ma.data[i] + mb.data[i] * mb.data[i] + c1) * (va + vb + c2));
    }
    return acc / double(a.size());
}

} // namespace imse
