#include <gtest/gtest.h>

#include "imse/evaluation.hpp"
#include "imse/phantom_data.hpp"
#include "test_support.hpp"

using namespace imse;

namespace {

BinaryMask block(int64_t h, int64_t w, int64_t y0, int64_t x0, int64_t bh, int64_t bw) {
    BinaryMask m(h, w);
    for (int64_t y = y0; y < y0 + bh; ++y) {
        for (int64_t x = x0; x < x0 + bw; ++x) m.set(y, x, true);
    }
    return m;
}

BinaryMask random_mask(seed_stream &rng, int64_t h, int64_t w, double p) {
    BinaryMask m(h, w);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) m.set(y, x, rng.uniform() < p);
    }
    return m;
}

// Brute-force HD95 over all boundary pairs, independent boundary test.
double hd95_oracle(const BinaryMask &a, const BinaryMask &b) {
    auto boundary = [](const BinaryMask &m) {
        std::vector<std::pair<int64_t, int64_t>> out;
        for (int64_t y = 0; y < m.height(); ++y) {
            for (int64_t x = 0; x < m.width(); ++x) {
                if (!m(y, x)) continue;
                bool edge = false;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int64_t yy = y + dy, xx = x + dx;
                        if (yy < 0 || xx < 0 || yy >= m.height() || xx >= m.width() || !m(yy, xx)) edge = true;
                    }
                }
                if (edge) out.emplace_back(y, x);
            }
        }
        return out;
    };
    const auto ba = boundary(a), bb = boundary(b);
    std::vector<double> d;
    for (const auto *pair : {&ba, &bb}) {
        const auto &from = *pair;
        const auto &to = pair == &ba ? bb : ba;
        for (auto [y, x] : from) {
            double best = 1e300;
            for (auto [v, u] : to) best = std::min(best, std::hypot(double(y - v), double(x - u)));
            d.push_back(best);
        }
    }
    std::sort(d.begin(), d.end());
    const double pos = 0.95 * double(d.size() - 1);
    const size_t lo = size_t(std::floor(pos));
    const size_t hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (pos - double(lo)) * (d[hi] - d[lo]);
}

} // namespace

TEST(Dice, Examples) {
    const BinaryMask a = block(6, 6, 1, 1, 2, 2);
    EXPECT_EQ(dice(a, a), 1.0);
    EXPECT_EQ(dice(a, block(6, 6, 4, 4, 2, 2)), 0.0);
    EXPECT_DOUBLE_EQ(dice(a, block(6, 6, 1, 2, 2, 2)), 0.5);
    try {
        dice(BinaryMask(3, 3), BinaryMask(3, 3));
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::both_empty);
    }
    EXPECT_EQ(dice(a, BinaryMask(6, 6)), 0.0);
}

TEST(Dice, SymmetricAndBounded) {
    seed_stream rng(1);
    for (int t = 0; t < 50; ++t) {
        const BinaryMask a = random_mask(rng, 9, 9, 0.4), b = random_mask(rng, 9, 9, 0.4);
        const double d = dice(a, b);
        EXPECT_EQ(d, dice(b, a));
        EXPECT_LE(d, 1.0);
        if (!(a == b)) {
            EXPECT_LT(d, 1.0);
        }
    }
}

TEST(Hd95, Examples) {
    const BinaryMask a = block(30, 30, 10, 10, 8, 8);
    EXPECT_EQ(hd95(a, a), 0.0);
    for (int k : {1, 2, 3, 5}) EXPECT_NEAR(hd95(a, block(30, 30, 10, 10 + k, 8, 8)), k, 0.5);
    BinaryMask p(20, 20), q(20, 20);
    p.set(3, 4, true);
    q.set(7, 7, true);
    EXPECT_DOUBLE_EQ(hd95(p, q), 5.0);
    try {
        hd95(p, BinaryMask(20, 20));
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::empty_mask);
    }
}

TEST(Hd95, MatchesBruteForceAndIsSymmetric) {
    seed_stream rng(2);
    for (int t = 0; t < 30; ++t) {
        const BinaryMask a = random_mask(rng, 12, 11, 0.3), b = random_mask(rng, 12, 11, 0.5);
        if (a.empty() || b.empty()) continue;
        EXPECT_NEAR(hd95(a, b), hd95_oracle(a, b), 1e-12);
        EXPECT_EQ(hd95(a, b), hd95(b, a));
    }
}

TEST(MeanDice, SkipsStructuresAbsentInBoth) {
    const std::vector<BinaryMask> a{block(6, 6, 0, 0, 2, 2), BinaryMask(6, 6)};
    const std::vector<BinaryMask> b{block(6, 6, 0, 0, 2, 2), BinaryMask(6, 6)};
    EXPECT_EQ(mean_dice(a, b), 1.0);
}

TEST(FieldSmoothness, SharesImplementation) {
    seed_stream rng(3);
    DeformationField ramp(8, 8);
    for (int64_t y = 0; y < 8; ++y) {
        for (int64_t x = 0; x < 8; ++x) ramp.dy(y, x) = 0.5 * double(y);
    }
    EXPECT_EQ(field_smoothness(ramp), smoothness_loss(ramp));
    EXPECT_EQ(field_smoothness(DeformationField(4, 4)), 0.0);
    const auto f = test::random_field(rng, 8, 8, 1.0);
    EXPECT_EQ(field_smoothness(f), smoothness_loss(f));
}

TEST(AlignmentScore, FormulaEndpointsAndMonotonicity) {
    const BinaryMask region = block(4, 4, 0, 0, 4, 2);
    EXPECT_EQ(alignment_score_from_map(ErrorMap(4, 4, 0.0), region), 1.0);
    EXPECT_EQ(alignment_score_from_map(ErrorMap(4, 4, 2.0), region), 0.0);
    EXPECT_EQ(alignment_score_from_map(ErrorMap(4, 4, -2.0), region), 0.0);
    double prev = 2.0;
    for (double m = 0.0; m <= 2.0; m += 0.125) {
        const double s = alignment_score_from_map(ErrorMap(4, 4, m), region);
        EXPECT_DOUBLE_EQ(s, 1.0 - m / 2.0);
        EXPECT_LE(s, prev);
        prev = s;
    }
    try {
        alignment_score_from_map(ErrorMap(4, 4, 0.0), BinaryMask(4, 4));
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::empty_region);
    }
}

TEST(AlignmentScore, UsesMaskUnionOnly) {
    std::vector<double> v(16, 0.0);
    v[15] = 2.0; // outside the region, must not count
    const ErrorMap e(4, 4, v);
    EXPECT_EQ(alignment_score_from_map(e, block(4, 4, 0, 0, 2, 2)), 1.0);
}

TEST(Correlation, RanksAndCoefficients) {
    EXPECT_EQ(average_ranks({3.0, 1.0, 2.0, 1.0}), (std::vector<double>{4.0, 1.5, 3.0, 1.5}));
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {2, 4, 6, 8}), 1.0, 1e-12);
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {8, 6, 4, 2}), -1.0, 1e-12);
    EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {1, 4, 9, 16, 25}), 1.0, 1e-12);
    // Hand-computed: ranks (1,2,3) vs (2,1,3) -> rho = 0.5.
    EXPECT_NEAR(spearman({0.1, 0.2, 0.3}, {5.0, 4.0, 6.0}), 0.5, 1e-12);
    EXPECT_THROW(pearson({1, 2}, {1, 2}), error);
    EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), error);
}

TEST(CorrelationExperiment, DeterministicRoundTripAndDegenerate) {
    EvaluatorConfig c;
    c.arch = {{4, 6, 8}, 1};
    const EvaluatorModel m = init_evaluator(c);
    seed_stream rng(4);
    const Phantom p = generate_phantom(rng, 32, 4);
    const ImageGrid img = simulate_modality(p, modality_a(4), rng);
    const std::vector<AssessmentPair> base{{img, img, p.masks, p.masks}};
    const auto r1 = correlation_experiment(m, base, 8, 11);
    const auto r2 = correlation_experiment(m, base, 8, 11);
    EXPECT_EQ(r1, r2);
    EXPECT_EQ(r1.points.size(), 8u);
    EXPECT_GE(r1.spearman, -1.0);
    EXPECT_LE(r1.spearman, 1.0);
    const nlohmann::json j = nlohmann::json::parse(to_json(r1).dump());
    EXPECT_EQ(correlation_report_from_json(j), r1);

    CorrelationConfig identity;
    identity.max_strength = 0.0;
    try {
        correlation_experiment(m, base, 5, 11, identity);
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::degenerate_scores);
    }
    EXPECT_THROW(correlation_experiment(m, base, 2, 11), error);
    EXPECT_THROW(correlation_experiment(m, {}, 5, 11), error);
}

TEST(TranslationMetrics, IdentityAndKnownValues) {
    const ImageGrid a = test::smooth_image(16, 16);
    EXPECT_EQ(nmae(a, a), 0.0);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    const ImageGrid lo(8, 8, -1.0), hi(8, 8, 1.0);
    EXPECT_DOUBLE_EQ(nmae(lo, hi), 1.0);
    EXPECT_NEAR(psnr(lo, hi), 0.0, 1e-12);
    const ImageGrid z(8, 8, 0.0), q(8, 8, 0.2);
    EXPECT_NEAR(psnr(z, q), 10.0 * std::log10(4.0 / 0.04), 1e-9);
    EXPECT_LT(ssim(a, test::smooth_image(16, 16, 1.5)), 0.9);
}
