#include <gtest/gtest.h>

#include "imse/mask_metrics.hpp"
#include "imse/phantom_data.hpp"
#include "imse/similarity_metrics.hpp"

using namespace imse;

TEST(GeneratePhantom, DeterministicPartitionAndMasks) {
    for (int classes : {2, 3, 5, 8}) {
        for (uint64_t s = 0; s < 10; ++s) {
            seed_stream a(s), b(s);
            const Phantom p = generate_phantom(a, 40, classes);
            const Phantom q = generate_phantom(b, 40, classes);
            EXPECT_EQ(p.class_map, q.class_map);
            EXPECT_EQ(p.image, q.image);
            ASSERT_EQ(p.masks.size(), size_t(classes - 1));
            ASSERT_EQ(p.names.size(), p.masks.size());
            EXPECT_EQ(p.names[0], "body");
            int64_t covered = 0, largest = 0;
            for (int k = 1; k < classes; ++k) {
                const BinaryMask &m = p.masks[k - 1];
                EXPECT_GT(m.count(), 0) << "class " << k;
                for (int64_t i = 0; i < m.size(); ++i) EXPECT_EQ(m[i], p.class_map.data[i] == k);
                covered += m.count();
                largest = std::max(largest, m.count());
            }
            int64_t background = 0;
            for (auto v : p.class_map.data) {
                EXPECT_LT(v, classes);
                background += v == 0;
            }
            EXPECT_EQ(covered + background, p.class_map.size());
            EXPECT_GE(double(largest), 0.05 * double(p.class_map.size()));
        }
    }
}

TEST(GeneratePhantom, RangeErrors) {
    seed_stream rng(1);
    EXPECT_THROW(generate_phantom(rng, 16, 4), error);
    EXPECT_THROW(generate_phantom(rng, 64, 1), error);
    EXPECT_THROW(generate_phantom(rng, 64, 9), error);
}

TEST(SimulateModality, PiecewiseConstantWithoutJitter) {
    seed_stream rng(2);
    const Phantom p = generate_phantom(rng, 32, 4);
    ModalityMap m = modality_a(4);
    m.jitter = 0.0;
    m.blur = 0.0;
    const ImageGrid img = simulate_modality(p, m, rng);
    for (int64_t i = 0; i < img.size(); ++i) EXPECT_EQ(img[i], m.intensities[p.class_map.data[i]]);
    EXPECT_EQ(img, p.image);
}

TEST(SimulateModality, InvertedOrderAnticorrelates) {
    seed_stream rng(3);
    const Phantom p = generate_phantom(rng, 48, 2);
    ModalityMap up, down;
    up.intensities = {-0.8, 0.8};
    down.intensities = {0.8, -0.8};
    for (auto *m : {&up, &down}) {
        m->jitter = 0.0;
        m->blur = 0.0;
    }
    EXPECT_LT(ncc(simulate_modality(p, up, rng), simulate_modality(p, down, rng)).value, 0.0);
}

TEST(SimulateModality, RangeAndValidation) {
    seed_stream rng(4);
    const Phantom p = generate_phantom(rng, 32, 5);
    ModalityMap m = modality_b(5);
    m.jitter = 0.9;
    for (double v : simulate_modality(p, m, rng).values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
    m.intensities = {0.0, 0.1};
    EXPECT_THROW(simulate_modality(p, m, rng), error);
}

TEST(Modalities, DistributionGapBetweenDefaults) {
    seed_stream rng(5);
    const Phantom p = generate_phantom(rng, 64, 5);
    const ImageGrid a = simulate_modality(p, modality_a(), rng), b = simulate_modality(p, modality_b(), rng);
    // Mean absolute per-pixel gap over the foreground structures.
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        if (p.class_map.data[i] == 0) continue;
        acc += std::abs(a[i] - b[i]);
        ++n;
    }
    EXPECT_GT(acc / double(n), 0.2);
}

TEST(GroundTruthPair, ZeroDeformationIsAligned) {
    seed_stream rng(6);
    const Phantom p = generate_phantom(rng, 32, 4);
    DeformationConfig zero;
    zero.strength = 0.0;
    const auto gt = generate_ground_truth_pair(p, modality_a(4), modality_b(4), zero, rng);
    EXPECT_EQ(gt.masks_moving, gt.masks_target);
    EXPECT_EQ(mean_dice(gt.masks_moving, gt.masks_target), 1.0);
}

TEST(GroundTruthPair, MisalignedDeterministicAndRecoverable) {
    for (uint64_t s = 0; s < 10; ++s) {
        seed_stream a(s), b(s);
        const Phantom p = generate_phantom(a, 64, 5);
        generate_phantom(b, 64, 5);
        const auto gt = generate_ground_truth_pair(p, modality_a(), modality_b(), DeformationConfig{}, a);
        const auto gt2 = generate_ground_truth_pair(p, modality_a(), modality_b(), DeformationConfig{}, b);
        EXPECT_EQ(gt.moving, gt2.moving);
        EXPECT_EQ(gt.true_field, gt2.true_field);
        const size_t k = largest_structure(gt.masks_target);
        EXPECT_LT(dice(gt.masks_moving[k], gt.masks_target[k]), kMisalignedDice);
        // Masks were warped with the same field as the moving image.
        EXPECT_EQ(gt.masks_moving, warp_masks(p.masks, gt.true_field));
        // Registering with the known correction restores the overlap.
        const auto restored = warp_masks(gt.masks_moving, gt.correction);
        EXPECT_GE(dice(restored[k], gt.masks_target[k]), 0.95) << "seed " << s;
    }
}
