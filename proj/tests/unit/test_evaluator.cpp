#include <gtest/gtest.h>

#include <filesystem>

#include "imse/evaluator.hpp"
#include "test_support.hpp"

using namespace imse;

namespace {

EvaluatorConfig tiny_config() {
    EvaluatorConfig c;
    c.arch = {{4, 6, 8}, 1};
    c.steps = 30;
    c.batch_size = 2;
    c.learning_rate = 2e-3;
    c.seed = 3;
    return c;
}

std::vector<ImageGrid> tiny_images() {
    return {test::smooth_image(16, 16, 0.0), test::smooth_image(16, 16, 0.7), test::smooth_image(16, 16, 1.9)};
}

} // namespace

TEST(InitEvaluator, DeterministicAndSeedSensitive) {
    EvaluatorConfig c = tiny_config();
    EXPECT_EQ(init_evaluator(c), init_evaluator(c));
    const auto a = init_evaluator(c);
    c.seed = 4;
    EXPECT_NE(a.weights, init_evaluator(c).weights);
    EXPECT_EQ(a.modality, "A");
}

TEST(InitEvaluator, RejectsBadConfig) {
    EvaluatorConfig c = tiny_config();
    c.learning_rate = 0.0;
    try {
        init_evaluator(c);
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::bad_config);
    }
    c = tiny_config();
    c.pair.n_min = 5;
    c.pair.n_max = 4;
    EXPECT_THROW(init_evaluator(c), error);
}

TEST(PredictErrorMap, ShapeAndBoundOnDefaultArch) {
    EvaluatorConfig c;
    const auto m = init_evaluator(c);
    seed_stream rng(1);
    const ImageGrid a = test::random_image(rng, 64, 64), b = test::random_image(rng, 64, 64);
    const ErrorMap e = predict_error_map(m, a, b);
    EXPECT_EQ(e.height(), 64);
    EXPECT_EQ(e.width(), 64);
    for (double v : e.values()) {
        EXPECT_GE(v, -2.0);
        EXPECT_LE(v, 2.0);
    }
}

TEST(PredictErrorMap, PadsAndCropsOddSizes) {
    const auto m = init_evaluator(tiny_config());
    seed_stream rng(2);
    const ImageGrid a = test::random_image(rng, 13, 10), b = test::random_image(rng, 13, 10);
    const ErrorMap e = predict_error_map(m, a, b);
    EXPECT_EQ(e.height(), 13);
    EXPECT_EQ(e.width(), 10);
    EXPECT_THROW(predict_error_map(m, a, test::random_image(rng, 12, 10)), error);
}

TEST(Translate, IsReferenceMinusPrediction) {
    auto m = init_evaluator(tiny_config());
    seed_stream rng(3);
    const ImageGrid ref = test::random_image(rng, 12, 12), src = test::random_image(rng, 12, 12);
    const ErrorMap e = predict_error_map(m, ref, src);
    const ImageGrid t = translate(m, ref, src);
    for (int64_t i = 0; i < ref.size(); ++i) EXPECT_DOUBLE_EQ(t[i], std::clamp(ref[i] - e[i], -1.0, 1.0));
}

TEST(Evaluator, BatchForwardMatchesSingle) {
    const auto m = init_evaluator(tiny_config());
    Evaluator<float> ev(m);
    seed_stream rng(4);
    const ImageGrid a = test::random_image(rng, 8, 12), b = test::random_image(rng, 8, 12), c = test::random_image(rng, 8, 12);
    const auto batch = ev.forward({a.values().data(), c.values().data()}, {b.values().data(), a.values().data()}, 8, 12);
    const auto single = ev.forward({c.values().data()}, {a.values().data()}, 8, 12);
    for (size_t i = 0; i < single[0].size(); ++i) EXPECT_NEAR(batch[1][i], single[0][i], 1e-5);
}

TEST(Evaluator, MovingGradientMatchesFiniteDifferences) {
    // Double-precision runtime, odd size so padding adjoint is exercised.
    auto m = init_evaluator(tiny_config());
    seed_stream rng(5);
    for (auto &w : m.weights) w += float(rng.uniform(-0.05, 0.05));
    Evaluator<double> ev(m);
    const int64_t h = 7, w = 9;
    const ImageGrid ref = test::random_image(rng, h, w);
    std::vector<double> mov(h * w), probe(h * w);
    for (auto &v : mov) v = rng.uniform(-1.0, 1.0);
    for (auto &v : probe) v = rng.uniform(-1.0, 1.0);
    auto f = [&]() {
        const auto out = ev.forward({ref.values().data()}, {mov.data()}, h, w);
        double s = 0.0;
        for (int64_t i = 0; i < h * w; ++i) s += probe[i] * out[0][i];
        return s;
    };
    f();
    const auto g = ev.backward_moving({probe});
    for (int64_t i = 0; i < h * w; ++i) {
        const double num = test::central_difference(mov, static_cast<size_t>(i), 1e-6, f);
        EXPECT_LT(test::rel_error(g[0][i], num, 1e-7), 1e-5) << i;
    }
}

TEST(TrainEvaluator, ReducesLossAndIsDeterministic) {
    EvaluatorConfig c = tiny_config();
    c.steps = 60;
    const auto init = init_evaluator(c);
    const auto r1 = train_evaluator(init, tiny_images(), c);
    const auto r2 = train_evaluator(init, tiny_images(), c);
    ASSERT_EQ(r1.loss_trace.size(), 60u);
    EXPECT_EQ(r1.model, r2.model);
    EXPECT_EQ(r1.loss_trace, r2.loss_trace);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += r1.loss_trace[i];
        last += r1.loss_trace[50 + i];
    }
    EXPECT_LT(last, first);
    EXPECT_EQ(r1.model.steps_trained, 60);
    EXPECT_EQ(r1.model.final_loss, r1.loss_trace.back());
    EXPECT_NE(r1.model.weights, init.weights);
}

TEST(TrainEvaluator, ThreadCountDoesNotChangeResult) {
    EvaluatorConfig c = tiny_config();
    c.steps = 5;
    c.batch_size = 4;
    const auto init = init_evaluator(c);
    setenv("IMSE_LAB_THREADS", "1", 1);
    const auto a = train_evaluator(init, tiny_images(), c);
    setenv("IMSE_LAB_THREADS", "3", 1);
    const auto b = train_evaluator(init, tiny_images(), c);
    unsetenv("IMSE_LAB_THREADS");
    EXPECT_EQ(a.model, b.model);
}

TEST(TrainEvaluator, EmptyDataset) {
    try {
        train_evaluator(init_evaluator(tiny_config()), {}, tiny_config());
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::empty_dataset);
    }
}

TEST(TrainEvaluator, RecordsNoiseProvenance) {
    EvaluatorConfig c = tiny_config();
    c.steps = 1;
    c.pair.noise = NoiseMode::bezier;
    c.pair.n_min = c.pair.n_max = 2;
    const auto r = train_evaluator(init_evaluator(c), tiny_images(), c);
    EXPECT_EQ(r.model.noise, "bezier");
    EXPECT_EQ(r.model.n_max, 2);
}

TEST(Checkpoint, RoundTripAndCorruption) {
    const auto dir = std::filesystem::temp_directory_path() / "imse_ckpt_test";
    std::filesystem::create_directories(dir);
    EvaluatorConfig c = tiny_config();
    c.steps = 2;
    const auto m = train_evaluator(init_evaluator(c), tiny_images(), c).model;
    const auto path = (dir / "ev.bin").string();
    save_evaluator(m, path);
    EXPECT_EQ(load_evaluator(path), m);

    // Header declares the architecture; truncating the weights must fail.
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 4);
    EXPECT_THROW(load_evaluator(path), error);
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOTACKPT";
    }
    try {
        load_evaluator(path);
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::io);
    }
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, HeaderIsLittleEndianJson) {
    const auto dir = std::filesystem::temp_directory_path() / "imse_ckpt_hdr";
    std::filesystem::create_directories(dir);
    const auto m = init_evaluator(tiny_config());
    const auto path = (dir / "ev.bin").string();
    save_evaluator(m, path);
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    ASSERT_EQ(bytes.substr(0, 8), "IMSEEVAL");
    const uint32_t len = uint8_t(bytes[8]) | uint8_t(bytes[9]) << 8 | uint8_t(bytes[10]) << 16 | uint32_t(uint8_t(bytes[11])) << 24;
    const auto j = nlohmann::json::parse(bytes.substr(12, len));
    EXPECT_EQ(j.at("parameter_count").get<size_t>(), m.weights.size());
    EXPECT_EQ(bytes.size(), 12 + len + 4 * m.weights.size());
    std::filesystem::remove_all(dir);
}
