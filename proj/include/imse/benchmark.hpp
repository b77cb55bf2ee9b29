#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "imse/evaluation.hpp"
#include "imse/evaluator.hpp"
#include "imse/phantom_data.hpp"
#include "imse/registration.hpp"

namespace imse {

/// The network default of 1e-4 leaves every loss far from converged after
/// 1500 steps on 64x64 pairs; the benchmark trains all losses at 5e-4.
inline RegistrationConfig desk_registration() {
    RegistrationConfig r;
    r.network_learning_rate = 5e-4;
    return r;
}

/// Desk-scale analogue of the learned-registration comparison: one
/// registration network per loss, trained on synthetic cross-modality pairs
/// (moving in modality B, target in modality A) and scored on held-out pairs.
struct BenchmarkConfig {
    std::string suite = "desk";
    uint64_t seed = 2024;
    int64_t size = 64;
    int classes = kDefaultClasses;
    int64_t evaluator_images = 200;
    int64_t train_pairs = 200;
    int64_t test_pairs = 20;
    EvaluatorConfig evaluator{};
    RegistrationConfig registration = desk_registration();
    DeformationConfig deformation{};
    std::vector<std::string> losses{"mae", "ncc", "mi", "mind", "imse-bc", "imse-sr"};

    void validate() const {
        detail::require(size >= 32 && classes >= 2 && classes <= 8, errc::bad_config, "bad phantom size/classes");
        detail::require(evaluator_images >= 1 && train_pairs >= 1 && test_pairs >= 1, errc::bad_config,
                        "benchmark counts must be >= 1");
        evaluator.validate();
        registration.validate();
        deformation.validate();
        for (const auto &l : losses) {
            if (l == "imse-sr" || l == "imse-bc" || l == "imse-n2") continue;
            parse_metric(l);
        }
    }
};

/// Small, fast variant used for smoke tests and determinism checks.
inline BenchmarkConfig quick_benchmark_config() {
    BenchmarkConfig c;
    c.suite = "quick";
    c.size = 32;
    c.evaluator_images = 8;
    c.train_pairs = 8;
    c.test_pairs = 4;
    c.evaluator.steps = 20;
    c.evaluator.batch_size = 4;
    c.registration.steps = 20;
    c.registration.batch_size = 2;
    return c;
}

inline BenchmarkConfig benchmark_config_for_suite(const std::string &suite) {
    if (suite == "desk") return BenchmarkConfig{};
    if (suite == "quick") return quick_benchmark_config();
    throw error(errc::bad_config, "unknown benchmark suite '" + suite + "' (expected desk or quick)");
}

struct BenchmarkData {
    std::vector<ImageGrid> evaluator_images;
    std::vector<RegistrationPair> train;
    std::vector<GroundTruthPair> test;
};

/// All data of a suite, derived from the seed only: evaluator training
/// images are single-modality (A) phantoms; train/test pairs are
/// cross-modality ground-truth pairs.
inline BenchmarkData make_benchmark_data(const BenchmarkConfig &cfg) {
    cfg.validate();
    seed_stream root(cfg.seed);
    seed_stream img_rng = root.split(), train_rng = root.split(), test_rng = root.split();
    BenchmarkData d;
    const ModalityMap a = modality_a(cfg.classes), b = modality_b(cfg.classes);
    for (int64_t i = 0; i < cfg.evaluator_images; ++i) {
        const Phantom p = generate_phantom(img_rng, cfg.size, cfg.classes);
        d.evaluator_images.push_back(simulate_modality(p, a, img_rng));
    }
    for (int64_t i = 0; i < cfg.train_pairs; ++i) {
        const Phantom p = generate_phantom(train_rng, cfg.size, cfg.classes);
        auto gt = generate_ground_truth_pair(p, a, b, cfg.deformation, train_rng);
        d.train.push_back({std::move(gt.moving), std::move(gt.target)});
    }
    for (int64_t i = 0; i < cfg.test_pairs; ++i) {
        const Phantom p = generate_phantom(test_rng, cfg.size, cfg.classes);
        d.test.push_back(generate_ground_truth_pair(p, a, b, cfg.deformation, test_rng));
    }
    return d;
}

/// Evaluator variant keyed by loss name: imse-sr (Shuffle Remap, N in
/// [n_min, n_max]), imse-bc (Bezier curve shift), imse-n2 (Shuffle Remap, N = 2).
inline EvaluatorConfig evaluator_variant(const BenchmarkConfig &cfg, const std::string &loss) {
    EvaluatorConfig e = cfg.evaluator;
    e.pair.deformation = cfg.deformation;
    if (loss == "imse-bc") {
        e.pair.noise = NoiseMode::bezier;
    } else if (loss == "imse-n2") {
        e.pair.noise = NoiseMode::shuffle_remap;
        e.pair.n_min = e.pair.n_max = 2;
    } else {
        e.pair.noise = NoiseMode::shuffle_remap;
    }
    return e;
}

inline EvaluatorModel train_benchmark_evaluator(const BenchmarkConfig &cfg, const BenchmarkData &data,
                                                const std::string &loss) {
    const EvaluatorConfig e = evaluator_variant(cfg, loss);
    return train_evaluator(init_evaluator(e), data.evaluator_images, e).model;
}

struct BenchmarkRow {
    std::string method;
    double dice = 0.0;
    double dice_std = 0.0;
    double hd95 = 0.0;
    double smoothness = 0.0;
};

struct BenchmarkReport {
    BenchmarkConfig config;
    std::vector<BenchmarkRow> rows;
    std::map<std::string, RegistrationModel> networks;
    std::map<std::string, EvaluatorModel> evaluators;

    const BenchmarkRow &row(const std::string &method) const {
        for (const auto &r : rows) {
            if (r.method == method) return r;
        }
        throw error(errc::bad_config, "no benchmark row '" + method + "'");
    }
};

inline BenchmarkRow summarize(const std::string &method, const std::vector<DeformationField> &fields,
                              const std::vector<GroundTruthPair> &test) {
    BenchmarkRow row{method};
    std::vector<double> dices;
    for (size_t i = 0; i < test.size(); ++i) {
        const auto m = score_registration(fields[i], test[i].masks_moving, test[i].masks_target);
        dices.push_back(m.dice);
        row.hd95 += m.hd95;
        row.smoothness += m.smoothness;
    }
    const double n = double(test.size());
    for (double d : dices) row.dice += d;
    row.dice /= n;
    for (double d : dices) row.dice_std += (d - row.dice) * (d - row.dice);
    row.dice_std = std::sqrt(row.dice_std / n);
    row.hd95 /= n;
    row.smoothness /= n;
    return row;
}

/// Trains a registration network for one loss and scores it.
inline BenchmarkRow run_benchmark_row(const BenchmarkConfig &cfg, const BenchmarkData &data, const std::string &loss,
                                      std::shared_ptr<const EvaluatorModel> evaluator, RegistrationModel *trained = nullptr) {
    Similarity sim = make_similarity(loss, std::move(evaluator));
    RegistrationConfig rc = cfg.registration;
    rc.loss = loss;
    const RegistrationModel init = init_registration_network(rc.arch, cfg.seed ^ 0xA11CEULL);
    const auto result = train_registration_network(init, data.train, sim, rc);
    std::vector<RegistrationPair> test;
    for (const auto &p : data.test) test.push_back({p.moving, p.target});
    const auto fields = predict_fields(result.model, test);
    if (trained) *trained = result.model;
    return summarize(loss, fields, data.test);
}

/// `pretrained` may supply evaluators (keyed by loss name) to skip training.
inline BenchmarkReport run_benchmark(const BenchmarkConfig &cfg,
                                     const std::map<std::string, EvaluatorModel> &pretrained = {}) {
    const BenchmarkData data = make_benchmark_data(cfg);
    BenchmarkReport rep;
    rep.config = cfg;
    const int64_t h = cfg.size, w = cfg.size;
    std::vector<DeformationField> zero(data.test.size(), DeformationField(h, w));
    rep.rows.push_back(summarize("Initial", zero, data.test));
    for (const auto &loss : cfg.losses) {
        std::shared_ptr<const EvaluatorModel> ev;
        if (loss.rfind("imse", 0) == 0) {
            auto it = pretrained.find(loss);
            EvaluatorModel m = it != pretrained.end() ? it->second : train_benchmark_evaluator(cfg, data, loss);
            rep.evaluators[loss] = m;
            ev = std::make_shared<const EvaluatorModel>(std::move(m));
        }
        RegistrationModel net;
        rep.rows.push_back(run_benchmark_row(cfg, data, loss, ev, &net));
        rep.networks[loss] = std::move(net);
    }
    return rep;
}

inline std::string fixed6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string benchmark_csv(const BenchmarkReport &rep) {
    std::ostringstream os;
    os << "method,dice,dice_std,hd95,smoothness\n";
    for (const auto &r : rep.rows) {
        os << r.method << "," << fixed6(r.dice) << "," << fixed6(r.dice_std) << "," << fixed6(r.hd95) << ","
           << fixed6(r.smoothness) << "\n";
    }
    return os.str();
}

inline std::string benchmark_markdown(const BenchmarkReport &rep) {
    std::ostringstream os;
    os << "| Method | Dice | Dice std | HD95 (px) | ‖∇φ‖² |\n|---|---|---|---|---|\n";
    for (const auto &r : rep.rows) {
        os << "| " << r.method << " | " << fixed6(r.dice) << " | " << fixed6(r.dice_std) << " | " << fixed6(r.hd95)
           << " | " << fixed6(r.smoothness) << " |\n";
    }
    return os.str();
}

} // namespace imse
