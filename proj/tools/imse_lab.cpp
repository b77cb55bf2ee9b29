// imse_lab: batch entry point for the IMSE desk lab.
//
// Every command accepts --config <json> (keys as written to
// resolved_config.json); explicit flags override config keys. Errors map to
// distinct exit codes (see imse::exit_code).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imse/benchmark.hpp"
#include "imse/config.hpp"
#include "imse/evaluation.hpp"
#include "imse/evaluator.hpp"
#include "imse/io.hpp"
#include "imse/phantom_data.hpp"
#include "imse/registration.hpp"
#include "imse/shuffle_remap.hpp"

namespace fs = std::filesystem;
using namespace imse;

namespace {

template <class T>
void override_with(T &dst, const std::optional<T> &flag) {
    if (flag) dst = *flag;
}

json load_config(const std::string &path) { return path.empty() ? json::object() : io::read_json(path); }

void write_resolved(const fs::path &out, const std::string &command, json cfg) {
    cfg["command"] = command;
    io::write_json(out / "resolved_config.json", cfg);
}

// --- gen-data ----------------------------------------------------------------

struct GenData {
    std::string config, out;
    std::optional<uint64_t> seed;
    std::optional<int64_t> count, size;
    std::optional<int> classes;

    int run() const {
        uint64_t s = 1;
        int64_t n = 20, sz = kDefaultPhantomSize;
        int cls = kDefaultClasses;
        DeformationConfig def;
        ConfigReader(load_config(config), "gen-data")
            .get("seed", s)
            .get("count", n)
            .get("size", sz)
            .get("classes", cls)
            .nested("deformation", [&](const json &j, const std::string &c) { read_config(j, c, def); })
            .finish();
        override_with(s, seed);
        override_with(n, count);
        override_with(sz, size);
        override_with(cls, classes);
        detail::require(n >= 1, errc::bad_config, "count must be >= 1");
        const fs::path root(out);
        seed_stream rng(s);
        const ModalityMap a = modality_a(cls), b = modality_b(cls);
        for (int64_t k = 0; k < n; ++k) {
            seed_stream pr = rng.split();
            const Phantom p = generate_phantom(pr, sz, cls);
            const auto gt = generate_ground_truth_pair(p, a, b, def, pr);
            io::write_pair(root / ("pair_" + std::to_string(k)), gt, p.names,
                           {{"index", k}, {"target_modality", "A"}, {"moving_modality", "B"},
                            {"initial_dice", mean_dice(gt.masks_moving, gt.masks_target)}});
        }
        write_resolved(root, "gen-data",
                       {{"seed", s}, {"count", n}, {"size", sz}, {"classes", cls}, {"deformation", to_json(def)}});
        std::cout << "wrote " << n << " pairs to " << root.string() << "\n";
        return 0;
    }
};

// --- remap-demo --------------------------------------------------------------

json to_json(const RemapSpec &s) { return {{"control_points", s.control_points}, {"permutation", s.permutation}}; }

RemapSpec remap_from_json(const json &j) {
    RemapSpec s;
    ConfigReader(j, "remap spec").get("control_points", s.control_points).get("permutation", s.permutation).finish();
    s.validate();
    return s;
}

struct RemapDemo {
    std::string config, input, out, spec_path;
    std::optional<uint64_t> seed;
    std::optional<int> n_min, n_max;
    bool identity = false;

    int run() const {
        uint64_t s = 1;
        int lo = 2, hi = 50;
        ConfigReader(load_config(config), "remap-demo").get("seed", s).get("n_min", lo).get("n_max", hi).finish();
        override_with(s, seed);
        override_with(lo, n_min);
        override_with(hi, n_max);
        const fs::path in(input), root(out);
        const ImageGrid img = io::read_image(in);
        RemapSpec spec;
        if (!spec_path.empty()) {
            spec = remap_from_json(io::read_json(spec_path));
        } else if (identity) {
            seed_stream rng(s);
            spec = sample_remap(rng, lo, hi);
            std::iota(spec.permutation.begin(), spec.permutation.end(), 0);
        } else {
            seed_stream rng(s);
            spec = sample_remap(rng, lo, hi);
        }
        const ImageGrid outimg = apply_remap(img, spec);
        if (in.extension() == ".pgm") {
            io::write_pgm(root / "remapped.pgm", outimg);
        } else {
            io::write_image_raw(root / "remapped.raw", outimg);
        }
        io::write_pgm(root / "preview.pgm", outimg);
        io::write_json(root / "spec.json", to_json(spec));
        write_resolved(root, "remap-demo",
                       {{"seed", s}, {"n_min", lo}, {"n_max", hi}, {"identity", identity}, {"input", input},
                        {"spec", spec_path}});
        return 0;
    }
};

// --- train-evaluator ------------------------------------------------------------

std::vector<ImageGrid> load_training_images(const fs::path &data) {
    std::vector<ImageGrid> imgs;
    for (const auto &p : io::list_pairs(data)) imgs.push_back(io::read_image_raw(p / "target.raw"));
    if (imgs.empty()) throw error(errc::empty_dataset, "no pair_* directories under " + data.string());
    return imgs;
}

struct TrainEvaluator {
    std::string config, data, out;
    std::optional<int64_t> steps, batch;
    std::optional<std::string> noise;
    std::optional<int> n_min, n_max;
    std::optional<uint64_t> seed;
    std::optional<double> lr;

    int run() const {
        EvaluatorConfig c;
        read_config(load_config(config), "train-evaluator", c);
        override_with(c.steps, steps);
        override_with(c.batch_size, batch);
        if (noise) c.pair.noise = parse_noise_mode(*noise);
        override_with(c.pair.n_min, n_min);
        override_with(c.pair.n_max, n_max);
        override_with(c.seed, seed);
        override_with(c.learning_rate, lr);
        c.validate();
        const auto imgs = load_training_images(data);
        const auto trained = train_evaluator(init_evaluator(c), imgs, c);
        const fs::path root(out);
        save_evaluator(trained.model, (root / "evaluator.bin").string());
        io::write_trace_csv(root / "loss_trace.csv", trained.loss_trace);
        json r = to_json(c);
        r["data"] = data;
        write_resolved(root, "train-evaluator", r);
        std::cout << "final loss " << trained.model.final_loss << "\n";
        return 0;
    }
};

// --- register ------------------------------------------------------------------

json metrics_json(const RegistrationMetrics &m) {
    return {{"dice", m.dice}, {"hd95", m.hd95}, {"smoothness", m.smoothness}};
}

void write_result(const fs::path &dir, const RegistrationResult &r) {
    io::write_field_raw(dir / "field.raw", r.field);
    io::write_pgm(dir / "warped.pgm", r.warped);
    io::write_image_raw(dir / "warped.raw", r.warped);
    if (!r.trace.empty()) io::write_trace_csv(dir / "trace.csv", r.trace);
    if (r.metrics) io::write_json(dir / "metrics.json", metrics_json(*r.metrics));
}

struct Register {
    std::string config, data, out, evaluator, method = "iterative";
    std::vector<int> pairs;
    std::optional<std::string> loss;
    std::optional<double> lambda, lr, network_lr;
    std::optional<int64_t> iters, steps, batch;
    std::optional<uint64_t> seed;

    int run() const {
        RegistrationConfig c;
        read_config(load_config(config), "register", c);
        override_with(c.loss, loss);
        override_with(c.lambda, lambda);
        override_with(c.learning_rate, lr);
        override_with(c.network_learning_rate, network_lr);
        override_with(c.iterations, iters);
        override_with(c.steps, steps);
        override_with(c.batch_size, batch);
        override_with(c.seed, seed);
        c.validate();
        detail::require(method == "iterative" || method == "network", errc::bad_config,
                        "--method must be iterative or network");
        std::shared_ptr<const EvaluatorModel> model;
        if (!evaluator.empty()) model = std::make_shared<const EvaluatorModel>(load_evaluator(evaluator));
        Similarity sim = make_similarity(c.loss, model);

        const auto dirs = io::list_pairs(data);
        if (dirs.empty()) throw error(errc::empty_dataset, "no pair_* directories under " + data);
        std::vector<io::StoredPair> stored;
        for (const auto &d : dirs) stored.push_back(io::read_pair(d));
        std::vector<size_t> selected;
        if (pairs.empty()) {
            for (size_t i = 0; i < stored.size(); ++i) selected.push_back(i);
        } else {
            for (int p : pairs) {
                detail::require(p >= 0 && size_t(p) < stored.size(), errc::bad_config, "--pair index out of range");
                selected.push_back(size_t(p));
            }
        }

        const fs::path root(out);
        std::optional<RegistrationModel> net;
        if (method == "network") {
            std::vector<RegistrationPair> train;
            for (const auto &s : stored) train.push_back({s.pair.moving, s.pair.target});
            const auto trained = train_registration_network(init_registration_network(c.arch, c.seed), train, sim, c);
            io::save_registration_network(trained.model, root / "network.bin");
            io::write_trace_csv(root / "trace.csv", trained.loss_trace);
            net = trained.model;
        }
        json summary = json::array();
        for (size_t i : selected) {
            const auto &gt = stored[i].pair;
            RegistrationResult r = net ? register_with_network(*net, gt.moving, gt.target)
                                       : register_iterative(gt.moving, gt.target, c, sim);
            r.metrics = score_registration(r.field, gt.masks_moving, gt.masks_target);
            write_result(root / dirs[i].filename(), r);
            summary.push_back({{"pair", dirs[i].filename().string()}, {"metrics", metrics_json(*r.metrics)}});
        }
        io::write_json(root / "summary.json", summary);
        json rc = to_json(c);
        rc["method"] = method;
        rc["data"] = data;
        rc["evaluator"] = evaluator;
        rc["pairs"] = pairs;
        write_resolved(root, "register", rc);
        return 0;
    }
};

// --- translate -----------------------------------------------------------------

struct Translate {
    std::string config, evaluator, reference, source, out;

    int run() const {
        ConfigReader(load_config(config), "translate").finish();
        const EvaluatorModel model = load_evaluator(evaluator);
        const ImageGrid ref = io::read_image(reference), src = io::read_image(source);
        const ImageGrid t = translate(model, ref, src);
        const fs::path root(out);
        io::write_pgm(root / "translated.pgm", t);
        io::write_image_raw(root / "translated.raw", t);
        const ErrorMap e = predict_error_map(model, ref, src);
        io::write_raw(root / "error_map.raw", {&e.grid().data}, e.height(), e.width(), "error_map");
        write_resolved(root, "translate",
                       {{"evaluator", evaluator}, {"reference", reference}, {"source", source}});
        return 0;
    }
};

// --- evaluate ------------------------------------------------------------------

struct Evaluate {
    std::string config, result, masks, out;

    int run() const {
        ConfigReader(load_config(config), "evaluate").finish();
        const io::StoredPair sp = io::read_pair(masks);
        const DeformationField f = io::read_field_raw(fs::path(result) / "field.raw");
        const auto warped = warp_masks(sp.pair.masks_moving, f);
        json per = json::object();
        for (size_t k = 0; k < sp.names.size(); ++k) {
            json s = {{"dice", dice(warped[k], sp.pair.masks_target[k])}};
            if (!warped[k].empty() && !sp.pair.masks_target[k].empty()) s["hd95"] = hd95(warped[k], sp.pair.masks_target[k]);
            per[sp.names[k]] = s;
        }
        const auto m = score_registration(f, sp.pair.masks_moving, sp.pair.masks_target);
        const fs::path root(out);
        io::write_json(root / "metrics.json", {{"dice", m.dice},
                                               {"hd95", m.hd95},
                                               {"smoothness", field_smoothness(f)},
                                               {"initial_dice", mean_dice(sp.pair.masks_moving, sp.pair.masks_target)},
                                               {"structures", per}});
        write_resolved(root, "evaluate", {{"result", result}, {"masks", masks}});
        return 0;
    }
};

// --- correlate -----------------------------------------------------------------

struct Correlate {
    std::string config, evaluator, pairs, out;
    std::optional<int64_t> transforms;
    std::optional<uint64_t> seed;
    std::optional<double> max_strength;

    int run() const {
        int64_t n = 50;
        uint64_t s = 1;
        CorrelationConfig cc;
        ConfigReader(load_config(config), "correlate")
            .get("transforms", n)
            .get("seed", s)
            .get("max_strength", cc.max_strength)
            .nested("deformation", [&](const json &j, const std::string &c) { read_config(j, c, cc.deformation); })
            .finish();
        override_with(n, transforms);
        override_with(s, seed);
        override_with(cc.max_strength, max_strength);
        const EvaluatorModel model = load_evaluator(evaluator);
        // Base pairs are brought into alignment with the stored correction
        // field; the random transforms then create the spread of overlaps.
        std::vector<AssessmentPair> base;
        for (const auto &d : io::list_pairs(pairs)) {
            const auto sp = io::read_pair(d);
            base.push_back({warp(sp.pair.moving, sp.pair.correction), sp.pair.target,
                            warp_masks(sp.pair.masks_moving, sp.pair.correction), sp.pair.masks_target});
        }
        const CorrelationReport rep = correlation_experiment(model, base, n, s, cc);
        const fs::path root(out);
        io::write_json(root / "report.json", to_json(rep));
        std::string csv = "score,dice\n";
        std::vector<double> xs, ys;
        for (const auto &p : rep.points) {
            csv += io::format_double(p.score) + "," + io::format_double(p.dice) + "\n";
            xs.push_back(p.score);
            ys.push_back(p.dice);
        }
        io::write_text(root / "scatter.csv", csv);
        io::write_scatter_png(root / "scatter.png", xs, ys);
        write_resolved(root, "correlate",
                       {{"evaluator", evaluator}, {"pairs", pairs}, {"transforms", n}, {"seed", s},
                        {"max_strength", cc.max_strength}, {"deformation", to_json(cc.deformation)}});
        std::cout << "spearman " << rep.spearman << " pearson " << rep.pearson << "\n";
        return 0;
    }
};

// --- benchmark -----------------------------------------------------------------

struct Benchmark {
    std::string config, out;
    std::optional<std::string> suite;
    std::optional<uint64_t> seed;

    int run() const {
        BenchmarkConfig c;
        json j = load_config(config);
        if (suite) j["suite"] = *suite;
        read_config(j, "benchmark", c);
        override_with(c.seed, seed);
        const BenchmarkReport rep = run_benchmark(c);
        const fs::path root(out);
        io::write_text(root / "results.csv", benchmark_csv(rep));
        io::write_text(root / "results.md", benchmark_markdown(rep));
        write_resolved(root, "benchmark", to_json(c));
        std::cout << benchmark_markdown(rep);
        return 0;
    }
};

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"IMSE desk lab: evaluator training, registration and assessment"};
    app.require_subcommand(1);

    GenData gen;
    auto *g = app.add_subcommand("gen-data", "generate synthetic cross-modality registration pairs");
    g->add_option("--config", gen.config, "JSON config");
    g->add_option("--seed", gen.seed);
    g->add_option("--count", gen.count);
    g->add_option("--size", gen.size);
    g->add_option("--classes", gen.classes);
    g->add_option("--out", gen.out)->required();

    RemapDemo rd;
    auto *r = app.add_subcommand("remap-demo", "apply a Shuffle Remap to one image");
    r->add_option("--config", rd.config);
    r->add_option("--input", rd.input)->required()->check(CLI::ExistingFile);
    r->add_option("--seed", rd.seed);
    r->add_option("--n-min", rd.n_min);
    r->add_option("--n-max", rd.n_max);
    r->add_option("--spec", rd.spec_path, "remap spec JSON {control_points, permutation}");
    r->add_flag("--identity", rd.identity, "use the identity permutation");
    r->add_option("--out", rd.out)->required();

    TrainEvaluator te;
    auto *t = app.add_subcommand("train-evaluator", "self-supervised evaluator training");
    t->add_option("--config", te.config);
    t->add_option("--data", te.data)->required();
    t->add_option("--steps", te.steps);
    t->add_option("--batch", te.batch);
    t->add_option("--noise", te.noise)->check(CLI::IsMember({"shuffle_remap", "bezier", "none"}));
    t->add_option("--n-min", te.n_min);
    t->add_option("--n-max", te.n_max);
    t->add_option("--seed", te.seed);
    t->add_option("--lr", te.lr);
    t->add_option("--out", te.out)->required();

    Register rg;
    auto *reg = app.add_subcommand("register", "register dataset pairs (iterative or learned)");
    reg->add_option("--config", rg.config);
    reg->add_option("--data", rg.data, "dataset directory from gen-data")->required();
    reg->add_option("--pair", rg.pairs, "pair indices (default: all)");
    reg->add_option("--method", rg.method)->check(CLI::IsMember({"iterative", "network"}));
    reg->add_option("--loss", rg.loss)->check(CLI::IsMember({"mae", "mse", "ncc", "mi", "mind", "imse"}));
    reg->add_option("--lambda", rg.lambda);
    reg->add_option("--iters", rg.iters);
    reg->add_option("--lr", rg.lr);
    reg->add_option("--network-lr", rg.network_lr);
    reg->add_option("--steps", rg.steps);
    reg->add_option("--batch", rg.batch);
    reg->add_option("--seed", rg.seed);
    reg->add_option("--evaluator", rg.evaluator, "evaluator checkpoint (required for --loss imse)");
    reg->add_option("--out", rg.out)->required();

    Translate tr;
    auto *x = app.add_subcommand("translate", "translation by subtraction: reference - E(reference, source)");
    x->add_option("--config", tr.config);
    x->add_option("--evaluator", tr.evaluator)->required();
    x->add_option("--reference", tr.reference)->required()->check(CLI::ExistingFile);
    x->add_option("--source", tr.source)->required()->check(CLI::ExistingFile);
    x->add_option("--out", tr.out)->required();

    Evaluate ev;
    auto *e = app.add_subcommand("evaluate", "score a registration result against masks");
    e->add_option("--config", ev.config);
    e->add_option("--result", ev.result, "directory holding field.raw")->required();
    e->add_option("--masks", ev.masks, "pair directory from gen-data")->required();
    e->add_option("--out", ev.out)->required();

    Correlate co;
    auto *c = app.add_subcommand("correlate", "alignment score vs Dice over random transforms");
    c->add_option("--config", co.config);
    c->add_option("--evaluator", co.evaluator)->required();
    c->add_option("--pairs", co.pairs, "dataset directory from gen-data")->required();
    c->add_option("--transforms", co.transforms);
    c->add_option("--seed", co.seed);
    c->add_option("--max-strength", co.max_strength);
    c->add_option("--out", co.out)->required();

    Benchmark bm;
    auto *b = app.add_subcommand("benchmark", "learned-registration comparison across losses");
    b->add_option("--config", bm.config);
    b->add_option("--suite", bm.suite)->check(CLI::IsMember({"desk", "quick"}));
    b->add_option("--seed", bm.seed);
    b->add_option("--out", bm.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &err) {
        return app.exit(err);
    }

    try {
        if (*g) return gen.run();
        if (*r) return rd.run();
        if (*t) return te.run();
        if (*reg) return rg.run();
        if (*x) return tr.run();
        if (*e) return ev.run();
        if (*c) return co.run();
        if (*b) return bm.run();
    } catch (const imse::error &err) {
        std::cerr << "error: " << err.what() << "\n";
        return exit_code(err.code());
    } catch (const std::exception &err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
    return 0;
}
