#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specrec/checkpoint.hpp"
#include "specrec/error.hpp"
#include "specrec/gradcheck.hpp"
#include "specrec/hsio.hpp"
#include "specrec/loss.hpp"
#include "specrec/plot.hpp"
#include "specrec/resnet3d.hpp"
#include "specrec/spectral.hpp"
#include "specrec/synthgen.hpp"
#include "specrec/trainer.hpp"

namespace fs = std::filesystem;
using namespace specrec;

namespace {

struct Global {
    std::uint64_t seed = 0;
    std::string profile = "desk";

    bool paper() const { return profile == "paper"; }
    ModelConfig model() const { return paper() ? ModelConfig::paper() : ModelConfig::desk(); }
    TrainConfig train() const {
        auto t = paper() ? TrainConfig::paper() : TrainConfig::desk();
        t.seed = seed;
        return t;
    }
};

template <typename T>
void override(const std::optional<T>& flag, T& target) {
    if (flag) target = *flag;
}

void write_text(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) throw IoError("cannot write '" + path + "'");
}

std::vector<SceneSample> load_manifest_samples(const fs::path& manifest) {
    std::vector<SceneSample> samples;
    for (const auto& e : read_manifest(manifest)) samples.push_back(load_sample(e));
    if (samples.empty()) throw ArgumentError("manifest '" + manifest.string() + "' lists no samples");
    return samples;
}

ad::Index3 parse_extent(const std::string& text) {
    std::vector<std::size_t> v;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, 'x')) {
        try {
            std::size_t used = 0;
            const auto n = std::stoull(part, &used);
            if (used != part.size()) throw std::invalid_argument(part);
            v.push_back(n);
        } catch (const std::exception&) {
            throw ArgumentError("bad extent '" + text + "', expected BANDSxHEIGHTxWIDTH");
        }
    }
    if (v.size() != 3) throw ArgumentError("bad extent '" + text + "', expected BANDSxHEIGHTxWIDTH");
    return {v[0], v[1], v[2]};
}

std::string join_bands(const std::vector<std::size_t>& bands) {
    std::string s;
    for (std::size_t i = 0; i < bands.size(); ++i) s += (i ? "," : "") + std::to_string(bands[i]);
    return s;
}

Spectrum unit_max(Spectrum s) {
    double m = 0.0;
    for (double v : s.values) m = std::max(m, v);
    if (m > 0) {
        for (auto& v : s.values) v /= m;
    }
    return s;
}

// synth

struct SynthArgs {
    std::string out;
    SynthOptions opt;
    std::size_t height = 32, width = 32;
    std::vector<std::string> families;
};

void run_synth(const Global& g, SynthArgs a) {
    for (const auto& f : a.families) a.opt.families.push_back(parse_family(f));
    a.opt.size = {a.height, a.width};
    a.opt.seed = g.seed;
    const fs::path dir(a.out);
    fs::create_directories(dir);
    const auto data = generate_dataset(a.opt);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < data.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "scene_%04zu", i);
        entries.push_back(save_sample(data[i].sample, dir, stem, std::string(to_string(data[i].family))));
    }
    write_manifest(dir / "manifest.tsv", entries);
    std::cerr << "wrote " << entries.size() << " samples to " << (dir / "manifest.tsv").string() << "\n";
}

// train

struct TrainArgs {
    std::string data, out = "run", log;
    std::optional<double> alpha, lr, momentum;
    std::optional<std::string> loss, form;
    std::optional<std::size_t> epochs, max_iterations, batch_size, crops, checkpoint_every;
    std::optional<bool> rotations;
};

void run_train(const Global& g, const TrainArgs& a) {
    auto cfg = g.train();
    override(a.alpha, cfg.alpha);
    override(a.lr, cfg.lr);
    override(a.momentum, cfg.momentum);
    override(a.epochs, cfg.epochs);
    override(a.max_iterations, cfg.max_iterations);
    override(a.batch_size, cfg.batch_size);
    override(a.crops, cfg.crops_per_image);
    override(a.checkpoint_every, cfg.checkpoint_every);
    override(a.rotations, cfg.rotations);
    if (a.loss) cfg.loss = parse_loss_kind(*a.loss);
    if (a.form) cfg.form = parse_roughness_form(*a.form);
    cfg.checkpoint_dir = a.out;
    cfg.log_path = a.log.empty() ? fs::path(a.out) / "train_log.csv" : fs::path(a.log);
    cfg.validate();
    fs::create_directories(cfg.checkpoint_dir);
    if (cfg.log_path.has_parent_path()) fs::create_directories(cfg.log_path.parent_path());

    const auto split = split_dataset(load_manifest_samples(a.data), g.seed);
    const auto mcfg = g.model();
    auto model = build_model<float>(mcfg, g.seed);
    const auto tr = training_examples(split.train, mcfg, cfg);
    const auto va = make_examples(split.val, mcfg);
    std::cerr << "training " << model.parameter_count() << " parameters on " << tr.size() << " examples ("
              << va.size() << " validation)\n";
    const auto start = std::chrono::steady_clock::now();
    Trainer trainer(model, cfg);
    const auto log = trainer.run(tr, va, [&](const TrainLogRow& r) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cerr << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_csse " << r.val_csse
                  << " val_mse " << r.val_mse << " (" << s << " s)\n";
    });
    std::cout << log.to_csv();
}

// eval

struct EvalArgs {
    std::string data, split = "test", form = "squared";
    std::vector<std::string> checkpoints;
};

void run_eval(const Global& g, const EvalArgs& a) {
    auto split = split_dataset(load_manifest_samples(a.data), g.seed);
    const auto& set = a.split == "val" ? split.val : a.split == "train" ? split.train : split.test;
    std::vector<CheckpointRef> refs;
    for (const auto& path : a.checkpoints) {
        if (!fs::exists(path)) throw LoadError("missing checkpoint '" + path + "'");
        const auto archive = load_archive(path);
        double alpha = 1.0;
        if (auto it = archive.metadata.find("alpha"); it != archive.metadata.end()) alpha = std::stod(it->second);
        refs.push_back({alpha, path});
    }
    std::cout << evaluate_checkpoints(refs, set, parse_roughness_form(a.form)).to_csv();
}

// infer

struct InferArgs {
    std::string cube, checkpoint, out, truth, plot;
    bool tile = false;
};

void run_infer(const Global&, const InferArgs& a) {
    const auto cube = read_cube(a.cube, payload_path_for(a.cube));
    auto model = load_model<float>(load_archive(a.checkpoint));
    const auto pred = infer_illuminant(model, cube, {a.tile});
    std::optional<Spectrum> truth;
    if (!a.truth.empty()) {
        truth = unit_max(read_spectrum_csv(a.truth));
        truth->label = "actual";
        if (truth->size() == pred.size()) {
            const auto m = mse(truth->values, pred.values);
            std::cerr << "mse " << m.value << " roughness " << roughness(pred.values) << "\n";
        }
    }
    if (!a.plot.empty()) {
        PlotSpec spec;
        spec.title = "Illuminant: " + fs::path(a.cube).stem().string();
        spec.output_path = a.plot;
        if (truth) spec.series.push_back({"actual", *truth, {}});
        spec.series.push_back({"predicted", pred, {"", true}});
        render_plot(spec);
    }
    write_text(format_spectrum_csv(pred), a.out);
}

// normalize

struct NormalizeArgs {
    std::string cube, white, dark, out, interleave = "bsq";
    double clamp = kDefaultClampMax;
    bool allow_degenerate = false;
};

void run_normalize(const Global&, const NormalizeArgs& a) {
    const auto cube = read_cube(a.cube, payload_path_for(a.cube));
    const auto res = normalize_cube(cube, read_spectrum_csv(a.white), read_spectrum_csv(a.dark), a.clamp);
    if (!res.degenerate_bands.empty()) {
        std::ostringstream msg_s;
        msg_s << res.degenerate_bands.size() << " degenerate bands (white - dark <= " << kDegenerateEpsilon
              << "): " << join_bands(res.degenerate_bands);
        const auto msg = msg_s.str();
        if (!a.allow_degenerate) throw NormalizationError(msg);
        std::cerr << "warning: " << msg << " set to 0\n";
    }
    write_cube(res.cube, a.out, payload_path_for(a.out), parse_interleave(a.interleave));
    std::cerr << "clipped " << res.clipped_count << " values\n";
}

// smooth

struct SmoothArgs {
    std::string in, out;
    double lambda = 1.0;
};

void run_smooth(const Global&, const SmoothArgs& a) {
    const auto fit = smooth_spectrum(read_spectrum_csv(a.in), a.lambda);
    std::cerr << "lambda " << fit.lambda << " residual_ss " << fit.residual_ss << " roughness " << fit.roughness
              << "\n";
    write_text(format_spectrum_csv(fit.smoothed), a.out);
}

// gradcheck

void run_gradcheck_cmd(const Global& g, GradCheckOptions o) {
    o.seed = g.seed;
    const auto results = run_gradcheck(o);
    std::cout << gradcheck_csv(results);
    std::vector<std::string> failed;
    for (const auto& r : results)
        if (!r.passed) failed.push_back(r.op);
    if (!failed.empty()) {
        std::string names;
        for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
        throw NumericalError("gradient check failed for " + names);
    }
}

// shapes

void run_shapes(const Global& g, const std::string& input) {
    const auto cfg = g.model();
    const auto extent = input.empty() ? ad::Index3{cfg.input_bands, cfg.input_size, cfg.input_size} : parse_extent(input);
    const auto report = infer_shapes(cfg, extent);
    std::cout << "layer,output\n";
    for (const auto& s : report.stages) std::cout << s.name << ',' << s.extent() << '\n';
    std::cout << report.pooled.name << ',' << report.pooled.extent() << '\n';
    std::cout << "fc," << report.head << '\n';
}

// plot

struct PlotArgs {
    std::vector<std::string> series, dashed;
    std::string title, out;
};

void run_plot(const Global&, const PlotArgs& a) {
    PlotSpec spec;
    spec.title = a.title;
    spec.output_path = a.out;
    for (const auto& item : a.series) {
        const auto eq = item.find('=');
        const std::string label = eq == std::string::npos ? fs::path(item).stem().string() : item.substr(0, eq);
        const std::string path = eq == std::string::npos ? item : item.substr(eq + 1);
        const bool dashed = std::find(a.dashed.begin(), a.dashed.end(), label) != a.dashed.end();
        spec.series.push_back({label, read_spectrum_csv(path), {"", dashed}});
    }
    render_plot(spec);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral illuminant recovery with a 3D residual network"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "INI file of option defaults; [section] names a subcommand; flags override it");
    Global g;
    app.add_option("--seed", g.seed, "Seed for data generation, splits, init and shuffling")->capture_default_str();
    app.add_option("--profile", g.profile, "paper: full-size network; desk: scale 0.25 on 32x32 windows")
        ->check(CLI::IsMember({"paper", "desk"}))
        ->capture_default_str();

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic dataset (ENVI cubes, spectra, manifest.tsv)");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--count", synth.opt.count, "Number of scenes")->capture_default_str();
    s->add_option("--bands", synth.opt.bands, "Bands over 400-1000 nm")->capture_default_str();
    s->add_option("--height", synth.height, "Rows")->capture_default_str();
    s->add_option("--width", synth.width, "Columns")->capture_default_str();
    s->add_option("--materials", synth.opt.n_materials, "Materials per scene")->capture_default_str();
    s->add_option("--noise", synth.opt.noise_sd, "Gaussian sensor noise sd")->capture_default_str();
    s->add_option("--family", synth.families, "Illuminant families to draw from (default all)");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train on a manifest; TrainLog CSV to stdout, checkpoints to --out");
    t->add_option("--data", train.data, "manifest.tsv written by synth")->required();
    t->add_option("--out", train.out, "Checkpoint directory (best.ckpt, last.ckpt)")->capture_default_str();
    t->add_option("--log", train.log, "TrainLog CSV path (default <out>/train_log.csv)");
    t->add_option("--alpha", train.alpha, "CSSE weight on the MSE term (default 0.8)");
    t->add_option("--loss", train.loss, "csse, mse or mae (default csse)");
    t->add_option("--form", train.form, "Roughness form: squared or unsquared (default squared)");
    t->add_option("--epochs", train.epochs, "Epochs (default: desk 30, paper 50)");
    t->add_option("--max-iterations", train.max_iterations, "Cap on SGD steps, 0 = none (default 0)");
    t->add_option("--lr", train.lr, "Learning rate (default 0.005)");
    t->add_option("--momentum", train.momentum, "Momentum (default 0.9)");
    t->add_option("--batch-size", train.batch_size, "Mini-batch size (default 4)");
    t->add_option("--crops", train.crops, "Random crops per image, 0 = centre window (default: desk 0, paper 10)");
    t->add_option("--rotations", train.rotations, "Add 90/180/270 degree copies (default: desk false, paper true)");
    t->add_option("--checkpoint-every", train.checkpoint_every, "Also write epoch_N.ckpt every N epochs (default 0)");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Evaluate checkpoints on a split; one CSV row per checkpoint");
    e->add_option("--data", eval.data, "manifest.tsv written by synth")->required();
    e->add_option("--checkpoint", eval.checkpoints, "Checkpoint files (alpha read from each)")->required();
    e->add_option("--split", eval.split, "Split to evaluate")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    e->add_option("--form", eval.form, "Roughness form")->capture_default_str();

    InferArgs infer;
    auto* i = app.add_subcommand("infer", "Predict the illuminant of a cube; spectrum CSV to stdout or --out");
    i->add_option("--cube", infer.cube, "ENVI header")->required();
    i->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required();
    i->add_option("--out", infer.out, "Output CSV (default stdout)");
    i->add_option("--truth", infer.truth, "Ground-truth illuminant CSV");
    i->add_option("--plot", infer.plot, "Write an SVG of actual vs predicted");
    i->add_flag("--tile", infer.tile, "Average over non-overlapping windows instead of the centre crop");

    NormalizeArgs norm;
    auto* n = app.add_subcommand("normalize", "Radiance to reflectance with white and dark references");
    n->add_option("--cube", norm.cube, "Radiance ENVI header")->required();
    n->add_option("--white,--illuminant", norm.white, "White reference CSV (illumination plus dark)")->required();
    n->add_option("--dark", norm.dark, "Dark reference CSV")->required();
    n->add_option("--out", norm.out, "Output ENVI header")->required();
    n->add_option("--clamp", norm.clamp, "Upper clamp on reflectance")->capture_default_str();
    n->add_option("--interleave", norm.interleave, "bsq, bil or bip")->capture_default_str();
    n->add_flag("--allow-degenerate", norm.allow_degenerate, "Zero degenerate bands instead of failing");

    SmoothArgs smooth;
    auto* sm = app.add_subcommand("smooth", "Cubic smoothing spline of a spectrum CSV");
    sm->add_option("--in", smooth.in, "Spectrum CSV")->required();
    sm->add_option("--lambda", smooth.lambda, "Smoothing weight >= 0")->capture_default_str();
    sm->add_option("--out", smooth.out, "Output CSV (default stdout)");

    GradCheckOptions gc;
    auto* gcs = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    gcs->add_option("--trials", gc.trials, "Random trials per op")->capture_default_str();
    gcs->add_option("--step", gc.step, "Central difference step")->capture_default_str();
    gcs->add_option("--tolerance", gc.tolerance, "Maximum norm-wise relative error")->capture_default_str();

    std::string shapes_input;
    auto* sh = app.add_subcommand("shapes", "Per-layer output sizes (channels x depth x height x width)");
    sh->add_option("--input", shapes_input, "BANDSxHEIGHTxWIDTH (default from the profile)");

    PlotArgs plot;
    auto* p = app.add_subcommand("plot", "SVG plot of one or more spectrum CSVs on a shared grid");
    p->add_option("--series", plot.series, "label=path.csv")->required();
    p->add_option("--dashed", plot.dashed, "Labels drawn dashed");
    p->add_option("--title", plot.title, "Title");
    p->add_option("--out", plot.out, "Output SVG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 1;
    }

    try {
        if (*s) run_synth(g, synth);
        else if (*t) run_train(g, train);
        else if (*e) run_eval(g, eval);
        else if (*i) run_infer(g, infer);
        else if (*n) run_normalize(g, norm);
        else if (*sm) run_smooth(g, smooth);
        else if (*gcs) run_gradcheck_cmd(g, gc);
        else if (*sh) run_shapes(g, shapes_input);
        else if (*p) run_plot(g, plot);
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return static_cast<int>(err.error_class());
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
    return 0;
}
