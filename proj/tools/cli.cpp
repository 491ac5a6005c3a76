#include "cli.hpp"

#include <cginv/cgnet.hpp>
#include <cginv/config.hpp>
#include <cginv/dataset.hpp>
#include <cginv/io.hpp>
#include <cginv/metrics.hpp>
#include <cginv/theory.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace cginv::cli {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string join_args(const std::vector<std::string>& args) {
    std::string s;
    for (const auto& a : args) {
        if (!s.empty()) s += ' ';
        s += a;
    }
    return s;
}

double parse_snr_flag(const std::string& s) {
    if (s == "inf") return kInf;
    try {
        return io::parse_double(s, 0);
    } catch (const FormatError&) {
        throw UsageError("--snr must be a number or 'inf', got '" + s + "'");
    }
}

Config load_config_or_empty(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

void log(const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); }

std::vector<TrainSample> as_train_samples(const Dataset& data) {
    std::vector<TrainSample> out;
    for (const auto& s : data.samples) out.push_back({s.y, s.c});
    return out;
}

bool is_compressive(const MeasurementModel& model) { return model.description.rfind("gaussian", 0) == 0; }

void write_summary(const fs::path& path, const std::vector<MetricRow>& rows, double ssim_scale,
                   const io::KeyValues& extra) {
    io::KeyValues kv = extra;
    kv["samples"] = std::to_string(rows.size());
    std::vector<double> s, q;
    for (const auto& r : rows) {
        s.push_back(ssim_scale * r.ssim);
        q.push_back(r.psnr);
    }
    if (rows.size() >= 2) {
        const MeanCi ms = mean_ci99(s), mq = mean_ci99(q);
        kv["ssim_mean"] = io::format_double(ms.mean);
        kv["ssim_ci99"] = io::format_double(ms.half_width);
        kv["psnr_mean"] = io::format_double(mq.mean);
        kv["psnr_ci99"] = io::format_double(mq.half_width);
    } else {
        kv["ssim_mean"] = io::format_double(s.front());
        kv["psnr_mean"] = io::format_double(q.front());
    }
    kv["ssim_scale"] = io::format_double(ssim_scale);
    io::write_atomic(path, io::format_key_values(kv));
}

io::Image as_image(const Vector& pixels, int n_side) {
    return io::Image{n_side, n_side, pixels.cwiseMax(0.0).cwiseMin(1.0)};
}

// ---- gen-data -------------------------------------------------------------

struct GenFlags {
    const CLI::App* app = nullptr;
    std::string images, phantom, op = "radon", dict = "wavelet", snr = "60", out, config;
    int n_side = 32, angles = 15, count = 20;
    double ratio = 0.5;
    std::uint64_t seed = 0;
};

int cmd_gen_data(const GenFlags& f, const std::string& argline) {
    const Config cfg = load_config_or_empty(f.config);
    if (f.images.empty() == f.phantom.empty()) throw UsageError("gen-data needs exactly one of --images or --phantom");
    if (!f.phantom.empty() && f.phantom != "shepp-logan")
        throw UsageError("--phantom only supports shepp-logan");
    // flags win over [model] entries, which win over built-in defaults
    auto given = [&](const char* flag) { return f.app->count(flag) > 0; };
    const std::string m = "model";
    GenSpec spec;
    spec.source = f.phantom.empty() ? "images" : "phantom";
    spec.images_dir = f.images;
    spec.n_side = given("--n-side") ? f.n_side : static_cast<int>(cfg.get_long(m, "n_side", f.n_side));
    spec.op = given("--operator") ? f.op : cfg.get_string(m, "operator", f.op);
    spec.angles = given("--angles") ? f.angles : static_cast<int>(cfg.get_long(m, "angles", f.angles));
    spec.sampling_ratio = given("--sampling-ratio") ? f.ratio : cfg.get_double(m, "sampling_ratio", f.ratio);
    spec.dict = given("--dict") ? f.dict : cfg.get_string(m, "dict", f.dict);
    spec.snr_db = parse_snr_flag(given("--snr") ? f.snr : cfg.get_string(m, "snr", f.snr));
    spec.count = given("--count") ? f.count : static_cast<int>(cfg.get_long(m, "count", f.count));
    spec.seed = given("--seed") ? f.seed : static_cast<std::uint64_t>(cfg.get_long(m, "seed", 0));
    if (spec.n_side < 2 || spec.angles < 1 || spec.count < 1) throw UsageError("n_side, angles and count out of range");

    std::vector<Vector> images;
    if (spec.source == "images") images = load_images(spec.images_dir, spec.n_side, spec.count);
    write_manifest(f.out, {"gen-data", f.config, spec.seed, f.out, argline});
    Dataset data = generate_dataset(spec, images);
    write_dataset(f.out, data);
    log("gen-data: wrote " + std::to_string(data.samples.size()) + " samples (m=" + std::to_string(data.model.m()) +
        ", n=" + std::to_string(data.model.n()) + ") to " + f.out);
    return kExitOk;
}

// ---- reconstruct ----------------------------------------------------------

struct ReconFlags {
    std::string method, config, data, out;
};

int cmd_reconstruct(const ReconFlags& f, const std::string& argline) {
    const Config cfg = load_config_or_empty(f.config);
    const Dataset data = read_dataset(f.data);
    if (data.samples.empty()) throw std::runtime_error("dataset has no samples");
    const CglsConfig solver = solver_config(cfg, f.method, data.model.n_side, data.snr_db());
    write_manifest(f.out, {"reconstruct", f.config, 0, f.out, argline});
    log("reconstruct: " + f.method + " on " + std::to_string(data.samples.size()) + " samples, lambda=" +
        io::format_double(solver.lambda) + " scale=" + io::format_double(solver.scale_s));

    const std::vector<CglsResult> results = reconstruct_all(data, solver);
    std::vector<MetricRow> rows;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const fs::path sd = fs::path(f.out) / "samples" / data.ids[i];
        fs::create_directories(sd);
        const Vector image = data.model.phi * results[i].c_star;
        const Vector truth = data.model.phi * data.samples[i].c;
        io::write_vector_csv(sd / "c_star.csv", results[i].c_star);
        io::write_pgm(sd / "recon.pgm", as_image(image, data.model.n_side));
        io::write_atomic(sd / "trace.csv", format_trace_csv(results[i].trace));
        rows.push_back(score_image(data.ids[i], image, truth, data.model.n_side));
        io::write_atomic(sd / "metrics.csv", format_metrics_csv({rows.back()}));
    }
    io::write_atomic(fs::path(f.out) / "metrics.csv", format_metrics_csv(rows));
    write_summary(fs::path(f.out) / "summary.txt", rows, 1.0, {{"method", f.method}});
    log("reconstruct: wrote " + f.out);
    return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainFlags {
    std::string data, config, out, b_mode, loss;
    int epochs = -1, train_size = 0, k = -1, j = -1;
    double lr = -1.0, validation_fraction = -1.0;
    std::uint64_t seed = 0;
    bool verbose = false;
};

int cmd_train(const TrainFlags& f, const std::string& argline) {
    const Config cfg = load_config_or_empty(f.config);
    Dataset data = read_dataset(f.data);
    if (data.samples.empty()) throw std::runtime_error("dataset has no samples");
    NetSetup setup = cgnet_config(cfg, data.model.n_side, data.snr_db(), is_compressive(data.model));
    if (f.k >= 0) setup.k = f.k;
    if (f.j >= 1) setup.j = f.j;
    if (f.epochs >= 0) setup.train.epochs = f.epochs;
    if (f.lr >= 0.0) setup.train.adam.learning_rate = f.lr;
    if (f.validation_fraction >= 0.0) setup.train.validation_fraction = f.validation_fraction;
    if (!f.b_mode.empty()) setup.train.b_mode = parse_bmode(f.b_mode);
    if (!f.loss.empty()) setup.train.loss = parse_loss(f.loss);
    setup.train.seed = f.seed;
    setup.train.verbose = f.verbose;

    std::vector<TrainSample> all = as_train_samples(data);
    std::vector<std::size_t> chosen(all.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
    if (f.train_size > 0) chosen = subsample_indices(all.size(), static_cast<std::size_t>(f.train_size), f.seed);
    std::vector<TrainSample> subset;
    for (std::size_t i : chosen) subset.push_back(all[i]);

    write_manifest(f.out, {"train", f.config, f.seed, f.out, argline});
    log("train: K=" + std::to_string(setup.k) + " J=" + std::to_string(setup.j) + " on " +
        std::to_string(subset.size()) + " samples, " + std::to_string(setup.train.epochs) + " epochs");
    NetParams init = NetParams::initial(setup.k, setup.j, data.model.n(), setup.init);
    const NetOperator op(data.model.a);
    TrainResult res = train(subset, op, data.model.phi, data.model.n_side, std::move(init), setup.train);

    save_checkpoint(res.params, fs::path(f.out) / "checkpoint.csv");
    io::write_atomic(fs::path(f.out) / "history.csv", format_history_csv(res.history));
    std::ostringstream split;
    split << "role,sample_id\n";
    for (std::size_t i : res.train_indices) split << "train," << data.ids[chosen[i]] << '\n';
    for (std::size_t i : res.val_indices) split << "val," << data.ids[chosen[i]] << '\n';
    io::write_atomic(fs::path(f.out) / "split.csv", split.str());
    io::write_atomic(fs::path(f.out) / "train.txt",
                     io::format_key_values({{"b_mode", to_string(setup.train.b_mode)},
                                            {"loss", to_string(setup.train.loss)},
                                            {"best_epoch", std::to_string(res.best_epoch)},
                                            {"initial_val_loss", io::format_double(res.initial_val_loss)}}));
    log("train: best epoch " + std::to_string(res.best_epoch) + ", wrote " + f.out);
    return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalFlags {
    std::string checkpoint, method, data, out, config, b_mode, loss;
};

int cmd_eval(const EvalFlags& f, const std::string& argline) {
    if (f.checkpoint.empty() == f.method.empty()) throw UsageError("eval needs exactly one of --checkpoint or --method");
    const Config cfg = load_config_or_empty(f.config);
    const Dataset data = read_dataset(f.data);
    if (data.samples.empty()) throw std::runtime_error("empty test set");
    const int n_side = data.model.n_side;

    std::vector<Vector> estimates(data.samples.size());
    io::KeyValues extra;
    if (!f.checkpoint.empty()) {
        const NetParams params = load_checkpoint(f.checkpoint);
        if (params.n != data.model.n())
            throw std::runtime_error("checkpoint has n=" + std::to_string(params.n) + " but the dataset has n=" +
                                     std::to_string(data.model.n()));
        const NetSetup setup = cgnet_config(cfg, n_side, data.snr_db(), is_compressive(data.model));
        const BMode mode = f.b_mode.empty() ? setup.train.b_mode : parse_bmode(f.b_mode);
        const LossKind loss = f.loss.empty() ? setup.train.loss : parse_loss(f.loss);
        const NetOperator op(data.model.a);
        write_manifest(f.out, {"eval", f.config, 0, f.out, argline});
        for_each_index(data.samples.size(),
                       [&](std::size_t i) { estimates[i] = forward(data.samples[i].y, params, op, mode); });
        double loss_sum = 0.0;
        for (std::size_t i = 0; i < estimates.size(); ++i)
            loss_sum += image_loss(estimates[i], data.samples[i].c, data.model.phi, n_side, loss);
        extra["model"] = "cgnet";
        extra["b_mode"] = to_string(mode);
        extra["loss"] = to_string(loss);
        extra["mean_loss"] = io::format_double(loss_sum / static_cast<double>(estimates.size()));
    } else {
        const CglsConfig solver = solver_config(cfg, f.method, n_side, data.snr_db());
        write_manifest(f.out, {"eval", f.config, 0, f.out, argline});
        const std::vector<CglsResult> results = reconstruct_all(data, solver);
        for (std::size_t i = 0; i < results.size(); ++i) estimates[i] = results[i].c_star;
        extra["model"] = f.method;
    }

    std::vector<MetricRow> rows;
    for (std::size_t i = 0; i < estimates.size(); ++i)
        rows.push_back(score_image(data.ids[i], data.model.phi * estimates[i], data.model.phi * data.samples[i].c,
                                   n_side));
    io::write_atomic(fs::path(f.out) / "metrics.csv", format_metrics_csv(rows, 100.0));
    write_summary(fs::path(f.out) / "summary.txt", rows, 100.0, extra);
    log("eval: wrote " + f.out);
    return kExitOk;
}

// ---- verify-theory --------------------------------------------------------

struct TheoryFlags {
    std::string check = "all", out;
    int instances = 0;
    std::uint64_t seed = 0;
};

int cmd_verify_theory(const TheoryFlags& f, const std::string& argline) {
    write_manifest(f.out, {"verify-theory", "", f.seed, f.out, argline});
    auto count = [&](int fallback) { return f.instances > 0 ? f.instances : fallback; };
    std::vector<TheoryReport> reports;
    const bool all = f.check == "all";
    if (all || f.check == "lemma1") reports.push_back(check_lemma1(count(50), f.seed));
    if (all || f.check == "prop1") reports.push_back(check_prop1_scaling(count(20), f.seed));
    if (all || f.check == "prop2") reports.push_back(check_prop2(count(50), f.seed));
    if (all || f.check == "thm1") reports.push_back(check_thm1_rate({10, 100, 1000}, count(10), f.seed));
    if (all || f.check == "thm2") reports.push_back(check_thm2_linear(count(20), f.seed));
    bool ok = true;
    for (auto& r : reports) {
        write_report(r, f.out);
        std::printf("%s\n", r.summary().c_str());
        ok = ok && r.passed;
    }
    std::fflush(stdout);
    return ok ? kExitOk : kExitTheory;
}

} // namespace

int run(const std::vector<std::string>& args) {
    configure_threads();
    CLI::App app{"Compound-Gaussian least squares and CG-Net toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    GenFlags gen;
    auto* g = app.add_subcommand("gen-data", "Synthesize a dataset of measurement/coefficient pairs");
    gen.app = g;
    g->add_option("--images", gen.images, "Directory of PGM images");
    g->add_option("--phantom", gen.phantom, "Built-in phantom (shepp-logan)");
    g->add_option("--n-side", gen.n_side, "Image side length")->check(CLI::Range(2, 4096));
    g->add_option("--operator", gen.op, "radon or gaussian")->check(CLI::IsMember({"radon", "gaussian"}));
    g->add_option("--angles", gen.angles, "Radon angles")->check(CLI::PositiveNumber);
    g->add_option("--sampling-ratio", gen.ratio, "m/n for the Gaussian operator");
    g->add_option("--dict", gen.dict, "wavelet or dct")->check(CLI::IsMember({"wavelet", "dct"}));
    g->add_option("--snr", gen.snr, "SNR in dB, or inf");
    g->add_option("--count", gen.count, "Number of samples")->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--config", gen.config, "INI config file");
    g->add_option("--out", gen.out, "Output directory")->required();

    ReconFlags rec;
    auto* r = app.add_subcommand("reconstruct", "Run CG-LS on every sample of a dataset");
    r->add_option("--method", rec.method, "gcgls or ncgls")->required()->check(CLI::IsMember({"gcgls", "ncgls"}));
    r->add_option("--config", rec.config, "INI config file");
    r->add_option("--data", rec.data, "Dataset directory")->required();
    r->add_option("--out", rec.out, "Output directory")->required();

    TrainFlags tr;
    auto* t = app.add_subcommand("train", "Train CG-Net on a dataset");
    t->add_option("--data", tr.data, "Dataset directory")->required();
    t->add_option("--config", tr.config, "INI config file");
    t->add_option("--epochs", tr.epochs, "Epochs (default 30)")->check(CLI::PositiveNumber);
    t->add_option("--lr", tr.lr, "Adam learning rate (default 1e-3)")->check(CLI::NonNegativeNumber);
    t->add_option("--train-size", tr.train_size, "Deterministic subsample size")->check(CLI::PositiveNumber);
    t->add_option("--k", tr.k, "Unrolled iterations K")->check(CLI::NonNegativeNumber);
    t->add_option("--j", tr.j, "Descent steps per iteration J")->check(CLI::PositiveNumber);
    t->add_option("--b-mode", tr.b_mode, "learned or identity")->check(CLI::IsMember({"learned", "identity"}));
    t->add_option("--loss", tr.loss, "ssim or mae")->check(CLI::IsMember({"ssim", "mae"}));
    t->add_option("--validation-fraction", tr.validation_fraction, "Held-out fraction; 0 validates on the train set")
        ->check(CLI::Range(0.0, 0.99));
    t->add_option("--seed", tr.seed, "Random seed");
    t->add_flag("--verbose", tr.verbose, "Log every epoch");
    t->add_option("--out", tr.out, "Output directory")->required();

    EvalFlags ev;
    auto* e = app.add_subcommand("eval", "Score CG-Net or CG-LS on a test dataset");
    e->add_option("--checkpoint", ev.checkpoint, "CG-Net checkpoint");
    e->add_option("--method", ev.method, "gcgls or ncgls")->check(CLI::IsMember({"gcgls", "ncgls"}));
    e->add_option("--b-mode", ev.b_mode, "learned, identity or newton")
        ->check(CLI::IsMember({"learned", "identity", "newton"}));
    e->add_option("--loss", ev.loss, "ssim or mae")->check(CLI::IsMember({"ssim", "mae"}));
    e->add_option("--config", ev.config, "INI config file");
    e->add_option("--data", ev.data, "Dataset directory")->required();
    e->add_option("--out", ev.out, "Output directory")->required();

    TheoryFlags th;
    auto* v = app.add_subcommand("verify-theory", "Run the empirical convergence checks");
    v->add_option("--check", th.check, "lemma1, prop1, prop2, thm1, thm2 or all")
        ->check(CLI::IsMember({"lemma1", "prop1", "prop2", "thm1", "thm2", "all"}));
    v->add_option("--instances", th.instances, "Instances per check (check-specific default)")
        ->check(CLI::PositiveNumber);
    v->add_option("--seed", th.seed, "Random seed");
    v->add_option("--out", th.out, "Report directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const std::string argline = join_args(args);
    try {
        if (*g) return cmd_gen_data(gen, argline);
        if (*r) return cmd_reconstruct(rec, argline);
        if (*t) return cmd_train(tr, argline);
        if (*e) return cmd_eval(ev, argline);
        if (*v) return cmd_verify_theory(th, argline);
    } catch (const UsageError& err) {
        std::fprintf(stderr, "usage error: %s\n", err.what());
        return kExitUsage;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace cginv::cli
