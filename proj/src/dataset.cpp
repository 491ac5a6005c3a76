#include <cginv/dataset.hpp>
#include <cginv/io.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <numeric>
#include <random>
#include <sstream>

namespace cginv {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
    // never 0: the phantom treats 0 as "unperturbed"
    const std::uint64_t s = splitmix(splitmix(seed ^ (stream << 56)) + index);
    return s == 0 ? 1 : s;
}

fs::path require(const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("missing file: " + p.string());
    return p;
}

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string snr_text(double snr) { return std::isinf(snr) ? "inf" : io::format_double(snr); }

double parse_snr(const std::string& s) { return s == "inf" ? kInf : io::parse_double(s, 0); }

} // namespace

double Dataset::snr_db() const {
    if (samples.empty()) return kInf;
    const double first = samples.front().snr_db;
    for (const auto& s : samples)
        if (!(s.snr_db == first)) throw std::runtime_error("dataset mixes SNR levels");
    return first;
}

void write_model(const fs::path& dir, const MeasurementModel& model) {
    fs::create_directories(dir);
    io::write_matrix_csv(dir / "psi.csv", model.psi);
    io::write_matrix_csv(dir / "phi.csv", model.phi);
    io::write_matrix_csv(dir / "phi_inv.csv", model.phi_inv);
    io::write_matrix_csv(dir / "a.csv", model.a);
    io::KeyValues kv{{"n_side", std::to_string(model.n_side)},
                     {"description", model.description},
                     {"m", std::to_string(model.m())},
                     {"n", std::to_string(model.n())},
                     {"a_hash", io::hex64(io::matrix_hash(model.a))}};
    io::write_atomic(dir / "model.txt", io::format_key_values(kv));
}

MeasurementModel read_model(const fs::path& dir) {
    const io::KeyValues kv = io::parse_key_values(io::read_file(require(dir / "model.txt")));
    auto field = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("model.txt lacks '" + key + "'", 0);
        return it->second;
    };
    const int n_side = static_cast<int>(io::parse_long(field("n_side"), 0));
    MeasurementModel model = MeasurementModel::assemble(
        io::read_matrix_csv(require(dir / "psi.csv")), io::read_matrix_csv(require(dir / "phi.csv")),
        io::read_matrix_csv(require(dir / "phi_inv.csv")), n_side, field("description"));
    // Keep the stored A so a reload reproduces results bit for bit.
    Matrix stored = io::read_matrix_csv(require(dir / "a.csv"));
    if (io::hex64(io::matrix_hash(stored)) != field("a_hash"))
        throw FormatError("a.csv does not match the hash in model.txt", 0);
    if (stored.rows() != model.a.rows() || stored.cols() != model.a.cols() ||
        (stored - model.a).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, model.a.cwiseAbs().maxCoeff()))
        throw FormatError("a.csv disagrees with psi * phi", 0);
    model.a = std::move(stored);
    return model;
}

std::string sample_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", index);
    return buf;
}

void write_dataset(const fs::path& dir, const Dataset& data) {
    if (data.ids.size() != data.samples.size()) throw std::invalid_argument("write_dataset: ids/samples mismatch");
    write_model(dir / "model", data.model);
    const std::string hash = io::hex64(io::matrix_hash(data.model.a));
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const fs::path sd = dir / "samples" / data.ids[i];
        fs::create_directories(sd);
        const Sample& s = data.samples[i];
        io::write_vector_csv(sd / "y.csv", s.y);
        io::write_vector_csv(sd / "c.csv", s.c);
        io::write_atomic(sd / "meta", io::format_key_values({{"snr_db", snr_text(s.snr_db)},
                                                             {"seed", std::to_string(s.seed)},
                                                             {"model_hash", hash}}));
    }
}

Dataset read_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
    Dataset data;
    data.model = read_model(dir / "model");
    const std::string hash = io::hex64(io::matrix_hash(data.model.a));
    std::vector<fs::path> dirs;
    if (fs::is_directory(dir / "samples"))
        for (const auto& e : fs::directory_iterator(dir / "samples"))
            if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& sd : dirs) {
        const io::KeyValues meta = io::parse_key_values(io::read_file(require(sd / "meta")));
        if (!meta.count("snr_db") || !meta.count("seed") || !meta.count("model_hash"))
            throw FormatError("incomplete meta in " + sd.string(), 0);
        if (meta.at("model_hash") != hash)
            throw FormatError("sample " + sd.filename().string() + " was generated for a different model", 0);
        Sample s;
        s.y = io::read_vector_csv(require(sd / "y.csv"));
        s.c = io::read_vector_csv(require(sd / "c.csv"));
        if (s.y.size() != data.model.m() || s.c.size() != data.model.n())
            throw FormatError("sample " + sd.filename().string() + " has the wrong dimensions", 0);
        s.snr_db = parse_snr(meta.at("snr_db"));
        s.seed = static_cast<std::uint64_t>(std::stoull(meta.at("seed")));
        data.ids.push_back(sd.filename().string());
        data.samples.push_back(std::move(s));
    }
    return data;
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
    fs::create_directories(dir);
    io::KeyValues kv{{"command", m.command},
                     {"config_path", m.config_path},
                     {"seed", std::to_string(m.seed)},
                     {"output_dir", m.output_dir},
                     {"tool_version", kToolVersion},
                     {"arguments", m.arguments},
                     {"started_at", iso_now()}};
    io::write_atomic(dir / "manifest.txt", io::format_key_values(kv));
}

MeasurementModel build_model(const GenSpec& spec) {
    if (spec.n_side < 2) throw std::invalid_argument("n_side must be >= 2");
    const int n_side = spec.n_side;
    const Index n = static_cast<Index>(n_side) * n_side;

    Matrix phi, phi_inv;
    if (spec.dict == "wavelet") {
        WaveletDictionary w = build_wavelet_dictionary(n_side, default_wavelet_levels(n_side));
        phi = std::move(w.synthesis);
        phi_inv = std::move(w.analysis);
    } else if (spec.dict == "dct") {
        phi = build_dct_dictionary(n_side);
        phi_inv = phi.transpose();
    } else {
        throw std::invalid_argument("unknown dictionary '" + spec.dict + "' (expected wavelet or dct)");
    }

    Matrix psi;
    std::string desc;
    if (spec.op == "radon") {
        psi = build_radon_matrix(n_side, spec.angles);
        desc = "radon angles=" + std::to_string(spec.angles);
    } else if (spec.op == "gaussian") {
        if (!(spec.sampling_ratio > 0.0 && spec.sampling_ratio <= 1.0))
            throw std::invalid_argument("sampling ratio must lie in (0, 1]");
        const Index m = std::max<Index>(1, static_cast<Index>(std::llround(spec.sampling_ratio * n)));
        psi = build_gaussian_matrix(m, n, derive_seed(spec.seed, 0, 3));
        desc = "gaussian ratio=" + io::format_double(spec.sampling_ratio);
    } else {
        throw std::invalid_argument("unknown operator '" + spec.op + "' (expected radon or gaussian)");
    }
    return MeasurementModel::assemble(std::move(psi), std::move(phi), std::move(phi_inv), n_side,
                                      desc + " dict=" + spec.dict);
}

std::vector<Vector> load_images(const fs::path& dir, int n_side, int limit) {
    if (!fs::is_directory(dir)) throw std::runtime_error("image directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .pgm images in " + dir.string());
    if (limit > 0 && files.size() > static_cast<std::size_t>(limit)) files.resize(static_cast<std::size_t>(limit));
    std::vector<Vector> out;
    for (const auto& f : files) {
        io::Image img = io::read_pgm(f);
        if (img.width != n_side || img.height != n_side)
            throw std::runtime_error(f.filename().string() + " is " + std::to_string(img.width) + "x" +
                                     std::to_string(img.height) + ", expected " + std::to_string(n_side) + "x" +
                                     std::to_string(n_side));
        const double peak = img.pixels.maxCoeff();
        if (peak > 0.0) img.pixels /= peak;
        out.push_back(std::move(img.pixels));
    }
    return out;
}

Dataset generate_dataset(const GenSpec& spec, const std::vector<Vector>& images) {
    if (spec.count < 1) throw std::invalid_argument("count must be >= 1");
    Dataset data;
    data.model = build_model(spec);
    const bool phantom = spec.source == "phantom";
    if (!phantom && spec.source != "images") throw std::invalid_argument("unknown source '" + spec.source + "'");
    if (!phantom && images.empty()) throw std::invalid_argument("no images supplied");
    const std::size_t count = phantom ? static_cast<std::size_t>(spec.count)
                                      : std::min(images.size(), static_cast<std::size_t>(spec.count));
    for (std::size_t i = 0; i < count; ++i) {
        const Vector image = phantom ? shepp_logan_phantom(spec.n_side, derive_seed(spec.seed, i, 1)) : images[i];
        data.ids.push_back(sample_id(i));
        data.samples.push_back(synthesize_measurement(data.model, image, spec.snr_db, derive_seed(spec.seed, i, 2)));
    }
    return data;
}

std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t k, std::uint64_t seed) {
    if (k > total)
        throw std::invalid_argument("requested " + std::to_string(k) + " samples from a dataset of " +
                                    std::to_string(total));
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<CglsResult> reconstruct_all(const Dataset& data, const CglsConfig& cfg, Execution exec) {
    std::vector<CglsResult> out(data.samples.size());
    for_each_index(
        data.samples.size(), [&](std::size_t i) { out[i] = run_cgls(data.samples[i].y, data.model.a, cfg); }, exec);
    return out;
}

std::string format_trace_csv(const CglsTrace& trace) {
    std::ostringstream out;
    out << "iteration,cost,grad_dual_norm,step_size\n";
    std::size_t consumed = 0;
    for (std::size_t k = 0; k < trace.costs.size(); ++k) {
        out << k << ',' << io::format_double(trace.costs[k]) << ',';
        out << (k < trace.grad_dual_norms.size() ? io::format_double(trace.grad_dual_norms[k]) : "") << ',';
        // last z step of the outer iteration that produced iterate k
        if (k > 0 && k - 1 < trace.steps_per_iteration.size()) {
            consumed += static_cast<std::size_t>(trace.steps_per_iteration[k - 1]);
            if (trace.steps_per_iteration[k - 1] > 0) out << io::format_double(trace.step_sizes[consumed - 1]);
        }
        out << '\n';
    }
    return out.str();
}

} // namespace cginv
