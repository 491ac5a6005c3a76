#pragma once

#include <cginv/cgls.hpp>
#include <cginv/model.hpp>
#include <cginv/parallel.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cginv {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

/// Samples bound to one model. On disk:
///   model/{psi,phi,phi_inv,a}.csv, model/model.txt
///   samples/<id>/{y.csv,c.csv,meta}
///   manifest.txt
struct Dataset {
    MeasurementModel model;
    std::vector<std::string> ids;
    std::vector<Sample> samples;

    /// SNR shared by every sample (kInf when noiseless). Throws when samples disagree.
    double snr_db() const;
};

void write_model(const fs::path& dir, const MeasurementModel& model);
/// Throws std::runtime_error naming the missing file, FormatError on bad contents
/// or when a.csv disagrees with the recorded hash.
MeasurementModel read_model(const fs::path& dir);

void write_dataset(const fs::path& dir, const Dataset& data);
Dataset read_dataset(const fs::path& dir);

std::string sample_id(std::size_t index);

/// Written before any other output of a command; one per output directory.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::string arguments;
};
void write_manifest(const fs::path& dir, const RunManifest& manifest);

struct GenSpec {
    std::string source = "phantom"; ///< "phantom" (perturbed Shepp–Logan) or "images"
    fs::path images_dir;            ///< PGM files, used in lexicographic order
    int n_side = 32;
    std::string op = "radon"; ///< "radon" or "gaussian"
    int angles = 15;
    double sampling_ratio = 0.5;
    std::string dict = "wavelet"; ///< "wavelet" or "dct"
    double snr_db = 60.0;
    int count = 20;
    std::uint64_t seed = 0;
};

MeasurementModel build_model(const GenSpec& spec);

/// Reads every *.pgm in `dir` (sorted by name), checks it is n_side × n_side and
/// divides by its maximum pixel. At most `limit` images when limit > 0.
std::vector<Vector> load_images(const fs::path& dir, int n_side, int limit);

/// Deterministic in `spec.seed`; sample i uses phantom and noise seeds derived from (seed, i).
Dataset generate_dataset(const GenSpec& spec, const std::vector<Vector>& images = {});

/// `k` distinct indices of [0, total) in ascending order, determined by `seed`.
std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t k, std::uint64_t seed);

/// run_cgls on every sample; runs are independent so they are spread over workers.
std::vector<CglsResult> reconstruct_all(const Dataset& data, const CglsConfig& cfg,
                                        Execution exec = Execution::parallel);

/// "iteration,cost,grad_dual_norm,step_size"; the step of row k produced iterate k.
std::string format_trace_csv(const CglsTrace& trace);

} // namespace cginv
