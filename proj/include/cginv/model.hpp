#pragma once

#include <cginv/types.hpp>

#include <cstdint>
#include <string>

namespace cginv {

/// Forward model y = Psi * Phi * c + noise for an n_side × n_side image.
///
/// `phi` synthesizes an image (row-major vector) from coefficients and
/// `phi_inv` is its exact analysis inverse. `a` caches psi * phi.
struct MeasurementModel {
    Matrix psi;
    Matrix phi;
    Matrix phi_inv;
    Matrix a;
    int n_side = 0;
    std::string description;

    Index m() const { return a.rows(); }
    Index n() const { return a.cols(); }

    /// Assembles a model and caches the product. Throws on shape mismatch.
    static MeasurementModel assemble(Matrix psi, Matrix phi, Matrix phi_inv, int n_side, std::string description);
};

/// One measurement/coefficient pair.
struct Sample {
    Vector y;
    Vector c;
    double snr_db = kInf;
    std::uint64_t seed = 0;
};

/// Detectors per angle for the parallel-beam geometry: ceil(sqrt(2) n_side), rounded up to odd.
int radon_detector_count(int n_side);

/// Explicit parallel-beam Radon matrix of shape (n_angles * n_detectors) × n_side².
///
/// Angles are k·180°/n_angles. Each pixel's mass is split linearly between
/// the two detector bins adjacent to its projected centre, so every angle
/// conserves total mass exactly. Rows are ordered angle-major.
Matrix build_radon_matrix(int n_side, int n_angles);

/// m × n matrix with i.i.d. N(0, 1/m) entries, deterministic under `seed`.
Matrix build_gaussian_matrix(Index m, Index n, std::uint64_t seed);

/// Separable 2-D CDF 9/7 wavelet with periodic extension.
struct WaveletDictionary {
    Matrix synthesis; ///< coefficients -> image
    Matrix analysis;  ///< image -> coefficients
};
WaveletDictionary build_wavelet_dictionary(int n_side, int levels);

/// Default decomposition depth: 2 levels up to 64×64, 3 beyond.
int default_wavelet_levels(int n_side);

/// In-place multi-level 2-D CDF 9/7 transforms on a row-major n_side² image.
void wavelet_forward_2d(Vector& data, int n_side, int levels);
void wavelet_inverse_2d(Vector& data, int n_side, int levels);

/// Orthonormal 2-D DCT-II synthesis matrix (its transpose is the analysis).
Matrix build_dct_dictionary(int n_side);

/// Modified Shepp–Logan phantom rasterized at n_side², values in [0,1].
/// `perturb_seed` != 0 jitters ellipse centres, axes and intensities.
Vector shepp_logan_phantom(int n_side, std::uint64_t perturb_seed = 0);

/// c = Phi^{-1} image, y = A c + white noise at `snr_db` (kInf for none).
/// Noise variance per entry is ||A c||² / (m · 10^(snr/10)).
Sample synthesize_measurement(const MeasurementModel& model, const Vector& image, double snr_db,
                              std::uint64_t seed);

/// Adds white Gaussian noise to `clean` at the given SNR.
Vector add_white_noise(const Vector& clean, double snr_db, std::uint64_t seed);

} // namespace cginv
