#pragma once

#include <cginv/types.hpp>

#include <string>
#include <vector>

namespace cginv {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    Vector taps() const;
};

/// Mean local SSIM of two row-major width×height images, sliding a Gaussian
/// window with half-sample symmetric padding. Values are not range-checked so
/// the same routine serves as a training loss on unclamped images.
double ssim(const Vector& x, const Vector& y, int width, int height, const SsimParams& p = {});

struct SsimGradient {
    double value = 0.0;
    Vector d_x; ///< d ssim / d x
};

SsimGradient ssim_with_gradient(const Vector& x, const Vector& y, int width, int height,
                                const SsimParams& p = {});

/// 10 log10(peak² / MSE); identical images give kInf.
double psnr(const Vector& x, const Vector& y, double peak = 1.0);

double mean_abs_error(const Vector& x, const Vector& y);

struct MeanCi {
    double mean = 0.0;
    double half_width = 0.0;
};

/// Sample mean and 2.576·s/sqrt(N) (normal approximation). Needs N >= 2.
MeanCi mean_ci99(const std::vector<double>& values);

struct MetricRow {
    std::string sample_id;
    double ssim = 0.0;
    double psnr = 0.0;
};

/// "sample_id,ssim,psnr" rows followed by "mean" and "ci99" summary rows.
/// `ssim_scale` = 100 gives the ×10² table convention.
std::string format_metrics_csv(const std::vector<MetricRow>& rows, double ssim_scale = 1.0);

/// Both images are clamped to [0,1] before scoring.
MetricRow score_image(const std::string& id, const Vector& estimate, const Vector& truth, int n_side);

} // namespace cginv
