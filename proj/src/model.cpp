#include <cginv/model.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace cginv {

MeasurementModel MeasurementModel::assemble(Matrix psi, Matrix phi, Matrix phi_inv, int n_side,
                                            std::string description) {
    const Index n = static_cast<Index>(n_side) * n_side;
    if (n_side < 1 || psi.cols() != n || phi.rows() != n || phi.cols() != n)
        throw std::invalid_argument("model shapes disagree with n_side");
    if (phi_inv.rows() != n || phi_inv.cols() != n)
        throw std::invalid_argument("analysis matrix must be n×n");
    if (psi.rows() < 1) throw std::invalid_argument("sensing matrix needs at least one row");
    MeasurementModel model;
    model.a = psi * phi;
    model.psi = std::move(psi);
    model.phi = std::move(phi);
    model.phi_inv = std::move(phi_inv);
    model.n_side = n_side;
    model.description = std::move(description);
    return model;
}

int radon_detector_count(int n_side) {
    int d = static_cast<int>(std::ceil(std::numbers::sqrt2 * n_side));
    return (d % 2 == 0) ? d + 1 : d;
}

Matrix build_radon_matrix(int n_side, int n_angles) {
    if (n_side < 2) throw std::invalid_argument("build_radon_matrix: n_side must be >= 2");
    if (n_angles < 1) throw std::invalid_argument("build_radon_matrix: n_angles must be >= 1");
    const int detectors = radon_detector_count(n_side);
    const Index n = static_cast<Index>(n_side) * n_side;
    Matrix r = Matrix::Zero(static_cast<Index>(n_angles) * detectors, n);
    const double centre = 0.5 * (n_side - 1);
    const double det_centre = 0.5 * (detectors - 1);
    for (int k = 0; k < n_angles; ++k) {
        const double theta = std::numbers::pi * k / n_angles;
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const Index row0 = static_cast<Index>(k) * detectors;
        for (int i = 0; i < n_side; ++i) {
            const double y = centre - i;
            for (int j = 0; j < n_side; ++j) {
                const double x = j - centre;
                const double pos = x * c + y * s + det_centre;
                const double lo = std::floor(pos);
                const double frac = pos - lo;
                const Index d0 = static_cast<Index>(lo);
                const Index pix = static_cast<Index>(i) * n_side + j;
                r(row0 + d0, pix) += 1.0 - frac;
                if (frac > 0.0) r(row0 + d0 + 1, pix) += frac;
            }
        }
    }
    return r;
}

Matrix build_gaussian_matrix(Index m, Index n, std::uint64_t seed) {
    if (m < 1 || m > n) throw std::invalid_argument("build_gaussian_matrix: need 1 <= m <= n");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
    Matrix g(m, n);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) g(i, j) = normal(rng);
    return g;
}

namespace {

// CDF 9/7 lifting coefficients.
constexpr double kAlpha = -1.586134342059924;
constexpr double kBeta = -0.052980118572961;
constexpr double kGamma = 0.882911075530934;
constexpr double kDelta = 0.443506852043971;
constexpr double kZeta = 1.230174104914001;
// Low band DC gain sqrt(2); high band scaled reciprocally.
constexpr double kLowScale = std::numbers::sqrt2 / kZeta;
constexpr double kHighScale = kZeta / std::numbers::sqrt2;

// One analysis level on `len` samples at stride `stride`, output [low | high].
void lift_forward(double* x, Index len, Index stride, std::vector<double>& s, std::vector<double>& d) {
    const Index h = len / 2;
    s.resize(h);
    d.resize(h);
    for (Index i = 0; i < h; ++i) {
        s[i] = x[(2 * i) * stride];
        d[i] = x[(2 * i + 1) * stride];
    }
    auto nxt = [h](Index i) { return (i + 1) % h; };
    auto prv = [h](Index i) { return (i + h - 1) % h; };
    for (Index i = 0; i < h; ++i) d[i] += kAlpha * (s[i] + s[nxt(i)]);
    for (Index i = 0; i < h; ++i) s[i] += kBeta * (d[prv(i)] + d[i]);
    for (Index i = 0; i < h; ++i) d[i] += kGamma * (s[i] + s[nxt(i)]);
    for (Index i = 0; i < h; ++i) s[i] += kDelta * (d[prv(i)] + d[i]);
    for (Index i = 0; i < h; ++i) {
        x[i * stride] = s[i] * kLowScale;
        x[(h + i) * stride] = d[i] * kHighScale;
    }
}

void lift_inverse(double* x, Index len, Index stride, std::vector<double>& s, std::vector<double>& d) {
    const Index h = len / 2;
    s.resize(h);
    d.resize(h);
    for (Index i = 0; i < h; ++i) {
        s[i] = x[i * stride] / kLowScale;
        d[i] = x[(h + i) * stride] / kHighScale;
    }
    auto nxt = [h](Index i) { return (i + 1) % h; };
    auto prv = [h](Index i) { return (i + h - 1) % h; };
    for (Index i = 0; i < h; ++i) s[i] -= kDelta * (d[prv(i)] + d[i]);
    for (Index i = 0; i < h; ++i) d[i] -= kGamma * (s[i] + s[nxt(i)]);
    for (Index i = 0; i < h; ++i) s[i] -= kBeta * (d[prv(i)] + d[i]);
    for (Index i = 0; i < h; ++i) d[i] -= kAlpha * (s[i] + s[nxt(i)]);
    for (Index i = 0; i < h; ++i) {
        x[(2 * i) * stride] = s[i];
        x[(2 * i + 1) * stride] = d[i];
    }
}

void check_wavelet_shape(int n_side, int levels) {
    if (n_side < 2 || levels < 1) throw std::invalid_argument("wavelet: need n_side >= 2 and levels >= 1");
    if (n_side % (1 << levels) != 0)
        throw std::invalid_argument("wavelet: n_side must be divisible by 2^levels");
}

} // namespace

int default_wavelet_levels(int n_side) { return n_side <= 64 ? 2 : 3; }

void wavelet_forward_2d(Vector& data, int n_side, int levels) {
    check_wavelet_shape(n_side, levels);
    std::vector<double> s, d;
    Index size = n_side;
    for (int level = 0; level < levels; ++level, size /= 2) {
        for (Index r = 0; r < size; ++r) lift_forward(data.data() + r * n_side, size, 1, s, d);
        for (Index c = 0; c < size; ++c) lift_forward(data.data() + c, size, n_side, s, d);
    }
}

void wavelet_inverse_2d(Vector& data, int n_side, int levels) {
    check_wavelet_shape(n_side, levels);
    std::vector<double> s, d;
    for (int level = levels - 1; level >= 0; --level) {
        const Index size = n_side >> level;
        for (Index c = 0; c < size; ++c) lift_inverse(data.data() + c, size, n_side, s, d);
        for (Index r = 0; r < size; ++r) lift_inverse(data.data() + r * n_side, size, 1, s, d);
    }
}

WaveletDictionary build_wavelet_dictionary(int n_side, int levels) {
    check_wavelet_shape(n_side, levels);
    const Index n = static_cast<Index>(n_side) * n_side;
    WaveletDictionary dict{Matrix(n, n), Matrix(n, n)};
    Vector e(n);
    for (Index k = 0; k < n; ++k) {
        e.setZero();
        e[k] = 1.0;
        wavelet_inverse_2d(e, n_side, levels);
        dict.synthesis.col(k) = e;
        e.setZero();
        e[k] = 1.0;
        wavelet_forward_2d(e, n_side, levels);
        dict.analysis.col(k) = e;
    }
    return dict;
}

Matrix build_dct_dictionary(int n_side) {
    if (n_side < 2) throw std::invalid_argument("build_dct_dictionary: n_side must be >= 2");
    const Index nn = n_side;
    Matrix c(nn, nn);
    for (Index k = 0; k < nn; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(nn));
        for (Index j = 0; j < nn; ++j)
            c(k, j) = scale * std::cos(std::numbers::pi * (2.0 * j + 1.0) * k / (2.0 * nn));
    }
    // Row-major vec(C X C^T) = (C ⊗ C) vec(X); synthesis is the transpose.
    Matrix analysis(nn * nn, nn * nn);
    for (Index k = 0; k < nn; ++k)
        for (Index i = 0; i < nn; ++i) analysis.block(k * nn, i * nn, nn, nn) = c(k, i) * c;
    return analysis.transpose();
}

Vector shepp_logan_phantom(int n_side, std::uint64_t perturb_seed) {
    struct Ellipse {
        double value, a, b, x0, y0, phi_deg;
    };
    std::array<Ellipse, 10> ellipses{{
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    }};
    if (perturb_seed != 0) {
        std::mt19937_64 rng(perturb_seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (std::size_t e = 0; e < ellipses.size(); ++e) {
            auto& el = ellipses[e];
            const double jitter = u(rng), ax = u(rng), bx = u(rng), val = u(rng), rot = u(rng);
            if (e >= 2) {
                el.x0 += 0.04 * jitter;
                el.y0 += 0.04 * u(rng);
                el.value += 0.08 * val;
                el.phi_deg += 10.0 * rot;
            }
            el.a *= 1.0 + 0.06 * ax;
            el.b *= 1.0 + 0.06 * bx;
        }
    }
    constexpr int kSuper = 4;
    const Index n = static_cast<Index>(n_side) * n_side;
    Vector img = Vector::Zero(n);
    for (int i = 0; i < n_side; ++i) {
        for (int j = 0; j < n_side; ++j) {
            double acc = 0.0;
            for (int si = 0; si < kSuper; ++si) {
                for (int sj = 0; sj < kSuper; ++sj) {
                    const double x = (2.0 * (j + (sj + 0.5) / kSuper)) / n_side - 1.0;
                    const double y = 1.0 - (2.0 * (i + (si + 0.5) / kSuper)) / n_side;
                    double v = 0.0;
                    for (const auto& el : ellipses) {
                        const double phi = el.phi_deg * std::numbers::pi / 180.0;
                        const double dx = x - el.x0, dy = y - el.y0;
                        const double xr = dx * std::cos(phi) + dy * std::sin(phi);
                        const double yr = -dx * std::sin(phi) + dy * std::cos(phi);
                        if ((xr * xr) / (el.a * el.a) + (yr * yr) / (el.b * el.b) <= 1.0) v += el.value;
                    }
                    acc += std::clamp(v, 0.0, 1.0);
                }
            }
            img[static_cast<Index>(i) * n_side + j] = acc / (kSuper * kSuper);
        }
    }
    return img;
}

Vector add_white_noise(const Vector& clean, double snr_db, std::uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0) return clean;
    if (!std::isfinite(snr_db)) throw std::invalid_argument("snr_db must be finite or +inf");
    const double variance =
        clean.squaredNorm() / (static_cast<double>(clean.size()) * std::pow(10.0, snr_db / 10.0));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(variance));
    Vector y = clean;
    for (Index i = 0; i < y.size(); ++i) y[i] += normal(rng);
    return y;
}

Sample synthesize_measurement(const MeasurementModel& model, const Vector& image, double snr_db,
                              std::uint64_t seed) {
    if (image.size() != model.n()) throw std::invalid_argument("image length must equal n");
    for (Index i = 0; i < image.size(); ++i) {
        if (!(image[i] >= -1e-9 && image[i] <= 1.0 + 1e-9))
            throw std::invalid_argument("image value outside [0,1] at index " + std::to_string(i));
    }
    Sample s;
    s.c = model.phi_inv * image;
    s.y = add_white_noise(model.a * s.c, snr_db, seed);
    s.snr_db = snr_db;
    s.seed = seed;
    return s;
}

} // namespace cginv
