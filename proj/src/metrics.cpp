#include <cginv/metrics.hpp>

#include <cginv/io.hpp>

#include <cmath>
#include <sstream>

namespace cginv {

Vector SsimParams::taps() const {
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("ssim window must be odd and positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("ssim sigma must be > 0");
    Vector w(window);
    const int half = window / 2;
    for (int i = 0; i < window; ++i) {
        const double t = i - half;
        w[i] = std::exp(-t * t / (2.0 * sigma * sigma));
    }
    return w / w.sum();
}

namespace {

// Half-sample symmetric reflection: ... b a | a b c ... c | c b ...
int reflect(int i, int size) {
    const int period = 2 * size;
    int r = ((i % period) + period) % period;
    return r < size ? r : period - 1 - r;
}

// Separable Gaussian filter over a row-major width×height image.
class Filter {
public:
    Filter(const Vector& taps, int width, int height) : taps_(taps), width_(width), height_(height) {}

    Vector apply(const Vector& img) const {
        const int half = static_cast<int>(taps_.size()) / 2;
        Vector tmp = Vector::Zero(img.size());
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c) {
                double acc = 0.0;
                for (int t = -half; t <= half; ++t) acc += taps_[t + half] * img[r * width_ + reflect(c + t, width_)];
                tmp[r * width_ + c] = acc;
            }
        Vector out = Vector::Zero(img.size());
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c) {
                double acc = 0.0;
                for (int t = -half; t <= half; ++t) acc += taps_[t + half] * tmp[reflect(r + t, height_) * width_ + c];
                out[r * width_ + c] = acc;
            }
        return out;
    }

    Vector apply_transpose(const Vector& img) const {
        const int half = static_cast<int>(taps_.size()) / 2;
        Vector tmp = Vector::Zero(img.size());
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c)
                for (int t = -half; t <= half; ++t)
                    tmp[reflect(r + t, height_) * width_ + c] += taps_[t + half] * img[r * width_ + c];
        Vector out = Vector::Zero(img.size());
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c)
                for (int t = -half; t <= half; ++t)
                    out[r * width_ + reflect(c + t, width_)] += taps_[t + half] * tmp[r * width_ + c];
        return out;
    }

private:
    Vector taps_;
    int width_;
    int height_;
};

void check_images(const Vector& x, const Vector& y, int width, int height) {
    if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be positive");
    if (x.size() != y.size()) throw std::invalid_argument("image dimensions differ");
    if (x.size() != static_cast<Index>(width) * height)
        throw std::invalid_argument("image length does not match width*height");
}

} // namespace

SsimGradient ssim_with_gradient(const Vector& x, const Vector& y, int width, int height, const SsimParams& p) {
    check_images(x, y, width, height);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    Filter filter(p.taps(), width, height);
    const Vector mx = filter.apply(x);
    const Vector my = filter.apply(y);
    const Vector sxx = filter.apply(x.cwiseProduct(x)) - mx.cwiseProduct(mx);
    const Vector syy = filter.apply(y.cwiseProduct(y)) - my.cwiseProduct(my);
    const Vector sxy = filter.apply(x.cwiseProduct(y)) - mx.cwiseProduct(my);

    const Index n = x.size();
    Vector coef_mean(n), coef_sq(n), coef_cross(n);
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double n1 = 2.0 * mx[i] * my[i] + c1;
        const double n2 = 2.0 * sxy[i] + c2;
        const double d1 = mx[i] * mx[i] + my[i] * my[i] + c1;
        const double d2 = sxx[i] + syy[i] + c2;
        const double s = n1 * n2 / (d1 * d2);
        total += s;
        const double ds_dmx = 2.0 * my[i] * n2 / (d1 * d2) - s * 2.0 * mx[i] / d1;
        const double ds_dsxx = -s / d2;
        const double ds_dsxy = 2.0 * n1 / (d1 * d2);
        // sxx and sxy depend on mx through their mean-subtraction terms.
        coef_mean[i] = ds_dmx - 2.0 * mx[i] * ds_dsxx - my[i] * ds_dsxy;
        coef_sq[i] = ds_dsxx;
        coef_cross[i] = ds_dsxy;
    }
    SsimGradient out;
    out.value = total / static_cast<double>(n);
    out.d_x = filter.apply_transpose(coef_mean) + 2.0 * x.cwiseProduct(filter.apply_transpose(coef_sq)) +
              y.cwiseProduct(filter.apply_transpose(coef_cross));
    out.d_x /= static_cast<double>(n);
    return out;
}

double ssim(const Vector& x, const Vector& y, int width, int height, const SsimParams& p) {
    return ssim_with_gradient(x, y, width, height, p).value;
}

double psnr(const Vector& x, const Vector& y, double peak) {
    if (x.size() != y.size() || x.size() == 0) throw std::invalid_argument("psnr: image dimensions differ");
    const double mse = (x - y).squaredNorm() / static_cast<double>(x.size());
    if (mse == 0.0) return kInf;
    return 10.0 * std::log10(peak * peak / mse);
}

double mean_abs_error(const Vector& x, const Vector& y) {
    if (x.size() != y.size() || x.size() == 0) throw std::invalid_argument("mae: image dimensions differ");
    return (x - y).cwiseAbs().mean();
}

MeanCi mean_ci99(const std::vector<double>& values) {
    if (values.size() < 2) throw std::invalid_argument("mean_ci99 needs at least two values");
    const double count = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= count;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (count - 1.0));
    return {mean, 2.576 * sd / std::sqrt(count)};
}

std::string format_metrics_csv(const std::vector<MetricRow>& rows, double ssim_scale) {
    std::ostringstream out;
    out << "sample_id,ssim,psnr\n";
    std::vector<double> s, q;
    for (const auto& r : rows) {
        out << r.sample_id << ',' << io::format_double(ssim_scale * r.ssim) << ',' << io::format_double(r.psnr)
            << '\n';
        s.push_back(ssim_scale * r.ssim);
        q.push_back(r.psnr);
    }
    if (rows.size() >= 2) {
        const MeanCi ms = mean_ci99(s);
        const MeanCi mq = mean_ci99(q);
        out << "mean," << io::format_double(ms.mean) << ',' << io::format_double(mq.mean) << '\n';
        out << "ci99," << io::format_double(ms.half_width) << ',' << io::format_double(mq.half_width) << '\n';
    }
    return out.str();
}

MetricRow score_image(const std::string& id, const Vector& estimate, const Vector& truth, int n_side) {
    const Vector x = estimate.cwiseMax(0.0).cwiseMin(1.0);
    const Vector y = truth.cwiseMax(0.0).cwiseMin(1.0);
    return {id, ssim(x, y, n_side, n_side), psnr(x, y, 1.0)};
}

} // namespace cginv
