#include "support.hpp"

#include <cginv/metrics.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace cginv;
using cginv::testing::random_vector;

TEST(Ssim, IdenticalImagesScoreOne) {
    Vector x = random_vector(32 * 32, 1, 0, 1);
    EXPECT_NEAR(ssim(x, x, 32, 32), 1.0, 1e-12);
}

TEST(Ssim, SymmetricBoundedAndDegrades) {
    Vector x = random_vector(24 * 16, 2, 0, 1);
    Vector y = x + 0.05 * random_vector(24 * 16, 3, -1, 1);
    Vector z = x + 0.3 * random_vector(24 * 16, 4, -1, 1);
    const double sxy = ssim(x, y, 24, 16);
    EXPECT_NEAR(sxy, ssim(y, x, 24, 16), 1e-14);
    EXPECT_LT(sxy, 1.0);
    EXPECT_GT(sxy, ssim(x, z, 24, 16));
    EXPECT_GE(ssim(x, Vector(1.0 - x.array()), 24, 16), -1.0);
}

TEST(Ssim, ConstantImagesFollowLuminanceTerm) {
    // With no variance SSIM reduces to (2 a b + C1) / (a² + b² + C1).
    const double c1 = 0.01 * 0.01;
    const double a = 0.3, b = 0.6;
    EXPECT_NEAR(ssim(Vector::Constant(256, a), Vector::Constant(256, b), 16, 16),
                (2 * a * b + c1) / (a * a + b * b + c1), 1e-12);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
    const int w = 12, h = 10;
    Vector x = random_vector(w * h, 5, 0, 1);
    Vector y = random_vector(w * h, 6, 0, 1);
    SsimGradient g = ssim_with_gradient(x, y, w, h);
    EXPECT_NEAR(g.value, ssim(x, y, w, h), 1e-14);
    Vector fd(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp[i] += 1e-6;
        xm[i] -= 1e-6;
        fd[i] = (ssim(xp, y, w, h) - ssim(xm, y, w, h)) / 2e-6;
    }
    EXPECT_LT((g.d_x - fd).norm() / fd.norm(), 1e-6);
}

TEST(Ssim, RejectsShapeMismatch) {
    EXPECT_THROW(ssim(Vector::Zero(10), Vector::Zero(12), 3, 4), std::invalid_argument);
}

TEST(Psnr, KnownValues) {
    Vector x = Vector::Constant(100, 0.5);
    EXPECT_EQ(psnr(x, x), kInf);
    Vector y = x.array() + 0.1;
    EXPECT_NEAR(psnr(x, y), 20.0, 1e-10);
    EXPECT_NEAR(mean_abs_error(x, y), 0.1, 1e-15);
}

TEST(MeanCi, NormalApproximation) {
    MeanCi r = mean_ci99({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(r.mean, 2.5);
    EXPECT_NEAR(r.half_width, 2.576 * std::sqrt(5.0 / 3.0) / 2.0, 1e-14);
    EXPECT_THROW(mean_ci99({1.0}), std::invalid_argument);
}

TEST(MetricsCsv, SummaryRecomputableFromRows) {
    std::vector<MetricRow> rows{{"a", 0.9, 30.0}, {"b", 0.8, 25.0}, {"c", 0.85, 27.0}};
    const std::string csv = format_metrics_csv(rows, 100.0);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "sample_id,ssim,psnr");
    std::vector<double> s;
    for (int i = 0; i < 3; ++i) {
        std::getline(in, line);
        s.push_back(std::stod(line.substr(line.find(',') + 1)));
    }
    EXPECT_NEAR(s[0], 90.0, 1e-12);
    std::getline(in, line);
    EXPECT_EQ(line.rfind("mean,", 0), 0u);
    EXPECT_NEAR(std::stod(line.substr(5)), mean_ci99(s).mean, 1e-12);
    std::getline(in, line);
    EXPECT_EQ(line.rfind("ci99,", 0), 0u);
    EXPECT_NEAR(std::stod(line.substr(5)), mean_ci99(s).half_width, 1e-12);
}

TEST(ScoreImage, ClampsBeforeScoring) {
    Vector truth = random_vector(64, 7, 0, 1);
    Vector est = truth;
    est[0] = 3.0;
    est[1] = -2.0;
    Vector clamped = est.cwiseMax(0.0).cwiseMin(1.0);
    MetricRow r = score_image("x", est, truth, 8);
    EXPECT_EQ(r.ssim, ssim(clamped, truth, 8, 8));
    EXPECT_EQ(r.psnr, psnr(clamped, truth));
}
