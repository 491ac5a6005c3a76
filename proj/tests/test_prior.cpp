#include "support.hpp"

#include <cginv/prior.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace cginv;

TEST(LogNonlinearity, ClosedForms) {
    NonlinearitySpec f = log_nonlinearity();
    EXPECT_EQ(f.eval(1.0), 0.0);
    EXPECT_DOUBLE_EQ(f.d1(2.0), 0.5);
    EXPECT_DOUBLE_EQ(f.d2(1.0), -1.0);
    EXPECT_EQ(f.z_min, 0.0);
    EXPECT_EQ(f.name, "ln");
}

TEST(LogNonlinearity, DerivativesAgreeWithDifferences) {
    EXPECT_LT(derivative_consistency_error(log_nonlinearity()), 1e-5);
}

TEST(LogNonlinearity, CoerciveAtBothEnds) {
    NonlinearitySpec f = log_nonlinearity();
    EXPECT_LT(f.eval(f.z_min + 1e-6), -10.0);
    EXPECT_GT(f.eval(1e6), 10.0);
}

TEST(Hf, MatchesClosedForm) {
    const NonlinearitySpec f = log_nonlinearity();
    const double e = std::numbers::e;
    Vector z(3);
    z << 1.0, e, e * e;
    Vector h = hf(f, z);
    EXPECT_NEAR(h[0], 1.0, 1e-15);
    EXPECT_NEAR(h[1], 0.0, 1e-15);
    EXPECT_NEAR(h[2], -std::exp(-4.0), 1e-15);
    Vector grid = cginv::testing::random_vector(50, 3, 0.05, 20.0);
    Vector hg = hf(f, grid);
    for (Index i = 0; i < grid.size(); ++i)
        EXPECT_NEAR(hg[i], (1.0 - std::log(grid[i])) / (grid[i] * grid[i]), 1e-12 * (1 + std::abs(hg[i])));
}

TEST(Hf, DomainErrorNamesIndex) {
    Vector z = Vector::Ones(5);
    z[3] = -0.5;
    try {
        hf(log_nonlinearity(), z);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_EQ(e.index(), 3);
    }
    z[3] = 0.0; // z_min itself is outside the open domain
    EXPECT_THROW(hf(log_nonlinearity(), z), DomainError);
}

TEST(Registry, LnPresentAndCustomChecked) {
    auto& reg = NonlinearityRegistry::instance();
    EXPECT_TRUE(reg.contains("ln"));
    NonlinearitySpec bad{[](double z) { return z * z; }, [](double z) { return 3 * z; }, [](double) { return 2.0; },
                         0.0, "bad-square"};
    EXPECT_THROW(reg.add(bad), std::invalid_argument);
    EXPECT_FALSE(reg.contains("bad-square"));
    NonlinearitySpec log2{[](double z) { return std::log2(z); }, [](double z) { return 1.0 / (z * std::log(2.0)); },
                          [](double z) { return -1.0 / (z * z * std::log(2.0)); }, 0.0, "log2"};
    reg.add(log2);
    EXPECT_TRUE(reg.contains("log2"));
    EXPECT_THROW(reg.get("nope"), std::invalid_argument);
}

TEST(Laplace, ValueAtZeroAndMonotone) {
    ScalarMap h = laplace_nonlinearity(1.0);
    EXPECT_NEAR(h(0.0), std::sqrt(2.0 * std::log(2.0)), 1e-12);
    EXPECT_NEAR(h(0.0), 1.17741, 1e-5);
    double prev = 0.0;
    for (double x = -8.0; x <= 8.0; x += 0.25) {
        const double v = h(x);
        EXPECT_GT(v, 0.0);
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_TRUE(std::isfinite(h(50.0)));
    EXPECT_GT(h(-50.0), 0.0);
    EXPECT_THROW(laplace_nonlinearity(0.0), std::invalid_argument);
}

// h(x)·u should be Laplace(0, λ): compare the empirical CDF to 1 - exp(-|t|/λ)/2.
TEST(Laplace, ProductIsLaplaceDistributed) {
    const double lambda = 1.5;
    const Index n = 200000;
    Vector c = sample_cg(n, laplace_nonlinearity(lambda), 77);
    std::vector<double> v(c.data(), c.data() + n);
    std::sort(v.begin(), v.end());
    double ks = 0.0;
    for (Index i = 0; i < n; i += 97) {
        const double t = v[static_cast<std::size_t>(i)];
        const double cdf = t < 0 ? 0.5 * std::exp(t / lambda) : 1.0 - 0.5 * std::exp(-t / lambda);
        ks = std::max(ks, std::abs(cdf - (i + 0.5) / n));
    }
    EXPECT_LT(ks, 0.01);
    EXPECT_NEAR(c.cwiseAbs().mean(), lambda, 0.02);
}

TEST(SampleCg, DeterministicAndPositiveScale) {
    Vector a = sample_cg(64, exp_nonlinearity(), 5);
    Vector b = sample_cg(64, exp_nonlinearity(), 5);
    EXPECT_TRUE((a.array() == b.array()).all());
    EXPECT_THROW(sample_cg(0, exp_nonlinearity(), 5), std::invalid_argument);
    EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-15);
    EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-12);
}
