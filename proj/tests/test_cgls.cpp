#include "support.hpp"

#include <cginv/cgls.hpp>
#include <cginv/linalg.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace cginv;
using cginv::testing::random_matrix;
using cginv::testing::random_vector;

namespace {

struct Instance {
    Matrix a;
    Vector y, u, z;
};

Instance random_instance(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Index n = 4 + static_cast<Index>(rng() % 13); // 4..16
    const Index m = 2 + static_cast<Index>(rng() % n);
    Instance in;
    in.a = random_matrix(m, n, seed + 1, 1.0 / std::sqrt(static_cast<double>(m)));
    in.y = random_vector(m, seed + 2, -1, 1);
    in.u = random_vector(n, seed + 3, -1, 1);
    in.z = random_vector(n, seed + 4, 0.3, 3.0);
    return in;
}

CglsConfig plain_config() {
    CglsConfig cfg = CglsConfig::gradient_defaults();
    cfg.lambda = 0.3;
    cfg.mu = 2.0;
    return cfg;
}

} // namespace

TEST(Cost, ClosedForms) {
    CglsConfig cfg = plain_config();
    Matrix a = Matrix::Ones(1, 1);
    Vector one = Vector::Ones(1);
    EXPECT_NEAR(cost(one, one, one, a, cfg), 0.3, 1e-15);
    Instance in = random_instance(1);
    EXPECT_NEAR(cost(Vector::Zero(in.u.size()), Vector::Ones(in.z.size()), in.y, in.a, cfg), in.y.squaredNorm(),
                1e-14);
}

TEST(Cost, InvariantUnderJointPermutation) {
    Instance in = random_instance(2);
    CglsConfig cfg = plain_config();
    const Index n = in.u.size();
    Eigen::PermutationMatrix<Eigen::Dynamic> p(n);
    p.setIdentity();
    std::mt19937_64 rng(5);
    std::shuffle(p.indices().data(), p.indices().data() + n, rng);
    const double base = cost(in.u, in.z, in.y, in.a, cfg);
    Vector pu = p * in.u, pz = p * in.z;
    Matrix pa = in.a * p.transpose();
    EXPECT_NEAR(cost(pu, pz, in.y, pa, cfg), base, 1e-12 * base);
}

TEST(Cost, RejectsOutOfDomain) {
    Instance in = random_instance(3);
    in.z[1] = -0.1;
    EXPECT_THROW(cost(in.u, in.z, in.y, in.a, plain_config()), DomainError);
    EXPECT_THROW(grad_z(in.u, in.z, in.y, in.a, plain_config()), DomainError);
}

TEST(GradZ, MatchesFiniteDifferences) {
    CglsConfig cfg = plain_config();
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Instance in = random_instance(100 + 10 * s);
        Vector g = grad_z(in.u, in.z, in.y, in.a, cfg);
        Vector fd(g.size());
        for (Index i = 0; i < g.size(); ++i) {
            const double h = 1e-6 * in.z[i];
            Vector zp = in.z, zm = in.z;
            zp[i] += h;
            zm[i] -= h;
            fd[i] = (cost(in.u, zp, in.y, in.a, cfg) - cost(in.u, zm, in.y, in.a, cfg)) / (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / g.norm());
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(GradZ, VanishesAtOneWithZeroU) {
    Instance in = random_instance(4);
    Vector g = grad_z(Vector::Zero(in.u.size()), Vector::Ones(in.z.size()), in.y, in.a, plain_config());
    EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradZ, ZeroMuIsLeastSquares) {
    Instance in = random_instance(5);
    CglsConfig cfg = plain_config();
    cfg.mu = 0.0;
    Matrix au = in.a * in.u.asDiagonal();
    Vector expect = -2.0 * au.transpose() * (in.y - au * in.z);
    EXPECT_LT((grad_z(in.u, in.z, in.y, in.a, cfg) - expect).norm(), 1e-13 * (1 + expect.norm()));
}

TEST(GradU, MatchesFiniteDifferences) {
    Instance in = random_instance(6);
    CglsConfig cfg = plain_config();
    Vector g = grad_u(in.u, in.z, in.y, in.a, cfg);
    for (Index i = 0; i < g.size(); ++i) {
        Vector up = in.u, um = in.u;
        up[i] += 1e-6;
        um[i] -= 1e-6;
        EXPECT_NEAR(g[i], (cost(up, in.z, in.y, in.a, cfg) - cost(um, in.z, in.y, in.a, cfg)) / 2e-6,
                    1e-6 * (1 + g.norm()));
    }
}

TEST(HessZ, MatchesFiniteDifferencesOfGradient) {
    CglsConfig cfg = plain_config();
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Instance in = random_instance(700 + 10 * s);
        Matrix h = hess_z(in.u, in.z, in.y, in.a, cfg);
        Matrix fd(h.rows(), h.cols());
        for (Index i = 0; i < h.cols(); ++i) {
            const double step = 1e-6 * in.z[i];
            Vector zp = in.z, zm = in.z;
            zp[i] += step;
            zm[i] -= step;
            fd.col(i) = (grad_z(in.u, zp, in.y, in.a, cfg) - grad_z(in.u, zm, in.y, in.a, cfg)) / (2 * step);
        }
        EXPECT_LT((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-14 * h.norm());
        worst = std::max(worst, (h - fd).norm() / h.norm());
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(HessZ, PositiveSemidefiniteBelowE) {
    CglsConfig cfg = plain_config();
    for (std::uint64_t s = 0; s < 20; ++s) {
        Instance in = random_instance(900 + s);
        Vector z = random_vector(in.z.size(), s, 0.05, std::numbers::e - 1e-9);
        Matrix h = hess_z(in.u, z, in.y, in.a, cfg);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(h).eigenvalues().minCoeff(), -1e-10 * h.norm());
    }
    Instance in = random_instance(9);
    Matrix h = hess_z(Vector::Zero(in.u.size()), Vector::Constant(in.z.size(), std::numbers::e), in.y, in.a, cfg);
    EXPECT_LT(h.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Tikhonov, ClosedFormIdentity) {
    Vector y(2);
    y << 1, 1;
    Vector u = tikhonov_update(Vector::Ones(2), y, Matrix::Identity(2, 2), 1.0);
    EXPECT_NEAR(u[0], 0.5, 1e-15);
    EXPECT_NEAR(u[1], 0.5, 1e-15);
}

TEST(Tikhonov, SmallLambdaInterpolates) {
    Matrix a = random_matrix(6, 6, 4);
    Vector z = random_vector(6, 5, 0.5, 2);
    Vector y = random_vector(6, 6, -1, 1);
    Vector u = tikhonov_update(z, y, a, 1e-10);
    EXPECT_LT((a * z.asDiagonal() * u - y).norm(), 1e-6);
}

TEST(Tikhonov, WoodburyFormsAgree) {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Instance in = random_instance(2000 + 7 * s);
        const double lambda = 0.01 + 0.1 * static_cast<double>(s % 20);
        Vector dual = tikhonov_update(in.z, in.y, in.a, lambda);
        Vector primal = tikhonov_update_primal(in.z, in.y, in.a, lambda);
        worst = std::max(worst, (dual - primal).norm() / primal.norm());
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Tikhonov, MinimizesTheUBlock) {
    Instance in = random_instance(11);
    CglsConfig cfg = plain_config();
    Vector u = tikhonov_update(in.z, in.y, in.a, cfg.lambda);
    EXPECT_LT(grad_u(u, in.z, in.y, in.a, cfg).norm(), 1e-10);
}

TEST(Tikhonov, RejectsNonFiniteInput) {
    Instance in = random_instance(12);
    in.y[0] = std::nan("");
    EXPECT_THROW(tikhonov_update(in.z, in.y, in.a, 0.3), NumericalError);
    EXPECT_THROW(tikhonov_update(in.z, in.y.setOnes(), in.a, 0.0), std::invalid_argument);
}

TEST(Mrelu, ClampsToWindow) {
    const double e = std::numbers::e;
    Vector x(3);
    x << 0.5, 2.0, 5.0;
    Vector r = mrelu(1.0, e, x);
    EXPECT_EQ(r[0], 1.0);
    EXPECT_EQ(r[1], 2.0);
    EXPECT_EQ(r[2], e);
    Vector any = random_vector(100, 3, -10, 10);
    Vector out = mrelu(3.0, -1.0, any); // reversed window still lands inside [min, max]
    EXPECT_GE(out.minCoeff(), -1.0 - 1e-12);
    EXPECT_LE(out.maxCoeff(), 3.0 + 1e-12);
}

TEST(PsdProject, Examples) {
    EXPECT_LT((psd_project(Matrix::Identity(3, 3), 0.0) - Matrix::Identity(3, 3)).norm(), 1e-15);
    Matrix d = Eigen::Vector2d(-3.0, 2.0).asDiagonal();
    Matrix p = psd_project(d, 0.0);
    EXPECT_NEAR(p(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(p(1, 1), 2.0, 1e-15);
    Matrix off(2, 2);
    off << 0, 0.5, 0.5, 0;
    Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(psd_project(off, 0.01)).eigenvalues();
    EXPECT_NEAR(ev[0], 0.01, 1e-14);
    EXPECT_NEAR(ev[1], 0.5, 1e-14);
    Matrix asym(2, 2);
    asym << 1, 2, 0, 1;
    EXPECT_THROW(psd_project(asym, 0.0), std::invalid_argument);
}

TEST(Descent, GradientModeIsNegativeGradient) {
    Instance in = random_instance(13);
    CglsConfig cfg = plain_config();
    Descent d = descent_direction(in.u, in.z, in.y, in.a, cfg);
    Vector g = grad_z(in.u, in.z, in.y, in.a, cfg);
    EXPECT_TRUE((d.direction.array() == (-g).array()).all());
    EXPECT_NEAR(d.dual_norm_sq, g.squaredNorm(), 1e-12 * g.squaredNorm());

    cfg.descent = DescentMode::quadratic;
    cfg.metric = Matrix::Identity(in.z.size(), in.z.size());
    Descent q = descent_direction(in.u, in.z, in.y, in.a, cfg);
    EXPECT_LT((q.direction - d.direction).norm(), 1e-14 * d.direction.norm());
}

TEST(Descent, NewtonStepSolvesQuadraticInZ) {
    // μ = 0 leaves ||y - A_u z||², so one full Newton step lands on its minimizer.
    Matrix a = random_matrix(10, 6, 21);
    Vector u = random_vector(6, 22, 0.5, 1.5);
    Vector z = random_vector(6, 23, 1.0, 2.0);
    Vector y = random_vector(10, 24, -1, 1);
    CglsConfig cfg = CglsConfig::newton_defaults();
    cfg.mu = 0.0;
    Descent d = descent_direction(u, z, y, a, cfg);
    ASSERT_FALSE(d.fell_back);
    Matrix au = a * u.asDiagonal();
    Vector z_ls = au.colPivHouseholderQr().solve(y);
    EXPECT_LT((z + d.direction - z_ls).norm(), 1e-6);
}

TEST(Backtracking, ArmijoHandExample) {
    // G(z) = (z-2)², z = 0, d = 4: η = 1 overshoots to G = 4 (no decrease), η = 0.5 hits the minimizer.
    auto g = [](const Vector& z) { return (z[0] - 2.0) * (z[0] - 2.0); };
    Vector z = Vector::Zero(1), d = Vector::Constant(1, 4.0);
    LineSearchResult r = backtrack(g, z, 4.0, -16.0, d, -kInf, Backtracking{0.3, 0.5});
    EXPECT_EQ(r.eta, 0.5);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_FALSE(r.stalled);
}

TEST(Backtracking, RespectsDomainAndDecreases) {
    CglsConfig cfg = plain_config();
    for (std::uint64_t s = 0; s < 20; ++s) {
        Instance in = random_instance(3000 + s);
        Vector d = -grad_z(in.u, in.z, in.y, in.a, cfg);
        LineSearchResult r = backtracking_search(in.u, in.z, d, in.y, in.a, cfg);
        ASSERT_FALSE(r.stalled);
        EXPECT_GT((in.z + r.eta * d).minCoeff(), 0.0);
        EXPECT_LT(r.value, cost(in.u, in.z, in.y, in.a, cfg));
    }
}

TEST(Backtracking, StallsWhenNothingIsAcceptable) {
    auto g = [](const Vector&) { return std::nan(""); };
    Vector z = Vector::Ones(1), d = -Vector::Ones(1);
    LineSearchResult r = backtrack(g, z, 1.0, -1.0, d, -kInf, Backtracking{});
    EXPECT_TRUE(r.stalled);
    EXPECT_EQ(r.eta, 0.0);
}

TEST(Config, Validation) {
    CglsConfig cfg = CglsConfig::gradient_defaults();
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.k_max, 1000);
    EXPECT_EQ(cfg.j_max, 1);
    EXPECT_EQ(cfg.delta, 1e-6);
    EXPECT_EQ(cfg.mu, 2.0);
    EXPECT_DOUBLE_EQ(cfg.init_mrelu.b, std::exp(2.0));
    EXPECT_DOUBLE_EQ(CglsConfig::newton_defaults().init_mrelu.b, std::numbers::e);
    auto bad = [](auto mutate) {
        CglsConfig c = CglsConfig::gradient_defaults();
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](CglsConfig& c) { c.lambda = 0; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](CglsConfig& c) { c.delta = 0; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](CglsConfig& c) { c.k_max = 0; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](CglsConfig& c) { c.scale_s = -1; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](CglsConfig& c) { c.line_search = Backtracking{0.6, 0.5}; }).validate(),
                 std::invalid_argument);
    EXPECT_THROW(bad([](CglsConfig& c) { c.line_search = Backtracking{0.3, 1.0}; }).validate(),
                 std::invalid_argument);
    EXPECT_THROW(bad([](CglsConfig& c) { c.nonlinearity = "missing"; }).validate(), std::invalid_argument);
}

// Exhaustive oracle: the scalar cost on a 2e-3 grid.
TEST(RunCgls, ScalarInstanceMatchesGridSearch) {
    Matrix a = Matrix::Ones(1, 1);
    Vector y = Vector::Ones(1);
    CglsConfig cfg = plain_config();
    double best = kInf, bu = 0, bz = 0;
    for (int i = 0; i <= 3000; ++i) {
        const double u = -3.0 + 2e-3 * i;
        for (int j = 0; 0.05 + 2e-3 * j <= 10.0 + 1e-12; ++j) {
            const double z = 0.05 + 2e-3 * j;
            const double r = 1.0 - z * u, l = std::log(z);
            const double f = r * r + 0.3 * u * u + 2.0 * l * l;
            if (f < best) best = f, bu = u, bz = z;
        }
    }
    for (CglsConfig c : {cfg, CglsConfig::newton_defaults()}) {
        c.lambda = 0.3;
        CglsResult res = run_cgls(y, a, c);
        EXPECT_NEAR(res.u[0], bu, 5e-3);
        EXPECT_NEAR(res.z[0], bz, 5e-3);
    }
}

TEST(RunCgls, NearUnregularizedIdentityRecoversSignal) {
    const Index n = 12;
    Vector c = random_vector(n, 31, 0.5, 2.0);
    CglsConfig cfg = plain_config();
    cfg.lambda = 1e-8;
    cfg.mu = 1e-8;
    cfg.delta = 1e-14;
    cfg.k_max = 5000;
    CglsResult res = run_cgls(c, Matrix::Identity(n, n), cfg);
    EXPECT_LT((res.c_star - c).norm() / c.norm(), 1e-3);
}

TEST(RunCgls, CostsNeverIncrease) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Instance in = random_instance(4000 + s);
        for (CglsConfig cfg : {CglsConfig::gradient_defaults(), CglsConfig::newton_defaults()}) {
            cfg.k_max = 200;
            CglsResult res = run_cgls(in.y, in.a, cfg);
            const auto& c = res.trace.costs;
            ASSERT_EQ(c.size(), static_cast<std::size_t>(res.trace.iterations_run) + 1);
            for (std::size_t k = 1; k < c.size(); ++k) EXPECT_LE(c[k], c[k - 1] * (1 + 1e-12));
            for (double r : res.trace.descent_ratios) EXPECT_GT(r, 1e-12);
            EXPECT_EQ(res.trace.grad_dual_norms.size(), c.size());
        }
    }
}

TEST(RunCgls, ConvergenceReturnsPreviousIterateAndScales) {
    Instance in = random_instance(41);
    CglsConfig cfg = plain_config();
    // with u = Tikhonov(z) the z-gradient is exactly the stationarity map, so ||F||∞ < 1e-6 needs δ near 1e-12
    cfg.delta = 1e-12;
    cfg.k_max = 20000;
    cfg.record_iterates = true;
    CglsResult res = run_cgls(in.y, in.a, cfg);
    ASSERT_TRUE(res.trace.converged);
    EXPECT_LT(std::pow(res.trace.grad_dual_norms.back(), 2), cfg.delta);
    EXPECT_TRUE((res.c_star.array() == (res.z.cwiseProduct(res.u)).array()).all());
    Stationarity st = stationarity_residual(res.z, in.y, in.a, cfg);
    EXPECT_LT(st.residual.cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((res.u - res.z.cwiseProduct(st.v)).cwiseAbs().maxCoeff(), 1e-8);

    // Scaling y by s and dividing c* by s is what scale_s does internally.
    CglsConfig scaled = cfg;
    scaled.scale_s = 0.5;
    CglsResult a = run_cgls(in.y, in.a, scaled);
    CglsConfig manual = cfg;
    CglsResult b = run_cgls(0.5 * in.y, in.a, manual);
    EXPECT_LT((a.c_star - b.c_star / 0.5).norm(), 1e-12 * (1 + a.c_star.norm()));
}

TEST(RunCgls, FixedStepWithPerStepWindowStaysInside) {
    Instance in = random_instance(42);
    CglsConfig cfg = plain_config();
    cfg.line_search = FixedStep{Vector::Constant(1, 0.1)};
    cfg.per_step_mrelu = MreluWindow{0.8, std::exp(3.0)};
    cfg.record_iterates = true;
    cfg.k_max = 30;
    CglsResult res = run_cgls(in.y, in.a, cfg);
    for (std::size_t i = 1; i < res.trace.z_iterates.size(); ++i) {
        EXPECT_GE(res.trace.z_iterates[i].minCoeff(), 0.8);
        EXPECT_LE(res.trace.z_iterates[i].maxCoeff(), std::exp(3.0));
    }
}

TEST(RunCgls, RejectsBadInputs) {
    Instance in = random_instance(43);
    EXPECT_THROW(run_cgls(Vector::Ones(in.y.size() + 1), in.a, plain_config()), std::invalid_argument);
    Vector bad = in.y;
    bad[0] = kInf;
    EXPECT_THROW(run_cgls(bad, in.a, plain_config()), NumericalError);
}

TEST(Stationarity, ClosedForms) {
    Instance in = random_instance(44);
    CglsConfig cfg = plain_config();
    Vector z = random_vector(in.z.size(), 45, 0.5, 3.0);
    Stationarity st = stationarity_residual(z, Vector::Zero(in.y.size()), in.a, cfg);
    EXPECT_EQ(st.v.cwiseAbs().maxCoeff(), 0.0);
    for (Index i = 0; i < z.size(); ++i) EXPECT_NEAR(st.residual[i], 2 * cfg.mu * std::log(z[i]) / z[i], 1e-14);
    EXPECT_LT(stationarity_residual(Vector::Ones(z.size()), Vector::Zero(in.y.size()), in.a, cfg)
                  .residual.cwiseAbs()
                  .maxCoeff(),
              1e-15);
}

TEST(RecommendScale, ClosedFormPiecesAndSqrtLaw) {
    const NonlinearitySpec f = log_nonlinearity();
    const double e = std::numbers::e;
    EXPECT_NEAR(f.d1(e) * f.eval(e) / e, std::exp(-2.0), 1e-15);
    EXPECT_GT(hf_min_on_window(f, 1.0, e), 0.0);
    EXPECT_LE(hf_min_on_window(f, 1.0, e + 0.5), 0.0);
    Instance in = random_instance(46);
    CglsConfig cfg = plain_config();
    const double s1 = recommend_scale(in.a, in.y, cfg, e, 1.0, 32, 3);
    cfg.mu *= 2.0;
    const double s2 = recommend_scale(in.a, in.y, cfg, e, 1.0, 32, 3);
    EXPECT_GT(s1, 0.0);
    EXPECT_NEAR(s2 / s1, std::sqrt(2.0), 1e-9);
    EXPECT_THROW(recommend_scale(in.a, in.y, cfg, e * e, 1.0, 8, 3), std::invalid_argument);
}
