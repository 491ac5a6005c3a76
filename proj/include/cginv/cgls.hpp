#pragma once

#include <cginv/prior.hpp>
#include <cginv/types.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cginv {

enum class DescentMode { gradient, newton, quadratic };

/// Armijo backtracking, alpha in (0, 1/2], beta in (0, 1).
struct Backtracking {
    double alpha = 0.3;
    double beta = 0.5;
};

/// Fixed diagonal step. A single entry is broadcast to every component.
struct FixedStep {
    Vector eta;
};

struct MreluWindow {
    double a = 1.0;
    double b = std::numbers::e;
};

struct CglsConfig {
    double lambda = 0.3;
    double mu = 2.0;
    int k_max = 1000;
    int j_max = 1;
    double delta = 1e-6;
    DescentMode descent = DescentMode::gradient;
    Matrix metric;            ///< B for quadratic mode
    double newton_eps = 1e-8; ///< eigenvalue floor of the projected Hessian
    std::variant<Backtracking, FixedStep> line_search = Backtracking{};
    MreluWindow init_mrelu{1.0, std::exp(2.0)};
    std::optional<MreluWindow> per_step_mrelu;
    double scale_s = 1.0;
    /// Initialize z from (A/||A||_2)^T y instead of A^T y.
    bool normalize_init = false;
    std::string nonlinearity = "ln";
    bool record_iterates = false;

    void validate() const;
    const NonlinearitySpec& spec() const;

    /// gCG-LS defaults: gradient steps, window (1, e²).
    static CglsConfig gradient_defaults();
    /// nCG-LS defaults: projected Newton steps, window (1, e).
    static CglsConfig newton_defaults();
};

/// Per-run diagnostics. Entry k of `costs`, `grad_norms` and `grad_dual_norms`
/// refers to the iterate (u_k, z_k); gradients are w.r.t. z.
struct CglsTrace {
    std::vector<double> costs;
    std::vector<double> grad_norms;
    std::vector<double> grad_dual_norms;
    std::vector<double> step_sizes;     ///< one entry per z step
    std::vector<int> steps_per_iteration; ///< z steps taken in outer iteration k (entry k-1)
    std::vector<double> descent_ratios; ///< (G_prev - G_next) / ||∇G||²_* per accepted backtracking step
    int iterations_run = 0;
    bool converged = false;
    int newton_fallbacks = 0;
    int line_search_stalls = 0;
    std::vector<Vector> z_iterates; ///< Z_0, then every Z_k^j (record_iterates only)
    std::vector<Vector> u_iterates; ///< U_0..U_K (record_iterates only)
};

struct CglsResult {
    Vector c_star; ///< (z ⊙ u) / scale_s, i.e. in the units of the unscaled y
    Vector u;
    Vector z;
    CglsTrace trace;
};

/// Optional warm start replacing the mReLU/Tikhonov initialization.
struct CglsStart {
    Vector u;
    Vector z;
};

/// ||y - A(z⊙u)||² + λ||u||² + μ||f(z)||².
double cost(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg);

/// -2 A_u^T (y - A_u z) + 2μ f'(z)⊙f(z), with A_u = A D{u}.
Vector grad_z(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg);

/// -2 A_z^T (y - A_z u) + 2λ u.
Vector grad_u(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg);

/// 2 A_u^T A_u + 2μ D{h_f(z)}.
Matrix hess_z(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg);

/// Factorized m×m Tikhonov system (A_z A_z^T + λI) w = y, with u = A_z^T w.
struct TikhonovSolve {
    Eigen::LLT<Matrix> factor;
    Vector w;
    Vector u;
};

TikhonovSolve tikhonov_solve(const Vector& z, const Vector& y, const Matrix& a, double lambda);

/// u = A_z^T (A_z A_z^T + λI)^{-1} y via a Cholesky solve.
Vector tikhonov_update(const Vector& z, const Vector& y, const Matrix& a, double lambda);

/// u = (A_z^T A_z + λI)^{-1} A_z^T y via the n×n system.
Vector tikhonov_update_primal(const Vector& z, const Vector& y, const Matrix& a, double lambda);

struct Descent {
    Vector direction;
    double dual_norm_sq = 0.0; ///< ∇G^T B ∇G (B = I in gradient mode)
    bool fell_back = false;    ///< Newton system was singular; gradient used instead
};

Descent descent_direction(const Vector& u, const Vector& z, const Vector& y, const Matrix& a,
                          const CglsConfig& cfg);

/// Descent for a gradient already in hand; `hessian` is only used in Newton mode.
Descent descent_from_gradient(const Vector& gradient, const Matrix* hessian, const CglsConfig& cfg);

struct LineSearchResult {
    double eta = 0.0;
    double value = 0.0; ///< objective at the accepted point
    bool stalled = false;
};

inline constexpr int kMaxBacktracks = 60;

/// Largest eta in {1, β, β², ...} (halved further while z + eta d leaves the
/// domain) with G(z + eta d) <= G(z) + α eta <∇G, d>. Returns eta = 0 and
/// `stalled` after 60 reductions.
template <class Objective>
LineSearchResult backtrack(Objective&& objective, const Vector& z, double value, double slope, const Vector& d,
                           double z_min, const Backtracking& params) {
    double eta = 1.0;
    int reductions = 0;
    auto in_domain = [&](double step) {
        for (Index i = 0; i < z.size(); ++i)
            if (!(z[i] + step * d[i] > z_min)) return false;
        return true;
    };
    while (!in_domain(eta)) {
        eta *= 0.5;
        if (++reductions >= kMaxBacktracks) return {0.0, value, true};
    }
    while (true) {
        Vector trial = z + eta * d;
        const double next = objective(trial);
        if (std::isfinite(next) && next <= value + params.alpha * eta * slope) return {eta, next, false};
        eta *= params.beta;
        if (++reductions >= kMaxBacktracks) return {0.0, value, true};
    }
}

/// Armijo backtracking on G(z) = F(u, z) along d.
LineSearchResult backtracking_search(const Vector& u, const Vector& z, const Vector& d, const Vector& y,
                                     const Matrix& a, const CglsConfig& cfg);

/// Block-coordinate CG-LS: descent steps on z, Tikhonov updates on u.
CglsResult run_cgls(const Vector& y, const Matrix& a, const CglsConfig& cfg,
                    const std::optional<CglsStart>& start = std::nullopt);

struct Stationarity {
    Vector residual; ///< -2λ z⊙v⊙v + 2μ f'(z)⊙f(z)
    Vector v;        ///< A^T (A_z A_z^T + λI)^{-1} y
};

Stationarity stationarity_residual(const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg);

/// Largest input scale s meeting both the stationary-point and the
/// positive-definiteness conditions on [z0, b], estimating max|ṽ| from
/// `n_probe` random z ∈ [z0, b]^n. `y` is the unscaled measurement.
double recommend_scale(const Matrix& a, const Vector& y, const CglsConfig& cfg, double b, double z0, int n_probe,
                       std::uint64_t seed);

/// min over the half-open grid z0, z0 + 1e-3, ... < b of f''f + f'^2.
double hf_min_on_window(const NonlinearitySpec& spec, double z0, double b);

} // namespace cginv
