#include <cginv/cgls.hpp>

#include <cginv/linalg.hpp>

#include <algorithm>
#include <random>

namespace cginv {

void CglsConfig::validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be > 0");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be > 0");
    if (!(scale_s > 0.0)) throw std::invalid_argument("scale_s must be > 0");
    if (k_max < 1 || j_max < 1) throw std::invalid_argument("k_max and j_max must be >= 1");
    if (const auto* bt = std::get_if<Backtracking>(&line_search)) {
        if (!(bt->alpha > 0.0 && bt->alpha <= 0.5)) throw std::invalid_argument("alpha must lie in (0, 0.5]");
        if (!(bt->beta > 0.0 && bt->beta < 1.0)) throw std::invalid_argument("beta must lie in (0, 1)");
    } else if (std::get<FixedStep>(line_search).eta.size() == 0) {
        throw std::invalid_argument("fixed step needs at least one eta");
    }
    if (descent == DescentMode::quadratic && metric.size() == 0)
        throw std::invalid_argument("quadratic descent needs a metric B");
    if (!(newton_eps >= 0.0)) throw std::invalid_argument("newton_eps must be >= 0");
    spec();
}

const NonlinearitySpec& CglsConfig::spec() const { return NonlinearityRegistry::instance().get(nonlinearity); }

CglsConfig CglsConfig::gradient_defaults() { return CglsConfig{}; }

CglsConfig CglsConfig::newton_defaults() {
    CglsConfig cfg;
    cfg.descent = DescentMode::newton;
    cfg.init_mrelu = {1.0, std::numbers::e};
    return cfg;
}

namespace {

double penalty(const NonlinearitySpec& f, const Vector& z) {
    double acc = 0.0;
    for (Index i = 0; i < z.size(); ++i) {
        const double v = f.eval(z[i]);
        acc += v * v;
    }
    return acc;
}

double cost_unchecked(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, double lambda, double mu,
                      const NonlinearitySpec& f) {
    return (y - a * z.cwiseProduct(u)).squaredNorm() + lambda * u.squaredNorm() + mu * penalty(f, z);
}

Vector grad_z_unchecked(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, double mu,
                        const NonlinearitySpec& f) {
    Vector residual = y - a * z.cwiseProduct(u);
    Vector g = -2.0 * u.cwiseProduct(a.transpose() * residual);
    for (Index i = 0; i < z.size(); ++i) g[i] += 2.0 * mu * f.d1(z[i]) * f.eval(z[i]);
    return g;
}

void check_shapes(const Vector& u, const Vector& z, const Vector& y, const Matrix& a) {
    if (u.size() != a.cols() || z.size() != a.cols() || y.size() != a.rows())
        throw std::invalid_argument("vector sizes do not match A");
}

} // namespace

double cost(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg) {
    check_shapes(u, z, y, a);
    const auto& f = cfg.spec();
    f.check_domain(z);
    return cost_unchecked(u, z, y, a, cfg.lambda, cfg.mu, f);
}

Vector grad_z(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg) {
    check_shapes(u, z, y, a);
    const auto& f = cfg.spec();
    f.check_domain(z);
    return grad_z_unchecked(u, z, y, a, cfg.mu, f);
}

Vector grad_u(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg) {
    check_shapes(u, z, y, a);
    Vector residual = y - a * z.cwiseProduct(u);
    return -2.0 * z.cwiseProduct(a.transpose() * residual) + 2.0 * cfg.lambda * u;
}

Matrix hess_z(const Vector& u, const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg) {
    check_shapes(u, z, y, a);
    const auto& f = cfg.spec();
    Vector curvature = hf(f, z);
    Matrix au = a * u.asDiagonal();
    Matrix h = Matrix::Zero(a.cols(), a.cols());
    h.selfadjointView<Eigen::Lower>().rankUpdate(au.transpose(), 2.0);
    h.diagonal() += 2.0 * cfg.mu * curvature;
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    return h;
}

TikhonovSolve tikhonov_solve(const Vector& z, const Vector& y, const Matrix& a, double lambda) {
    if (z.size() != a.cols() || y.size() != a.rows()) throw std::invalid_argument("tikhonov: size mismatch");
    if (!z.allFinite() || !y.allFinite() || !std::isfinite(lambda))
        throw NumericalError("tikhonov: non-finite input", -1);
    Matrix az = a * z.asDiagonal();
    Matrix system = Matrix::Zero(a.rows(), a.rows());
    system.selfadjointView<Eigen::Lower>().rankUpdate(az);
    system.diagonal().array() += lambda;
    TikhonovSolve out;
    out.factor.compute(system);
    if (out.factor.info() != Eigen::Success) throw NumericalError("tikhonov: Cholesky factorization failed", -1);
    out.w = out.factor.solve(y);
    out.u = az.transpose() * out.w;
    if (!out.u.allFinite()) throw NumericalError("tikhonov: non-finite solution", -1);
    return out;
}

Vector tikhonov_update(const Vector& z, const Vector& y, const Matrix& a, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("tikhonov: lambda must be > 0");
    return tikhonov_solve(z, y, a, lambda).u;
}

Vector tikhonov_update_primal(const Vector& z, const Vector& y, const Matrix& a, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("tikhonov: lambda must be > 0");
    Matrix az = a * z.asDiagonal();
    Matrix system = Matrix::Zero(a.cols(), a.cols());
    system.selfadjointView<Eigen::Lower>().rankUpdate(az.transpose());
    system.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success) throw NumericalError("tikhonov (primal): factorization failed", -1);
    return llt.solve(az.transpose() * y);
}

Descent descent_from_gradient(const Vector& gradient, const Matrix* hessian, const CglsConfig& cfg) {
    Descent out;
    switch (cfg.descent) {
    case DescentMode::gradient:
        out.direction = -gradient;
        out.dual_norm_sq = gradient.squaredNorm();
        return out;
    case DescentMode::quadratic:
        if (cfg.metric.rows() != gradient.size() || cfg.metric.cols() != gradient.size())
            throw std::invalid_argument("quadratic metric B must be n×n");
        out.direction = -(cfg.metric * gradient);
        out.dual_norm_sq = -gradient.dot(out.direction);
        return out;
    case DescentMode::newton: {
        if (!hessian) throw std::invalid_argument("newton descent needs the Hessian");
        const Index n = gradient.size();
        // When H - eps I is positive definite the projection leaves H unchanged.
        Matrix shifted = *hessian;
        shifted.diagonal().array() -= cfg.newton_eps;
        Eigen::LLT<Matrix> probe(shifted);
        Eigen::LLT<Matrix> factor;
        if (probe.info() == Eigen::Success) {
            factor.compute(*hessian);
        } else {
            factor.compute(psd_project(*hessian, cfg.newton_eps));
        }
        if (factor.info() == Eigen::Success) {
            Vector d = -factor.solve(gradient);
            const double dual = -gradient.dot(d);
            if (d.allFinite() && dual > 0.0) {
                out.direction = std::move(d);
                out.dual_norm_sq = dual;
                return out;
            }
        }
        out.direction = -gradient;
        out.dual_norm_sq = gradient.squaredNorm();
        out.fell_back = true;
        (void)n;
        return out;
    }
    }
    throw std::logic_error("unknown descent mode");
}

Descent descent_direction(const Vector& u, const Vector& z, const Vector& y, const Matrix& a,
                          const CglsConfig& cfg) {
    Vector g = grad_z(u, z, y, a, cfg);
    if (cfg.descent == DescentMode::newton) {
        Matrix h = hess_z(u, z, y, a, cfg);
        return descent_from_gradient(g, &h, cfg);
    }
    return descent_from_gradient(g, nullptr, cfg);
}

LineSearchResult backtracking_search(const Vector& u, const Vector& z, const Vector& d, const Vector& y,
                                     const Matrix& a, const CglsConfig& cfg) {
    const auto& f = cfg.spec();
    const auto* params = std::get_if<Backtracking>(&cfg.line_search);
    const Backtracking bt = params ? *params : Backtracking{};
    const double value = cost(u, z, y, a, cfg);
    const double slope = grad_z(u, z, y, a, cfg).dot(d);
    if (!(slope < 0.0)) throw std::invalid_argument("backtracking_search: d is not a descent direction");
    auto objective = [&](const Vector& trial) { return cost_unchecked(u, trial, y, a, cfg.lambda, cfg.mu, f); };
    return backtrack(objective, z, value, slope, d, f.z_min, bt);
}

namespace {

Vector initial_z(const Vector& y_scaled, const Matrix& a, const CglsConfig& cfg) {
    Vector back = a.transpose() * y_scaled;
    if (cfg.normalize_init) {
        const double norm = spectral_norm(a);
        if (norm > 0.0) back /= norm;
    }
    return mrelu(cfg.init_mrelu.a, cfg.init_mrelu.b, back);
}

void require_finite(const Vector& v, const char* what, long iteration) {
    if (!v.allFinite()) throw NumericalError(std::string("CG-LS: non-finite ") + what, iteration);
}

} // namespace

CglsResult run_cgls(const Vector& y, const Matrix& a, const CglsConfig& cfg, const std::optional<CglsStart>& start) {
    cfg.validate();
    if (y.size() != a.rows()) throw std::invalid_argument("run_cgls: y length must equal m");
    const auto& f = cfg.spec();
    const Index n = a.cols();
    const Vector ys = cfg.scale_s * y;
    require_finite(ys, "measurement", 0);
    const auto* bt = std::get_if<Backtracking>(&cfg.line_search);
    Vector eta_fixed;
    if (const auto* fs = std::get_if<FixedStep>(&cfg.line_search)) {
        eta_fixed = fs->eta.size() == 1 ? Vector::Constant(n, fs->eta[0]) : fs->eta;
        if (eta_fixed.size() != n) throw std::invalid_argument("fixed step eta must have 1 or n entries");
    }

    CglsResult res;
    CglsTrace& trace = res.trace;
    Vector z, u;
    if (start) {
        if (start->u.size() != n || start->z.size() != n) throw std::invalid_argument("warm start size mismatch");
        z = start->z;
        u = start->u;
    } else {
        z = initial_z(ys, a, cfg);
        f.check_domain(z);
        u = tikhonov_solve(z, ys, a, cfg.lambda).u;
    }
    f.check_domain(z);
    if (cfg.record_iterates) {
        trace.z_iterates.push_back(z);
        trace.u_iterates.push_back(u);
    }
    trace.costs.push_back(cost_unchecked(u, z, ys, a, cfg.lambda, cfg.mu, f));

    auto objective_for = [&](const Vector& u_fixed) {
        return [&, u_fixed_ptr = &u_fixed](const Vector& trial) {
            return cost_unchecked(*u_fixed_ptr, trial, ys, a, cfg.lambda, cfg.mu, f);
        };
    };
    auto direction_at = [&](const Vector& u_cur, const Vector& z_cur, const Vector& g) {
        if (cfg.descent == DescentMode::newton) {
            Matrix h = hess_z(u_cur, z_cur, ys, a, cfg);
            return descent_from_gradient(g, &h, cfg);
        }
        return descent_from_gradient(g, nullptr, cfg);
    };

    for (int k = 1; k <= cfg.k_max; ++k) {
        Vector zk = z;
        const std::size_t steps_before = trace.step_sizes.size();
        bool stop_inner = false;
        for (int j = 1; j <= cfg.j_max && !stop_inner; ++j) {
            Vector g = grad_z_unchecked(u, zk, ys, a, cfg.mu, f);
            require_finite(g, "gradient", k);
            Descent dir = direction_at(u, zk, g);
            if (dir.fell_back) ++trace.newton_fallbacks;
            if (j == 1) {
                trace.grad_norms.push_back(g.norm());
                trace.grad_dual_norms.push_back(std::sqrt(dir.dual_norm_sq));
            }
            if (dir.dual_norm_sq < cfg.delta) {
                if (j == 1) {
                    trace.converged = true;
                    trace.iterations_run = k - 1;
                    res.u = u;
                    res.z = z;
                    res.c_star = z.cwiseProduct(u) / cfg.scale_s;
                    return res;
                }
                break;
            }
            if (bt) {
                auto objective = objective_for(u);
                const double value = objective(zk);
                const double slope = g.dot(dir.direction);
                LineSearchResult ls = backtrack(objective, zk, value, slope, dir.direction, f.z_min, *bt);
                trace.step_sizes.push_back(ls.eta);
                if (ls.stalled) {
                    ++trace.line_search_stalls;
                    stop_inner = true;
                    continue;
                }
                zk += ls.eta * dir.direction;
                trace.descent_ratios.push_back((value - ls.value) / dir.dual_norm_sq);
            } else {
                zk += eta_fixed.cwiseProduct(dir.direction);
                trace.step_sizes.push_back(eta_fixed.mean());
            }
            if (cfg.per_step_mrelu) zk = mrelu(cfg.per_step_mrelu->a, cfg.per_step_mrelu->b, zk);
            require_finite(zk, "z iterate", k);
            f.check_domain(zk);
            if (cfg.record_iterates) trace.z_iterates.push_back(zk);
        }
        trace.steps_per_iteration.push_back(static_cast<int>(trace.step_sizes.size() - steps_before));
        z = std::move(zk);
        try {
            u = tikhonov_solve(z, ys, a, cfg.lambda).u;
        } catch (const NumericalError& e) {
            throw NumericalError(e.what(), k);
        }
        require_finite(u, "u iterate", k);
        if (cfg.record_iterates) trace.u_iterates.push_back(u);
        trace.costs.push_back(cost_unchecked(u, z, ys, a, cfg.lambda, cfg.mu, f));
        trace.iterations_run = k;
    }
    // Gradient at the final iterate so every cost entry has a matching gradient.
    Vector g = grad_z_unchecked(u, z, ys, a, cfg.mu, f);
    Descent dir = direction_at(u, z, g);
    trace.grad_norms.push_back(g.norm());
    trace.grad_dual_norms.push_back(std::sqrt(dir.dual_norm_sq));
    res.u = std::move(u);
    res.z = std::move(z);
    res.c_star = res.z.cwiseProduct(res.u) / cfg.scale_s;
    return res;
}

Stationarity stationarity_residual(const Vector& z, const Vector& y, const Matrix& a, const CglsConfig& cfg) {
    const auto& f = cfg.spec();
    f.check_domain(z);
    TikhonovSolve solve = tikhonov_solve(z, y, a, cfg.lambda);
    Stationarity out;
    out.v = a.transpose() * solve.w;
    out.residual.resize(z.size());
    for (Index i = 0; i < z.size(); ++i)
        out.residual[i] =
            -2.0 * cfg.lambda * z[i] * out.v[i] * out.v[i] + 2.0 * cfg.mu * f.d1(z[i]) * f.eval(z[i]);
    return out;
}

double hf_min_on_window(const NonlinearitySpec& spec, double z0, double b) {
    if (!(b > z0)) throw std::invalid_argument("window needs b > z0");
    double best = kInf;
    for (long k = 0;; ++k) {
        const double z = z0 + 1e-3 * static_cast<double>(k);
        if (!(z < b)) break;
        const double d1 = spec.d1(z);
        best = std::min(best, spec.d2(z) * spec.eval(z) + d1 * d1);
    }
    return best;
}

double recommend_scale(const Matrix& a, const Vector& y, const CglsConfig& cfg, double b, double z0, int n_probe,
                       std::uint64_t seed) {
    if (n_probe < 1) throw std::invalid_argument("recommend_scale: n_probe must be >= 1");
    const auto& f = cfg.spec();
    const double h_min = hf_min_on_window(f, z0, b);
    if (!(h_min > 0.0)) throw std::invalid_argument("recommend_scale: f^2 is not strictly convex on the window");
    const double boundary = f.d1(b) * f.eval(b) / b;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(z0, b);
    double v_max = 0.0;
    Vector z(a.cols());
    for (int p = 0; p < n_probe; ++p) {
        for (Index i = 0; i < z.size(); ++i) z[i] = uniform(rng);
        TikhonovSolve solve = tikhonov_solve(z, y, a, cfg.lambda);
        v_max = std::max(v_max, (a.transpose() * solve.w).cwiseAbs().maxCoeff());
    }
    if (v_max == 0.0) return kInf;
    const double bound = std::min(boundary, h_min) / (v_max * v_max);
    return std::sqrt(bound * cfg.mu / cfg.lambda);
}

} // namespace cginv
