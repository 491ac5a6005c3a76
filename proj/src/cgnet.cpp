#include <cginv/cgnet.hpp>

#include <cginv/io.hpp>
#include <cginv/metrics.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace cginv {

BMode parse_bmode(const std::string& s) {
    if (s == "learned") return BMode::learned;
    if (s == "identity") return BMode::identity;
    if (s == "newton") return BMode::newton;
    throw std::invalid_argument("unknown b_mode '" + s + "' (expected learned, identity or newton)");
}

std::string to_string(BMode m) {
    switch (m) {
    case BMode::learned: return "learned";
    case BMode::identity: return "identity";
    case BMode::newton: return "newton";
    }
    return "?";
}

LossKind parse_loss(const std::string& s) {
    if (s == "ssim") return LossKind::ssim;
    if (s == "mae") return LossKind::mae;
    throw std::invalid_argument("unknown loss '" + s + "' (expected ssim or mae)");
}

std::string to_string(LossKind k) { return k == LossKind::ssim ? "ssim" : "mae"; }

NetParams NetParams::initial(int k, int j, Index n, const NetInit& init) {
    if (k < 0 || j < 1 || n < 1) throw std::invalid_argument("network needs K >= 0, J >= 1, n >= 1");
    NetParams p;
    p.k = k;
    p.j = j;
    p.n = n;
    p.lambda0 = init.lambda;
    p.a0 = init.a0;
    p.b0 = init.b0;
    p.eps_guard = init.eps_guard;
    p.eps_psd = init.eps_psd;
    StepParams step;
    step.mu = init.mu;
    step.l_diag = Vector::Ones(n);
    step.l_sub = Vector::Zero(n - 1);
    step.eta = Vector::Constant(n, init.eta);
    step.a = init.a;
    step.b = init.b;
    p.steps.assign(static_cast<std::size_t>(k) * j, step);
    p.lambdas.assign(static_cast<std::size_t>(k), init.lambda);
    return p;
}

Index NetParams::parameter_count() const { return static_cast<Index>(k) * (j * (3 * n + 2) + 1) + 3; }

namespace {

struct Layout {
    Index n;
    Index block() const { return 3 * n + 2; }
    Index step(std::size_t s) const { return 3 + static_cast<Index>(s) * block(); }
    Index mu(std::size_t s) const { return step(s); }
    Index diag(std::size_t s) const { return step(s) + 1; }
    Index sub(std::size_t s) const { return step(s) + 1 + n; }
    Index eta(std::size_t s) const { return step(s) + 2 * n; }
    Index a(std::size_t s) const { return step(s) + 3 * n; }
    Index b(std::size_t s) const { return step(s) + 3 * n + 1; }
    Index lambda(std::size_t n_steps, int k1) const { return step(n_steps) + (k1 - 1); }

    std::string name(Index i, int j) const {
        if (i == 0) return "lambda_0";
        if (i == 1) return "a_0";
        if (i == 2) return "b_0";
        const Index s = (i - 3) / block();
        const Index off = (i - 3) % block();
        const std::string tag = "_" + std::to_string(s / j + 1) + "^" + std::to_string(s % j + 1);
        if (off == 0) return "mu" + tag;
        if (off < 1 + n) return "L" + tag + " diagonal";
        if (off < 2 * n) return "L" + tag + " subdiagonal";
        if (off < 3 * n) return "eta" + tag;
        return (off == 3 * n ? "a" : "b") + tag;
    }
};

} // namespace

void NetParams::validate() const {
    if (k < 0 || j < 1 || n < 1) throw std::invalid_argument("network needs K >= 0, J >= 1, n >= 1");
    if (steps.size() != static_cast<std::size_t>(k) * j || lambdas.size() != static_cast<std::size_t>(k))
        throw std::invalid_argument("network parameter blocks do not match K and J");
    for (const auto& s : steps)
        if (s.l_diag.size() != n || s.l_sub.size() != n - 1 || s.eta.size() != n)
            throw std::invalid_argument("network step parameters do not match n");
    if (!(eps_guard > 0.0) || !(eps_psd >= 0.0)) throw std::invalid_argument("network epsilons must be positive");
    NonlinearityRegistry::instance().get(nonlinearity);
}

Vector NetParams::flatten() const {
    validate();
    Layout lay{n};
    Vector theta(parameter_count());
    theta[0] = lambda0;
    theta[1] = a0;
    theta[2] = b0;
    for (std::size_t s = 0; s < steps.size(); ++s) {
        const auto& st = steps[s];
        theta[lay.mu(s)] = st.mu;
        theta.segment(lay.diag(s), n) = st.l_diag;
        theta.segment(lay.sub(s), n - 1) = st.l_sub;
        theta.segment(lay.eta(s), n) = st.eta;
        theta[lay.a(s)] = st.a;
        theta[lay.b(s)] = st.b;
    }
    for (int k1 = 1; k1 <= k; ++k1) theta[lay.lambda(steps.size(), k1)] = lambdas[static_cast<std::size_t>(k1 - 1)];
    return theta;
}

void NetParams::unflatten(const Vector& theta) {
    validate();
    if (theta.size() != parameter_count()) throw std::invalid_argument("parameter vector has the wrong length");
    Layout lay{n};
    lambda0 = theta[0];
    a0 = theta[1];
    b0 = theta[2];
    for (std::size_t s = 0; s < steps.size(); ++s) {
        auto& st = steps[s];
        st.mu = theta[lay.mu(s)];
        st.l_diag = theta.segment(lay.diag(s), n);
        st.l_sub = theta.segment(lay.sub(s), n - 1);
        st.eta = theta.segment(lay.eta(s), n);
        st.a = theta[lay.a(s)];
        st.b = theta[lay.b(s)];
    }
    for (int k1 = 1; k1 <= k; ++k1) lambdas[static_cast<std::size_t>(k1 - 1)] = theta[lay.lambda(steps.size(), k1)];
}

double guard_lambda(double lambda, double eps) { return std::max(lambda, eps); }
double guard_window(double v, double z_min, double eps) { return std::max(v, z_min + eps); }

Matrix p_eps(const Matrix& l, double eps) {
    if (l.rows() != l.cols()) throw std::invalid_argument("p_eps: matrix must be square");
    Matrix s = 0.5 * (l + l.transpose());
    return psd_project(s, eps);
}

NetOperator::NetOperator(Matrix a_in) : a(std::move(a_in)), a_norm(spectral_norm(a)) {
    if (!(a_norm > 0.0)) throw std::invalid_argument("measurement matrix is zero");
}

namespace {

// B = P_eps(S) for S = (L + L^T)/2 with L lower bidiagonal. When S - eps I is
// positive definite the projection is the identity map and B = S.
struct StepMetric {
    bool identity = false;
    bool exact = false;
    Vector s_diag;
    Vector s_sub;
    TridiagonalEigen eig;
    Vector clamped;

    Vector apply(const Vector& g) const {
        if (identity) return g;
        if (exact) {
            const Index n = g.size();
            Vector out = s_diag.cwiseProduct(g);
            for (Index i = 0; i + 1 < n; ++i) {
                out[i] += s_sub[i] * g[i + 1];
                out[i + 1] += s_sub[i] * g[i];
            }
            return out;
        }
        return eig.vectors * clamped.cwiseProduct(eig.vectors.transpose() * g);
    }
};

bool shifted_positive_definite(const Vector& diag, const Vector& sub, double eps) {
    double pivot = diag[0] - eps;
    if (!(pivot > 0.0)) return false;
    for (Index i = 1; i < diag.size(); ++i) {
        pivot = (diag[i] - eps) - sub[i - 1] * sub[i - 1] / pivot;
        if (!(pivot > 0.0)) return false;
    }
    return true;
}

StepMetric make_metric(const StepParams& st, double eps, BMode mode) {
    StepMetric m;
    if (mode != BMode::learned) {
        m.identity = true;
        return m;
    }
    m.s_diag = st.l_diag;
    m.s_sub = 0.5 * st.l_sub;
    if (!m.s_diag.allFinite() || !m.s_sub.allFinite()) throw NumericalError("non-finite metric parameters", -1);
    if (shifted_positive_definite(m.s_diag, m.s_sub, eps)) {
        m.exact = true;
        return m;
    }
    m.eig = tridiagonal_eigen(m.s_diag, m.s_sub);
    m.clamped = m.eig.values.cwiseMax(eps);
    return m;
}

std::vector<StepMetric> make_metrics(const NetParams& p, BMode mode) {
    std::vector<StepMetric> out;
    out.reserve(p.steps.size());
    for (const auto& st : p.steps) out.push_back(make_metric(st, p.eps_psd, mode));
    return out;
}

struct StepTape {
    Vector z_in;
    Vector atr; // A^T (y - A(u ⊙ z_in))
    Vector g;
    Vector d;
    Vector x;
    Vector z_out;
};

struct Tape {
    Vector x0;
    Vector z0;
    std::vector<TikhonovSolve> tik; // U_0..U_K
    std::vector<StepTape> steps;
    Vector out;
};

std::string layer_name(int k1, int j1) { return "Z_" + std::to_string(k1) + "^" + std::to_string(j1); }

TikhonovSolve tikhonov_layer(const Vector& z, const Vector& y, const Matrix& a, double lambda, int k1) {
    try {
        TikhonovSolve t = tikhonov_solve(z, y, a, lambda);
        return t;
    } catch (const NumericalError& e) {
        throw NumericalError("layer U_" + std::to_string(k1) + ": " + e.what(), k1);
    }
}

Vector run_forward(const Vector& y, const NetParams& p, const NetOperator& op, const std::vector<StepMetric>& metrics,
                   BMode mode, Tape* tape, NetTrace* trace) {
    if (y.size() != op.a.rows()) throw std::invalid_argument("forward: y length must equal m");
    if (op.a.cols() != p.n) throw std::invalid_argument("forward: network n does not match A");
    const Matrix& a = op.a;
    const auto& f = NonlinearityRegistry::instance().get(p.nonlinearity);
    const double eps = p.eps_guard;

    Vector back = a.transpose() * y;
    back /= op.a_norm;
    Vector z = mrelu(guard_window(p.a0, f.z_min, eps), guard_window(p.b0, f.z_min, eps), back);
    TikhonovSolve t0 = tikhonov_layer(z, y, a, guard_lambda(p.lambda0, eps), 0);
    Vector u = t0.u;
    if (trace) {
        trace->z_layers.assign(1, z);
        trace->u_layers.assign(1, u);
    }
    if (tape) {
        tape->x0 = back;
        tape->z0 = z;
        tape->tik.clear();
        tape->steps.clear();
        tape->tik.push_back(std::move(t0));
    }

    CglsConfig newton_cfg;
    if (mode == BMode::newton) {
        newton_cfg.descent = DescentMode::newton;
        newton_cfg.newton_eps = p.eps_psd;
        newton_cfg.nonlinearity = p.nonlinearity;
    }

    for (int k1 = 1; k1 <= p.k; ++k1) {
        for (int j1 = 1; j1 <= p.j; ++j1) {
            const std::size_t s = static_cast<std::size_t>((k1 - 1) * p.j + (j1 - 1));
            const StepParams& st = p.steps[s];
            Vector residual = y - a * z.cwiseProduct(u);
            Vector atr = a.transpose() * residual;
            Vector g = -2.0 * u.cwiseProduct(atr);
            for (Index i = 0; i < z.size(); ++i) g[i] += 2.0 * st.mu * f.d1(z[i]) * f.eval(z[i]);
            Vector d;
            if (mode == BMode::newton) {
                newton_cfg.mu = st.mu;
                Matrix h = hess_z(u, z, y, a, newton_cfg);
                d = descent_from_gradient(g, &h, newton_cfg).direction;
            } else {
                d = -metrics[s].apply(g);
            }
            Vector x = z + st.eta.cwiseProduct(d);
            Vector z_next = mrelu(guard_window(st.a, f.z_min, eps), guard_window(st.b, f.z_min, eps), x);
            if (!z_next.allFinite()) throw NumericalError("non-finite activation in layer " + layer_name(k1, j1), k1);
            if (tape) tape->steps.push_back({z, std::move(atr), std::move(g), std::move(d), std::move(x), z_next});
            z = std::move(z_next);
            if (trace) trace->z_layers.push_back(z);
        }
        TikhonovSolve tk = tikhonov_layer(z, y, a, guard_lambda(p.lambdas[static_cast<std::size_t>(k1 - 1)], eps), k1);
        u = tk.u;
        if (trace) trace->u_layers.push_back(u);
        if (tape) tape->tik.push_back(std::move(tk));
    }
    Vector out = u.cwiseProduct(z);
    if (!out.allFinite()) throw NumericalError("non-finite network output", p.k);
    if (tape) tape->out = out;
    return out;
}

// Adjoint of u = z ⊙ A^T w with (A D{z²} A^T + λI) w = y. Adds to z_bar; returns dλ.
double tikhonov_backward(const Vector& u_bar, const Vector& z, const TikhonovSolve& t, const Matrix& a,
                         Vector& z_bar) {
    Vector p = a.transpose() * t.w;
    z_bar += u_bar.cwiseProduct(p);
    Vector w_bar = a * u_bar.cwiseProduct(z);
    Vector q = t.factor.solve(w_bar);
    z_bar -= 2.0 * z.cwiseProduct(a.transpose() * q).cwiseProduct(p);
    return -q.dot(t.w);
}

struct MreluGrad {
    Vector x_bar;
    double a_bar = 0.0;
    double b_bar = 0.0;
};

// Subgradient 0 at the kinks.
MreluGrad mrelu_backward(const Vector& out_bar, const Vector& x, double a, double b) {
    MreluGrad g;
    g.x_bar.resize(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        const double above_a = x[i] > a ? 1.0 : 0.0;
        const double above_b = x[i] > b ? 1.0 : 0.0;
        g.x_bar[i] = out_bar[i] * (above_a - above_b);
        g.a_bar += out_bar[i] * (1.0 - above_a);
        g.b_bar += out_bar[i] * above_b;
    }
    return g;
}

double guarded_grad(double raw, double guarded, double grad) { return raw >= guarded ? grad : 0.0; }

struct SampleGrad {
    double loss = 0.0;
    Vector flat; // L entries are filled during the batch reduction
    std::vector<Vector> d_bar;
    std::vector<Vector> g;
};

Vector loss_gradient(const Vector& c_hat, const Vector& c_true, const Matrix& phi, int n_side, LossKind kind,
                     double& loss) {
    Vector x_hat = phi * c_hat;
    Vector x_true = phi * c_true;
    if (kind == LossKind::ssim) {
        SsimGradient sg = ssim_with_gradient(x_hat, x_true, n_side, n_side);
        loss = 1.0 - sg.value;
        return -(phi.transpose() * sg.d_x);
    }
    Vector diff = x_hat - x_true;
    loss = diff.cwiseAbs().mean();
    Vector sign = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    return phi.transpose() * sign / static_cast<double>(diff.size());
}

SampleGrad sample_gradient(const TrainSample& sample, const NetParams& p, const NetOperator& op,
                           const std::vector<StepMetric>& metrics, const Matrix& phi, int n_side, LossKind kind,
                           BMode mode) {
    const Matrix& a = op.a;
    const auto& f = NonlinearityRegistry::instance().get(p.nonlinearity);
    const double eps = p.eps_guard;
    Tape tape;
    run_forward(sample.y, p, op, metrics, mode, &tape, nullptr);

    SampleGrad out;
    out.flat = Vector::Zero(p.parameter_count());
    out.d_bar.resize(p.steps.size());
    out.g.resize(p.steps.size());
    Layout lay{p.n};
    const Vector o_bar = loss_gradient(tape.out, sample.c, phi, n_side, kind, out.loss);
    if (!o_bar.allFinite()) throw NumericalError("non-finite loss gradient", -1);

    const Vector& z_final = p.k > 0 ? tape.steps.back().z_out : tape.z0;
    Vector z_bar = o_bar.cwiseProduct(tape.tik.back().u);
    Vector u_bar = o_bar.cwiseProduct(z_final);

    // Z_k^J, the input of Tikhonov layer k.
    auto z_into_tikhonov = [&](int k1) -> const Vector& {
        return tape.steps[static_cast<std::size_t>(k1 * p.j - 1)].z_out;
    };
    for (int k1 = p.k; k1 >= 1; --k1) {
        const double raw_lambda = p.lambdas[static_cast<std::size_t>(k1 - 1)];
        const double lambda_bar =
            tikhonov_backward(u_bar, z_into_tikhonov(k1), tape.tik[static_cast<std::size_t>(k1)], a, z_bar);
        out.flat[lay.lambda(p.steps.size(), k1)] =
            guarded_grad(raw_lambda, guard_lambda(raw_lambda, eps), lambda_bar);
        Vector u_prev_bar = Vector::Zero(p.n);
        const Vector& u_prev = tape.tik[static_cast<std::size_t>(k1 - 1)].u;
        for (int j1 = p.j; j1 >= 1; --j1) {
            const std::size_t s = static_cast<std::size_t>((k1 - 1) * p.j + (j1 - 1));
            const StepParams& st = p.steps[s];
            const StepTape& stp = tape.steps[s];
            const double a_eff = guard_window(st.a, f.z_min, eps);
            const double b_eff = guard_window(st.b, f.z_min, eps);
            MreluGrad mg = mrelu_backward(z_bar, stp.x, a_eff, b_eff);
            out.flat[lay.a(s)] = guarded_grad(st.a, a_eff, mg.a_bar);
            out.flat[lay.b(s)] = guarded_grad(st.b, b_eff, mg.b_bar);
            out.flat.segment(lay.eta(s), p.n) = mg.x_bar.cwiseProduct(stp.d);
            Vector d_bar = mg.x_bar.cwiseProduct(st.eta);
            Vector g_bar = -metrics[s].apply(d_bar);
            const Vector& z = stp.z_in;
            Vector next_bar = mg.x_bar;
            Vector agu = a.transpose() * (a * u_prev.cwiseProduct(g_bar));
            double mu_bar = 0.0;
            for (Index i = 0; i < p.n; ++i) {
                const double fz = f.eval(z[i]);
                const double d1 = f.d1(z[i]);
                next_bar[i] += 2.0 * u_prev[i] * agu[i] + 2.0 * st.mu * (f.d2(z[i]) * fz + d1 * d1) * g_bar[i];
                u_prev_bar[i] += -2.0 * stp.atr[i] * g_bar[i] + 2.0 * z[i] * agu[i];
                mu_bar += 2.0 * d1 * fz * g_bar[i];
            }
            out.flat[lay.mu(s)] = mu_bar;
            if (mode == BMode::learned) {
                out.d_bar[s] = std::move(d_bar);
                out.g[s] = stp.g;
            }
            z_bar = std::move(next_bar);
        }
        u_bar = std::move(u_prev_bar);
    }
    const double lambda0_bar = tikhonov_backward(u_bar, tape.z0, tape.tik.front(), a, z_bar);
    out.flat[0] = guarded_grad(p.lambda0, guard_lambda(p.lambda0, eps), lambda0_bar);
    const double a0_eff = guard_window(p.a0, f.z_min, eps);
    const double b0_eff = guard_window(p.b0, f.z_min, eps);
    MreluGrad mg0 = mrelu_backward(z_bar, tape.x0, a0_eff, b0_eff);
    out.flat[1] = guarded_grad(p.a0, a0_eff, mg0.a_bar);
    out.flat[2] = guarded_grad(p.b0, b0_eff, mg0.b_bar);
    return out;
}

} // namespace

Vector forward(const Vector& y, const NetParams& params, const NetOperator& op, BMode mode, NetTrace* trace) {
    params.validate();
    return run_forward(y, params, op, make_metrics(params, mode), mode, nullptr, trace);
}

double image_loss(const Vector& c_hat, const Vector& c_true, const Matrix& phi, int n_side, LossKind kind) {
    if (c_hat.size() != c_true.size() || phi.cols() != c_hat.size())
        throw std::invalid_argument("image_loss: size mismatch");
    double loss = 0.0;
    loss_gradient(c_hat, c_true, phi, n_side, kind, loss);
    return loss;
}

namespace {

// Gradient w.r.t. the bidiagonal entries of L given the per-sample factors of
// dB = -sum_s d_bar_s g_s^T (already divided by the batch size).
void metric_backward(const StepMetric& metric, const std::vector<const Vector*>& d_bars,
                     const std::vector<const Vector*>& gs, double scale, double eps, Eigen::Ref<Vector> diag_bar,
                     Eigen::Ref<Vector> sub_bar) {
    const Index n = diag_bar.size();
    diag_bar.setZero();
    sub_bar.setZero();
    if (metric.exact) {
        // B = S, so dS = sym(dB); L(i+1,i) enters S twice with weight 1/2.
        for (std::size_t s = 0; s < d_bars.size(); ++s) {
            const Vector& db = *d_bars[s];
            const Vector& g = *gs[s];
            diag_bar -= scale * db.cwiseProduct(g);
            for (Index i = 0; i + 1 < n; ++i) sub_bar[i] -= 0.5 * scale * (db[i + 1] * g[i] + db[i] * g[i + 1]);
        }
        return;
    }
    const Matrix& q = metric.eig.vectors;
    const Vector& lam = metric.eig.values;
    const Index batch = static_cast<Index>(d_bars.size());
    Matrix dt(n, batch), gt(n, batch);
    for (Index s = 0; s < batch; ++s) {
        dt.col(s) = q.transpose() * *d_bars[static_cast<std::size_t>(s)];
        gt.col(s) = q.transpose() * *gs[static_cast<std::size_t>(s)];
    }
    Matrix c = -scale * dt * gt.transpose();
    Matrix m = 0.5 * (c + c.transpose());
    // Divided differences of max(., eps) on the spectrum; equal eigenvalues use the derivative.
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            const double gap = lam[i] - lam[j];
            double factor;
            if (std::abs(gap) > 1e-9 * std::max(1.0, std::max(std::abs(lam[i]), std::abs(lam[j])))) {
                factor = (std::max(lam[i], eps) - std::max(lam[j], eps)) / gap;
            } else {
                factor = 0.5 * (lam[i] + lam[j]) > eps ? 1.0 : 0.0;
            }
            m(i, j) *= factor;
        }
    Matrix r = q * m;
    for (Index a = 0; a < n; ++a) {
        diag_bar[a] = r.row(a).dot(q.row(a));
        if (a + 1 < n) sub_bar[a] = r.row(a + 1).dot(q.row(a));
    }
}

void check_batch(const std::vector<TrainSample>& batch, const NetParams& params, const NetOperator& op,
                 const Matrix& phi, int n_side) {
    if (batch.empty()) throw std::invalid_argument("batch is empty");
    params.validate();
    if (op.a.cols() != params.n || phi.rows() != params.n || phi.cols() != params.n ||
        static_cast<Index>(n_side) * n_side != params.n)
        throw std::invalid_argument("network, operator and dictionary dimensions disagree");
    for (const auto& s : batch)
        if (s.y.size() != op.a.rows() || s.c.size() != params.n)
            throw std::invalid_argument("training sample dimensions do not match the model");
}

} // namespace

BatchGradient grad_params(const std::vector<TrainSample>& batch, const NetParams& params, const NetOperator& op,
                          const Matrix& phi, int n_side, LossKind loss, BMode mode, Execution exec) {
    if (mode == BMode::newton) throw std::invalid_argument("gradients through the Newton metric are not supported");
    check_batch(batch, params, op, phi, n_side);
    const std::vector<StepMetric> metrics = make_metrics(params, mode);
    std::vector<SampleGrad> per_sample(batch.size());
    for_each_index(
        batch.size(),
        [&](std::size_t i) {
            per_sample[i] = sample_gradient(batch[i], params, op, metrics, phi, n_side, loss, mode);
        },
        exec);

    const double scale = 1.0 / static_cast<double>(batch.size());
    BatchGradient out;
    out.grad = Vector::Zero(params.parameter_count());
    for (const auto& sg : per_sample) {
        out.loss += sg.loss;
        out.grad += sg.flat;
    }
    out.loss *= scale;
    out.grad *= scale;

    if (mode == BMode::learned) {
        Layout lay{params.n};
        for (std::size_t s = 0; s < params.steps.size(); ++s) {
            std::vector<const Vector*> d_bars, gs;
            for (const auto& sg : per_sample) {
                d_bars.push_back(&sg.d_bar[s]);
                gs.push_back(&sg.g[s]);
            }
            metric_backward(metrics[s], d_bars, gs, scale, params.eps_psd, out.grad.segment(lay.diag(s), params.n),
                            out.grad.segment(lay.sub(s), params.n - 1));
        }
    }
    if (!out.grad.allFinite()) {
        Layout lay{params.n};
        const Index steps_end = lay.step(params.steps.size());
        for (Index i = 0; i < out.grad.size(); ++i)
            if (!std::isfinite(out.grad[i]))
                throw NumericalError("non-finite gradient for " +
                                         (i >= steps_end ? "lambda_" + std::to_string(i - steps_end + 1)
                                                         : lay.name(i, params.j)),
                                     -1);
    }
    return out;
}

double batch_loss(const std::vector<TrainSample>& batch, const NetParams& params, const NetOperator& op,
                  const Matrix& phi, int n_side, LossKind loss, BMode mode, Execution exec) {
    check_batch(batch, params, op, phi, n_side);
    const std::vector<StepMetric> metrics = make_metrics(params, mode);
    std::vector<double> losses(batch.size());
    for_each_index(
        batch.size(),
        [&](std::size_t i) {
            Vector c_hat = run_forward(batch[i].y, params, op, metrics, mode, nullptr, nullptr);
            losses[i] = image_loss(c_hat, batch[i].c, phi, n_side, loss);
        },
        exec);
    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(batch.size());
}

void adam_step(Vector& theta, const Vector& grad, AdamState& state, long t, const AdamConfig& cfg) {
    if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
    if (grad.size() != theta.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
    if (state.m.size() != theta.size()) state.m = Vector::Zero(theta.size());
    if (state.v.size() != theta.size()) state.v = Vector::Zero(theta.size());
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (Index i = 0; i < theta.size(); ++i) {
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

TrainResult train(const std::vector<TrainSample>& data, const NetOperator& op, const Matrix& phi, int n_side,
                  NetParams init, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(cfg.adam.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    if (cfg.batch_size < 0) throw std::invalid_argument("batch size must be >= 1");
    if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
        throw std::invalid_argument("validation fraction must lie in [0, 1)");
    if (cfg.b_mode == BMode::newton) throw std::invalid_argument("training with the Newton metric is not supported");
    if (data.empty()) throw std::invalid_argument("empty training split");

    TrainResult res;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    if (cfg.validation_fraction == 0.0) {
        res.train_indices = order;
        res.val_indices = order;
    } else {
        const auto wanted = static_cast<std::size_t>(std::llround(cfg.validation_fraction * data.size()));
        const std::size_t n_val = std::max<std::size_t>(2, wanted);
        if (n_val >= data.size()) throw std::invalid_argument("empty training split");
        res.val_indices.assign(order.begin(), order.begin() + static_cast<long>(n_val));
        res.train_indices.assign(order.begin() + static_cast<long>(n_val), order.end());
    }
    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<TrainSample> out;
        for (std::size_t i : idx) out.push_back(data[i]);
        return out;
    };
    const std::vector<TrainSample> val = gather(res.val_indices);
    std::vector<std::size_t> train_idx = res.train_indices;
    const std::size_t batch_size = cfg.batch_size > 0 ? static_cast<std::size_t>(cfg.batch_size)
                                   : train_idx.size() <= 32 ? train_idx.size()
                                                            : 32;

    NetParams params = std::move(init);
    Vector theta = params.flatten();
    AdamState state;
    long t = 0;
    res.initial_val_loss = batch_loss(val, params, op, phi, n_side, cfg.loss, cfg.b_mode, cfg.exec);
    double best = kInf;
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += batch_size) {
            const std::size_t stop = std::min(train_idx.size(), start + batch_size);
            std::vector<TrainSample> batch;
            for (std::size_t i = start; i < stop; ++i) batch.push_back(data[train_idx[i]]);
            BatchGradient g = grad_params(batch, params, op, phi, n_side, cfg.loss, cfg.b_mode, cfg.exec);
            adam_step(theta, g.grad, state, ++t, cfg.adam);
            params.unflatten(theta);
            loss_sum += g.loss * static_cast<double>(batch.size());
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
        rec.val_loss = batch_loss(val, params, op, phi, n_side, cfg.loss, cfg.b_mode, cfg.exec);
        if (rec.val_loss < best) {
            best = rec.val_loss;
            res.params = params;
            res.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        rec.best_val_loss = best;
        res.history.push_back(rec);
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d train_loss %.6f val_loss %.6f\n", epoch, rec.train_loss, rec.val_loss);
        if (cfg.patience > 0 && since_best >= cfg.patience) break;
    }
    if (res.best_epoch == 0) res.params = params; // every validation loss was non-finite
    return res;
}

std::string format_history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss,best_val_loss\n";
    for (const auto& r : history)
        out << r.epoch << ',' << io::format_double(r.train_loss) << ',' << io::format_double(r.val_loss) << ','
            << io::format_double(r.best_val_loss) << '\n';
    return out.str();
}

namespace {

std::string csv_row(const Vector& v) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += io::format_double(v[i]);
    }
    return s + '\n';
}

std::vector<double> parse_row(const std::string& line, std::size_t lineno) {
    std::vector<double> out;
    if (line.empty()) return out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        out.push_back(io::parse_double(std::string_view(line).substr(pos, comma - pos), lineno));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

} // namespace

std::string format_checkpoint(const NetParams& p) {
    p.validate();
    std::string out = "cgnet-v1," + std::to_string(p.k) + "," + std::to_string(p.j) + "," + std::to_string(p.n) + "\n";
    auto scalar = [&](double v) { out += io::format_double(v) + "\n"; };
    scalar(p.lambda0);
    scalar(p.a0);
    scalar(p.b0);
    for (const auto& st : p.steps) {
        scalar(st.mu);
        out += csv_row(st.l_diag);
        out += csv_row(st.l_sub);
        out += csv_row(st.eta);
        scalar(st.a);
        scalar(st.b);
    }
    for (double l : p.lambdas) scalar(l);
    out += io::format_double(p.eps_guard) + "," + io::format_double(p.eps_psd) + "\n";
    return out;
}

NetParams parse_checkpoint(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    }
    if (lines.empty()) throw FormatError("empty checkpoint", 1);
    const std::string& header = lines[0];
    if (header.rfind("cgnet-v1,", 0) != 0) throw FormatError("checkpoint header must start with 'cgnet-v1'", 1);
    std::vector<long> dims;
    {
        std::size_t pos = 9;
        while (true) {
            const std::size_t comma = header.find(',', pos);
            dims.push_back(io::parse_long(std::string_view(header).substr(pos, comma - pos), 1));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    if (dims.size() != 3 || dims[0] < 0 || dims[1] < 1 || dims[2] < 1)
        throw FormatError("checkpoint header needs K, J >= 1 and n >= 1", 1);
    NetParams p = NetParams::initial(static_cast<int>(dims[0]), static_cast<int>(dims[1]), dims[2]);
    const Index n = p.n;
    std::size_t cursor = 1;
    auto next = [&](std::size_t expected) {
        if (cursor >= lines.size())
            throw FormatError("checkpoint truncated: expected " + std::to_string(expected) + " values", cursor + 1);
        std::vector<double> row = parse_row(lines[cursor], cursor + 1);
        if (row.size() != expected)
            throw FormatError("expected " + std::to_string(expected) + " values, found " + std::to_string(row.size()),
                              cursor + 1);
        ++cursor;
        return row;
    };
    auto vec = [&](std::size_t expected) {
        std::vector<double> row = next(expected);
        return Vector(Eigen::Map<Vector>(row.data(), static_cast<Index>(row.size())));
    };
    p.lambda0 = next(1)[0];
    p.a0 = next(1)[0];
    p.b0 = next(1)[0];
    for (auto& st : p.steps) {
        st.mu = next(1)[0];
        st.l_diag = vec(static_cast<std::size_t>(n));
        st.l_sub = vec(static_cast<std::size_t>(n - 1));
        st.eta = vec(static_cast<std::size_t>(n));
        st.a = next(1)[0];
        st.b = next(1)[0];
    }
    for (auto& l : p.lambdas) l = next(1)[0];
    std::vector<double> eps = next(2);
    p.eps_guard = eps[0];
    p.eps_psd = eps[1];
    for (; cursor < lines.size(); ++cursor)
        if (!lines[cursor].empty()) throw FormatError("unexpected trailing content in checkpoint", cursor + 1);
    p.validate();
    return p;
}

void save_checkpoint(const NetParams& params, const std::filesystem::path& path) {
    io::write_atomic(path, format_checkpoint(params));
}

NetParams load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(io::read_file(path)); }

} // namespace cginv
