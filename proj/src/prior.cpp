#include <cginv/prior.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace cginv {

void NonlinearitySpec::check_domain(const Vector& z) const {
    for (Index i = 0; i < z.size(); ++i) {
        if (!(z[i] > z_min))
            throw DomainError("z[" + std::to_string(i) + "] = " + std::to_string(z[i]) +
                                  " outside the domain of '" + name + "'",
                              i);
    }
}

Vector NonlinearitySpec::f(const Vector& z) const { return z.unaryExpr(eval); }
Vector NonlinearitySpec::df(const Vector& z) const { return z.unaryExpr(d1); }
Vector NonlinearitySpec::d2f(const Vector& z) const { return z.unaryExpr(d2); }

NonlinearitySpec log_nonlinearity() {
    return NonlinearitySpec{
        [](double z) { return std::log(z); },
        [](double z) { return 1.0 / z; },
        [](double z) { return -1.0 / (z * z); },
        0.0,
        "ln",
    };
}

Vector hf(const NonlinearitySpec& spec, const Vector& z) {
    spec.check_domain(z);
    Vector out(z.size());
    for (Index i = 0; i < z.size(); ++i) {
        const double d1 = spec.d1(z[i]);
        out[i] = spec.d2(z[i]) * spec.eval(z[i]) + d1 * d1;
    }
    return out;
}

double derivative_consistency_error(const NonlinearitySpec& spec) {
    const double lo = std::log(spec.z_min + 0.01);
    const double hi = std::log(100.0);
    constexpr int kPoints = 200;
    double worst = 0.0;
    auto rel = [](double approx, double exact) {
        return std::abs(approx - exact) / std::max(std::abs(exact), 1e-8);
    };
    for (int k = 0; k <= kPoints; ++k) {
        const double z = std::exp(lo + (hi - lo) * k / kPoints);
        const double h = 1e-5 * std::max(std::abs(z), 1e-3);
        const double h_safe = std::min(h, 0.5 * (z - spec.z_min));
        const double fd1 = (spec.eval(z + h_safe) - spec.eval(z - h_safe)) / (2.0 * h_safe);
        const double fd2 = (spec.d1(z + h_safe) - spec.d1(z - h_safe)) / (2.0 * h_safe);
        worst = std::max({worst, rel(fd1, spec.d1(z)), rel(fd2, spec.d2(z))});
    }
    return worst;
}

NonlinearityRegistry::NonlinearityRegistry() { specs_.emplace("ln", log_nonlinearity()); }

NonlinearityRegistry& NonlinearityRegistry::instance() {
    static NonlinearityRegistry registry;
    return registry;
}

void NonlinearityRegistry::add(NonlinearitySpec spec) {
    if (spec.name.empty()) throw std::invalid_argument("nonlinearity needs a name");
    if (!spec.eval || !spec.d1 || !spec.d2) throw std::invalid_argument("nonlinearity '" + spec.name + "' is incomplete");
    const double err = derivative_consistency_error(spec);
    if (!(err < 1e-5))
        throw std::invalid_argument("nonlinearity '" + spec.name +
                                    "' derivatives disagree with finite differences (rel err " +
                                    std::to_string(err) + ")");
    std::string key = spec.name;
    specs_.insert_or_assign(std::move(key), std::move(spec));
}

const NonlinearitySpec& NonlinearityRegistry::get(const std::string& name) const {
    auto it = specs_.find(name);
    if (it == specs_.end()) throw std::invalid_argument("unknown nonlinearity '" + name + "'");
    return it->second;
}

bool NonlinearityRegistry::contains(const std::string& name) const { return specs_.count(name) > 0; }

std::vector<std::string> NonlinearityRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : specs_) out.push_back(k);
    return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

ScalarMap laplace_nonlinearity(double lambda_l) {
    if (!(lambda_l > 0.0)) throw std::invalid_argument("laplace_nonlinearity: lambda must be > 0");
    return [lambda_l](double x) {
        constexpr double kEps = 1e-15;
        // 1 - Υ(x) = Υ(-x) keeps precision in the upper tail.
        const double tail = std::clamp(normal_cdf(-x), kEps, 1.0 - kEps);
        return std::sqrt(-2.0 * lambda_l * lambda_l * std::log(tail));
    };
}

ScalarMap exp_sqrt_nonlinearity(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("exp_sqrt_nonlinearity: alpha must be > 0");
    return [alpha](double x) { return std::sqrt(std::exp(x / alpha)); };
}

ScalarMap exp_nonlinearity() {
    return [](double x) { return std::exp(x); };
}

Vector sample_cg(Index n, const ScalarMap& h, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_cg: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Vector x(n), u(n);
    for (Index i = 0; i < n; ++i) x[i] = normal(rng);
    for (Index i = 0; i < n; ++i) u[i] = normal(rng);
    Vector c(n);
    for (Index i = 0; i < n; ++i) c[i] = h(x[i]) * u[i];
    return c;
}

} // namespace cginv
