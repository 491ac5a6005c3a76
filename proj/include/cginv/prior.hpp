#pragma once

#include <cginv/types.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cginv {

using ScalarMap = std::function<double(double)>;

/// Compound-Gaussian nonlinearity f = h^{-1} on (z_min, inf) with its first two derivatives.
struct NonlinearitySpec {
    ScalarMap eval;
    ScalarMap d1;
    ScalarMap d2;
    double z_min = 0.0;
    std::string name;

    /// Throws DomainError naming the first index with z_i <= z_min.
    void check_domain(const Vector& z) const;
    Vector f(const Vector& z) const;
    Vector df(const Vector& z) const;
    Vector d2f(const Vector& z) const;
};

/// f = ln, f' = 1/z, f'' = -1/z², z_min = 0.
NonlinearitySpec log_nonlinearity();

/// Componentwise curvature term f''·f + (f')².
Vector hf(const NonlinearitySpec& spec, const Vector& z);

/// Largest relative error between d1/d2 and central differences on a log grid
/// over (z_min + 0.01, 100).
double derivative_consistency_error(const NonlinearitySpec& spec);

/// Named nonlinearities. "ln" is always present; custom entries are checked
/// against finite differences on registration.
class NonlinearityRegistry {
public:
    static NonlinearityRegistry& instance();

    void add(NonlinearitySpec spec);
    const NonlinearitySpec& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::vector<std::string> names() const;

private:
    NonlinearityRegistry();
    std::map<std::string, NonlinearitySpec> specs_;
};

/// Standard normal CDF via erfc.
double normal_cdf(double x);

/// h(x) = sqrt(-2 λ² ln(1 - Υ(x))) with Υ clamped to [1e-15, 1 - 1e-15].
/// For x, u ~ N(0,1), h(x)·u is Laplace distributed with scale λ.
ScalarMap laplace_nonlinearity(double lambda_l);

/// h(x) = sqrt(exp(x / alpha)); only used for drawing samples.
ScalarMap exp_sqrt_nonlinearity(double alpha);

/// h = exp, the inverse of f = ln.
ScalarMap exp_nonlinearity();

/// c = h(x) ⊙ u with x, u ~ N(0, I_n) drawn in that order from one stream.
Vector sample_cg(Index n, const ScalarMap& h, std::uint64_t seed);

} // namespace cginv
