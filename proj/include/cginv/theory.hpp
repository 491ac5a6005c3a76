#pragma once

#include <cginv/cgls.hpp>
#include <cginv/types.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cginv {

/// Outcome of one empirical check. `csv` holds one row per instance with the
/// quantities the pass/fail decision was made from.
struct TheoryReport {
    std::string check_name;
    int instances = 0;
    int pass_count = 0;
    int inconclusive = 0;
    double worst_margin = 0.0; ///< check-specific; see each check
    bool passed = false;
    std::string csv;
    std::string artifacts_path;

    std::string summary() const;
};

/// Small random problem: n in [8,16], m in [4, min(8,n)], A Gaussian scaled
/// to unit spectral norm, c = sample_cg with h = exp, y at 60 dB.
struct TheoryInstance {
    Matrix a;
    Vector c;
    Vector y;
};

TheoryInstance make_theory_instance(std::uint64_t seed);

/// CG-LS to δ = 1e-12 in gradient mode; pass when ||𝓕(z*)||∞ < 1e-6,
/// ||u* - z*⊙v(z*)||∞ < 1e-8 and ||∇F(u*,z*)||∞ < 1e-5.
/// worst_margin = largest ||𝓕(z*)||∞.
TheoryReport check_lemma1(int n_instances, std::uint64_t seed);

/// Smallest (G_prev - G_next)/||∇G_prev||² over every accepted backtracking
/// step; pass when it exceeds 1e-12. worst_margin = that minimum.
TheoryReport check_prop2(int n_instances, std::uint64_t seed);

/// r(K) = K · min_{1<=k<=K} ||∇F(u_k,z_k)||²; an instance passes when
/// r(K) <= 1.5 r(K_list[0]) for every K and its costs never increase.
/// worst_margin = largest r(K)/r(K_list[0]).
TheoryReport check_thm1_rate(const std::vector<int>& k_list, int n_instances, std::uint64_t seed);

/// Restart from a 0.01-ball around a converged point and fit log(F_k - F*)
/// against k until the 1e-12 floor; pass on slope < 0 and R² > 0.9, fewer
/// than 5 usable points is inconclusive. The check passes with at most
/// n/10 failures-or-inconclusives and at most n/10 inconclusives.
/// worst_margin = smallest R² among fitted instances.
TheoryReport check_thm2_linear(int n_instances, std::uint64_t seed);

/// Runs CG-LS on s·y with s from recommend_scale (f = ln, window [1, e]) and
/// init mReLU (1, e); pass when z* ∈ [1 - 1e-6, e + 1e-6]^n. A negative
/// control at 1e3·s is recorded in the CSV but does not affect the result.
/// worst_margin = largest distance of a z* component outside the window.
TheoryReport check_prop1_scaling(int n_instances, std::uint64_t seed);

/// Writes <dir>/<check_name>.csv and records the path in the report.
void write_report(TheoryReport& report, const std::filesystem::path& dir);

/// Least-squares line fit; returns slope and R².
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

} // namespace cginv
