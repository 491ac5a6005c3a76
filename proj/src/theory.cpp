#include <cginv/theory.hpp>

#include <cginv/io.hpp>
#include <cginv/linalg.hpp>
#include <cginv/model.hpp>
#include <cginv/prior.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace cginv {

std::string TheoryReport::summary() const {
    std::ostringstream out;
    out << check_name << ": " << (passed ? "PASS" : "FAIL") << " " << pass_count << "/" << instances;
    if (inconclusive > 0) out << " (" << inconclusive << " inconclusive)";
    out << " worst_margin=" << io::format_double(worst_margin);
    if (!artifacts_path.empty()) out << " csv=" << artifacts_path;
    return out.str();
}

TheoryInstance make_theory_instance(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int n = std::uniform_int_distribution<int>(8, 16)(rng);
    const int m = std::uniform_int_distribution<int>(4, std::min(8, n))(rng);
    std::normal_distribution<double> normal;
    TheoryInstance inst;
    inst.a.resize(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) inst.a(i, j) = normal(rng);
    inst.a /= spectral_norm(inst.a);
    inst.c = sample_cg(n, exp_nonlinearity(), rng());
    inst.y = add_white_noise(inst.a * inst.c, 60.0, rng());
    return inst;
}

namespace {

std::uint64_t instance_seed(std::uint64_t seed, int i) { return seed * 1000003ULL + static_cast<std::uint64_t>(i); }

CglsConfig tight_gradient_config(double delta) {
    CglsConfig cfg = CglsConfig::gradient_defaults();
    cfg.delta = delta;
    cfg.k_max = 200000;
    return cfg;
}

std::string fmt(double v) { return io::format_double(v); }

} // namespace

TheoryReport check_lemma1(int n_instances, std::uint64_t seed) {
    TheoryReport rep;
    rep.check_name = "lemma1";
    rep.instances = n_instances;
    std::ostringstream csv;
    csv << "instance,n,m,iterations,converged,stationarity_inf,u_mismatch_inf,grad_inf,pass\n";
    for (int i = 0; i < n_instances; ++i) {
        const TheoryInstance inst = make_theory_instance(instance_seed(seed, i));
        const CglsConfig cfg = tight_gradient_config(1e-12);
        const CglsResult res = run_cgls(inst.y, inst.a, cfg);
        const Stationarity st = stationarity_residual(res.z, inst.y, inst.a, cfg);
        const double f_inf = st.residual.cwiseAbs().maxCoeff();
        const double u_gap = (res.u - res.z.cwiseProduct(st.v)).cwiseAbs().maxCoeff();
        const double g_inf = std::max(grad_z(res.u, res.z, inst.y, inst.a, cfg).cwiseAbs().maxCoeff(),
                                      grad_u(res.u, res.z, inst.y, inst.a, cfg).cwiseAbs().maxCoeff());
        const bool ok = res.trace.converged && f_inf < 1e-6 && u_gap < 1e-8 && g_inf < 1e-5;
        rep.pass_count += ok;
        rep.worst_margin = std::max(rep.worst_margin, f_inf);
        csv << i << ',' << inst.a.cols() << ',' << inst.a.rows() << ',' << res.trace.iterations_run << ','
            << res.trace.converged << ',' << fmt(f_inf) << ',' << fmt(u_gap) << ',' << fmt(g_inf) << ',' << ok
            << '\n';
    }
    rep.passed = rep.pass_count == rep.instances;
    rep.csv = csv.str();
    return rep;
}

TheoryReport check_prop2(int n_instances, std::uint64_t seed) {
    TheoryReport rep;
    rep.check_name = "prop2";
    rep.instances = n_instances;
    rep.worst_margin = kInf;
    std::ostringstream csv;
    csv << "instance,n,m,accepted_steps,min_ratio,pass\n";
    for (int i = 0; i < n_instances; ++i) {
        const TheoryInstance inst = make_theory_instance(instance_seed(seed, i));
        const CglsResult res = run_cgls(inst.y, inst.a, CglsConfig::gradient_defaults());
        const auto& ratios = res.trace.descent_ratios;
        const double min_ratio = ratios.empty() ? kInf : *std::min_element(ratios.begin(), ratios.end());
        const bool ok = min_ratio > 1e-12;
        rep.pass_count += ok;
        rep.worst_margin = std::min(rep.worst_margin, min_ratio);
        csv << i << ',' << inst.a.cols() << ',' << inst.a.rows() << ',' << ratios.size() << ',' << fmt(min_ratio)
            << ',' << ok << '\n';
    }
    rep.passed = rep.pass_count == rep.instances;
    rep.csv = csv.str();
    return rep;
}

TheoryReport check_thm1_rate(const std::vector<int>& k_list, int n_instances, std::uint64_t seed) {
    if (k_list.empty() || k_list.front() < 10 || !std::is_sorted(k_list.begin(), k_list.end()) ||
        std::adjacent_find(k_list.begin(), k_list.end()) != k_list.end())
        throw std::invalid_argument("K list must be strictly increasing and start at >= 10");
    TheoryReport rep;
    rep.check_name = "thm1";
    rep.instances = n_instances;
    std::ostringstream csv;
    csv << "instance,n,m";
    for (int k : k_list) csv << ",r_" << k;
    csv << ",max_cost_increase,pass\n";
    for (int i = 0; i < n_instances; ++i) {
        const TheoryInstance inst = make_theory_instance(instance_seed(seed, i));
        CglsConfig cfg = CglsConfig::gradient_defaults();
        cfg.k_max = k_list.back();
        // Run the full K iterations; an exactly stationary iterate still stops the run.
        cfg.delta = std::numeric_limits<double>::min();
        const CglsResult res = run_cgls(inst.y, inst.a, cfg);
        const auto& g = res.trace.grad_norms;
        std::vector<double> r;
        for (int k : k_list) {
            double best = kInf;
            for (int q = 1; q <= k && q < static_cast<int>(g.size()); ++q) best = std::min(best, g[q] * g[q]);
            // The run stopped early at a numerically stationary point.
            if (best < 1e-20 || static_cast<int>(g.size()) <= 1) best = 0.0;
            r.push_back(static_cast<double>(k) * best);
        }
        double max_increase = 0.0;
        const auto& costs = res.trace.costs;
        for (std::size_t q = 1; q < costs.size(); ++q)
            max_increase = std::max(max_increase, (costs[q] - costs[q - 1]) / std::max(1.0, std::abs(costs[q - 1])));
        bool ok = max_increase <= 1e-12;
        double worst_ratio = 0.0;
        for (std::size_t q = 1; q < r.size(); ++q) {
            if (r[q] > 1.5 * r[0]) ok = false;
            if (r[0] > 0.0) worst_ratio = std::max(worst_ratio, r[q] / r[0]);
        }
        rep.worst_margin = std::max(rep.worst_margin, worst_ratio);
        rep.pass_count += ok;
        csv << i << ',' << inst.a.cols() << ',' << inst.a.rows();
        for (double v : r) csv << ',' << fmt(v);
        csv << ',' << fmt(max_increase) << ',' << ok << '\n';
    }
    rep.passed = rep.pass_count == rep.instances;
    rep.csv = csv.str();
    return rep;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs two or more points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return fit;
}

TheoryReport check_thm2_linear(int n_instances, std::uint64_t seed) {
    TheoryReport rep;
    rep.check_name = "thm2";
    rep.instances = n_instances;
    rep.worst_margin = 1.0;
    std::ostringstream csv;
    csv << "instance,n,m,points,slope,r_squared,min_gap,status\n";
    int failed = 0;
    for (int i = 0; i < n_instances; ++i) {
        const TheoryInstance inst = make_theory_instance(instance_seed(seed, i));
        const CglsConfig cfg = tight_gradient_config(1e-12);
        const CglsResult ref = run_cgls(inst.y, inst.a, cfg);

        // Random direction in (u, z) space, scaled to radius 0.01.
        std::mt19937_64 rng(instance_seed(seed, i) ^ 0x5bd1e995ULL);
        std::normal_distribution<double> normal;
        const Index n = inst.a.cols();
        Vector dir(2 * n);
        for (Index q = 0; q < dir.size(); ++q) dir[q] = normal(rng);
        dir *= 0.01 / dir.norm();
        CglsStart start{ref.u + dir.head(n), ref.z + dir.tail(n)};
        if (start.z.minCoeff() <= 0.0) start.z = start.z.cwiseMax(0.5 * ref.z.minCoeff());

        CglsConfig restart = cfg;
        restart.delta = std::numeric_limits<double>::min();
        restart.k_max = 20000;
        const CglsResult run = run_cgls(inst.y, inst.a, restart, start);
        const auto& costs = run.trace.costs;
        const double f_star = *std::min_element(costs.begin(), costs.end());
        const double floor = 1e-12 * std::max(1.0, std::abs(f_star));
        std::vector<double> ks, logs;
        double min_gap = kInf;
        for (std::size_t k = 0; k < costs.size(); ++k) {
            const double gap = costs[k] - f_star;
            min_gap = std::min(min_gap, gap);
            if (gap <= floor) break;
            ks.push_back(static_cast<double>(k));
            logs.push_back(std::log(gap));
        }
        std::string status;
        LineFit fit;
        if (ks.size() < 5) {
            status = "inconclusive";
            ++rep.inconclusive;
        } else {
            fit = fit_line(ks, logs);
            const bool ok = fit.slope < 0.0 && fit.r_squared > 0.9 && min_gap >= 0.0;
            status = ok ? "pass" : "fail";
            if (ok) ++rep.pass_count;
            else ++failed;
            rep.worst_margin = std::min(rep.worst_margin, fit.r_squared);
        }
        csv << i << ',' << n << ',' << inst.a.rows() << ',' << ks.size() << ',' << fmt(fit.slope) << ','
            << fmt(fit.r_squared) << ',' << fmt(min_gap) << ',' << status << '\n';
    }
    const int budget = n_instances / 10;
    rep.passed = rep.inconclusive <= budget && failed + rep.inconclusive <= budget;
    rep.csv = csv.str();
    return rep;
}

TheoryReport check_prop1_scaling(int n_instances, std::uint64_t seed) {
    TheoryReport rep;
    rep.check_name = "prop1";
    rep.instances = n_instances;
    std::ostringstream csv;
    csv << "instance,n,m,scale,z_min,z_max,outside,pass,control_outside\n";
    const double b = std::numbers::e;
    auto outside = [&](const Vector& z) {
        return std::max({0.0, 1.0 - z.minCoeff(), z.maxCoeff() - b});
    };
    for (int i = 0; i < n_instances; ++i) {
        const TheoryInstance inst = make_theory_instance(instance_seed(seed, i));
        CglsConfig cfg = tight_gradient_config(1e-12);
        cfg.init_mrelu = {1.0, b};
        const double s = recommend_scale(inst.a, inst.y, cfg, b, 1.0, 64, instance_seed(seed, i) + 17);
        cfg.scale_s = s;
        const CglsResult res = run_cgls(inst.y, inst.a, cfg);
        const double out = outside(res.z);
        const bool ok = out <= 1e-6;
        rep.pass_count += ok;
        rep.worst_margin = std::max(rep.worst_margin, out);

        CglsConfig control = cfg;
        control.scale_s = 1e3 * s;
        const double control_out = outside(run_cgls(inst.y, inst.a, control).z);
        csv << i << ',' << inst.a.cols() << ',' << inst.a.rows() << ',' << fmt(s) << ',' << fmt(res.z.minCoeff())
            << ',' << fmt(res.z.maxCoeff()) << ',' << fmt(out) << ',' << ok << ',' << fmt(control_out) << '\n';
    }
    rep.passed = rep.pass_count == rep.instances;
    rep.csv = csv.str();
    return rep;
}

void write_report(TheoryReport& report, const std::filesystem::path& dir) {
    const auto path = dir / (report.check_name + ".csv");
    io::write_atomic(path, report.csv);
    report.artifacts_path = path.string();
}

} // namespace cginv
