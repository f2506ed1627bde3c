// kinlab command line: property batteries, the four limit sweeps, and the
// acceptance report. Exit codes: 0 pass, 1 fail, 2 incomplete or bad config.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kinlab/collision.hpp"
#include "kinlab/fluid.hpp"
#include "kinlab/harness.hpp"
#include "kinlab/kinetic.hpp"
#include "kinlab/maxwellian.hpp"

using namespace kinlab;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitIncomplete = 2;

std::vector<double> list_or(const Config& cfg, const std::string& key,
                            std::vector<double> fallback) {
    std::vector<double> v = cfg.get_list(key);
    return v.empty() ? fallback : v;
}

void check_line(const char* name, bool pass, const std::string& detail) {
    std::printf("%s  %-28s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
}

// ---------------------------------------------------------------------------
// shared sweep pieces
// ---------------------------------------------------------------------------

struct LimitGrids {
    SpatialGrid xg;
    VelocityGrid vg;
};

LimitGrids limit_grids(const Config& cfg, int nv_default) {
    LimitGrids g;
    g.xg = make_spatial_grid(cfg.get_int("grid.dim_x", 1), cfg.get_int("grid.n_x", 64));
    g.vg = make_velocity_grid(cfg.get_int("grid.n_v", nv_default),
                              cfg.get_double("grid.v_max", 6.0));
    return g;
}

KineticConfig kinetic_config(const Config& cfg, double eps) {
    KineticConfig kc;
    kc.eps = eps;
    kc.dt_factor = cfg.get_double("run.dt_factor", 0.5);
    kc.nu0 = cfg.get_double("run.nu0", kTwoPi);
    kc.local_rate = cfg.get_bool("run.local_rate", false);
    kc.gamma = cfg.get_double("run.gamma", 1.0);
    return kc;
}

double acoustic_sup_error(const LimitGrids& g, const Config& cfg, double eps, double delta,
                          const std::vector<double>& times, SweepTable& table) {
    const AcousticState ac0 = default_acoustic_data(g.xg);
    AcousticSolver acoustic(ac0);
    const Distribution F0 = maxwellian(perturbed_euler_data(ac0, delta), g.vg);
    const KineticResult res = run_kinetic(F0, kinetic_config(cfg, eps), times, true);
    double worst = 0.0;
    for (std::size_t s = 0; s < res.times.size(); ++s) {
        const Distribution Geps = extract_fluctuation(res.snapshots[s], delta);
        const Distribution G = limit_profile_G(acoustic.evaluate(res.times[s]), g.vg);
        Distribution diff = Geps;
        for (std::size_t i = 0; i < diff.f.size(); ++i) diff.f[i] -= G.f[i];
        const double e = dist_l2(diff);
        table.add_success(eps, delta, res.times[s], "acoustic_defect", "2", e);
        worst = std::max(worst, e);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// verify-ops
// ---------------------------------------------------------------------------

std::vector<double> bimodal_slab(const VelocityGrid& vg) {
    std::vector<double> a(vg.total()), b(vg.total());
    maxwellian_slab(vg, 0.7, {0.3, 0.0, -0.2}, 0.9, a.data());
    maxwellian_slab(vg, 0.5, {-0.4, 0.2, 0.0}, 1.2, b.data());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

std::vector<double> random_smooth_field(const VelocityGrid& vg, std::mt19937& rng) {
    std::uniform_real_distribution<double> uc(-2.0, 2.0), us(1.2, 2.0), uw(0.2, 1.0);
    std::vector<double> g(vg.total(), 0.0);
    for (int comp = 0; comp < 5; ++comp) {
        const double c0 = uc(rng), c1 = uc(rng), c2 = uc(rng);
        const double s = us(rng);
        const double w = (comp % 2 == 1) ? -uw(rng) : uw(rng);
        std::size_t idx = 0;
        for (int i = 0; i < vg.n; ++i)
            for (int j = 0; j < vg.n; ++j)
                for (int k = 0; k < vg.n; ++k, ++idx) {
                    const double d0 = vg.node(i) - c0, d1 = vg.node(j) - c1, d2 = vg.node(k) - c2;
                    g[idx] += w * std::exp(-(d0 * d0 + d1 * d1 + d2 * d2) / (2.0 * s * s));
                }
    }
    double gmax = 0.0;
    for (double x : g) gmax = std::max(gmax, std::abs(x));
    for (double& x : g) x /= gmax;
    return g;
}

int cmd_verify_ops(const Config& cfg, const std::string& out_csv, bool deep) {
    SweepTable table;
    bool all = true;
    char buf[256];
    auto record = [&](const char* name, bool pass, const std::string& detail) {
        check_line(name, pass, detail);
        all = all && pass;
    };

    {
        KernelConfig kc;
        double wsum = 0.0;
        for (const auto& nd : collision_detail::hemisphere_nodes(kc)) wsum += nd.weight;
        const double err = std::abs(wsum - 4.0 * kPi);
        record("sphere quadrature", err <= 1e-12, (std::snprintf(buf, sizeof buf, "weight defect %.2e", err), buf));
    }

    const VelocityGrid vg12 = make_velocity_grid(12, 6.0);
    {
        KernelConfig kc;
        const std::vector<double> mu = global_maxwellian(vg12);
        std::vector<double> q(vg12.total());
        collide_Q(vg12, kc, mu.data(), mu.data(), q.data());
        const double sup = norm_linf(q);
        const Moments5 mom = slab_moments(vg12, q.data());
        const double m1 = std::max({std::abs(mom.m1[0]), std::abs(mom.m1[1]), std::abs(mom.m1[2])});
        table.add_success(0, 0, 0, "q_sup_nv12", "inf", sup);
        const bool ok = sup <= 9e-2 && std::abs(mom.m0) <= 2.5 && m1 <= 0.5 && std::abs(mom.m2) <= 30.0;
        std::snprintf(buf, sizeof buf, "sup %.3e, moment residuals %.2f / %.2f / %.1f", sup,
                      mom.m0, m1, mom.m2);
        record("collision of equilibrium", ok, buf);
    }

    {
        KernelConfig kc;
        const DenseL dense(vg12, kc, 1.0, {0.0, 0.0, 0.0}, 1.0);
        const Eigen::MatrixXd& A = dense.matrix();
        const double asym = (A - A.transpose()).cwiseAbs().maxCoeff() / A.cwiseAbs().maxCoeff();
        const CoercivityReport rep = measure_coercivity(vg12, kc, 1.0, {0.0, 0.0, 0.0}, 1.0);
        table.add_success(0, 0, 0, "l_selfadj", "rel", asym);
        table.add_success(0, 0, 0, "null_dim_nv12", "count", rep.null_dim);
        table.add_success(0, 0, 0, "c0_nv12", "rayleigh", rep.c0);
        const bool ok = asym <= 1e-6 && rep.null_dim == 5 && rep.c0 > 0.25 && rep.c0 < 0.45;
        std::snprintf(buf, sizeof buf, "self-adjointness %.1e, null dim %d, c0 %.4f", asym,
                      rep.null_dim, rep.c0);
        record("dense symmetric form", ok, buf);
    }

    {
        const std::vector<double> f = bimodal_slab(vg12);
        const MatchedMaxwellian m = match_maxwellian(vg12, slab_moments(vg12, f.data()));
        const bool ok = m.residual <= 1e-12 && m.iterations <= 12;
        std::snprintf(buf, sizeof buf, "residual %.1e in %d iterations", m.residual, m.iterations);
        record("moment matching", ok, buf);
    }

    {
        std::vector<double> mu(vg12.total());
        maxwellian_slab(vg12, 1.1, {0.2, -0.1, 0.0}, 0.9, mu.data());
        const std::vector<double> r = bgk_apply(vg12, mu, kTwoPi);
        const double rel = norm_linf(r) / norm_linf(mu);
        record("relaxation fixed point", rel <= 1e-10,
               (std::snprintf(buf, sizeof buf, "relative defect %.1e", rel), buf));
    }

    {
        const SpatialGrid xg = make_spatial_grid(1, 64);
        AcousticState ac = AcousticState::zeros(xg);
        for (int j = 0; j < xg.n; ++j) {
            const double x = xg.node(j);
            ac.sigma[j] = std::cos(x) - 0.3 * std::sin(2.0 * x);
            ac.u[0][j] = std::sin(x) + 0.2 * std::cos(3.0 * x);
            ac.u[1][j] = 0.1 * std::sin(2.0 * x);
            ac.theta[j] = 0.5 * std::cos(x) + 0.1 * std::cos(2.0 * x);
        }
        AcousticSolver solver(ac);
        double worst = 0.0;
        for (int s = 0; s <= 3; ++s) {
            const double e0 = acoustic_energy(ac, s);
            for (int k = 1; k <= 20; ++k) {
                const double e = acoustic_energy(solver.evaluate(0.5 * k), s);
                worst = std::max(worst, std::abs(e * e - e0 * e0) / (e0 * e0));
            }
        }
        table.add_success(0, 0, 10.0, "energy_drift", "hs03", worst);
        record("acoustic energy conservation", worst <= 1e-12,
               (std::snprintf(buf, sizeof buf, "max relative drift %.2e", worst), buf));
    }

    {
        const SpatialGrid xg = make_spatial_grid(1, 32);
        FluidState rest = FluidState::zeros(xg);
        for (auto& r : rest.rho) r = 1.0;
        for (auto& t : rest.T) t = 1.0;
        const EulerResult er = solve_euler(rest, {0.05}, EulerConfig{});
        double dev = 0.0;
        const FluidState& s = er.samples.front();
        for (int j = 0; j < xg.n; ++j) {
            dev = std::max(dev, std::abs(s.rho[j] - 1.0));
            for (int d = 0; d < 3; ++d) dev = std::max(dev, std::abs(s.u[d][j]));
            dev = std::max(dev, std::abs(s.T[j] - 1.0));
        }
        record("constant state persistence", dev <= 1e-12,
               (std::snprintf(buf, sizeof buf, "max deviation %.2e", dev), buf));
    }

    {
        const SpatialGrid xg = make_spatial_grid(1, 8);
        const VelocityGrid vg16 = make_velocity_grid(16, 6.0);
        FluidState s = FluidState::zeros(xg);
        for (int j = 0; j < xg.n; ++j) {
            const double x = xg.node(j);
            s.rho[j] = 1.0 + 0.2 * std::cos(x);
            s.u[0][j] = 0.1 * std::sin(x);
            s.T[j] = 1.0 + 0.1 * std::sin(2.0 * x);
        }
        const double res_e = compat_residual(streaming_source(s, euler_time_derivative(s), vg16), s);
        const double res_f = compat_residual(streaming_source(s, FluidState::zeros(xg), vg16), s);
        table.add_success(0, 0, 0, "compat_euler", "rel", res_e);
        table.add_success(0, 0, 0, "compat_frozen", "rel", res_f);
        const bool ok = res_e <= 5e-3 && res_f >= 0.1;
        std::snprintf(buf, sizeof buf, "projected residual %.2e consistent, %.3f frozen", res_e, res_f);
        record("streaming compatibility", ok, buf);
    }

    if (deep) {
        {
            KernelConfig kc2;
            kc2.n_polar = 8;
            kc2.n_azimuth = 16;
            const VelocityGrid vg24 = make_velocity_grid(24, 6.0);
            const std::vector<double> mu = global_maxwellian(vg24);
            std::vector<double> q(vg24.total());
            collide_Q(vg24, kc2, mu.data(), mu.data(), q.data());
            const double sup = norm_linf(q);
            table.add_success(0, 0, 0, "q_sup_nv24", "inf", sup);
            const auto coarse = table.series("q_sup_nv12", "inf");
            const double sup12 = coarse.front().second;
            // certified bound tightens 3x under (n_v, n_sphere) doubling
            record("collision refinement", sup <= 3e-2,
                   (std::snprintf(buf, sizeof buf, "sup %.3e -> %.3e (bound 9e-2 -> 3e-2)", sup12,
                                  sup),
                    buf));
        }
        {
            KernelConfig kc;
            const VelocityGrid vg16 = make_velocity_grid(16, 6.0);
            const CoercivityReport rep = measure_coercivity(vg16, kc, 1.0, {0.0, 0.0, 0.0}, 1.0);
            table.add_success(0, 0, 0, "null_dim_nv16", "count", rep.null_dim);
            table.add_success(0, 0, 0, "c0_nv16", "rayleigh", rep.c0);
            const double c12 = table.series("c0_nv12", "rayleigh").front().second;
            const double drift = std::abs(rep.c0 - c12) / std::max(rep.c0, c12);
            record("coercivity stability", rep.null_dim == 5 && rep.c0 > 0.0 && drift <= 0.20,
                   (std::snprintf(buf, sizeof buf, "c0 %.4f vs %.4f (drift %.1f%%), null dim %d",
                                  c12, rep.c0, 100.0 * drift, rep.null_dim),
                    buf));
        }
        {
            const VelocityGrid vgk = make_velocity_grid(32, 4.0);
            const double T = 4.0;
            std::mt19937 rng(20260822);
            std::vector<std::vector<double>> draws;
            for (int r = 0; r < 4; ++r) draws.push_back(random_smooth_field(vgk, rng));
            for (double gamma : {1.0, 0.0}) {
                KernelConfig kc;
                kc.gamma = gamma;
                const double nusup =
                    norm_linf(collision_frequency(vgk, kc, 1.0, {0.0, 0.0, 0.0}, T));
                std::vector<double> xs, ys;
                for (double m : {0.25, 0.5, 1.0}) {
                    const KOperator K(vgk, kc, 1.0, {0.0, 0.0, 0.0}, T, T, m,
                                      KOperator::Mode::compact);
                    double best = 0.0;
                    for (const auto& g : draws) best = std::max(best, norm_linf(K.apply(g)));
                    xs.push_back(m);
                    ys.push_back(best / nusup);
                }
                const RateFit fit = fit_rate(xs, ys);
                const std::string q = gamma == 1.0 ? "km_slope_gamma1" : "km_slope_gamma0";
                table.add_success(0, 0, 0, q, "fit", fit.slope);
                record(q.c_str(), std::abs(fit.slope - (3.0 + gamma)) <= 0.3,
                       (std::snprintf(buf, sizeof buf, "slope %.3f (want %.1f +- 0.3)", fit.slope,
                                      3.0 + gamma),
                        buf));
            }
        }
    }

    (void)cfg;
    table.write_csv(out_csv);
    std::printf("%s -> %s\n", all ? "all checks passed" : "some checks FAILED", out_csv.c_str());
    return all ? kExitPass : kExitFail;
}

// ---------------------------------------------------------------------------
// expand-check / linearize-check
// ---------------------------------------------------------------------------

struct LadderRuns {
    std::vector<double> deltas;
    double t = 1.0;
    AcousticState acoustic_at_t;
    std::vector<FluidState> euler_at_t;
    std::vector<std::string> failures;  // per delta, empty string = ok
};

LadderRuns run_delta_ladder(const Config& cfg, const SpatialGrid& xg, const char* section) {
    LadderRuns lr;
    lr.deltas = list_or(cfg, std::string(section) + ".deltas", {0.2, 0.1, 0.05, 0.025});
    lr.t = cfg.get_double(std::string(section) + ".t", 1.0);
    const AcousticState ac0 = default_acoustic_data(xg);
    lr.acoustic_at_t = AcousticSolver(ac0).evaluate(lr.t);
    EulerConfig ec;
    ec.dt = cfg.get_double(std::string(section) + ".euler_dt", 1e-3);
    for (double d : lr.deltas) {
        const EulerResult er = solve_euler(perturbed_euler_data(ac0, d), {lr.t}, ec);
        if (er.blown_up || er.samples.empty()) {
            lr.euler_at_t.push_back(FluidState::zeros(xg));
            lr.failures.push_back("blowup at t=" + std::to_string(er.t_reached));
        } else {
            lr.euler_at_t.push_back(er.samples.front());
            lr.failures.push_back("");
        }
    }
    return lr;
}

int cmd_expand_check(const Config& cfg, const std::string& out_csv) {
    const SpatialGrid xg = make_spatial_grid(cfg.get_int("grid.dim_x", 1),
                                             cfg.get_int("grid.n_x", 64));
    const VelocityGrid vg = make_velocity_grid(cfg.get_int("grid.n_v", 24),
                                               cfg.get_double("grid.v_max", 6.0));
    const LadderRuns lr = run_delta_ladder(cfg, xg, "expand");

    FluidState rest = FluidState::zeros(xg);
    for (auto& r : rest.rho) r = 1.0;
    for (auto& t : rest.T) t = 1.0;
    const Distribution mu0 = maxwellian(rest, vg);
    const Distribution G = limit_profile_G(lr.acoustic_at_t, vg);

    SweepTable table;
    for (std::size_t i = 0; i < lr.deltas.size(); ++i) {
        if (!lr.failures[i].empty()) {
            table.add_failure(0, lr.deltas[i], lr.t, "expansion_defect", "inf", lr.failures[i]);
            table.add_failure(0, lr.deltas[i], lr.t, "expansion_defect", "2", lr.failures[i]);
            continue;
        }
        Distribution defect = maxwellian(lr.euler_at_t[i], vg);
        for (std::size_t k = 0; k < defect.f.size(); ++k)
            defect.f[k] -= mu0.f[k] + lr.deltas[i] * G.f[k];
        table.add_success(0, lr.deltas[i], lr.t, "expansion_defect", "inf", dist_linf(defect));
        table.add_success(0, lr.deltas[i], lr.t, "expansion_defect", "2", dist_l2(defect));
    }
    table.write_csv(out_csv);

    const RateFit fi = fit_rate(table.series("expansion_defect", "inf"));
    const RateFit f2 = fit_rate(table.series("expansion_defect", "2"));
    const bool pass = std::abs(fi.slope - 2.0) <= 0.1 && fi.r2 >= 0.999 &&
                      std::abs(f2.slope - 2.0) <= 0.1 && f2.r2 >= 0.999;
    std::printf("%s  expansion defect slopes %.3f (sup) / %.3f (L2), want 2.0 +- 0.1 -> %s\n",
                pass ? "PASS" : "FAIL", fi.slope, f2.slope, out_csv.c_str());
    return pass ? kExitPass : kExitFail;
}

int cmd_linearize_check(const Config& cfg, const std::string& out_csv) {
    const SpatialGrid xg = make_spatial_grid(cfg.get_int("grid.dim_x", 1),
                                             cfg.get_int("grid.n_x", 64));
    const LadderRuns lr = run_delta_ladder(cfg, xg, "linearize");

    SweepTable table;
    for (std::size_t i = 0; i < lr.deltas.size(); ++i) {
        if (!lr.failures[i].empty()) {
            table.add_failure(0, lr.deltas[i], lr.t, "linearization_defect", "hs2", lr.failures[i]);
            continue;
        }
        const DifferenceState d =
            difference_fields(lr.euler_at_t[i], lr.acoustic_at_t, lr.deltas[i]);
        double e2 = 0.0;
        const double ns = norm_hs(d.grid, d.sigma_d, 2);
        e2 += ns * ns;
        for (int c = 0; c < 3; ++c) {
            const double nu = norm_hs(d.grid, d.u_d[c], 2);
            e2 += nu * nu;
        }
        const double nt = norm_hs(d.grid, d.theta_d, 2);
        e2 += nt * nt;
        table.add_success(0, lr.deltas[i], lr.t, "linearization_defect", "hs2",
                          lr.deltas[i] * lr.deltas[i] * std::sqrt(e2));
    }
    table.write_csv(out_csv);

    const RateFit fit = fit_rate(table.series("linearization_defect", "hs2"));
    const bool pass = std::abs(fit.slope - 2.0) <= 0.15;
    std::printf("%s  linearization defect slope %.3f (want 2.0 +- 0.15), prefactor %.2f -> %s\n",
                pass ? "PASS" : "FAIL", fit.slope, fit.intercept, out_csv.c_str());
    return pass ? kExitPass : kExitFail;
}

// ---------------------------------------------------------------------------
// euler-limit / acoustic-limit
// ---------------------------------------------------------------------------

int cmd_euler_limit(const Config& cfg, const std::string& out_csv) {
    const LimitGrids g = limit_grids(cfg, 24);
    const std::vector<double> epss = list_or(cfg, "euler.eps", {4e-3, 2e-3, 1e-3, 5e-4});
    const double delta = cfg.get_double("euler.delta", 0.1);
    const double t = cfg.get_double("euler.t", 1.0);

    const AcousticState ac0 = default_acoustic_data(g.xg);
    const FluidState s0 = perturbed_euler_data(ac0, delta);
    EulerConfig ec;
    ec.dt = cfg.get_double("euler.euler_dt", 2e-3);
    const EulerResult er = solve_euler(s0, {t}, ec);
    SweepTable table;
    if (er.blown_up || er.samples.empty()) {
        for (double eps : epss)
            table.add_failure(eps, delta, t, "euler_defect", "2", "euler reference blowup");
        table.write_csv(out_csv);
        std::printf("FAIL  Euler reference run stopped at t %.3f -> %s\n", er.t_reached,
                    out_csv.c_str());
        return kExitFail;
    }
    const Distribution mu_t = maxwellian(er.samples.front(), g.vg);
    const Distribution F0 = maxwellian(s0, g.vg);
    for (double eps : epss) {
        const KineticResult res = run_kinetic(F0, kinetic_config(cfg, eps), {t}, true);
        Distribution diff = res.snapshots.front();
        for (std::size_t i = 0; i < diff.f.size(); ++i) diff.f[i] -= mu_t.f[i];
        table.add_success(eps, delta, t, "euler_defect", "2", dist_l2(diff));
    }
    table.write_csv(out_csv);

    const RateFit fit = fit_rate(table.series("euler_defect", "2", 'e'));
    const bool pass = std::abs(fit.slope - 1.0) <= 0.15;
    std::printf("%s  kinetic-to-Euler defect slope %.3f vs eps (want 1.0 +- 0.15) -> %s\n",
                pass ? "PASS" : "FAIL", fit.slope, out_csv.c_str());
    return pass ? kExitPass : kExitFail;
}

int cmd_acoustic_limit(const Config& cfg, const std::string& out_csv) {
    const LimitGrids g = limit_grids(cfg, 16);
    const std::vector<double> times = list_or(cfg, "acoustic.times", {0.25, 0.5, 0.75, 1.0});
    const std::string mode = cfg.get_string("acoustic.mode", "coupled");
    SweepTable table;

    if (mode == "coupled") {
        const std::vector<double> epss = list_or(cfg, "acoustic.eps", {1e-2, 2.5e-3, 6.25e-4});
        const double m = cfg.get_double("acoustic.m", 0.5);
        if (!(m > 0.0 && m < 1.0)) throw std::runtime_error("config: acoustic.m must lie in (0, 1)");
        std::vector<double> sups;
        for (double eps : epss)
            sups.push_back(acoustic_sup_error(g, cfg, eps, std::pow(eps, m), times, table));
        table.write_csv(out_csv);
        const RateFit fit = fit_rate(epss, sups);
        const bool pass = std::abs(fit.slope - 0.5) <= 0.1;
        std::printf("%s  coupled regime: sup_t defect slope %.3f vs eps (want 0.5 +- 0.1) -> %s\n",
                    pass ? "PASS" : "FAIL", fit.slope, out_csv.c_str());
        return pass ? kExitPass : kExitFail;
    }
    if (mode != "fixed") throw std::runtime_error("config: acoustic.mode must be coupled or fixed");

    const double eps = cfg.get_double("acoustic.eps_fixed", 1e-3);
    const std::vector<double> deltas = list_or(cfg, "acoustic.deltas", {0.4, 0.2, 0.1, 0.05});
    std::vector<double> sups;
    for (double d : deltas) sups.push_back(acoustic_sup_error(g, cfg, eps, d, times, table));
    table.write_csv(out_csv);
    std::size_t imin = 0;
    for (std::size_t i = 1; i < sups.size(); ++i)
        if (sups[i] < sups[imin]) imin = i;
    const bool pass = imin > 0 && imin + 1 < sups.size() && sups.back() > sups[imin];
    std::printf("%s  fixed eps %.1e: %s across the delta ladder -> %s\n", pass ? "PASS" : "FAIL",
                eps,
                pass ? "defect turns upward (floor detected)" : "defect decreases monotonically",
                out_csv.c_str());
    return pass ? kExitPass : kExitFail;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct CriterionState {
    Verdict verdict;
    bool complete = false;
};

CriterionState incomplete(const std::string& name, const std::string& missing) {
    CriterionState c;
    c.verdict.name = name;
    c.verdict.pass = false;
    c.verdict.detail = "incomplete: missing " + missing;
    return c;
}

double sup_value(const std::vector<std::pair<double, double>>& pts) {
    double s = 0.0;
    for (const auto& p : pts) s = std::max(s, p.second);
    return s;
}

int cmd_report(const std::vector<std::string>& csvs, const std::string& json_path) {
    SweepTable all;
    for (const auto& path : csvs) {
        const SweepTable tab = SweepTable::read_csv(path);
        for (const auto& r : tab.rows()) all.add(r);
    }
    if (all.rows().empty()) {
        std::fprintf(stderr, "report: no records in the given tables\n");
        return kExitIncomplete;
    }

    std::vector<CriterionState> crits;
    char buf[512];

    // 1: energy identity
    {
        const auto pts = all.series("energy_drift", "hs03", 't');
        if (pts.empty()) {
            crits.push_back(incomplete("acoustic energy identity", "energy_drift"));
        } else {
            CriterionState c;
            c.complete = true;
            c.verdict.name = "acoustic energy identity";
            const double worst = sup_value(pts);
            c.verdict.pass = worst <= 1e-12;
            std::snprintf(buf, sizeof buf, "max relative drift %.2e (limit 1e-12)", worst);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
    }

    // 2: Maxwellian expansion
    {
        const auto pi = all.series("expansion_defect", "inf");
        const auto p2 = all.series("expansion_defect", "2");
        if (pi.size() < 3 || p2.size() < 3) {
            crits.push_back(incomplete("Maxwellian expansion rate", "expansion_defect ladder"));
        } else {
            const RateFit fi = fit_rate(pi), f2 = fit_rate(p2);
            CriterionState c;
            c.complete = true;
            c.verdict.name = "Maxwellian expansion rate";
            c.verdict.pass = std::abs(fi.slope - 2.0) <= 0.1 && fi.r2 >= 0.999 &&
                             std::abs(f2.slope - 2.0) <= 0.1 && f2.r2 >= 0.999;
            std::snprintf(buf, sizeof buf, "slopes %.3f (sup) / %.3f (L2), want 2.0 +- 0.1",
                          fi.slope, f2.slope);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
    }

    // 3: Euler linearization
    {
        const auto pts = all.series("linearization_defect", "hs2");
        if (pts.size() < 3) {
            crits.push_back(incomplete("Euler linearization rate", "linearization_defect ladder"));
        } else {
            const RateFit fit = fit_rate(pts);
            CriterionState c;
            c.complete = true;
            c.verdict.name = "Euler linearization rate";
            c.verdict.pass = std::abs(fit.slope - 2.0) <= 0.15;
            std::snprintf(buf, sizeof buf, "slope %.3f (want 2.0 +- 0.15), prefactor %.2f",
                          fit.slope, fit.intercept);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
    }

    // 4: collision structure
    {
        const auto q12 = all.series("q_sup_nv12", "inf");
        const auto q24 = all.series("q_sup_nv24", "inf");
        const auto sa = all.series("l_selfadj", "rel");
        const auto n12 = all.series("null_dim_nv12", "count");
        const auto n16 = all.series("null_dim_nv16", "count");
        const auto c12 = all.series("c0_nv12", "rayleigh");
        const auto c16 = all.series("c0_nv16", "rayleigh");
        if (q12.empty() || q24.empty() || sa.empty() || n12.empty() || n16.empty() ||
            c12.empty() || c16.empty()) {
            crits.push_back(incomplete("collision operator structure",
                                       "verify-ops --deep records"));
        } else {
            CriterionState c;
            c.complete = true;
            c.verdict.name = "collision operator structure";
            const double s12 = q12.front().second, s24 = q24.front().second;
            const double drift = std::abs(c12.front().second - c16.front().second) /
                                 std::max(c12.front().second, c16.front().second);
            c.verdict.pass = s12 <= 9e-2 && s24 <= 3e-2 && sa.front().second <= 1e-6 &&
                             n12.front().second == 5 && n16.front().second == 5 &&
                             c12.front().second > 0.0 && drift <= 0.20;
            std::snprintf(buf, sizeof buf,
                          "|Q| %.3e <= 9e-2 -> %.3e <= 3e-2, self-adjointness %.1e, c0 drift %.1f%%",
                          s12, s24, sa.front().second, 100.0 * drift);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
    }

    // 5: cutoff scaling
    {
        const auto k1 = all.series("km_slope_gamma1", "fit");
        const auto k0 = all.series("km_slope_gamma0", "fit");
        if (k1.empty() || k0.empty()) {
            crits.push_back(incomplete("cutoff operator scaling", "km_slope records"));
        } else {
            CriterionState c;
            c.complete = true;
            c.verdict.name = "cutoff operator scaling";
            c.verdict.pass = std::abs(k1.front().second - 4.0) <= 0.3 &&
                             std::abs(k0.front().second - 3.0) <= 0.3;
            std::snprintf(buf, sizeof buf, "slopes %.3f / %.3f (want 4.0 / 3.0 +- 0.3)",
                          k1.front().second, k0.front().second);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
    }

    // 6: Euler limit
    {
        const auto pts = all.series("euler_defect", "2", 'e');
        if (pts.size() < 3) {
            crits.push_back(incomplete("Euler limit rate", "euler_defect ladder"));
        } else {
            const RateFit fit = fit_rate(pts);
            CriterionState c;
            c.complete = true;
            c.verdict.name = "Euler limit rate";
            c.verdict.pass = std::abs(fit.slope - 1.0) <= 0.15;
            std::snprintf(buf, sizeof buf, "slope %.3f vs eps (want 1.0 +- 0.15), prefactor %.3g",
                          fit.slope, fit.intercept);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
    }

    // 7a/7b: acoustic limit, split rows by the coupling relation
    {
        std::map<double, double> coupled, fixed_eps;
        double fixed_value = 0.0;
        bool have_fixed = false;
        for (const auto& r : all.rows()) {
            if (r.quantity != "acoustic_defect" || r.status != "success") continue;
            if (std::abs(r.delta * r.delta / r.epsilon - 1.0) <= 1e-9) {
                auto& s = coupled[r.epsilon];
                s = std::max(s, r.value);
            } else {
                if (!have_fixed) {
                    fixed_value = r.epsilon;
                    have_fixed = true;
                }
                if (r.epsilon == fixed_value) {
                    auto& s = fixed_eps[r.delta];
                    s = std::max(s, r.value);
                }
            }
        }
        if (coupled.size() < 3) {
            crits.push_back(incomplete("acoustic limit, coupled rate", "coupled sweep"));
        } else {
            std::vector<double> xs, ys;
            for (const auto& kv : coupled) {
                xs.push_back(kv.first);
                ys.push_back(kv.second);
            }
            const RateFit fit = fit_rate(xs, ys);
            CriterionState c;
            c.complete = true;
            c.verdict.name = "acoustic limit, coupled rate";
            c.verdict.pass = std::abs(fit.slope - 0.5) <= 0.1;
            std::snprintf(buf, sizeof buf,
                          "sup_t defect slope %.3f vs eps (want 0.5 +- 0.1), prefactor %.3g",
                          fit.slope, fit.intercept);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
        if (fixed_eps.size() < 4) {
            crits.push_back(incomplete("acoustic limit, eps/delta floor", "fixed-eps sweep"));
        } else {
            // map is ascending in delta; the ladder logic wants descending
            std::vector<double> sups;
            for (auto it = fixed_eps.rbegin(); it != fixed_eps.rend(); ++it)
                sups.push_back(it->second);
            std::size_t imin = 0;
            for (std::size_t i = 1; i < sups.size(); ++i)
                if (sups[i] < sups[imin]) imin = i;
            CriterionState c;
            c.complete = true;
            c.verdict.name = "acoustic limit, eps/delta floor";
            c.verdict.pass = imin > 0 && imin + 1 < sups.size() && sups.back() > sups[imin];
            c.verdict.detail = c.verdict.pass
                                   ? "defect turns upward at small delta (floor detected)"
                                   : "defect decreases monotonically across the delta ladder";
            crits.push_back(std::move(c));
        }
    }

    // 8: Hilbert solvability
    {
        const auto ce = all.series("compat_euler", "rel");
        const auto cf = all.series("compat_frozen", "rel");
        if (ce.empty() || cf.empty()) {
            crits.push_back(incomplete("Hilbert solvability", "compat records"));
        } else {
            CriterionState c;
            c.complete = true;
            c.verdict.name = "Hilbert solvability";
            c.verdict.pass = ce.front().second <= 5e-3 && cf.front().second >= 0.1;
            std::snprintf(buf, sizeof buf, "projected residual %.2e / %.3f (limits 5e-3 / 0.1)",
                          ce.front().second, cf.front().second);
            c.verdict.detail = buf;
            crits.push_back(std::move(c));
        }
    }

    Report rep;
    bool any_incomplete = false;
    for (auto& c : crits) {
        std::printf("%s  %-32s | %s\n",
                    c.complete ? (c.verdict.pass ? "PASS" : "FAIL") : "----",
                    c.verdict.name.c_str(), c.verdict.detail.c_str());
        any_incomplete = any_incomplete || !c.complete;
        rep.add(std::move(c.verdict));
    }
    if (!json_path.empty()) rep.write_json(json_path);
    if (any_incomplete) return kExitIncomplete;
    return rep.all_pass() ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic kinetic-limit laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_csv, json_path;
    bool deep = false;
    std::vector<std::string> report_inputs;

    auto* vops = app.add_subcommand("verify-ops", "operator property battery");
    vops->add_option("-c,--config", config_path, "config file");
    vops->add_option("-o,--output", out_csv, "output CSV")->default_str("verify_ops.csv");
    vops->add_flag("--deep", deep, "include the slow resolution studies");

    auto* expand = app.add_subcommand("expand-check",
                                      "Maxwellian family vs linear profile, delta ladder");
    expand->add_option("-c,--config", config_path, "config file");
    expand->add_option("-o,--output", out_csv, "output CSV")->default_str("expand.csv");

    auto* lin = app.add_subcommand("linearize-check",
                                   "Euler vs acoustic difference fields, delta ladder");
    lin->add_option("-c,--config", config_path, "config file");
    lin->add_option("-o,--output", out_csv, "output CSV")->default_str("linearize.csv");

    auto* eul = app.add_subcommand("euler-limit", "kinetic relaxation toward the Euler Maxwellian");
    eul->add_option("-c,--config", config_path, "config file");
    eul->add_option("-o,--output", out_csv, "output CSV")->default_str("euler_limit.csv");

    auto* aco = app.add_subcommand("acoustic-limit", "fluctuation vs acoustic profile sweep");
    aco->add_option("-c,--config", config_path, "config file");
    aco->add_option("-o,--output", out_csv, "output CSV")->default_str("acoustic_limit.csv");

    auto* rpt = app.add_subcommand("report", "aggregate sweep tables into the acceptance verdict");
    rpt->add_option("tables", report_inputs, "input CSV files")->expected(-1);
    rpt->add_option("--json", json_path, "write the verdict report to this JSON file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitIncomplete;
    }

    try {
        Config cfg;
        if (!config_path.empty()) cfg = Config::parse_file(config_path);
        if (out_csv.empty()) {
            if (vops->parsed()) out_csv = "verify_ops.csv";
            else if (expand->parsed()) out_csv = "expand.csv";
            else if (lin->parsed()) out_csv = "linearize.csv";
            else if (eul->parsed()) out_csv = "euler_limit.csv";
            else if (aco->parsed()) out_csv = "acoustic_limit.csv";
        }
        if (vops->parsed()) return cmd_verify_ops(cfg, out_csv, deep);
        if (expand->parsed()) return cmd_expand_check(cfg, out_csv);
        if (lin->parsed()) return cmd_linearize_check(cfg, out_csv);
        if (eul->parsed()) return cmd_euler_limit(cfg, out_csv);
        if (aco->parsed()) return cmd_acoustic_limit(cfg, out_csv);
        if (rpt->parsed()) {
            if (report_inputs.empty()) {
                std::fprintf(stderr, "report: no input tables given\n");
                return kExitIncomplete;
            }
            return cmd_report(report_inputs, json_path);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIncomplete;
    }
    return kExitIncomplete;
}
