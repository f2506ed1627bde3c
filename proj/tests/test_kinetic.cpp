#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "kinlab/kinetic.hpp"

using namespace kinlab;

namespace {

// local Maxwellian slab at every spatial node of a 1-d grid
Distribution modulated_maxwellian(const SpatialGrid& xg, const VelocityGrid& vg) {
    Distribution F = Distribution::zeros(xg, vg);
    std::vector<double> m(vg.total());
    for (int ix = 0; ix < xg.total(); ++ix) {
        const double x = xg.node(ix);
        maxwellian_slab(vg, 1.0 + 0.2 * std::cos(x), {0.1 * std::sin(x), 0.0, 0.0},
                        1.0 + 0.1 * std::sin(2.0 * x), m.data());
        for (int i = 0; i < vg.total(); ++i) F.f[(std::size_t)ix * vg.total() + i] = m[i];
    }
    return F;
}

FluidState wave_data(const SpatialGrid& xg, double delta) {
    AcousticState ac = AcousticState::zeros(xg);
    for (int ix = 0; ix < xg.total(); ++ix) {
        const double x = xg.node(ix);
        ac.sigma[ix] = std::cos(x);
        ac.u[0][ix] = 0.4 * std::sin(x);
        ac.theta[ix] = 0.2 * std::cos(x);
    }
    return perturbed_euler_data(ac, delta);
}

}  // namespace

TEST_CASE("scaling configuration enforces the weight threshold") {
    const ScalingConfig sc = make_scaling(1e-3, 0.1);
    CHECK(sc.beta == 3.5);  // (9 - 2 gamma)/2 at gamma = 1
    CHECK(make_scaling(1e-3, 0.1, 0.0).beta == 4.5);
    CHECK(make_scaling(1e-3, 0.1, 1.0, 5.0).beta == 5.0);
    CHECK_THROWS_WITH(make_scaling(1e-3, 0.1, 1.0, 3.0),
                      Catch::Matchers::ContainsSubstring("beta must be at least"));
    CHECK_THROWS_AS(make_scaling(0.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(make_scaling(1e-3, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_scaling(1e-3, 0.1, 2.0), std::invalid_argument);
}

TEST_CASE("free streaming is spectrally exact in one dimension") {
    const SpatialGrid xg = make_spatial_grid(1, 32);
    const VelocityGrid vg = make_velocity_grid(8, 6.0);
    std::vector<double> mu0(vg.total());
    maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, 1.0, mu0.data());
    Distribution F = Distribution::zeros(xg, vg);
    for (int ix = 0; ix < xg.total(); ++ix)
        for (int i = 0; i < vg.total(); ++i)
            F.f[(std::size_t)ix * vg.total() + i] =
                (1.0 + 0.5 * std::sin(xg.node(ix))) * mu0[i];

    KineticConfig cfg;
    cfg.eps = 1.0;
    cfg.dt_factor = 0.05;
    cfg.nu0 = 0.0;  // relaxation rate zero: collisions act as the identity
    const KineticResult res = run_kinetic(F, cfg, {1.0}, true);
    REQUIRE(res.snapshots.size() == 1);
    CHECK(res.steps == 20);

    const Distribution& G = res.snapshots[0];
    const int n = vg.n;
    double sup = 0.0;
    for (int ix = 0; ix < xg.total(); ++ix) {
        const double x = xg.node(ix);
        int iv = 0;
        for (int i0 = 0; i0 < n; ++i0) {
            const double amp = 1.0 + 0.5 * std::sin(x - vg.node(i0));
            for (int i1 = 0; i1 < n; ++i1)
                for (int i2 = 0; i2 < n; ++i2, ++iv)
                    sup = std::max(sup, std::abs(G.f[(std::size_t)ix * vg.total() + iv] -
                                                 amp * mu0[iv]));
        }
    }
    CHECK(sup < 1e-12);
}

TEST_CASE("free streaming is spectrally exact in two dimensions") {
    const SpatialGrid xg = make_spatial_grid(2, 8);
    const VelocityGrid vg = make_velocity_grid(6, 6.0);
    std::vector<double> mu0(vg.total());
    maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, 1.0, mu0.data());
    Distribution F = Distribution::zeros(xg, vg);
    for (int ix = 0; ix < xg.total(); ++ix) {
        const double x0 = xg.node(ix / xg.n), x1 = xg.node(ix % xg.n);
        for (int i = 0; i < vg.total(); ++i)
            F.f[(std::size_t)ix * vg.total() + i] =
                (1.0 + 0.3 * std::sin(x0) * std::cos(x1)) * mu0[i];
    }

    KineticConfig cfg;
    cfg.eps = 1.0;
    cfg.dt_factor = 0.25;
    cfg.nu0 = 0.0;
    const KineticResult res = run_kinetic(F, cfg, {0.5}, true);
    const Distribution& G = res.snapshots[0];
    const int n = vg.n;
    double sup = 0.0;
    for (int ix = 0; ix < xg.total(); ++ix) {
        const double x0 = xg.node(ix / xg.n), x1 = xg.node(ix % xg.n);
        int iv = 0;
        for (int i0 = 0; i0 < n; ++i0)
            for (int i1 = 0; i1 < n; ++i1) {
                const double amp = 1.0 + 0.3 * std::sin(x0 - 0.5 * vg.node(i0)) *
                                             std::cos(x1 - 0.5 * vg.node(i1));
                for (int i2 = 0; i2 < n; ++i2, ++iv)
                    sup = std::max(sup, std::abs(G.f[(std::size_t)ix * vg.total() + iv] -
                                                 amp * mu0[iv]));
            }
    }
    CHECK(sup < 1e-12);
}

TEST_CASE("homogeneous relaxation composes exactly across step sizes") {
    // without spatial structure the splitting is exact, so halving the step
    // must not change the result beyond rounding
    const SpatialGrid xg = make_spatial_grid(1, 4);
    const VelocityGrid vg = make_velocity_grid(8, 6.0);
    std::vector<double> a(vg.total()), b(vg.total());
    maxwellian_slab(vg, 0.7, {0.3, 0.0, -0.2}, 0.9, a.data());
    maxwellian_slab(vg, 0.5, {-0.4, 0.2, 0.0}, 1.2, b.data());
    Distribution F = Distribution::zeros(xg, vg);
    for (int ix = 0; ix < xg.total(); ++ix)
        for (int i = 0; i < vg.total(); ++i)
            F.f[(std::size_t)ix * vg.total() + i] = a[i] + b[i];

    KineticConfig c1;
    c1.eps = 0.1;
    c1.dt_factor = 1.0;
    KineticConfig c2 = c1;
    c2.dt_factor = 0.5;
    const KineticResult r1 = run_kinetic(F, c1, {0.4}, true);
    const KineticResult r2 = run_kinetic(F, c2, {0.4}, true);
    double sup = 0.0;
    for (std::size_t i = 0; i < F.f.size(); ++i)
        sup = std::max(sup, std::abs(r1.snapshots[0].f[i] - r2.snapshots[0].f[i]));
    CHECK(sup < 1e-14);
}

TEST_CASE("splitting run conserves the collision invariants") {
    const SpatialGrid xg = make_spatial_grid(1, 16);
    const VelocityGrid vg = make_velocity_grid(8, 6.0);
    const Distribution F = modulated_maxwellian(xg, vg);

    KineticConfig cfg;
    cfg.eps = 0.1;
    cfg.dt_factor = 0.5;
    const KineticResult res = run_kinetic(F, cfg, {0.0, 2.5});
    REQUIRE(res.invariants.size() == 2);
    CHECK(res.steps == 50);
    // spectral transport leaves rounding-level negatives in the far tail
    CHECK(res.min_value > -1e-10);
    for (int k = 0; k < 5; ++k) {
        const double scale = std::max(1.0, std::abs(res.invariants[0][4]));
        CHECK(std::abs(res.invariants[1][k] - res.invariants[0][k]) < 1e-10 * scale);
    }

    // density-dependent rate: same conservation, different relaxation speed
    KineticConfig loc = cfg;
    loc.local_rate = true;
    const KineticResult rl = run_kinetic(F, loc, {0.0, 0.5});
    for (int k = 0; k < 5; ++k) {
        const double scale = std::max(1.0, std::abs(rl.invariants[0][4]));
        CHECK(std::abs(rl.invariants[1][k] - rl.invariants[0][k]) < 1e-10 * scale);
    }
}

TEST_CASE("global equilibrium is a fixed point of the splitting") {
    const SpatialGrid xg = make_spatial_grid(1, 8);
    const VelocityGrid vg = make_velocity_grid(8, 6.0);
    std::vector<double> m(vg.total());
    maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, 1.0, m.data());
    Distribution F = Distribution::zeros(xg, vg);
    for (int ix = 0; ix < xg.total(); ++ix)
        for (int i = 0; i < vg.total(); ++i) F.f[(std::size_t)ix * vg.total() + i] = m[i];

    KineticConfig cfg;
    cfg.eps = 0.05;
    cfg.dt_factor = 0.5;
    const KineticResult res = run_kinetic(F, cfg, {1.0}, true);
    double sup = 0.0;
    for (std::size_t i = 0; i < F.f.size(); ++i)
        sup = std::max(sup, std::abs(res.snapshots[0].f[i] - F.f[i]));
    CHECK(sup < 1e-12);
}

TEST_CASE("runs are deterministic") {
    const SpatialGrid xg = make_spatial_grid(1, 8);
    const VelocityGrid vg = make_velocity_grid(8, 6.0);
    const Distribution F = modulated_maxwellian(xg, vg);
    KineticConfig cfg;
    cfg.eps = 0.1;
    cfg.dt_factor = 0.5;
    const KineticResult r1 = run_kinetic(F, cfg, {0.25, 0.5}, true);
    const KineticResult r2 = run_kinetic(F, cfg, {0.25, 0.5}, true);
    REQUIRE(r1.snapshots.size() == r2.snapshots.size());
    for (std::size_t s = 0; s < r1.snapshots.size(); ++s)
        CHECK(std::memcmp(r1.snapshots[s].f.data(), r2.snapshots[s].f.data(),
                          r1.snapshots[s].f.size() * sizeof(double)) == 0);
    for (std::size_t s = 0; s < r1.invariants.size(); ++s)
        for (int k = 0; k < 5; ++k) CHECK(r1.invariants[s][k] == r2.invariants[s][k]);
}

TEST_CASE("sample times must align with the step grid") {
    const SpatialGrid xg = make_spatial_grid(1, 4);
    const VelocityGrid vg = make_velocity_grid(6, 6.0);
    const Distribution F = modulated_maxwellian(xg, vg);
    KineticConfig cfg;
    cfg.eps = 0.1;
    cfg.dt_factor = 1.0;  // dt = 0.1
    CHECK_THROWS_WITH(run_kinetic(F, cfg, {0.33}),
                      Catch::Matchers::ContainsSubstring("multiples of dt"));
    CHECK_THROWS_AS(run_kinetic(F, cfg, {0.2, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(run_kinetic(F, cfg, {-0.1}), std::invalid_argument);
    KineticConfig bad = cfg;
    bad.eps = 0.0;
    CHECK_THROWS_AS(run_kinetic(F, bad, {0.1}), std::invalid_argument);
    bad = cfg;
    bad.dt_factor = -1.0;
    CHECK_THROWS_AS(run_kinetic(F, bad, {0.1}), std::invalid_argument);

    // observer fires once per sample, in order
    std::vector<double> seen;
    run_kinetic(F, cfg, {0.1, 0.3}, false,
                [&](double t, const Distribution&) { seen.push_back(t); });
    REQUIRE(seen.size() == 2);
    CHECK(seen[0] == 0.1);
    CHECK(seen[1] == 0.3);
}

TEST_CASE("quadrature backend integrates and enforces its budget") {
    const SpatialGrid xg = make_spatial_grid(1, 4);
    const VelocityGrid vg = make_velocity_grid(8, 6.0);
    const Distribution F = modulated_maxwellian(xg, vg);

    KineticConfig cfg;
    cfg.backend = CollisionBackend::quadrature;
    cfg.eps = 1.0;
    cfg.dt_factor = 0.5;
    cfg.max_q_evals = 100000;
    const KineticResult res = run_kinetic(F, cfg, {0.5});
    REQUIRE(res.invariants.size() == 1);
    for (int k = 0; k < 5; ++k) CHECK(std::isfinite(res.invariants[0][k]));
    // the direct quadrature conserves only to its O(h^2) consistency, loose
    // on this coarse grid
    double mass0 = 0.0;
    for (int ix = 0; ix < xg.total(); ++ix)
        mass0 += xg.cell_volume() * slab_moments(vg, F.slab(ix)).m0;
    CHECK(res.invariants[0][0] > 0.0);
    CHECK(std::abs(res.invariants[0][0] - mass0) < 2e-2 * mass0);

    KineticConfig tiny = cfg;
    tiny.max_q_evals = 4;
    CHECK_THROWS_WITH(run_kinetic(F, tiny, {0.5}),
                      Catch::Matchers::ContainsSubstring("evaluation budget"));
}

TEST_CASE("fluctuations and their hydrodynamic moments") {
    const SpatialGrid xg = make_spatial_grid(1, 16);
    const VelocityGrid vg = make_velocity_grid(16, 6.0);
    const double delta = 0.05;
    FluidState s = FluidState::zeros(xg);
    std::vector<double> sigma(xg.total()), theta(xg.total()), uamp(xg.total());
    for (int ix = 0; ix < xg.total(); ++ix) {
        const double x = xg.node(ix);
        sigma[ix] = 0.3 * std::cos(x);
        uamp[ix] = 0.2 * std::sin(x);
        theta[ix] = 0.1 * std::cos(2.0 * x);
        s.rho[ix] = 1.0 + delta * sigma[ix];
        s.u[0][ix] = delta * uamp[ix];
        s.T[ix] = 1.0 + delta * theta[ix];
    }
    const Distribution F = maxwellian(s, vg);
    const Distribution G = extract_fluctuation(F, delta);
    const AcousticState mom = fluctuation_moments(G);
    for (int ix = 0; ix < xg.total(); ++ix) {
        CHECK(std::abs(mom.sigma[ix] - sigma[ix]) < 0.02);
        CHECK(std::abs(mom.u[0][ix] - uamp[ix]) < 0.02);
        CHECK(std::abs(mom.theta[ix] - theta[ix]) < 0.02);
    }

    // the fluctuation of the equilibrium itself vanishes
    FluidState flat = FluidState::zeros(xg);
    for (int ix = 0; ix < xg.total(); ++ix) {
        flat.rho[ix] = 1.0;
        flat.T[ix] = 1.0;
    }
    const Distribution G0 = extract_fluctuation(maxwellian(flat, vg), delta);
    CHECK(dist_linf(G0) < 1e-14);

    CHECK_THROWS_AS(extract_fluctuation(F, 0.0), std::invalid_argument);
}

TEST_CASE("compatibility residual separates consistent from frozen dynamics") {
    const SpatialGrid xg = make_spatial_grid(1, 8);
    const VelocityGrid vg = make_velocity_grid(12, 6.0);
    const FluidState s = wave_data(xg, 0.1);

    const FluidState dsdt = euler_time_derivative(s);
    const Distribution r = streaming_source(s, dsdt, vg);
    CHECK(compat_residual(r, s) < 1e-4);

    // freezing the time derivative leaves the full hydrodynamic part behind
    FluidState zero = FluidState::zeros(xg);
    const Distribution r0 = streaming_source(s, zero, vg);
    CHECK(compat_residual(r0, s) > 0.5);

    const SpatialGrid other = make_spatial_grid(1, 16);
    CHECK_THROWS_AS(streaming_source(s, FluidState::zeros(other), vg), std::invalid_argument);
    const FluidState s2 = wave_data(other, 0.1);
    CHECK_THROWS_AS(compat_residual(r, s2), std::invalid_argument);
}

TEST_CASE("first correction solves the projected equation on both backends") {
    const SpatialGrid xg = make_spatial_grid(1, 4);
    const VelocityGrid vg = make_velocity_grid(10, 6.0);
    const FluidState s = wave_data(xg, 0.1);
    const FluidState dsdt = euler_time_derivative(s);
    const Distribution r = streaming_source(s, dsdt, vg);
    const int nv3 = vg.total();

    // shared per-node pieces at the first spatial node
    const std::array<double, 3> uu{s.u[0][0], s.u[1][0], s.u[2][0]};
    std::vector<double> muv(nv3), smu(nv3);
    maxwellian_slab(vg, s.rho[0], uu, s.T[0], muv.data());
    for (int i = 0; i < nv3; ++i) smu[i] = std::sqrt(muv[i]);
    ProjectorP proj(vg, smu);
    std::vector<double> slab(r.f.begin(), r.f.begin() + nv3);
    const std::vector<double> pr = proj.apply(slab);
    std::vector<double> b(nv3);
    for (int i = 0; i < nv3; ++i) b[i] = slab[i] - pr[i];

    KineticConfig bgk;
    const Distribution F1b = hilbert_first_correction(s, dsdt, vg, bgk);
    std::vector<double> f1(nv3);
    for (int i = 0; i < nv3; ++i) f1[i] = F1b.f[i] / smu[i];
    const std::vector<double> pf = proj.apply(f1);
    double pmax = 0.0, idmax = 0.0;
    for (int i = 0; i < nv3; ++i) {
        pmax = std::max(pmax, std::abs(pf[i]));
        idmax = std::max(idmax, std::abs(bgk.nu0 * f1[i] + b[i]));
    }
    CHECK(pmax < 1e-14);   // correction is orthogonal to the invariants
    CHECK(idmax < 1e-14);  // closed form nu f1 = -(I - P) r

    KineticConfig quad;
    quad.backend = CollisionBackend::quadrature;
    const Distribution F1q = hilbert_first_correction(s, dsdt, vg, quad);
    DenseL dense(vg, quad.kernel, s.rho[0], uu, s.T[0]);
    for (int i = 0; i < nv3; ++i) f1[i] = F1q.f[i] / smu[i];
    const Eigen::VectorXd x1 = dense.restrict_to_ball(f1.data());
    const Eigen::VectorXd bb = dense.restrict_to_ball(b.data());
    CHECK((dense.matrix() * x1 + bb).norm() / bb.norm() < 1e-10);

    const VelocityGrid vg16 = make_velocity_grid(16, 6.0);
    CHECK_THROWS_WITH(hilbert_first_correction(s, dsdt, vg16, quad),
                      Catch::Matchers::ContainsSubstring("relaxation backend"));
    const SpatialGrid big = make_spatial_grid(1, 16);
    const FluidState sb = wave_data(big, 0.1);
    CHECK_THROWS_AS(hilbert_first_correction(sb, euler_time_derivative(sb), vg, quad),
                    std::invalid_argument);
}

TEST_CASE("remainder diagnostics vanish on the expansion itself") {
    const SpatialGrid xg = make_spatial_grid(1, 8);
    const VelocityGrid vg = make_velocity_grid(10, 6.0);
    const FluidState s = wave_data(xg, 0.1);
    const ScalingConfig sc = make_scaling(1e-2, 0.1);
    KineticConfig cfg;

    const Distribution F0 = maxwellian(s, vg);
    const RemainderReport r0 = remainder_diagnostics(F0, s, 0, 1e-2, sc, cfg);
    CHECK(r0.f_l2 == 0.0);
    CHECK(r0.h_winf == 0.0);
    CHECK(r0.T_M > 0.0);
    CHECK(r0.beta == 3.5);

    const double eps = 1e-2;
    const FluidState dsdt = euler_time_derivative(s);
    const Distribution F1 = hilbert_first_correction(s, dsdt, vg, cfg);
    Distribution F = F0;
    for (std::size_t i = 0; i < F.f.size(); ++i) F.f[i] += eps * F1.f[i];
    const RemainderReport r1 = remainder_diagnostics(F, s, 1, eps, sc, cfg);
    CHECK(r1.f_l2 == 0.0);
    CHECK(r1.h_winf == 0.0);

    // a genuine perturbation registers in both norms
    Distribution Fp = F;
    std::vector<double> mu0(vg.total());
    maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, 1.0, mu0.data());
    for (int ix = 0; ix < xg.total(); ++ix)
        for (int i = 0; i < vg.total(); ++i)
            Fp.f[(std::size_t)ix * vg.total() + i] += eps * eps * mu0[i];
    const RemainderReport rp = remainder_diagnostics(Fp, s, 1, eps, sc, cfg);
    CHECK(rp.f_l2 > 0.0);
    CHECK(rp.h_winf > 0.0);

    CHECK_THROWS_AS(remainder_diagnostics(F, s, 2, eps, sc, cfg), std::invalid_argument);
    const SpatialGrid other = make_spatial_grid(1, 16);
    CHECK_THROWS_AS(remainder_diagnostics(F, wave_data(other, 0.1), 0, eps, sc, cfg),
                    std::invalid_argument);
}
