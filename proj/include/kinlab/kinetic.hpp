#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinlab/collision.hpp"
#include "kinlab/fft.hpp"
#include "kinlab/fields.hpp"
#include "kinlab/fluid.hpp"
#include "kinlab/grid.hpp"
#include "kinlab/maxwellian.hpp"

namespace kinlab {

/// Knudsen/amplitude pair and the velocity weight exponent for sup-norm
/// diagnostics. The weight exponent must clear (9 - 2 gamma)/2 for the
/// weighted estimates to close; negative beta selects that threshold.
struct ScalingConfig {
    double eps = 1e-3;
    double delta = 0.1;
    double gamma = 1.0;
    double beta = -1.0;
};

inline ScalingConfig make_scaling(double eps, double delta, double gamma = 1.0,
                                  double beta = -1.0) {
    if (!(eps > 0.0)) throw std::invalid_argument("scaling: eps must be positive");
    if (!(delta > 0.0)) throw std::invalid_argument("scaling: delta must be positive");
    if (!(gamma > -3.0) || !(gamma <= 1.0))
        throw std::invalid_argument("scaling: gamma must lie in (-3, 1]");
    const double threshold = 0.5 * (9.0 - 2.0 * gamma);
    ScalingConfig sc{eps, delta, gamma, beta < 0.0 ? threshold : beta};
    if (sc.beta < threshold)
        throw std::invalid_argument("scaling: beta must be at least (9 - 2 gamma)/2 = " +
                                    std::to_string(threshold));
    return sc;
}

enum class CollisionBackend { relaxation, quadrature };

/// Kinetic solver configuration. The relaxation backend takes exact
/// relaxation substeps toward the moment-matched Maxwellian; the quadrature
/// backend integrates the full bilinear operator and is capped because each
/// evaluation costs O(n_v^3 |ball| n_sphere).
struct KineticConfig {
    CollisionBackend backend = CollisionBackend::relaxation;
    double eps = 1e-3;
    double dt_factor = 0.5;  // dt = dt_factor * eps
    double nu0 = kTwoPi;     // relaxation rate scale
    bool local_rate = false; // nu(x) = nu0 rho(x) <(1 + |v|)^gamma> instead of nu0
    double gamma = 1.0;      // exponent for the local rate model
    KernelConfig kernel;     // quadrature backend
    long long max_q_evals = 5000;  // quadrature backend cost cap
};

namespace kinetic_detail {

/// Four-point Gauss-Hermite rule for exp(-x^2) weights.
inline constexpr std::array<double, 4> kHermiteNodes{
    -1.6506801238857845, -0.5246476232752903, 0.5246476232752903, 1.6506801238857845};
inline constexpr std::array<double, 4> kHermiteWeights{
    0.08131283544724518, 0.8049140900055128, 0.8049140900055128, 0.08131283544724518};

/// Mean of (1 + |v|)^gamma under the Maxwellian with the given parameters.
inline double mean_speed_factor(const MatchedMaxwellian& p, double gamma) {
    const double s = std::sqrt(2.0 * p.T);
    const double norm = std::pow(kPi, -1.5);
    double acc = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) {
                const double v0 = p.u[0] + s * kHermiteNodes[a];
                const double v1 = p.u[1] + s * kHermiteNodes[b];
                const double v2 = p.u[2] + s * kHermiteNodes[c];
                const double speed = std::sqrt(v0 * v0 + v1 * v1 + v2 * v2);
                const double w = kHermiteWeights[a] * kHermiteWeights[b] * kHermiteWeights[c];
                acc += w * (gamma == 1.0 ? 1.0 + speed : std::pow(1.0 + speed, gamma));
            }
    return norm * acc;
}

/// Phase table for the exact free-streaming step in one spatial dimension:
/// tab[i0 * n_x + m] = exp(-i k_m v_{i0} dt), with the real symmetric choice
/// at the Nyquist bin so that real lines stay real.
inline std::vector<std::complex<double>> phase_table_1d(const SpatialGrid& xg,
                                                        const VelocityGrid& vg, double dt) {
    const int nx = xg.n, nv = vg.n;
    std::vector<std::complex<double>> tab(static_cast<std::size_t>(nv) * nx);
    for (int i0 = 0; i0 < nv; ++i0) {
        const double v = vg.node(i0);
        for (int m = 0; m < nx; ++m) {
            const int k = detail::freq_of_bin(m, nx);
            const double th = -k * v * dt;
            if (nx % 2 == 0 && m == nx / 2)
                tab[static_cast<std::size_t>(i0) * nx + m] = {std::cos(th), 0.0};
            else
                tab[static_cast<std::size_t>(i0) * nx + m] = {std::cos(th), std::sin(th)};
        }
    }
    return tab;
}

/// Exact transport over dt on a 1-d spatial grid: per velocity node the
/// spatial line is shifted by a spectral phase. Lines are processed in tiles
/// and packed two real lines per complex transform; the phase satisfies the
/// conjugate symmetry that keeps both lines real.
inline void transport_1d(Distribution& F, fft::Plan& plan,
                         const std::vector<std::complex<double>>& tab) {
    const int nx = F.xg.n;
    const int nv3 = F.vg.total();
    const int n2 = F.vg.n * F.vg.n;
    constexpr int kTile = 64;  // values per tile (pairs of lines: kTile / 2)
    std::vector<double> tile(static_cast<std::size_t>(kTile) * nx);
    std::vector<std::complex<double>> buf(nx);
    double* f = F.f.data();

    for (int iv0 = 0; iv0 < nv3; iv0 += kTile) {
        const int tw = std::min(kTile, nv3 - iv0);
        for (int x = 0; x < nx; ++x) {
            const double* src = f + static_cast<std::size_t>(x) * nv3 + iv0;
            for (int t = 0; t < tw; ++t) tile[static_cast<std::size_t>(t) * nx + x] = src[t];
        }
        for (int t = 0; t < tw; t += 2) {
            const double* re = tile.data() + static_cast<std::size_t>(t) * nx;
            const double* im = tile.data() + static_cast<std::size_t>(t + 1) * nx;
            for (int x = 0; x < nx; ++x) buf[x] = {re[x], im[x]};
            plan.forward(buf.data());
            const int i0 = (iv0 + t) / n2;
            const std::complex<double>* ph = tab.data() + static_cast<std::size_t>(i0) * nx;
            for (int x = 0; x < nx; ++x) buf[x] *= ph[x];
            plan.inverse(buf.data());
            double* rw = tile.data() + static_cast<std::size_t>(t) * nx;
            double* iw = tile.data() + static_cast<std::size_t>(t + 1) * nx;
            for (int x = 0; x < nx; ++x) {
                rw[x] = buf[x].real();
                iw[x] = buf[x].imag();
            }
        }
        for (int x = 0; x < nx; ++x) {
            double* dst = f + static_cast<std::size_t>(x) * nv3 + iv0;
            for (int t = 0; t < tw; ++t) dst[t] = tile[static_cast<std::size_t>(t) * nx + x];
        }
    }
}

/// Exact transport for spatial dimension 2 or 3 through the generic DFT; cost
/// per step is O(n_v^3 N log-ish N), meant for small demonstration grids.
inline void transport_nd(Distribution& F, double dt) {
    const SpatialGrid& xg = F.xg;
    const VelocityGrid& vg = F.vg;
    const int N = xg.total();
    const int nv3 = vg.total();
    const int n = vg.n;
    std::vector<std::complex<double>> line(N);
    for (int iv = 0; iv < nv3; ++iv) {
        const double vs[3] = {vg.node(iv / (n * n)), vg.node((iv / n) % n), vg.node(iv % n)};
        for (int x = 0; x < N; ++x)
            line[x] = F.f[static_cast<std::size_t>(x) * nv3 + iv];
        detail::dft_nd(xg, line);
        for (int x = 0; x < N; ++x) {
            int rem = x;
            double kv = 0.0;
            std::array<int, 3> kidx{0, 0, 0};
            for (int d = xg.dim - 1; d >= 0; --d) {
                kidx[d] = rem % xg.n;
                rem /= xg.n;
            }
            for (int d = 0; d < xg.dim; ++d)
                kv += detail::freq_of_bin(kidx[d], xg.n) * vs[d];
            line[x] *= std::exp(std::complex<double>(0.0, -kv * dt));
        }
        // inverse of the normalized forward transform
        for (auto& z : line) z = std::conj(z);
        detail::dft_nd(xg, line);
        const double scale = static_cast<double>(N);
        for (int x = 0; x < N; ++x)
            F.f[static_cast<std::size_t>(x) * nv3 + iv] = std::conj(line[x]).real() * scale;
    }
}

}  // namespace kinetic_detail

/// Observer invoked at every requested sample time.
using KineticObserver = std::function<void(double t, const Distribution& F)>;

struct KineticResult {
    std::vector<double> times;
    std::vector<Distribution> snapshots;  // filled when keep_snapshots is set
    std::vector<std::array<double, 5>> invariants;  // mass, momentum, energy integrals
    double min_value = 0.0;
    long long steps = 0;
};

/// Splitting solver for  d_t F + v . grad_x F = (1/eps) C(F)  on the torus.
/// Strang composition of exact transport and the collision substep; interior
/// transports of consecutive steps are merged. Sample times must sit on the
/// step grid. The relaxation substep is
///   F <- M[F] + exp(-nu dt / eps) (F - M[F]),
/// which is the exact solution of the relaxation flow and conserves the
/// matched moments; the quadrature substep integrates Q with midpoint steps
/// capped by the stiffness limit.
inline KineticResult run_kinetic(const Distribution& F0, const KineticConfig& cfg,
                                 const std::vector<double>& sample_times,
                                 bool keep_snapshots = false,
                                 const KineticObserver& observer = nullptr) {
    if (!(cfg.eps > 0.0)) throw std::invalid_argument("kinetic: eps must be positive");
    if (!(cfg.dt_factor > 0.0)) throw std::invalid_argument("kinetic: dt_factor must be positive");
    for (std::size_t i = 0; i < sample_times.size(); ++i) {
        if (sample_times[i] < 0.0 || (i > 0 && sample_times[i] <= sample_times[i - 1]))
            throw std::invalid_argument("kinetic: sample times must be increasing and nonnegative");
    }
    const double dt = cfg.dt_factor * cfg.eps;
    Distribution F = F0;
    const SpatialGrid& xg = F.xg;
    const VelocityGrid& vg = F.vg;
    const int nx = xg.total();
    const int nv3 = vg.total();

    KineticResult res;
    fft::Plan plan(xg.n);
    std::vector<std::complex<double>> tab_full, tab_half;
    if (xg.dim == 1) {
        tab_full = kinetic_detail::phase_table_1d(xg, vg, dt);
        tab_half = kinetic_detail::phase_table_1d(xg, vg, 0.5 * dt);
    }

    auto transport = [&](double step, bool half) {
        if (xg.dim == 1)
            kinetic_detail::transport_1d(F, plan, half ? tab_half : tab_full);
        else
            kinetic_detail::transport_nd(F, step);
    };

    // warm-started per-node Maxwellian matches for the relaxation substep
    std::vector<MatchedMaxwellian> warm(nx);
    std::vector<bool> warm_ok(nx, false);
    long long q_evals = 0;

    auto relax_step = [&](double step) {
        for (int ix = 0; ix < nx; ++ix) {
            double* slab = F.f.data() + static_cast<std::size_t>(ix) * nv3;
            Moments5 mom = slab_moments(vg, slab);
            MatchedMaxwellian p =
                match_maxwellian(vg, mom, warm_ok[ix] ? &warm[ix] : nullptr);
            warm[ix] = p;
            warm_ok[ix] = true;
            double nu = cfg.nu0;
            if (cfg.local_rate) nu *= p.rho * kinetic_detail::mean_speed_factor(p, cfg.gamma);
            const double E = std::exp(-nu * step / cfg.eps);
            // M[F] through separable per-axis tables
            const int n = vg.n;
            std::vector<double> g0(n), g1(n), g2(n);
            const double pref = p.rho * std::pow(kTwoPi * p.T, -1.5);
            for (int i = 0; i < n; ++i) {
                const double c = vg.node(i);
                g0[i] = std::exp(-0.5 * (c - p.u[0]) * (c - p.u[0]) / p.T);
                g1[i] = std::exp(-0.5 * (c - p.u[1]) * (c - p.u[1]) / p.T);
                g2[i] = std::exp(-0.5 * (c - p.u[2]) * (c - p.u[2]) / p.T);
            }
            int iv = 0;
            for (int i0 = 0; i0 < n; ++i0) {
                const double a0 = pref * g0[i0];
                for (int i1 = 0; i1 < n; ++i1) {
                    const double a01 = a0 * g1[i1];
                    for (int i2 = 0; i2 < n; ++i2, ++iv) {
                        const double M = a01 * g2[i2];
                        slab[iv] = M + E * (slab[iv] - M);
                    }
                }
            }
        }
    };

    auto quadrature_step = [&](double step) {
        // stiffness-limited midpoint substepping of d_t F = Q(F, F)/eps
        std::vector<double> q(nv3), half(nv3);
        for (int ix = 0; ix < nx; ++ix) {
            double* slab = F.f.data() + static_cast<std::size_t>(ix) * nv3;
            Moments5 mom = slab_moments(vg, slab);
            MatchedMaxwellian p = match_maxwellian(vg, mom);
            std::vector<double> nu = collision_frequency(vg, cfg.kernel, p.rho, p.u, p.T);
            const double nu_max = *std::max_element(nu.begin(), nu.end());
            const int nsub = std::max(1, static_cast<int>(std::ceil(step * nu_max /
                                                                    (0.5 * cfg.eps))));
            const double hs = step / nsub;
            for (int ss = 0; ss < nsub; ++ss) {
                q_evals += 2;
                if (q_evals > cfg.max_q_evals)
                    throw std::runtime_error(
                        "kinetic: quadrature backend exceeded its evaluation budget; "
                        "use the relaxation backend for runs of this size");
                collide_Q(vg, cfg.kernel, slab, slab, q.data());
                for (int i = 0; i < nv3; ++i) half[i] = slab[i] + 0.5 * hs / cfg.eps * q[i];
                collide_Q(vg, cfg.kernel, half.data(), half.data(), q.data());
                for (int i = 0; i < nv3; ++i) slab[i] += hs / cfg.eps * q[i];
            }
        }
    };

    auto collide_step = [&](double step) {
        if (cfg.backend == CollisionBackend::relaxation)
            relax_step(step);
        else
            quadrature_step(step);
    };

    auto emit = [&](double t) {
        res.times.push_back(t);
        std::array<double, 5> inv{0, 0, 0, 0, 0};
        double mn = F.f[0];
        const double cv = xg.cell_volume();
        for (int ix = 0; ix < nx; ++ix) {
            const double* slab = F.f.data() + static_cast<std::size_t>(ix) * nv3;
            Moments5 m = slab_moments(vg, slab);
            inv[0] += cv * m.m0;
            for (int d = 0; d < 3; ++d) inv[1 + d] += cv * m.m1[d];
            inv[4] += cv * m.m2;
            for (int i = 0; i < nv3; ++i) mn = std::min(mn, slab[i]);
        }
        res.invariants.push_back(inv);
        if (res.times.size() == 1)
            res.min_value = mn;
        else
            res.min_value = std::min(res.min_value, mn);
        if (keep_snapshots) res.snapshots.push_back(F);
        if (observer) observer(t, F);
    };

    double t = 0.0;
    std::size_t si = 0;
    if (si < sample_times.size() && sample_times[si] == 0.0) {
        emit(0.0);
        ++si;
    }
    while (si < sample_times.size()) {
        const double span = sample_times[si] - t;
        const double steps_d = span / dt;
        const long long nsteps = static_cast<long long>(steps_d + 0.5);
        if (nsteps < 1 || std::abs(nsteps * dt - span) > 1e-9 * std::max(1.0, span))
            throw std::invalid_argument(
                "kinetic: sample times must be multiples of dt = dt_factor * eps");
        transport(0.5 * dt, true);
        for (long long s = 0; s < nsteps; ++s) {
            collide_step(dt);
            if (s + 1 < nsteps) transport(dt, false);
            ++res.steps;
        }
        transport(0.5 * dt, true);
        t = sample_times[si];
        emit(t);
        ++si;
    }
    return res;
}

/// Fluctuation (F - mu0)/delta around the global equilibrium.
inline Distribution extract_fluctuation(const Distribution& F, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("fluctuation: delta must be positive");
    const std::vector<double> mu0 = global_maxwellian(F.vg);
    Distribution out = Distribution::zeros(F.xg, F.vg);
    const int nx = F.xg.total();
    const int nv3 = F.vg.total();
    for (int ix = 0; ix < nx; ++ix) {
        const double* s = F.f.data() + static_cast<std::size_t>(ix) * nv3;
        double* o = out.f.data() + static_cast<std::size_t>(ix) * nv3;
        for (int i = 0; i < nv3; ++i) o[i] = (s[i] - mu0[i]) / delta;
    }
    return out;
}

/// Hydrodynamic moments of a fluctuation field, in the variables of the
/// linear limit profile: sigma = m0, u = m1, theta = (m2 - 3 m0)/3.
inline AcousticState fluctuation_moments(const Distribution& G) {
    AcousticState out = AcousticState::zeros(G.xg);
    const int nx = G.xg.total();
    const int nv3 = G.vg.total();
    for (int ix = 0; ix < nx; ++ix) {
        Moments5 m = slab_moments(G.vg, G.f.data() + static_cast<std::size_t>(ix) * nv3);
        out.sigma[ix] = m.m0;
        for (int d = 0; d < 3; ++d) out.u[d][ix] = m.m1[d];
        out.theta[ix] = (m.m2 - 3.0 * m.m0) / 3.0;
    }
    return out;
}

/// Time derivative of a fluid state under the compressible flow (spectral
/// right-hand side on the state's own grid).
inline FluidState euler_time_derivative(const FluidState& s) {
    spectral::Ops ops(s.grid);
    double divmax = 0.0;
    return euler_rhs(s, ops, &divmax);
}

/// Streaming source r = (1/sqrt(mu)) (d_t + v . grad_x) mu of a local
/// Maxwellian family, given the fluid state and its time derivative:
///   r = sqrt(mu) [ Drho/rho - 3 DT/(2T) + (v-u).Du/T + |v-u|^2 DT/(2T^2) ],
/// where D = d_t + v . grad_x acts on each field.
inline Distribution streaming_source(const FluidState& s, const FluidState& ds_dt,
                                     const VelocityGrid& vg) {
    if (s.grid.dim != ds_dt.grid.dim || s.grid.n != ds_dt.grid.n)
        throw std::invalid_argument("streaming_source: state and derivative grids differ");
    const SpatialGrid& xg = s.grid;
    spectral::Ops ops(xg);
    const int nx = xg.total();
    const int nv3 = vg.total();
    const int dim = xg.dim;

    std::vector<std::vector<double>> grad_rho(dim), grad_T(dim);
    std::array<std::vector<std::vector<double>>, 3> grad_u;
    for (int d = 0; d < dim; ++d) {
        grad_rho[d] = ops.derivative(s.rho, d);
        grad_T[d] = ops.derivative(s.T, d);
    }
    for (int c = 0; c < 3; ++c) {
        grad_u[c].resize(dim);
        for (int d = 0; d < dim; ++d) grad_u[c][d] = ops.derivative(s.u[c], d);
    }

    Distribution out = Distribution::zeros(xg, vg);
    const int n = vg.n;
    std::vector<double> mu_slab(nv3);
    for (int ix = 0; ix < nx; ++ix) {
        const double rho = s.rho[ix], T = s.T[ix];
        const std::array<double, 3> uu{s.u[0][ix], s.u[1][ix], s.u[2][ix]};
        maxwellian_slab(vg, rho, uu, T, mu_slab.data());
        double* o = out.f.data() + static_cast<std::size_t>(ix) * nv3;
        int iv = 0;
        for (int i0 = 0; i0 < n; ++i0)
            for (int i1 = 0; i1 < n; ++i1)
                for (int i2 = 0; i2 < n; ++i2, ++iv) {
                    const double v[3] = {vg.node(i0), vg.node(i1), vg.node(i2)};
                    double Drho = ds_dt.rho[ix], DT = ds_dt.T[ix];
                    double Du[3] = {ds_dt.u[0][ix], ds_dt.u[1][ix], ds_dt.u[2][ix]};
                    for (int d = 0; d < dim; ++d) {
                        Drho += v[d] * grad_rho[d][ix];
                        DT += v[d] * grad_T[d][ix];
                        for (int c = 0; c < 3; ++c) Du[c] += v[d] * grad_u[c][d][ix];
                    }
                    const double c0 = v[0] - uu[0], c1 = v[1] - uu[1], c2 = v[2] - uu[2];
                    const double cc = c0 * c0 + c1 * c1 + c2 * c2;
                    const double Dlog = Drho / rho - 1.5 * DT / T +
                                        (c0 * Du[0] + c1 * Du[1] + c2 * Du[2]) / T +
                                        cc * DT / (2.0 * T * T);
                    o[iv] = std::sqrt(mu_slab[iv]) * Dlog;
                }
    }
    return out;
}

/// Hydrodynamic fraction ||P r|| / ||r|| of a conjugated source, with the
/// projection taken against the local Maxwellian at each spatial node.
inline double compat_residual(const Distribution& r, const FluidState& s) {
    if (r.xg != s.grid)
        throw std::invalid_argument("compat_residual: spatial grids do not match");
    const int nx = r.xg.total();
    const int nv3 = r.vg.total();
    const double w = r.vg.weight();
    double num = 0.0, den = 0.0;
    std::vector<double> slab(nv3), smu(nv3);
    for (int ix = 0; ix < nx; ++ix) {
        const double* src = r.f.data() + static_cast<std::size_t>(ix) * nv3;
        std::copy(src, src + nv3, slab.begin());
        const std::array<double, 3> uu{s.u[0][ix], s.u[1][ix], s.u[2][ix]};
        maxwellian_slab(r.vg, s.rho[ix], uu, s.T[ix], smu.data());
        for (int i = 0; i < nv3; ++i) smu[i] = std::sqrt(smu[i]);
        ProjectorP proj(r.vg, smu);
        std::vector<double> pr = proj.apply(slab);
        for (int i = 0; i < nv3; ++i) {
            num += w * pr[i] * pr[i];
            den += w * slab[i] * slab[i];
        }
    }
    if (den == 0.0) return 0.0;
    return std::sqrt(num / den);
}

/// First correction of the expansion in eps: solves L f1 = -(I - P) r per
/// spatial node and returns F1 = sqrt(mu) f1. The quadrature backend uses the
/// dense assembly with an eigendecomposition pseudo-inverse (small grids
/// only); the relaxation backend has the closed form f1 = -(1/nu)(I - P) r.
inline Distribution hilbert_first_correction(const FluidState& s, const FluidState& ds_dt,
                                             const VelocityGrid& vg, const KineticConfig& cfg) {
    Distribution r = streaming_source(s, ds_dt, vg);
    const int nx = s.grid.total();
    const int nv3 = vg.total();
    Distribution out = Distribution::zeros(s.grid, vg);

    if (cfg.backend == CollisionBackend::quadrature && (vg.n > 12 || nx > 8))
        throw std::invalid_argument(
            "first correction: dense per-node solves are limited to n_v <= 12 and at most 8 "
            "spatial nodes; use the relaxation backend for larger runs");

    std::vector<double> slab(nv3), smu(nv3), muv(nv3);
    for (int ix = 0; ix < nx; ++ix) {
        const double* src = r.f.data() + static_cast<std::size_t>(ix) * nv3;
        std::copy(src, src + nv3, slab.begin());
        const std::array<double, 3> uu{s.u[0][ix], s.u[1][ix], s.u[2][ix]};
        maxwellian_slab(vg, s.rho[ix], uu, s.T[ix], muv.data());
        for (int i = 0; i < nv3; ++i) smu[i] = std::sqrt(muv[i]);
        ProjectorP proj(vg, smu);
        std::vector<double> pr = proj.apply(slab);
        std::vector<double> b(nv3);
        for (int i = 0; i < nv3; ++i) b[i] = slab[i] - pr[i];  // (I - P) r

        std::vector<double> f1(nv3, 0.0);
        if (cfg.backend == CollisionBackend::relaxation) {
            double nu = cfg.nu0;
            if (cfg.local_rate) {
                MatchedMaxwellian p;
                p.rho = s.rho[ix];
                p.u = uu;
                p.T = s.T[ix];
                nu *= p.rho * kinetic_detail::mean_speed_factor(p, cfg.gamma);
            }
            for (int i = 0; i < nv3; ++i) f1[i] = -b[i] / nu;
        } else {
            // the dense operator lives on the ball nodes; the correction is
            // zero-extended outside, consistent with the truncated kernel
            DenseL dense(vg, cfg.kernel, s.rho[ix], uu, s.T[ix]);
            const int nb = dense.ball_size();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense.matrix());
            const Eigen::VectorXd& ev = es.eigenvalues();
            const Eigen::MatrixXd& Q = es.eigenvectors();
            const double thresh = 1e-8 * ev(nb - 1);
            const Eigen::VectorXd bv = dense.restrict_to_ball(b.data());
            Eigen::VectorXd coef = Q.transpose() * bv;
            Eigen::VectorXd x = Eigen::VectorXd::Zero(nb);
            for (int k = 0; k < nb; ++k)
                if (ev(k) > thresh) x += (-coef(k) / ev(k)) * Q.col(k);
            f1 = dense.extend_from_ball(x);
        }
        double* o = out.f.data() + static_cast<std::size_t>(ix) * nv3;
        for (int i = 0; i < nv3; ++i) o[i] = smu[i] * f1[i];
    }
    return out;
}

/// Distance of a kinetic state from a truncated expansion: the conjugated L2
/// size of the remainder and the weighted sup amplitude of the rescaled
/// remainder h = (F - expansion) / (eps^{3/2} sqrt(mu_M) (1 + |v|^2)^{-beta}).
struct RemainderReport {
    double f_l2 = 0.0;
    double h_winf = 0.0;
    double T_M = 0.0;
    double beta = 0.0;
};

inline RemainderReport remainder_diagnostics(const Distribution& F, const FluidState& fluid,
                                             int order, double eps, const ScalingConfig& sc,
                                             const KineticConfig& cfg) {
    if (order != 0 && order != 1)
        throw std::invalid_argument("remainder: expansion order must be 0 or 1");
    if (F.xg != fluid.grid)
        throw std::invalid_argument("remainder: spatial grids do not match");
    Distribution expansion = maxwellian(fluid, F.vg);
    if (order == 1) {
        FluidState dsdt = euler_time_derivative(fluid);
        Distribution F1 = hilbert_first_correction(fluid, dsdt, F.vg, cfg);
        for (std::size_t i = 0; i < expansion.f.size(); ++i)
            expansion.f[i] += eps * F1.f[i];
    }
    Distribution diff = Distribution::zeros(F.xg, F.vg);
    const int nx = F.xg.total();
    const int nv3 = F.vg.total();
    std::vector<double> muv(nv3);
    Distribution conj = Distribution::zeros(F.xg, F.vg);
    for (int ix = 0; ix < nx; ++ix) {
        const std::array<double, 3> uu{fluid.u[0][ix], fluid.u[1][ix], fluid.u[2][ix]};
        maxwellian_slab(F.vg, fluid.rho[ix], uu, fluid.T[ix], muv.data());
        for (int i = 0; i < nv3; ++i) {
            const std::size_t at = static_cast<std::size_t>(ix) * nv3 + i;
            diff.f[at] = F.f[at] - expansion.f[at];
            conj.f[at] = diff.f[at] / std::sqrt(muv[i]);
        }
    }
    RemainderReport rep;
    rep.T_M = reference_temperature(fluid);
    rep.beta = sc.beta;
    rep.f_l2 = dist_l2(conj);
    rep.h_winf = weighted_sup(diff, sc.beta, rep.T_M) / std::pow(eps, 1.5);
    return rep;
}

}  // namespace kinlab
