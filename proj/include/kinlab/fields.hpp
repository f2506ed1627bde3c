#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kinlab/grid.hpp"

namespace kinlab {

/// Compressible fluid fields (rho, u, T) on a spatial grid. The velocity
/// keeps three components regardless of dim so slab (dim = 1) runs carry
/// transverse momentum exactly like the kinetic solver does.
struct FluidState {
    SpatialGrid grid;
    std::vector<double> rho;
    std::array<std::vector<double>, 3> u;
    std::vector<double> T;

    static FluidState zeros(const SpatialGrid& g) {
        FluidState s;
        s.grid = g;
        const std::size_t m = static_cast<std::size_t>(g.total());
        s.rho.assign(m, 0.0);
        for (auto& c : s.u) c.assign(m, 0.0);
        s.T.assign(m, 0.0);
        return s;
    }
};

/// Linear acoustic fields (sigma, u, theta) on a spatial grid.
struct AcousticState {
    SpatialGrid grid;
    std::vector<double> sigma;
    std::array<std::vector<double>, 3> u;
    std::vector<double> theta;

    static AcousticState zeros(const SpatialGrid& g) {
        AcousticState s;
        s.grid = g;
        const std::size_t m = static_cast<std::size_t>(g.total());
        s.sigma.assign(m, 0.0);
        for (auto& c : s.u) c.assign(m, 0.0);
        s.theta.assign(m, 0.0);
        return s;
    }
};

/// Second-order difference fields between a perturbed fluid solution and its
/// acoustic linearization, scaled by 1/delta^2.
struct DifferenceState {
    SpatialGrid grid;
    std::vector<double> sigma_d;
    std::array<std::vector<double>, 3> u_d;
    std::vector<double> theta_d;
};

/// Phase-space density F(x, v) stored row-major as [spatial node][velocity
/// node], velocity index fastest: iv = (i0*n + i1)*n + i2.
struct Distribution {
    SpatialGrid xg;
    VelocityGrid vg;
    std::vector<double> f;

    static Distribution zeros(const SpatialGrid& xg, const VelocityGrid& vg) {
        Distribution d;
        d.xg = xg;
        d.vg = vg;
        d.f.assign(static_cast<std::size_t>(xg.total()) * vg.total(), 0.0);
        return d;
    }

    double* slab(int ix) { return f.data() + static_cast<std::size_t>(ix) * vg.total(); }
    const double* slab(int ix) const { return f.data() + static_cast<std::size_t>(ix) * vg.total(); }
};

inline void check_same_shape(const Distribution& a, const Distribution& b, const char* who) {
    if (a.xg != b.xg || a.vg != b.vg)
        throw std::invalid_argument(std::string(who) + ": distributions live on different grids");
}

/// Discrete moments (mass, momentum, energy) of one spatial slab.
struct Moments5 {
    double m0 = 0.0;
    std::array<double, 3> m1{0.0, 0.0, 0.0};
    double m2 = 0.0;  // integral of |v|^2 F
};

inline Moments5 slab_moments(const VelocityGrid& vg, const double* f) {
    Moments5 m;
    const int n = vg.n;
    int iv = 0;
    for (int i0 = 0; i0 < n; ++i0) {
        const double v0 = vg.node(i0);
        for (int i1 = 0; i1 < n; ++i1) {
            const double v1 = vg.node(i1);
            for (int i2 = 0; i2 < n; ++i2, ++iv) {
                const double v2 = vg.node(i2);
                const double val = f[iv];
                m.m0 += val;
                m.m1[0] += v0 * val;
                m.m1[1] += v1 * val;
                m.m1[2] += v2 * val;
                m.m2 += (v0 * v0 + v1 * v1 + v2 * v2) * val;
            }
        }
    }
    const double w = vg.weight();
    m.m0 *= w;
    for (auto& c : m.m1) c *= w;
    m.m2 *= w;
    return m;
}

inline double dist_l2(const Distribution& d) {
    double s = 0.0;
    for (double x : d.f) s += x * x;
    return std::sqrt(s * d.xg.cell_volume() * d.vg.weight());
}

inline double dist_linf(const Distribution& d) { return norm_linf(d.f); }

/// Mixed H^s_x L^2_v norm: Fourier multiplier (1 + |k|^2)^s on the spatial
/// spectrum, plain quadrature in v.
inline double dist_hs(const Distribution& d, int s) {
    if (s < 0 || s > 3)
        throw std::invalid_argument("dist_hs: s must be an integer in [0, 3]");
    if (s == 0) return dist_l2(d);
    const int nx = d.xg.total();
    const int nv = d.vg.total();
    fft::Plan plan(d.xg.n);
    if (d.xg.dim != 1) {
        // fall back to the generic path one velocity node at a time
        double acc = 0.0;
        std::vector<double> line(nx);
        for (int iv = 0; iv < nv; ++iv) {
            for (int ix = 0; ix < nx; ++ix) line[ix] = d.f[static_cast<std::size_t>(ix) * nv + iv];
            const double val = norm_hs(d.xg, line, s);
            acc += val * val;
        }
        return std::sqrt(acc * d.vg.weight());
    }
    const int n = d.xg.n;
    std::vector<std::complex<double>> a(n);
    double acc = 0.0;
    for (int iv = 0; iv < nv; ++iv) {
        for (int ix = 0; ix < n; ++ix) a[ix] = d.f[static_cast<std::size_t>(ix) * nv + iv];
        plan.forward(a.data());
        for (int k = 0; k < n; ++k) {
            const int kk = detail::freq_of_bin(k, n);
            double mult = 1.0;
            for (int j = 0; j < s; ++j) mult *= (1.0 + static_cast<double>(kk) * kk);
            acc += mult * std::norm(a[k]) / (static_cast<double>(n) * n);
        }
    }
    return std::sqrt(acc * kTwoPi * d.vg.weight());
}

/// Collision-frequency-weighted L^2 norm; nu is a velocity-space field
/// shared by every spatial slab.
inline double dist_nu_l2(const Distribution& d, const std::vector<double>& nu) {
    if (nu.size() != static_cast<std::size_t>(d.vg.total()))
        throw std::invalid_argument("dist_nu_l2: nu must be a velocity-space field on the same v-grid");
    const int nx = d.xg.total();
    const int nv = d.vg.total();
    double s = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
        const double* f = d.slab(ix);
        for (int iv = 0; iv < nv; ++iv) s += nu[iv] * f[iv] * f[iv];
    }
    return std::sqrt(s * d.xg.cell_volume() * d.vg.weight());
}

/// Polynomially weighted sup norm sup (1+|v|^2)^beta |F| / sqrt(mu_M),
/// with mu_M the global Maxwellian at temperature T_M.
inline double weighted_sup(const Distribution& d, double beta, double T_M) {
    if (!(T_M > 0.0)) throw std::invalid_argument("weighted_sup: T_M must be positive");
    if (!(beta >= 0.0)) throw std::invalid_argument("weighted_sup: beta must be nonnegative");
    const int n = d.vg.n;
    const int nv = d.vg.total();
    const double norm_m = std::pow(kTwoPi * T_M, -1.5);
    std::vector<double> wgt(nv);
    int iv = 0;
    for (int i0 = 0; i0 < n; ++i0)
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2, ++iv) {
                const double v0 = d.vg.node(i0), v1 = d.vg.node(i1), v2 = d.vg.node(i2);
                const double vv = v0 * v0 + v1 * v1 + v2 * v2;
                const double sqrt_mu_m = std::sqrt(norm_m * std::exp(-vv / (2.0 * T_M)));
                wgt[iv] = std::pow(1.0 + vv, beta) / sqrt_mu_m;
            }
    double m = 0.0;
    for (int ix = 0; ix < d.xg.total(); ++ix) {
        const double* f = d.slab(ix);
        for (int j = 0; j < nv; ++j) m = std::max(m, wgt[j] * std::abs(f[j]));
    }
    return m;
}

}  // namespace kinlab
