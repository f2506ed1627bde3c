#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kinlab/fields.hpp"
#include "kinlab/grid.hpp"

namespace kinlab {

/// Pointwise local Maxwellian rho * (2 pi T)^{-3/2} exp(-|v-u|^2 / (2T)).
inline double maxwellian_point(double rho, const std::array<double, 3>& u, double T,
                               double v0, double v1, double v2) {
    const double d0 = v0 - u[0], d1 = v1 - u[1], d2 = v2 - u[2];
    return rho * std::pow(kTwoPi * T, -1.5) * std::exp(-(d0 * d0 + d1 * d1 + d2 * d2) / (2.0 * T));
}

/// Fill one spatial slab with the Maxwellian of (rho, u, T). Uses per-axis
/// Gaussian tables, so the cost is 3n exponentials instead of n^3.
inline void maxwellian_slab(const VelocityGrid& vg, double rho, const std::array<double, 3>& u,
                            double T, double* out) {
    if (!(rho > 0.0) || !(T > 0.0))
        throw std::invalid_argument("maxwellian: rho and T must be positive");
    const int n = vg.n;
    std::array<std::vector<double>, 3> ax;
    for (int d = 0; d < 3; ++d) {
        ax[d].resize(n);
        for (int i = 0; i < n; ++i) {
            const double dv = vg.node(i) - u[d];
            ax[d][i] = std::exp(-dv * dv / (2.0 * T));
        }
    }
    const double pref = rho * std::pow(kTwoPi * T, -1.5);
    int iv = 0;
    for (int i0 = 0; i0 < n; ++i0) {
        const double a0 = pref * ax[0][i0];
        for (int i1 = 0; i1 < n; ++i1) {
            const double a01 = a0 * ax[1][i1];
            for (int i2 = 0; i2 < n; ++i2, ++iv) out[iv] = a01 * ax[2][i2];
        }
    }
}

/// Local Maxwellian of a fluid state on the full (x, v) grid.
inline Distribution maxwellian(const FluidState& fluid, const VelocityGrid& vg) {
    Distribution d = Distribution::zeros(fluid.grid, vg);
    for (int ix = 0; ix < fluid.grid.total(); ++ix) {
        const std::array<double, 3> u{fluid.u[0][ix], fluid.u[1][ix], fluid.u[2][ix]};
        if (!(fluid.rho[ix] > 0.0) || !(fluid.T[ix] > 0.0))
            throw std::invalid_argument("maxwellian: nonpositive rho or T at spatial node " +
                                        std::to_string(ix));
        maxwellian_slab(vg, fluid.rho[ix], u, fluid.T[ix], d.slab(ix));
    }
    return d;
}

/// Global equilibrium mu0 = (2 pi)^{-3/2} exp(-|v|^2 / 2) as a velocity field.
inline std::vector<double> global_maxwellian(const VelocityGrid& vg) {
    std::vector<double> out(vg.total());
    maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, 1.0, out.data());
    return out;
}

/// Reference Maxwellian at temperature T_M (unit density, zero velocity).
inline std::vector<double> reference_maxwellian(const VelocityGrid& vg, double T_M) {
    if (!(T_M > 0.0)) throw std::invalid_argument("reference_maxwellian: T_M must be positive");
    std::vector<double> out(vg.total());
    maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, T_M, out.data());
    return out;
}

/// T_M selection policy: three quarters of the coldest local temperature.
inline double reference_temperature(const FluidState& fluid) {
    double tmin = fluid.T.empty() ? 1.0 : fluid.T[0];
    for (double t : fluid.T) tmin = std::min(tmin, t);
    if (!(tmin > 0.0)) throw std::invalid_argument("reference_temperature: nonpositive temperature");
    return 0.75 * tmin;
}

/// Sandwich-bound diagnostics c1 * mu_M <= mu <= c2 * mu_M^alpha together
/// with the two-sided temperature condition T_M < T < 2 T_M.
struct MaxwellBounds {
    double T_M = 0.0;
    double alpha = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double t_min = 0.0;
    double t_max = 0.0;
    bool pass = false;
};

inline MaxwellBounds check_bounds(const FluidState& fluid, const VelocityGrid& vg, double T_M) {
    if (!(T_M > 0.0)) throw std::invalid_argument("check_bounds: T_M must be positive");
    MaxwellBounds b;
    b.T_M = T_M;
    b.t_min = *std::min_element(fluid.T.begin(), fluid.T.end());
    b.t_max = *std::max_element(fluid.T.begin(), fluid.T.end());
    b.pass = (T_M < b.t_min) && (b.t_max < 2.0 * T_M);

    const std::vector<double> mu_m = reference_maxwellian(vg, T_M);
    const Distribution mu = maxwellian(fluid, vg);
    const int nv = vg.total();
    const int n = vg.n;

    b.c1 = std::numeric_limits<double>::infinity();
    for (int ix = 0; ix < fluid.grid.total(); ++ix) {
        const double* f = mu.slab(ix);
        for (int iv = 0; iv < nv; ++iv) b.c1 = std::min(b.c1, f[iv] / mu_m[iv]);
    }

    // Smallest exponent alpha in (1/2, 1) whose witnessed constant stays
    // moderate and is attained away from the grid boundary; an exponent past
    // T_M / max T sends the ratio's maximum to the truncation shell.
    auto scan_alpha = [&](double alpha, double& c2, bool& interior) {
        c2 = 0.0;
        interior = true;
        for (int ix = 0; ix < fluid.grid.total(); ++ix) {
            const double* f = mu.slab(ix);
            int best = 0;
            double local = 0.0;
            for (int iv = 0; iv < nv; ++iv) {
                const double r = f[iv] / std::pow(mu_m[iv], alpha);
                if (r > local) {
                    local = r;
                    best = iv;
                }
            }
            const int i0 = best / (n * n), i1 = (best / n) % n, i2 = best % n;
            const bool edge = (i0 == 0 || i0 == n - 1 || i1 == 0 || i1 == n - 1 || i2 == 0 || i2 == n - 1);
            if (edge) interior = false;
            c2 = std::max(c2, local);
        }
    };

    double c2_floor = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, double>> admissible;  // (alpha, c2)
    for (int k = 1; k <= 48; ++k) {
        const double alpha = 0.5 + 0.01 * k;
        double c2 = 0.0;
        bool interior = false;
        scan_alpha(alpha, c2, interior);
        c2_floor = std::min(c2_floor, c2);
        if (interior) admissible.emplace_back(alpha, c2);
    }
    b.alpha = 0.0;
    for (auto& [alpha, c2] : admissible) {
        if (c2 <= 10.0 * c2_floor) {
            b.alpha = alpha;
            b.c2 = c2;
            break;
        }
    }
    if (b.alpha == 0.0) {
        b.pass = false;
        b.alpha = 0.51;
        bool interior = false;
        scan_alpha(b.alpha, b.c2, interior);
    }
    return b;
}

/// Limit profile G = { sigma + v.u + (|v|^2 - 3)/2 theta } mu0.
inline Distribution limit_profile_G(const AcousticState& ac, const VelocityGrid& vg) {
    Distribution d = Distribution::zeros(ac.grid, vg);
    const std::vector<double> mu0 = global_maxwellian(vg);
    const int n = vg.n;
    for (int ix = 0; ix < ac.grid.total(); ++ix) {
        double* out = d.slab(ix);
        const double s = ac.sigma[ix];
        const double u0 = ac.u[0][ix], u1 = ac.u[1][ix], u2 = ac.u[2][ix];
        const double th = ac.theta[ix];
        int iv = 0;
        for (int i0 = 0; i0 < n; ++i0) {
            const double v0 = vg.node(i0);
            for (int i1 = 0; i1 < n; ++i1) {
                const double v1 = vg.node(i1);
                for (int i2 = 0; i2 < n; ++i2, ++iv) {
                    const double v2 = vg.node(i2);
                    const double vv = v0 * v0 + v1 * v1 + v2 * v2;
                    const double poly = s + v0 * u0 + v1 * u1 + v2 * u2 + 0.5 * (vv - 3.0) * th;
                    out[iv] = poly * mu0[iv];
                }
            }
        }
    }
    return d;
}

/// First two z-derivatives of the Maxwellian family built from the quadratic
/// field jet rho(z) = 1 + z s + z^2 s_d, u(z) = z u + z^2 u_d,
/// T(z) = 1 + z th + z^2 th_d.
struct MaxwellianJet {
    Distribution mu;
    Distribution dmu;
    Distribution d2mu;
};

inline MaxwellianJet mu_z_jet(const AcousticState& ac, const DifferenceState& diff, double z,
                              const VelocityGrid& vg) {
    if (ac.grid != diff.grid)
        throw std::invalid_argument("mu_z_jet: acoustic and difference fields on different grids");
    MaxwellianJet jet{Distribution::zeros(ac.grid, vg), Distribution::zeros(ac.grid, vg),
                      Distribution::zeros(ac.grid, vg)};
    const int n = vg.n;
    for (int ix = 0; ix < ac.grid.total(); ++ix) {
        const double s = ac.sigma[ix], sd = diff.sigma_d[ix];
        const double th = ac.theta[ix], thd = diff.theta_d[ix];
        const double rho = 1.0 + z * s + z * z * sd;
        const double T = 1.0 + z * th + z * z * thd;
        if (!(rho > 0.0) || !(T > 0.0))
            throw std::invalid_argument("mu_z_jet: jet leaves the positive (rho, T) region at node " +
                                        std::to_string(ix));
        std::array<double, 3> u, up, upp;
        for (int d = 0; d < 3; ++d) {
            const double a = ac.u[d][ix], b = diff.u_d[d][ix];
            u[d] = z * a + z * z * b;
            up[d] = a + 2.0 * z * b;
            upp[d] = 2.0 * b;
        }
        const double rp = s + 2.0 * z * sd, rpp = 2.0 * sd;
        const double Tp = th + 2.0 * z * thd, Tpp = 2.0 * thd;

        maxwellian_slab(vg, rho, u, T, jet.mu.slab(ix));
        double* dmu = jet.dmu.slab(ix);
        double* d2mu = jet.d2mu.slab(ix);
        const double* mu = jet.mu.slab(ix);

        const double up2 = up[0] * up[0] + up[1] * up[1] + up[2] * up[2];
        int iv = 0;
        for (int i0 = 0; i0 < n; ++i0) {
            const double c0 = vg.node(i0) - u[0];
            for (int i1 = 0; i1 < n; ++i1) {
                const double c1 = vg.node(i1) - u[1];
                for (int i2 = 0; i2 < n; ++i2, ++iv) {
                    const double c2 = vg.node(i2) - u[2];
                    const double cc = c0 * c0 + c1 * c1 + c2 * c2;
                    const double cu = c0 * up[0] + c1 * up[1] + c2 * up[2];
                    const double D = rp / rho - 1.5 * Tp / T + cu / T + cc * Tp / (2.0 * T * T);
                    const double cupp = c0 * (upp[0] / T - 2.0 * Tp * up[0] / (T * T)) +
                                        c1 * (upp[1] / T - 2.0 * Tp * up[1] / (T * T)) +
                                        c2 * (upp[2] / T - 2.0 * Tp * up[2] / (T * T));
                    const double Dp = rpp / rho - rp * rp / (rho * rho) - 1.5 * Tpp / T +
                                      1.5 * Tp * Tp / (T * T) - up2 / T + cupp +
                                      cc * (Tpp / (2.0 * T * T) - Tp * Tp / (T * T * T));
                    dmu[iv] = D * mu[iv];
                    d2mu[iv] = (Dp + D * D) * mu[iv];
                }
            }
        }
    }
    return jet;
}

/// Defect of the first-order Maxwellian expansion: mu^delta - mu0 - delta G.
inline Distribution expansion_defect(const FluidState& euler, const AcousticState& acoustic,
                                     double delta, const VelocityGrid& vg) {
    if (euler.grid != acoustic.grid)
        throw std::invalid_argument("expansion_defect: fluid and acoustic states on different grids");
    Distribution defect = maxwellian(euler, vg);
    const Distribution g = limit_profile_G(acoustic, vg);
    const std::vector<double> mu0 = global_maxwellian(vg);
    const int nv = vg.total();
    for (int ix = 0; ix < euler.grid.total(); ++ix) {
        double* out = defect.slab(ix);
        const double* gf = g.slab(ix);
        for (int iv = 0; iv < nv; ++iv) out[iv] -= mu0[iv] + delta * gf[iv];
    }
    return defect;
}

}  // namespace kinlab
