#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "kinlab/fields.hpp"
#include "kinlab/grid.hpp"
#include "kinlab/maxwellian.hpp"

namespace kinlab {

/// Collision kernel parameters: potential exponent gamma in (-3, 1] and the
/// product sphere quadrature (midpoint in cos(polar) x azimuth). The angular
/// factor is fixed to the cutoff form B(theta) = |cos theta|.
struct KernelConfig {
    double gamma = 1.0;
    int n_polar = 4;
    int n_azimuth = 8;
};

inline void validate_kernel(const KernelConfig& k) {
    if (!(k.gamma > -3.0) || !(k.gamma <= 1.0))
        throw std::invalid_argument("kernel: gamma must lie in (-3, 1]");
    if (k.n_polar < 4 || k.n_azimuth < 8)
        throw std::invalid_argument("kernel: sphere quadrature must be at least 4 x 8");
    if (k.n_polar % 2 != 0 || k.n_azimuth % 2 != 0)
        throw std::invalid_argument("kernel: sphere quadrature sizes must be even");
}

namespace collision_detail {

struct SphereNode {
    std::array<double, 3> w;  // direction
    double weight;            // carries the antipodal factor 2
};

/// Midpoint rule on the upper hemisphere with doubled weights. Equivalent to
/// the full antipodally symmetric rule because the post-collision velocities
/// and the angular factor are even in omega.
inline std::vector<SphereNode> hemisphere_nodes(const KernelConfig& k) {
    std::vector<SphereNode> nodes;
    const double wq = (2.0 / k.n_polar) * (kTwoPi / k.n_azimuth) * 2.0;
    for (int i = 0; i < k.n_polar; ++i) {
        const double mu = -1.0 + (i + 0.5) * 2.0 / k.n_polar;
        if (mu <= 0.0) continue;
        const double smu = std::sqrt(std::max(0.0, 1.0 - mu * mu));
        for (int j = 0; j < k.n_azimuth; ++j) {
            const double phi = (j + 0.5) * kTwoPi / k.n_azimuth;
            nodes.push_back({{smu * std::cos(phi), smu * std::sin(phi), mu}, wq});
        }
    }
    return nodes;
}

/// Velocity nodes inside the ball |v| <= v_max; collision sums run over the
/// ball, matching the truncated operator.
struct BallNode {
    int idx;
    std::array<double, 3> v;
    double v2;
};

inline std::vector<BallNode> ball_nodes(const VelocityGrid& vg) {
    std::vector<BallNode> nodes;
    const double r2 = vg.v_max * vg.v_max;
    const int n = vg.n;
    int iv = 0;
    for (int i0 = 0; i0 < n; ++i0)
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2, ++iv) {
                const std::array<double, 3> v{vg.node(i0), vg.node(i1), vg.node(i2)};
                const double v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                if (v2 <= r2) nodes.push_back({iv, v, v2});
            }
    return nodes;
}

/// Trilinear interpolation with zero extension outside the ball and the node
/// hull.
inline double interp_ball(const VelocityGrid& vg, const double* f, double p0, double p1,
                          double p2) {
    if (p0 * p0 + p1 * p1 + p2 * p2 > vg.v_max * vg.v_max) return 0.0;
    const double inv_h = 1.0 / vg.h();
    const double s0 = (p0 + vg.v_max) * inv_h - 0.5;
    const double s1 = (p1 + vg.v_max) * inv_h - 0.5;
    const double s2 = (p2 + vg.v_max) * inv_h - 0.5;
    const int b0 = static_cast<int>(std::floor(s0));
    const int b1 = static_cast<int>(std::floor(s1));
    const int b2 = static_cast<int>(std::floor(s2));
    const double x0 = s0 - b0, x1 = s1 - b1, x2 = s2 - b2;
    const int n = vg.n;
    double acc = 0.0;
    for (int d0 = 0; d0 < 2; ++d0) {
        const int i0 = b0 + d0;
        if (i0 < 0 || i0 >= n) continue;
        const double w0 = d0 ? x0 : 1.0 - x0;
        for (int d1 = 0; d1 < 2; ++d1) {
            const int i1 = b1 + d1;
            if (i1 < 0 || i1 >= n) continue;
            const double w01 = w0 * (d1 ? x1 : 1.0 - x1);
            for (int d2 = 0; d2 < 2; ++d2) {
                const int i2 = b2 + d2;
                if (i2 < 0 || i2 >= n) continue;
                acc += w01 * (d2 ? x2 : 1.0 - x2) * f[(i0 * n + i1) * n + i2];
            }
        }
    }
    return acc;
}

}  // namespace collision_detail

/// Bilinear collision operator Q(F1, F2) on one velocity slab: midpoint sums
/// over ball nodes and sphere nodes, gain term evaluated by trilinear
/// interpolation at the post-collision velocities. Cost is
/// O(n_v^3 * |ball| * n_sphere); callers cap the grids.
inline void collide_Q(const VelocityGrid& vg, const KernelConfig& kc, const double* F1,
                      const double* F2, double* out) {
    validate_kernel(kc);
    const auto sph = collision_detail::hemisphere_nodes(kc);
    const auto ball = collision_detail::ball_nodes(vg);
    const double wu = vg.weight();
    const int n = vg.n;
    const bool unit_gamma = kc.gamma == 1.0;

    int iv = 0;
    for (int i0 = 0; i0 < n; ++i0) {
        for (int i1 = 0; i1 < n; ++i1) {
            for (int i2 = 0; i2 < n; ++i2, ++iv) {
                const double v0 = vg.node(i0), v1 = vg.node(i1), v2 = vg.node(i2);
                const double f2v = F2[iv];
                double acc = 0.0;
                for (const auto& un : ball) {
                    const double d0 = v0 - un.v[0], d1 = v1 - un.v[1], d2 = v2 - un.v[2];
                    const double r2 = d0 * d0 + d1 * d1 + d2 * d2;
                    if (r2 == 0.0) continue;
                    const double r = std::sqrt(r2);
                    const double rg = unit_gamma ? r : std::pow(r, kc.gamma);
                    const double loss_f = F1[un.idx] * f2v;
                    const double pref = wu * rg / r;  // |cos theta| = |s| / r folded below
                    for (const auto& om : sph) {
                        const double s = d0 * om.w[0] + d1 * om.w[1] + d2 * om.w[2];
                        const double kern = pref * om.weight * std::abs(s);
                        if (kern == 0.0) continue;
                        const double g1 = collision_detail::interp_ball(
                            vg, F1, un.v[0] + s * om.w[0], un.v[1] + s * om.w[1],
                            un.v[2] + s * om.w[2]);
                        double gain = 0.0;
                        if (g1 != 0.0)
                            gain = g1 * collision_detail::interp_ball(vg, F2, v0 - s * om.w[0],
                                                                      v1 - s * om.w[1],
                                                                      v2 - s * om.w[2]);
                        acc += kern * (gain - loss_f);
                    }
                }
                out[iv] = acc;
            }
        }
    }
}

/// Collision frequency nu(v) of a local Maxwellian with the same ball x sphere
/// quadrature as the loss term of collide_Q.
inline std::vector<double> collision_frequency(const VelocityGrid& vg, const KernelConfig& kc,
                                               double rho, const std::array<double, 3>& u,
                                               double T) {
    validate_kernel(kc);
    const auto sph = collision_detail::hemisphere_nodes(kc);
    const auto ball = collision_detail::ball_nodes(vg);
    const double wu = vg.weight();
    const int n = vg.n;
    const bool unit_gamma = kc.gamma == 1.0;
    std::vector<double> mu(vg.total());
    maxwellian_slab(vg, rho, u, T, mu.data());
    std::vector<double> nu(vg.total(), 0.0);
    int iv = 0;
    for (int i0 = 0; i0 < n; ++i0)
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2, ++iv) {
                const double v0 = vg.node(i0), v1 = vg.node(i1), v2 = vg.node(i2);
                double acc = 0.0;
                for (const auto& un : ball) {
                    const double d0 = v0 - un.v[0], d1 = v1 - un.v[1], d2 = v2 - un.v[2];
                    const double r2 = d0 * d0 + d1 * d1 + d2 * d2;
                    if (r2 == 0.0) continue;
                    const double r = std::sqrt(r2);
                    const double rg = unit_gamma ? r : std::pow(r, kc.gamma);
                    double bsum = 0.0;
                    for (const auto& om : sph)
                        bsum += om.weight * std::abs(d0 * om.w[0] + d1 * om.w[1] + d2 * om.w[2]);
                    acc += mu[un.idx] * rg / r * bsum;
                }
                nu[iv] = wu * acc;
            }
    return nu;
}

/// Linearized operator applied through the quadrature of collide_Q:
///   L g = -(1/W) { Q(mu, W g) + Q(W g, mu) },
/// where W is the conjugation weight. By default W = sqrt(mu); passing
/// conj_T > 0 conjugates by the centered reference sqrt(mu_M) with
/// temperature conj_T instead, the operator acting on fluctuations measured
/// against a global reference.
class LinearizedL {
public:
    LinearizedL(const VelocityGrid& vg, const KernelConfig& kc, double rho,
                const std::array<double, 3>& u, double T, double conj_T = 0.0)
        : vg_(vg), kc_(kc) {
        validate_kernel(kc);
        const int nv = vg.total();
        mu_.resize(nv);
        maxwellian_slab(vg, rho, u, T, mu_.data());
        conj_.resize(nv);
        if (conj_T > 0.0) {
            std::vector<double> mm(nv);
            maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, conj_T, mm.data());
            for (int i = 0; i < nv; ++i) conj_[i] = std::sqrt(mm[i]);
        } else {
            for (int i = 0; i < nv; ++i) conj_[i] = std::sqrt(mu_[i]);
        }
    }

    std::vector<double> apply(const std::vector<double>& g) const {
        if (g.size() != mu_.size())
            throw std::invalid_argument("linearized_L: argument size does not match velocity grid");
        const int nv = vg_.total();
        std::vector<double> wg(nv), q1(nv), q2(nv), out(nv);
        for (int i = 0; i < nv; ++i) wg[i] = conj_[i] * g[i];
        collide_Q(vg_, kc_, mu_.data(), wg.data(), q1.data());
        collide_Q(vg_, kc_, wg.data(), mu_.data(), q2.data());
        for (int i = 0; i < nv; ++i) out[i] = -(q1[i] + q2[i]) / conj_[i];
        return out;
    }

    const std::vector<double>& mu() const { return mu_; }
    const std::vector<double>& weight() const { return conj_; }

private:
    VelocityGrid vg_;
    KernelConfig kc_;
    std::vector<double> mu_;
    std::vector<double> conj_;  // conjugation weight
};

/// Orthogonal projection onto span{ sqrt(mu), v sqrt(mu), |v|^2 sqrt(mu) } in
/// the quadrature inner product.
class ProjectorP {
public:
    ProjectorP(const VelocityGrid& vg, const std::vector<double>& sqrt_mu) : vg_(vg) {
        const int nv = vg.total();
        if (sqrt_mu.size() != static_cast<std::size_t>(nv))
            throw std::invalid_argument("project_P: sqrt_mu size does not match velocity grid");
        basis_.assign(5, std::vector<double>(nv));
        const int n = vg.n;
        int iv = 0;
        for (int i0 = 0; i0 < n; ++i0)
            for (int i1 = 0; i1 < n; ++i1)
                for (int i2 = 0; i2 < n; ++i2, ++iv) {
                    const double v0 = vg.node(i0), v1 = vg.node(i1), v2 = vg.node(i2);
                    const double s = sqrt_mu[iv];
                    basis_[0][iv] = s;
                    basis_[1][iv] = v0 * s;
                    basis_[2][iv] = v1 * s;
                    basis_[3][iv] = v2 * s;
                    basis_[4][iv] = (v0 * v0 + v1 * v1 + v2 * v2) * s;
                }
        const double w = vg.weight();
        for (int k = 0; k < 5; ++k) {
            for (int j = 0; j < k; ++j) {
                double d = 0.0;
                for (int i = 0; i < nv; ++i) d += basis_[j][i] * basis_[k][i];
                d *= w;
                for (int i = 0; i < nv; ++i) basis_[k][i] -= d * basis_[j][i];
            }
            double nrm = 0.0;
            for (int i = 0; i < nv; ++i) nrm += basis_[k][i] * basis_[k][i];
            nrm = std::sqrt(nrm * w);
            if (!(nrm > 0.0)) throw std::runtime_error("project_P: degenerate moment basis");
            for (int i = 0; i < nv; ++i) basis_[k][i] /= nrm;
        }
    }

    std::vector<double> apply(const std::vector<double>& g) const {
        const int nv = vg_.total();
        if (g.size() != static_cast<std::size_t>(nv))
            throw std::invalid_argument("project_P: argument size does not match velocity grid");
        std::vector<double> out(nv, 0.0);
        const double w = vg_.weight();
        for (int k = 0; k < 5; ++k) {
            double c = 0.0;
            for (int i = 0; i < nv; ++i) c += basis_[k][i] * g[i];
            c *= w;
            for (int i = 0; i < nv; ++i) out[i] += c * basis_[k][i];
        }
        return out;
    }

    /// k-th orthonormal direction (weighted norm 1).
    const std::vector<double>& orthonormal_basis(int k) const { return basis_.at(k); }

private:
    VelocityGrid vg_;
    std::vector<std::vector<double>> basis_;
};

// ---------------------------------------------------------------------------
// dense assembly of L through its quadratic form
// ---------------------------------------------------------------------------

/// Dense symmetric matrix of L assembled from
///   <Lg, g> = 1/4 sum_{v,u,omega} B r^gamma mu(u) mu(v) [ br(g/sqrt(mu)) ]^2,
///   br(phi) = phi(v) + phi(u) - phi(u') - phi(v').
/// Off-node values of phi use trilinear interpolation plus one
/// second-difference correction per axis, which reproduces every quadratic
/// exactly. The five collision invariants are therefore annihilated to
/// rounding and the matrix is positive semidefinite with a machine-exact
/// 5-dimensional null space.
///
/// The matrix is indexed by the nodes of the ball |v| <= v_max, the honest
/// domain of the truncated operator. Cube nodes outside the ball would enter
/// only through interpolation stencils, where the 1/sqrt(mu) conversion blows
/// the entries up and plants spurious weakly coupled directions next to the
/// null space. Quadrature points whose stencils leave the ball and pairs with
/// negligible Gaussian weight are dropped; both are plain reweightings of a
/// sum of squares, so the structure survives.
class DenseL {
public:
    DenseL(const VelocityGrid& vg, const KernelConfig& kc, double rho,
           const std::array<double, 3>& ubar, double T, double prune_exponent = 60.0)
        : vg_(vg) {
        validate_kernel(kc);
        const int nv = vg.total();
        if (nv > 20 * 20 * 20)
            throw std::invalid_argument(
                "dense assembly: velocity grid too large for a dense matrix (use the "
                "operator route or the relaxation model)");
        mu_.resize(nv);
        maxwellian_slab(vg, rho, ubar, T, mu_.data());
        std::vector<double> inv_sqrt_mu(nv);
        for (int i = 0; i < nv; ++i) inv_sqrt_mu[i] = 1.0 / std::sqrt(mu_[i]);

        const auto sph = collision_detail::hemisphere_nodes(kc);
        ball_ = collision_detail::ball_nodes(vg);
        const auto& ball = ball_;
        ordinal_.assign(nv, -1);
        for (std::size_t i = 0; i < ball.size(); ++i) ordinal_[ball[i].idx] = static_cast<int>(i);
        const int N = static_cast<int>(ball.size());
        M_ = Eigen::MatrixXd::Zero(N, N);
        nu_form_ = Eigen::VectorXd::Zero(N);

        const double wu = vg.weight();
        const bool unit_gamma = kc.gamma == 1.0;
        const double two_T = 2.0 * T;
        double* Md = M_.data();  // column-major

        std::vector<Entry> raw(40), merged(40);
        const std::size_t nball = ball.size();

        for (std::size_t a = 0; a < nball; ++a) {
            const auto& vn = ball[a];
            const double dv0 = vn.v[0] - ubar[0], dv1 = vn.v[1] - ubar[1], dv2 = vn.v[2] - ubar[2];
            const double vdist2 = dv0 * dv0 + dv1 * dv1 + dv2 * dv2;
            for (std::size_t b = a + 1; b < nball; ++b) {
                const auto& un = ball[b];
                const double du0 = un.v[0] - ubar[0], du1 = un.v[1] - ubar[1],
                             du2 = un.v[2] - ubar[2];
                if ((vdist2 + du0 * du0 + du1 * du1 + du2 * du2) / two_T > prune_exponent)
                    continue;
                const double e0 = vn.v[0] - un.v[0], e1 = vn.v[1] - un.v[1],
                             e2 = vn.v[2] - un.v[2];
                const double r2 = e0 * e0 + e1 * e1 + e2 * e2;
                const double r = std::sqrt(r2);
                const double rg = unit_gamma ? r : std::pow(r, kc.gamma);
                // unordered pair factor 2 against the 1/4 of the form
                const double pair_w = 0.5 * wu * wu * (rg / r) * mu_[vn.idx] * mu_[un.idx];
                for (const auto& om : sph) {
                    const double s = e0 * om.w[0] + e1 * om.w[1] + e2 * om.w[2];
                    const double kern = pair_w * om.weight * std::abs(s);
                    if (kern == 0.0) continue;
                    int ne = 0;
                    raw[ne++] = {ordinal_[vn.idx], inv_sqrt_mu[vn.idx]};
                    raw[ne++] = {ordinal_[un.idx], inv_sqrt_mu[un.idx]};
                    if (!push_stencil(un.v[0] + s * om.w[0], un.v[1] + s * om.w[1],
                                      un.v[2] + s * om.w[2], inv_sqrt_mu, raw, ne))
                        continue;
                    if (!push_stencil(vn.v[0] - s * om.w[0], vn.v[1] - s * om.w[1],
                                      vn.v[2] - s * om.w[2], inv_sqrt_mu, raw, ne))
                        continue;
                    std::sort(raw.begin(), raw.begin() + ne,
                              [](const Entry& x, const Entry& y) { return x.idx < y.idx; });
                    int nm = 0;
                    for (int i = 0; i < ne; ++i) {
                        if (nm > 0 && merged[nm - 1].idx == raw[i].idx)
                            merged[nm - 1].c += raw[i].c;
                        else
                            merged[nm++] = raw[i];
                    }
                    for (int i = 0; i < nm; ++i) {
                        const double ci = kern * merged[i].c;
                        double* col_base = Md + static_cast<std::ptrdiff_t>(merged[i].idx) * N;
                        for (int j = 0; j <= i; ++j) col_base[merged[j].idx] += ci * merged[j].c;
                    }
                    // collision frequency of the retained points; kern holds
                    // 0.5 wu^2 B mu(v) mu(u), so divide one weight and one
                    // Gaussian back out per endpoint
                    nu_form_(ordinal_[vn.idx]) += kern / (0.5 * wu * mu_[vn.idx]);
                    nu_form_(ordinal_[un.idx]) += kern / (0.5 * wu * mu_[un.idx]);
                }
            }
        }
        // mirror the accumulated upper triangle
        for (int j = 0; j < N; ++j)
            for (int i = j + 1; i < N; ++i) M_(i, j) = M_(j, i);
        // operator matrix in the uniform-weight inner product
        M_ /= wu;
    }

    /// Symmetric PSD operator matrix over the ball nodes.
    const Eigen::MatrixXd& matrix() const { return M_; }
    /// Ball nodes in matrix order.
    const std::vector<collision_detail::BallNode>& nodes() const { return ball_; }
    int ball_size() const { return static_cast<int>(ball_.size()); }
    /// Full-cube local Maxwellian used for the assembly.
    const std::vector<double>& mu() const { return mu_; }
    /// Collision frequency of the retained quadrature points, ball-ordered.
    /// Near the ball boundary this is smaller than the full loss integral
    /// because points whose stencils leave the ball are dropped from the form;
    /// pairing the form with this nu keeps the coercivity quotient balanced.
    const Eigen::VectorXd& nu_form() const { return nu_form_; }

    /// Ball-ordered coefficients of a cube field.
    Eigen::VectorXd restrict_to_ball(const double* cube) const {
        Eigen::VectorXd out(ball_.size());
        for (std::size_t i = 0; i < ball_.size(); ++i) out[static_cast<int>(i)] = cube[ball_[i].idx];
        return out;
    }

    /// Cube field from ball coefficients, zero outside the ball.
    std::vector<double> extend_from_ball(const Eigen::VectorXd& b) const {
        std::vector<double> out(vg_.total(), 0.0);
        for (std::size_t i = 0; i < ball_.size(); ++i) out[ball_[i].idx] = b[static_cast<int>(i)];
        return out;
    }

private:
    struct Entry {
        int idx;  // ball ordinal
        double c;
    };

    /// Quadratic-exact stencil for one evaluation point: 8 trilinear corners
    /// plus a second-difference correction line per axis (11 distinct nodes).
    /// Coefficients carry the minus sign of the bracket and the pointwise
    /// 1/sqrt(mu) conversion to nodal coordinates. Returns false when the
    /// point or any stencil node leaves the ball.
    bool push_stencil(double p0, double p1, double p2, const std::vector<double>& inv_sqrt_mu,
                      std::vector<Entry>& ent, int& ne) const {
        const VelocityGrid& vg = vg_;
        if (p0 * p0 + p1 * p1 + p2 * p2 > vg.v_max * vg.v_max) return false;
        const double inv_h = 1.0 / vg.h();
        const double s0 = (p0 + vg.v_max) * inv_h - 0.5;
        const double s1 = (p1 + vg.v_max) * inv_h - 0.5;
        const double s2 = (p2 + vg.v_max) * inv_h - 0.5;
        const int b0 = static_cast<int>(std::floor(s0));
        const int b1 = static_cast<int>(std::floor(s1));
        const int b2 = static_cast<int>(std::floor(s2));
        const int n = vg.n;
        if (b0 < 1 || b0 > n - 2 || b1 < 1 || b1 > n - 2 || b2 < 1 || b2 > n - 2) return false;
        const double x0 = s0 - b0, x1 = s1 - b1, x2 = s2 - b2;
        const int base = (b0 * n + b1) * n + b2;
        const int st0 = n * n, st1 = n, st2 = 1;
        const int ne_in = ne;
        const double w0[2] = {1.0 - x0, x0};
        const double w1[2] = {1.0 - x1, x1};
        const double w2[2] = {1.0 - x2, x2};
        for (int d0 = 0; d0 < 2; ++d0)
            for (int d1 = 0; d1 < 2; ++d1)
                for (int d2 = 0; d2 < 2; ++d2) {
                    const int idx = base + d0 * st0 + d1 * st1 + d2 * st2;
                    const int ord = ordinal_[idx];
                    if (ord < 0) {
                        ne = ne_in;
                        return false;
                    }
                    ent[ne++] = {ord, -w0[d0] * w1[d1] * w2[d2] * inv_sqrt_mu[idx]};
                }
        // correction per axis: -(xi (1 - xi) / 2) (f(-1) - 2 f(0) + f(+1));
        // the stencil enters the bracket with a minus sign, flipping it
        const double q[3] = {0.5 * x0 * (1.0 - x0), 0.5 * x1 * (1.0 - x1),
                             0.5 * x2 * (1.0 - x2)};
        const int strides[3] = {st0, st1, st2};
        for (int d = 0; d < 3; ++d) {
            const double qd = q[d];
            const int idm = base - strides[d];
            const int idp = base + strides[d];
            const int om = ordinal_[idm], ob = ordinal_[base], op = ordinal_[idp];
            if (om < 0 || ob < 0 || op < 0) {
                ne = ne_in;
                return false;
            }
            ent[ne++] = {om, qd * inv_sqrt_mu[idm]};
            ent[ne++] = {ob, -2.0 * qd * inv_sqrt_mu[base]};
            ent[ne++] = {op, qd * inv_sqrt_mu[idp]};
        }
        return true;
    }

    VelocityGrid vg_;
    std::vector<double> mu_;
    std::vector<collision_detail::BallNode> ball_;
    std::vector<int> ordinal_;
    Eigen::MatrixXd M_;
    Eigen::VectorXd nu_form_;
};

/// Spectral summary of the dense operator: top of the spectrum, dimension of
/// the numerical null space, and the coercivity constant
///   c0 = min { <Lg, g> / ||(I - P) g||_nu^2 : g outside the moment subspace }.
struct CoercivityReport {
    double lambda_max = 0.0;
    double null_threshold = 0.0;
    int null_dim = 0;
    double eig_below = 0.0;  // largest eigenvalue under the threshold
    double eig_above = 0.0;  // smallest eigenvalue over the threshold
    double c0 = 0.0;
    double nu_min = 0.0;
    double nu_max = 0.0;
};

inline CoercivityReport measure_coercivity(const VelocityGrid& vg, const KernelConfig& kc,
                                           double rho, const std::array<double, 3>& u, double T,
                                           double null_rel_threshold = 1e-8) {
    DenseL dense(vg, kc, rho, u, T);
    const Eigen::MatrixXd& A = dense.matrix();
    const int N = A.rows();

    CoercivityReport rep;
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
        const Eigen::VectorXd& ev = es.eigenvalues();
        rep.lambda_max = ev(N - 1);
        rep.null_threshold = null_rel_threshold * rep.lambda_max;
        int nd = 0;
        for (int i = 0; i < N; ++i)
            if (ev(i) < rep.null_threshold) ++nd;
        rep.null_dim = nd;
        rep.eig_below = nd > 0 ? ev(nd - 1) : 0.0;
        rep.eig_above = nd < N ? ev(nd) : 0.0;
    }

    // the quotient pairs the truncated form with its own collision frequency
    const Eigen::VectorXd& nu = dense.nu_form();
    rep.nu_min = nu.minCoeff();
    rep.nu_max = nu.maxCoeff();
    if (!(rep.nu_min > 0.0)) {
        // an isolated node (every quadrature point dropped) makes the
        // weighted quotient degenerate; the grid is too coarse to measure c0
        rep.c0 = 0.0;
        return rep;
    }

    // c0 as the smallest eigenvalue of D^{-1/2} A D^{-1/2} over the complement
    // of the moment subspace, D = diag(nu). With z = D^{1/2} g the constraint
    // g perp span{q_k} becomes z perp span{D^{-1/2} q_k}; on the feasible set
    // (I - P) g = g, so the denominator is exactly the D-form. The five
    // constrained directions are shifted far up the spectrum and the smallest
    // eigenvalue of the deflated matrix is the constrained minimum.
    Eigen::VectorXd dsqi(N);
    for (int i = 0; i < N; ++i) dsqi(i) = 1.0 / std::sqrt(nu(i));
    Eigen::MatrixXd At = dsqi.asDiagonal() * A * dsqi.asDiagonal();
    At = 0.5 * (At + At.transpose()).eval();

    std::vector<double> smu(vg.total());
    for (int i = 0; i < vg.total(); ++i) smu[i] = std::sqrt(dense.mu()[i]);
    ProjectorP proj(vg, smu);
    Eigen::MatrixXd V(N, 5);
    for (int k = 0; k < 5; ++k) {
        const Eigen::VectorXd qk = dense.restrict_to_ball(proj.orthonormal_basis(k).data());
        for (int i = 0; i < N; ++i) V(i, k) = qk(i) * dsqi(i);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(V);
    Eigen::MatrixXd Vq = qr.householderQ() * Eigen::MatrixXd::Identity(N, 5);

    const double shift = 10.0 * rep.lambda_max / rep.nu_min;
    Eigen::MatrixXd T1 = At * Vq;  // N x 5
    Eigen::Matrix<double, 5, 5> S = Vq.transpose() * T1;
    At.noalias() -= T1 * Vq.transpose();
    At.noalias() -= Vq * T1.transpose();
    Eigen::Matrix<double, 5, 5> Splus = S + shift * Eigen::Matrix<double, 5, 5>::Identity();
    At.noalias() += Vq * Splus * Vq.transpose();
    At = 0.5 * (At + At.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(At, Eigen::EigenvaluesOnly);
    rep.c0 = es2.eigenvalues()(0);
    return rep;
}

// ---------------------------------------------------------------------------
// compact / tail splitting of the integral part
// ---------------------------------------------------------------------------

/// C^1 cosine taper: 1 on [0, m], 0 beyond 2m.
inline double taper_chi(double r, double m) {
    if (r <= m) return 1.0;
    if (r >= 2.0 * m) return 0.0;
    return 0.5 * (1.0 + std::cos(kPi * (r - m) / m));
}

/// Integral part K of the linearized operator conjugated by a centered
/// reference sqrt(mu_M), around the local Maxwellian mu:
///   (nu - K) f = -(1/sqrt(mu_M)) { Q(mu, sqrt(mu_M) f) + Q(sqrt(mu_M) f, mu) },
///   K f = K2 f - K1 f,
/// up to discretization: here every Gaussian factor is evaluated exactly and
/// only f is interpolated, so the identity holds against the collide_Q route
/// to the shared O(h^2) consistency error, not to rounding.
///   K1 f(v) = int B r^gamma  sqrt(mu_M)(u) mu(v) / sqrt(mu_M)(v)  f(u),
///   K2 f(v) = int B r^gamma [ mu(u') sqrt(mu_M)(v') f(v')
///                           + sqrt(mu_M)(u') mu(v') f(u') ] / sqrt(mu_M)(v).
///
/// Three kernel modes share one sweep: full (no taper), the compact part
/// (kernel times chi_m(|v - u|)) and the tail (kernel times 1 - chi_m).
/// Every evaluation point of the compact part stays within 2m of v.
///
/// The sweep runs over lattice offsets Delta = u - v; per (Delta, omega) the
/// displacement of each evaluation point is fixed, so the Gaussian weight
/// ratios reduce to per-axis tables and the inner loop is exponential-free.
/// Full and tail modes enumerate every offset and are meant for small grids;
/// compact reach is 2m regardless of grid size.
class KOperator {
public:
    enum class Mode { full, compact, tail };

    KOperator(const VelocityGrid& vg, const KernelConfig& kc, double rho,
              const std::array<double, 3>& u, double T, double T_M, double m, Mode mode)
        : vg_(vg), mode_(mode), m_(m) {
        validate_kernel(kc);
        if (!(T_M > 0.0))
            throw std::invalid_argument("K operator: reference temperature must be positive");
        if (mode != Mode::full && !(m > 0.0))
            throw std::invalid_argument("K operator: taper scale must be positive");
        const int nv = vg.total();
        const int n = vg.n;
        mu_.resize(nv);
        maxwellian_slab(vg, rho, u, T, mu_.data());
        std::vector<double> mm(nv);
        maxwellian_slab(vg, 1.0, {0.0, 0.0, 0.0}, T_M, mm.data());
        sqrt_mm_.resize(nv);
        for (int i = 0; i < nv; ++i) sqrt_mm_[i] = std::sqrt(mm[i]);
        k1_pref_.resize(nv);
        for (int i = 0; i < nv; ++i) k1_pref_[i] = mu_[i] / sqrt_mm_[i];

        const auto sph = collision_detail::hemisphere_nodes(kc);
        const double h = vg.h();
        const double wu = vg.weight();
        const bool unit_gamma = kc.gamma == 1.0;

        const double reach = (mode == Mode::compact) ? 2.0 * m : 2.0 * vg.v_max;
        const int koff = std::min(n - 1, static_cast<int>(std::floor(reach / h)) + 1);

        // memory guard: full-range offset tables grow with the offset cube
        {
            const double est = std::pow(2.0 * koff + 1.0, 3.0) * sph.size() *
                               (6.0 * n + 16.0) * 8.0;
            if (est > 1.5e9)
                throw std::invalid_argument(
                    "K operator: offset tables would exceed memory; use a smaller grid for "
                    "full/tail modes or a smaller taper scale");
        }

        const double a_loc = 1.0 / T;    // local Maxwellian exponent scale
        const double a_ref = 0.5 / T_M;  // sqrt-reference exponent scale

        for (int o0 = -koff; o0 <= koff; ++o0)
            for (int o1 = -koff; o1 <= koff; ++o1)
                for (int o2 = -koff; o2 <= koff; ++o2) {
                    if (o0 == 0 && o1 == 0 && o2 == 0) continue;
                    const double D0 = o0 * h, D1 = o1 * h, D2 = o2 * h;
                    const double r2 = D0 * D0 + D1 * D1 + D2 * D2;
                    const double r = std::sqrt(r2);
                    double chi = 1.0;
                    if (mode_ == Mode::compact)
                        chi = taper_chi(r, m);
                    else if (mode_ == Mode::tail)
                        chi = 1.0 - taper_chi(r, m);
                    if (chi == 0.0) continue;
                    const double rg = unit_gamma ? r : std::pow(r, kc.gamma);
                    const double base_kern = wu * chi * rg / r;
                    for (const auto& om : sph) {
                        const double s = -(D0 * om.w[0] + D1 * om.w[1] + D2 * om.w[2]);
                        const double kern = base_kern * om.weight * std::abs(s);
                        if (kern == 0.0) continue;
                        Geom g;
                        g.off = (o0 * n + o1) * n + o2;
                        g.o = {o0, o1, o2};
                        g.kern = kern;
                        // u' = v + a (component of Delta normal to omega),
                        // v' = v + b (component along omega)
                        const double b0 = -s * om.w[0], b1 = -s * om.w[1], b2 = -s * om.w[2];
                        g.a = {D0 - b0, D1 - b1, D2 - b2};
                        g.b = {b0, b1, b2};
                        make_interp(g.a, g.ia);
                        make_interp(g.b, g.ib);
                        const double na2 = g.a[0] * g.a[0] + g.a[1] * g.a[1] + g.a[2] * g.a[2];
                        const double nb2 = g.b[0] * g.b[0] + g.b[1] * g.b[1] + g.b[2] * g.b[2];
                        // term A: mu(v + a) sqrt(mu_M)(v + b)/sqrt(mu_M)(v) f(v + b)
                        // term B: sqrt(mu_M)(v + a)/sqrt(mu_M)(v) mu(v + b) f(v + a)
                        g.constA = std::exp(-0.5 * a_loc * na2 - 0.5 * a_ref * nb2);
                        g.constB = std::exp(-0.5 * a_ref * na2 - 0.5 * a_loc * nb2);
                        g.tabA.resize(3 * n);
                        g.tabB.resize(3 * n);
                        for (int d = 0; d < 3; ++d) {
                            const double ad = g.a[d], bd = g.b[d], ud = u[d];
                            for (int i = 0; i < n; ++i) {
                                const double c = vg.node(i);
                                g.tabA[d * n + i] =
                                    std::exp(-a_loc * (c - ud) * ad - a_ref * c * bd);
                                g.tabB[d * n + i] =
                                    std::exp(-a_ref * c * ad - a_loc * (c - ud) * bd);
                            }
                        }
                        geom_.push_back(std::move(g));
                    }
                }
    }

    std::vector<double> apply(const std::vector<double>& f) const {
        const int nv = vg_.total();
        if (f.size() != static_cast<std::size_t>(nv))
            throw std::invalid_argument("K operator: argument size does not match velocity grid");
        const int n = vg_.n;
        std::vector<double> out(nv, 0.0);
        const double r2max = vg_.v_max * vg_.v_max;
        for (const auto& g : geom_) {
            const double* tA = g.tabA.data();
            const double* tB = g.tabB.data();
            for (int i0 = 0; i0 < n; ++i0) {
                const int j0 = i0 + g.o[0];
                const bool u_ok0 = j0 >= 0 && j0 < n;
                const double v0 = vg_.node(i0);
                const double ta0A = tA[i0], ta0B = tB[i0];
                for (int i1 = 0; i1 < n; ++i1) {
                    const int j1 = i1 + g.o[1];
                    const bool u_ok1 = u_ok0 && j1 >= 0 && j1 < n;
                    const double v1 = vg_.node(i1);
                    const double ta1A = ta0A * tA[n + i1], ta1B = ta0B * tB[n + i1];
                    const int row = (i0 * n + i1) * n;
                    for (int i2 = 0; i2 < n; ++i2) {
                        const int iv = row + i2;
                        const double v2 = vg_.node(i2);
                        double acc = 0.0;
                        if (u_ok1) {
                            const int j2 = i2 + g.o[2];
                            if (j2 >= 0 && j2 < n) {
                                const double u0 = vg_.node(j0), u1 = vg_.node(j1),
                                             u2 = vg_.node(j2);
                                if (u0 * u0 + u1 * u1 + u2 * u2 <= r2max) {
                                    const int ju = iv + g.off;
                                    acc -= k1_pref_[iv] * sqrt_mm_[ju] * f[ju];
                                }
                            }
                        }
                        const double fb = gather(f, g.ib, i0, i1, i2, v0, v1, v2, g.b, r2max);
                        if (fb != 0.0) acc += mu_[iv] * g.constA * ta1A * tA[2 * n + i2] * fb;
                        const double fa = gather(f, g.ia, i0, i1, i2, v0, v1, v2, g.a, r2max);
                        if (fa != 0.0) acc += mu_[iv] * g.constB * ta1B * tB[2 * n + i2] * fa;
                        out[iv] += g.kern * acc;
                    }
                }
            }
        }
        return out;
    }

    const std::vector<double>& mu() const { return mu_; }

private:
    struct Interp {
        std::array<int, 3> base_off;  // node offset of the low corner
        std::array<double, 3> frac;   // interpolation fractions
    };

    struct Geom {
        int off = 0;
        std::array<int, 3> o{};
        double kern = 0.0;
        std::array<double, 3> a{}, b{};
        double constA = 0.0, constB = 0.0;
        std::vector<double> tabA, tabB;  // 3 axes x n
        Interp ia, ib;
    };

    void make_interp(const std::array<double, 3>& disp, Interp& out) const {
        const double inv_h = 1.0 / vg_.h();
        for (int d = 0; d < 3; ++d) {
            const double s = disp[d] * inv_h;
            const double fl = std::floor(s);
            out.base_off[d] = static_cast<int>(fl);
            out.frac[d] = s - fl;
        }
    }

    /// Trilinear gather of f at v + disp with zero extension outside the ball
    /// and the cube. The stencil base moves rigidly with v.
    double gather(const std::vector<double>& f, const Interp& ip, int i0, int i1, int i2,
                  double v0, double v1, double v2, const std::array<double, 3>& disp,
                  double r2max) const {
        const double p0 = v0 + disp[0], p1 = v1 + disp[1], p2 = v2 + disp[2];
        if (p0 * p0 + p1 * p1 + p2 * p2 > r2max) return 0.0;
        const int n = vg_.n;
        const int b0 = i0 + ip.base_off[0];
        const int b1 = i1 + ip.base_off[1];
        const int b2 = i2 + ip.base_off[2];
        const double x0 = ip.frac[0], x1 = ip.frac[1], x2 = ip.frac[2];
        double acc = 0.0;
        for (int d0 = 0; d0 < 2; ++d0) {
            const int k0 = b0 + d0;
            if (k0 < 0 || k0 >= n) continue;
            const double w0 = d0 ? x0 : 1.0 - x0;
            for (int d1 = 0; d1 < 2; ++d1) {
                const int k1 = b1 + d1;
                if (k1 < 0 || k1 >= n) continue;
                const double w01 = w0 * (d1 ? x1 : 1.0 - x1);
                for (int d2 = 0; d2 < 2; ++d2) {
                    const int k2 = b2 + d2;
                    if (k2 < 0 || k2 >= n) continue;
                    acc += w01 * (d2 ? x2 : 1.0 - x2) * f[(k0 * n + k1) * n + k2];
                }
            }
        }
        return acc;
    }

    VelocityGrid vg_;
    Mode mode_;
    double m_;
    std::vector<double> mu_, sqrt_mm_, k1_pref_;
    std::vector<Geom> geom_;
};

// ---------------------------------------------------------------------------
// moment-matched Maxwellian (relaxation collision model)
// ---------------------------------------------------------------------------

/// Parameters of the grid Maxwellian whose quadrature moments match a target.
struct MatchedMaxwellian {
    double rho = 1.0;
    std::array<double, 3> u{0.0, 0.0, 0.0};
    double T = 1.0;
    int iterations = 0;
    double residual = 0.0;
};

/// Newton solve for (rho, u, T) such that the discrete moments of the grid
/// Maxwellian equal the target. The sums factor per axis, so one iteration
/// costs O(n) exponentials. Throws when the target is not realizable
/// (nonpositive mass or temperature estimate) or the iteration stalls.
inline MatchedMaxwellian match_maxwellian(const VelocityGrid& vg, const Moments5& target,
                                          const MatchedMaxwellian* warm = nullptr,
                                          double tol = 1e-13, int max_iter = 60) {
    if (!(target.m0 > 0.0)) throw std::invalid_argument("match_maxwellian: nonpositive mass");
    MatchedMaxwellian p;
    if (warm) {
        p = *warm;
    } else {
        p.rho = target.m0;
        for (int d = 0; d < 3; ++d) p.u[d] = target.m1[d] / target.m0;
        const double uu = p.u[0] * p.u[0] + p.u[1] * p.u[1] + p.u[2] * p.u[2];
        p.T = (target.m2 / target.m0 - uu) / 3.0;
    }
    if (!(p.T > 0.0))
        throw std::invalid_argument("match_maxwellian: nonpositive temperature estimate");

    const int n = vg.n;
    const double h = vg.h();
    const double scale = std::max(std::abs(target.m0), std::abs(target.m2));

    Eigen::Matrix<double, 5, 1> R;
    Eigen::Matrix<double, 5, 5> J;
    for (int it = 1; it <= max_iter; ++it) {
        double A[3], B[3], C[3], D3[3], E4[3];
        for (int d = 0; d < 3; ++d) {
            double sA = 0, sB = 0, sC = 0, sD = 0, sE = 0;
            for (int i = 0; i < n; ++i) {
                const double c = vg.node(i) - p.u[d];
                const double g = std::exp(-0.5 * c * c / p.T);
                const double c2 = c * c;
                sA += g;
                sB += c * g;
                sC += c2 * g;
                sD += c2 * c * g;
                sE += c2 * c2 * g;
            }
            A[d] = sA;
            B[d] = sB;
            C[d] = sC;
            D3[d] = sD;
            E4[d] = sE;
        }
        const double K = p.rho * h * h * h * std::pow(kTwoPi * p.T, -1.5);
        const double prod_not[3] = {A[1] * A[2], A[0] * A[2], A[0] * A[1]};
        const double PA = A[0] * prod_not[0];

        const double m0 = K * PA;
        double m1[3], msq = 0.0;
        for (int d = 0; d < 3; ++d) {
            m1[d] = K * (B[d] + p.u[d] * A[d]) * prod_not[d];
            msq += (C[d] + 2.0 * p.u[d] * B[d] + p.u[d] * p.u[d] * A[d]) * prod_not[d];
        }
        const double m2 = K * msq;

        R(0) = m0 - target.m0;
        for (int d = 0; d < 3; ++d) R(1 + d) = m1[d] - target.m1[d];
        R(4) = m2 - target.m2;
        const double rn = R.cwiseAbs().maxCoeff() / scale;
        p.iterations = it;
        p.residual = rn;
        if (rn < tol) return p;

        const double iT = 1.0 / p.T, i2T2 = 0.5 / (p.T * p.T);
        double dAu[3], dBu[3], dCu[3], dAT[3], dBT[3], dCT[3];
        for (int d = 0; d < 3; ++d) {
            dAu[d] = B[d] * iT;
            dBu[d] = -A[d] + C[d] * iT;
            dCu[d] = -2.0 * B[d] + D3[d] * iT;
            dAT[d] = C[d] * i2T2;
            dBT[d] = D3[d] * i2T2;
            dCT[d] = E4[d] * i2T2;
        }
        J.setZero();
        J(0, 0) = m0 / p.rho;
        for (int d = 0; d < 3; ++d) J(1 + d, 0) = m1[d] / p.rho;
        J(4, 0) = m2 / p.rho;
        for (int e = 0; e < 3; ++e) {
            J(0, 1 + e) = K * dAu[e] * prod_not[e];
            for (int d = 0; d < 3; ++d) {
                double t;
                if (d == e)
                    t = (dBu[e] + A[e] + p.u[e] * dAu[e]) * prod_not[d];
                else {
                    double others = dAu[e];
                    for (int q2 = 0; q2 < 3; ++q2)
                        if (q2 != d && q2 != e) others *= A[q2];
                    t = (B[d] + p.u[d] * A[d]) * others;
                }
                J(1 + d, 1 + e) = K * t;
            }
            double t2 = 0.0;
            for (int d = 0; d < 3; ++d) {
                const double Sd = C[d] + 2.0 * p.u[d] * B[d] + p.u[d] * p.u[d] * A[d];
                if (d == e) {
                    const double dSd = dCu[e] + 2.0 * B[e] + 2.0 * p.u[e] * dBu[e] +
                                       2.0 * p.u[e] * A[e] + p.u[e] * p.u[e] * dAu[e];
                    t2 += dSd * prod_not[d];
                } else {
                    double others = dAu[e];
                    for (int q2 = 0; q2 < 3; ++q2)
                        if (q2 != d && q2 != e) others *= A[q2];
                    t2 += Sd * others;
                }
            }
            J(4, 1 + e) = K * t2;
        }
        {
            const double dK = -1.5 * iT;  // K'/K
            double dPA_T = 0.0;
            for (int d = 0; d < 3; ++d) dPA_T += dAT[d] * prod_not[d];
            J(0, 4) = K * (dK * PA + dPA_T);
            for (int d = 0; d < 3; ++d) {
                const double Sd = B[d] + p.u[d] * A[d];
                const double dSd = dBT[d] + p.u[d] * dAT[d];
                double cross = 0.0;
                for (int e2 = 0; e2 < 3; ++e2) {
                    if (e2 == d) continue;
                    double others = dAT[e2];
                    for (int q2 = 0; q2 < 3; ++q2)
                        if (q2 != d && q2 != e2) others *= A[q2];
                    cross += Sd * others;
                }
                J(1 + d, 4) = K * (dK * Sd * prod_not[d] + dSd * prod_not[d] + cross);
            }
            double t2 = 0.0;
            for (int d = 0; d < 3; ++d) {
                const double Sd = C[d] + 2.0 * p.u[d] * B[d] + p.u[d] * p.u[d] * A[d];
                const double dSd = dCT[d] + 2.0 * p.u[d] * dBT[d] + p.u[d] * p.u[d] * dAT[d];
                t2 += dSd * prod_not[d];
                for (int e2 = 0; e2 < 3; ++e2) {
                    if (e2 == d) continue;
                    double others = dAT[e2];
                    for (int q2 = 0; q2 < 3; ++q2)
                        if (q2 != d && q2 != e2) others *= A[q2];
                    t2 += Sd * others;
                }
            }
            J(4, 4) = K * (dK * msq + t2);
        }

        Eigen::Matrix<double, 5, 1> step = J.fullPivLu().solve(R);
        if (!step.allFinite()) throw std::runtime_error("match_maxwellian: singular Newton step");
        double lambda = 1.0;
        while (p.T - lambda * step(4) <= 0.0 || p.rho - lambda * step(0) <= 0.0) {
            lambda *= 0.5;
            if (lambda < 1e-8)
                throw std::runtime_error("match_maxwellian: step damping collapsed");
        }
        p.rho -= lambda * step(0);
        for (int d = 0; d < 3; ++d) p.u[d] -= lambda * step(1 + d);
        p.T -= lambda * step(4);
    }
    throw std::runtime_error("match_maxwellian: Newton iteration did not converge");
}

/// Relaxation collision operator nu (M[F] - F) on one slab, M[F] the
/// moment-matched Maxwellian of F.
inline std::vector<double> bgk_apply(const VelocityGrid& vg, const std::vector<double>& F,
                                     double nu) {
    if (F.size() != static_cast<std::size_t>(vg.total()))
        throw std::invalid_argument("bgk_apply: slab size does not match velocity grid");
    Moments5 mom = slab_moments(vg, F.data());
    MatchedMaxwellian p = match_maxwellian(vg, mom);
    std::vector<double> out(vg.total());
    maxwellian_slab(vg, p.rho, p.u, p.T, out.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = nu * (out[i] - F[i]);
    return out;
}

}  // namespace kinlab
