#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

#include "kinlab/fields.hpp"
#include "kinlab/grid.hpp"

namespace kinlab {

namespace spectral {

/// Pseudo-spectral helper bound to one spatial grid: transforms, exact
/// derivatives, 2/3-rule truncation and an exponential tail filter.
class Ops {
public:
    explicit Ops(const SpatialGrid& g) : g_(g), plan_(g.n) {
        const int n = g.n;
        kcut_ = n / 3;
        freq_.resize(n);
        for (int k = 0; k < n; ++k) freq_[k] = detail::freq_of_bin(k, n);
    }

    const SpatialGrid& grid() const { return g_; }

    std::vector<std::complex<double>> to_spectrum(const std::vector<double>& f) const {
        check_field_size(g_, f.size(), "spectral");
        std::vector<std::complex<double>> a(f.begin(), f.end());
        detail::dft_nd(g_, a);
        return a;
    }

    std::vector<double> from_spectrum(std::vector<std::complex<double>> a) const {
        // inverse transform: conjugate trick on the forward-normalized spectrum
        for (auto& z : a) z = std::conj(z);
        detail::dft_nd(g_, a);
        std::vector<double> out(a.size());
        const double scale = g_.total();
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::real(std::conj(a[i])) * scale;
        return out;
    }

    /// d/dx_axis via the de-aliased spectrum.
    std::vector<double> derivative(const std::vector<double>& f, int axis) const {
        if (axis < 0 || axis >= g_.dim)
            throw std::invalid_argument("spectral derivative: axis out of range for grid dim");
        auto a = to_spectrum(f);
        mult_ik(a, axis);
        return from_spectrum(std::move(a));
    }

    void mult_ik(std::vector<std::complex<double>>& a, int axis) const {
        const int n = g_.n;
        for (int idx = 0; idx < g_.total(); ++idx) {
            const int k = freq_[axis_bin(idx, axis)];
            a[idx] *= std::complex<double>(0.0, static_cast<double>(k));
        }
    }

    /// Zero every mode with any |k_d| > n/3 (sharp 2/3 rule) and damp the
    /// retained tail with exp(-alpha (|k|/kcut)^order).
    void truncate_and_filter(std::vector<std::complex<double>>& a, bool filter, double alpha,
                             int order) const {
        for (int idx = 0; idx < g_.total(); ++idx) {
            double kmax = 0.0;
            double k2 = 0.0;
            for (int d = 0; d < g_.dim; ++d) {
                const int k = freq_[axis_bin(idx, d)];
                kmax = std::max(kmax, std::abs(static_cast<double>(k)));
                k2 += static_cast<double>(k) * k;
            }
            if (kmax > kcut_) {
                a[idx] = 0.0;
            } else if (filter && kcut_ > 0) {
                const double r = std::sqrt(k2) / kcut_;
                a[idx] *= std::exp(-alpha * std::pow(r, order));
            }
        }
    }

    void project_field(std::vector<double>& f, bool filter, double alpha, int order) const {
        auto a = to_spectrum(f);
        truncate_and_filter(a, filter, alpha, order);
        f = from_spectrum(std::move(a));
    }

private:
    int axis_bin(int idx, int axis) const {
        int rem = idx;
        int bin = 0;
        for (int d = g_.dim - 1; d >= 0; --d) {
            const int b = rem % g_.n;
            rem /= g_.n;
            if (d == axis) bin = b;
        }
        return bin;
    }

    SpatialGrid g_;
    fft::Plan plan_;
    int kcut_;
    std::vector<int> freq_;
};

}  // namespace spectral

// ---------------------------------------------------------------------------
// acoustic system: d_t sigma + div u = 0, d_t u + grad(sigma + theta) = 0,
// (3/2) d_t theta + div u = 0. Solved exactly mode by mode.
// ---------------------------------------------------------------------------

/// Exact evaluator for the acoustic system. Each Fourier mode evolves by the
/// unitary propagator of a 5x5 Hermitian pencil, so every H^s energy of
/// (sigma, u, sqrt(3/2) theta) is conserved to rounding and evaluation at
/// arbitrary (even negative) t needs no time stepping.
class AcousticSolver {
public:
    explicit AcousticSolver(const AcousticState& init) : g_(init.grid) {
        const int total = g_.total();
        const double sq23 = std::sqrt(2.0 / 3.0);
        spectra_.resize(5);
        {
            spectral::Ops ops(g_);
            spectra_[0] = ops.to_spectrum(init.sigma);
            for (int d = 0; d < 3; ++d) spectra_[1 + d] = ops.to_spectrum(init.u[d]);
            spectra_[4] = ops.to_spectrum(init.theta);
            // symmetrizing weight sqrt(3/2) folds theta into the unitary frame
            for (auto& z : spectra_[4]) z *= std::sqrt(1.5);
        }
        evec_.resize(total);
        eval_.resize(total);
        for (int idx = 0; idx < total; ++idx) {
            std::array<double, 3> k{0.0, 0.0, 0.0};
            int rem = idx;
            for (int d = g_.dim - 1; d >= 0; --d) {
                k[d] = detail::freq_of_bin(rem % g_.n, g_.n);
                rem /= g_.n;
            }
            Eigen::Matrix<double, 5, 5> H = Eigen::Matrix<double, 5, 5>::Zero();
            for (int d = 0; d < 3; ++d) {
                H(0, 1 + d) = k[d];
                H(1 + d, 0) = k[d];
                H(4, 1 + d) = sq23 * k[d];
                H(1 + d, 4) = sq23 * k[d];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(H);
            evec_[idx] = es.eigenvectors();
            eval_[idx] = es.eigenvalues();
        }
    }

    const SpatialGrid& grid() const { return g_; }

    AcousticState evaluate(double t) const {
        const int total = g_.total();
        std::array<std::vector<std::complex<double>>, 5> out;
        for (auto& v : out) v.resize(total);
        for (int idx = 0; idx < total; ++idx) {
            Eigen::Matrix<std::complex<double>, 5, 1> w;
            for (int c = 0; c < 5; ++c) w(c) = spectra_[c][idx];
            const Eigen::Matrix<std::complex<double>, 5, 5> V =
                evec_[idx].cast<std::complex<double>>();
            Eigen::Matrix<std::complex<double>, 5, 1> y = V.transpose() * w;
            for (int c = 0; c < 5; ++c) {
                const double phase = -eval_[idx](c) * t;
                y(c) *= std::complex<double>(std::cos(phase), std::sin(phase));
            }
            w = V * y;
            for (int c = 0; c < 5; ++c) out[c][idx] = w(c);
        }
        spectral::Ops ops(g_);
        AcousticState s = AcousticState::zeros(g_);
        s.sigma = ops.from_spectrum(std::move(out[0]));
        for (int d = 0; d < 3; ++d) s.u[d] = ops.from_spectrum(std::move(out[1 + d]));
        for (auto& z : out[4]) z /= std::sqrt(1.5);
        s.theta = ops.from_spectrum(std::move(out[4]));
        return s;
    }

private:
    SpatialGrid g_;
    std::vector<std::vector<std::complex<double>>> spectra_;
    std::vector<Eigen::Matrix<double, 5, 5>> evec_;
    std::vector<Eigen::Matrix<double, 5, 1>> eval_;
};

/// Conserved acoustic energy ||(sigma, u, sqrt(3/2) theta)||_{H^s}.
inline double acoustic_energy(const AcousticState& s, int order) {
    double e2 = 0.0;
    const double n_sigma = norm_hs(s.grid, s.sigma, order);
    e2 += n_sigma * n_sigma;
    for (int d = 0; d < 3; ++d) {
        const double nu = norm_hs(s.grid, s.u[d], order);
        e2 += nu * nu;
    }
    const double nt = norm_hs(s.grid, s.theta, order);
    e2 += 1.5 * nt * nt;
    return std::sqrt(e2);
}

// ---------------------------------------------------------------------------
// compressible Euler in non-conservative (rho, u, T) variables
// ---------------------------------------------------------------------------

struct EulerConfig {
    double dt = 1e-3;
    bool dealias = true;
    bool filter = true;
    double filter_alpha = 36.0;
    int filter_order = 36;
    /// Gradient-blowup proxy: stop once max |div u| exceeds this.
    double blowup_threshold = std::numeric_limits<double>::infinity();
};

struct EulerResult {
    std::vector<double> sample_times;
    std::vector<FluidState> samples;
    bool blown_up = false;
    double t_reached = 0.0;
    double mass_drift = 0.0;  // relative drift of the rho integral
};

/// Time derivative of (rho, u, T) under the non-conservative Euler system
/// d_t rho = -(u.grad) rho - rho div u,
/// d_t u   = -(u.grad) u - grad T - (T/rho) grad rho,
/// d_t T   = -(u.grad) T - (2/3) T div u.
inline FluidState euler_rhs(const FluidState& s, const spectral::Ops& ops,
                            double* max_divu = nullptr) {
    const SpatialGrid& g = s.grid;
    const int total = g.total();
    FluidState out = FluidState::zeros(g);

    std::array<std::vector<double>, 3> grad_rho, grad_T;
    std::array<std::array<std::vector<double>, 3>, 3> grad_u;  // [component][axis]
    for (int d = 0; d < g.dim; ++d) {
        grad_rho[d] = ops.derivative(s.rho, d);
        grad_T[d] = ops.derivative(s.T, d);
        for (int c = 0; c < 3; ++c) grad_u[c][d] = ops.derivative(s.u[c], d);
    }

    double divmax = 0.0;
    for (int i = 0; i < total; ++i) {
        double divu = 0.0;
        for (int d = 0; d < g.dim; ++d) divu += grad_u[d][d][i];
        divmax = std::max(divmax, std::abs(divu));

        double adv_rho = 0.0, adv_T = 0.0;
        for (int d = 0; d < g.dim; ++d) {
            adv_rho += s.u[d][i] * grad_rho[d][i];
            adv_T += s.u[d][i] * grad_T[d][i];
        }
        out.rho[i] = -adv_rho - s.rho[i] * divu;
        out.T[i] = -adv_T - (2.0 / 3.0) * s.T[i] * divu;
        for (int c = 0; c < 3; ++c) {
            double adv_u = 0.0;
            for (int d = 0; d < g.dim; ++d) adv_u += s.u[d][i] * grad_u[c][d][i];
            double grad_p = 0.0;
            if (c < g.dim) grad_p = grad_T[c][i] + (s.T[i] / s.rho[i]) * grad_rho[c][i];
            out.u[c][i] = -adv_u - grad_p;
        }
    }
    if (max_divu) *max_divu = divmax;
    return out;
}

namespace detail {

inline void axpy_state(FluidState& y, double a, const FluidState& x) {
    const std::size_t m = y.rho.size();
    for (std::size_t i = 0; i < m; ++i) y.rho[i] += a * x.rho[i];
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < m; ++i) y.u[c][i] += a * x.u[c][i];
    for (std::size_t i = 0; i < m; ++i) y.T[i] += a * x.T[i];
}

inline void project_state(FluidState& s, const spectral::Ops& ops, const EulerConfig& cfg) {
    if (!cfg.dealias && !cfg.filter) return;
    ops.project_field(s.rho, cfg.filter, cfg.filter_alpha, cfg.filter_order);
    for (int c = 0; c < 3; ++c) ops.project_field(s.u[c], cfg.filter, cfg.filter_alpha, cfg.filter_order);
    ops.project_field(s.T, cfg.filter, cfg.filter_alpha, cfg.filter_order);
}

}  // namespace detail

/// RK4 pseudo-spectral integration of the Euler system with snapshots at the
/// requested times. Stops early (structured, not throwing) if the divergence
/// proxy crosses cfg.blowup_threshold.
inline EulerResult solve_euler(const FluidState& init, const std::vector<double>& sample_times,
                               const EulerConfig& cfg = {}) {
    for (std::size_t i = 0; i + 1 < sample_times.size(); ++i)
        if (!(sample_times[i] < sample_times[i + 1]))
            throw std::invalid_argument("solve_euler: sample times must be strictly increasing");
    if (!sample_times.empty() && sample_times.front() < 0.0)
        throw std::invalid_argument("solve_euler: sample times must be nonnegative");
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("solve_euler: dt must be positive");

    spectral::Ops ops(init.grid);
    FluidState s = init;
    detail::project_state(s, ops, cfg);

    const double mass0 = [&] {
        double m = 0.0;
        for (double r : init.rho) m += r;
        return m * init.grid.cell_volume();
    }();

    EulerResult res;
    double t = 0.0;
    double divmax = 0.0;
    auto emit = [&](double ts) {
        res.sample_times.push_back(ts);
        res.samples.push_back(s);
    };
    if (!sample_times.empty() && sample_times.front() == 0.0) emit(0.0);

    for (std::size_t si = 0; si < sample_times.size(); ++si) {
        const double target = sample_times[si];
        if (target == 0.0) continue;
        const double span = target - t;
        const int nsteps = std::max(1, static_cast<int>(std::ceil(span / cfg.dt - 1e-12)));
        const double dt = span / nsteps;
        for (int step = 0; step < nsteps; ++step) {
            const FluidState k1 = euler_rhs(s, ops, &divmax);
            // negated form so a non-finite divergence also counts as blowup
            if (!(divmax <= cfg.blowup_threshold)) {
                res.blown_up = true;
                res.t_reached = t;
                res.mass_drift = 0.0;
                return res;
            }
            FluidState tmp = s;
            detail::axpy_state(tmp, 0.5 * dt, k1);
            const FluidState k2 = euler_rhs(tmp, ops, nullptr);
            tmp = s;
            detail::axpy_state(tmp, 0.5 * dt, k2);
            const FluidState k3 = euler_rhs(tmp, ops, nullptr);
            tmp = s;
            detail::axpy_state(tmp, dt, k3);
            const FluidState k4 = euler_rhs(tmp, ops, nullptr);
            detail::axpy_state(s, dt / 6.0, k1);
            detail::axpy_state(s, dt / 3.0, k2);
            detail::axpy_state(s, dt / 3.0, k3);
            detail::axpy_state(s, dt / 6.0, k4);
            detail::project_state(s, ops, cfg);
            t += dt;
        }
        t = target;
        emit(target);
    }
    res.t_reached = t;
    double mass = 0.0;
    for (double r : s.rho) mass += r;
    mass *= init.grid.cell_volume();
    res.mass_drift = std::abs(mass - mass0) / std::max(1e-300, std::abs(mass0));
    return res;
}

// ---------------------------------------------------------------------------
// perturbation bookkeeping
// ---------------------------------------------------------------------------

/// Default single-mode acoustic data sigma = theta = cos(x1), u = (sin(x1), 0, 0).
inline AcousticState default_acoustic_data(const SpatialGrid& g) {
    AcousticState s = AcousticState::zeros(g);
    const int total = g.total();
    int stride = 1;
    for (int d = g.dim - 1; d > 0; --d) stride *= g.n;
    for (int i = 0; i < total; ++i) {
        const double x1 = g.node(i / stride);
        s.sigma[i] = std::cos(x1);
        s.u[0][i] = std::sin(x1);
        s.theta[i] = std::cos(x1);
    }
    return s;
}

/// Lift acoustic data to perturbed Euler data rho = 1 + d sigma, u = d u,
/// T = 1 + d theta.
inline FluidState perturbed_euler_data(const AcousticState& ac, double delta) {
    FluidState s = FluidState::zeros(ac.grid);
    const int total = ac.grid.total();
    for (int i = 0; i < total; ++i) {
        s.rho[i] = 1.0 + delta * ac.sigma[i];
        s.T[i] = 1.0 + delta * ac.theta[i];
        for (int c = 0; c < 3; ++c) s.u[c][i] = delta * ac.u[c][i];
    }
    return s;
}

/// Second-order difference fields (rho - 1 - d sigma)/d^2 and friends.
/// Computed from the two solutions, never solved as a PDE of its own.
inline DifferenceState difference_fields(const FluidState& euler, const AcousticState& acoustic,
                                         double delta) {
    if (delta == 0.0)
        throw std::invalid_argument("difference_fields: undefined at delta = 0");
    if (euler.grid != acoustic.grid)
        throw std::invalid_argument("difference_fields: states live on different grids");
    DifferenceState d;
    d.grid = euler.grid;
    const int total = euler.grid.total();
    const double inv = 1.0 / (delta * delta);
    d.sigma_d.resize(total);
    d.theta_d.resize(total);
    for (auto& c : d.u_d) c.resize(total);
    for (int i = 0; i < total; ++i) {
        d.sigma_d[i] = (euler.rho[i] - 1.0 - delta * acoustic.sigma[i]) * inv;
        d.theta_d[i] = (euler.T[i] - 1.0 - delta * acoustic.theta[i]) * inv;
        for (int c = 0; c < 3; ++c) d.u_d[c][i] = (euler.u[c][i] - delta * acoustic.u[c][i]) * inv;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Friedrichs symmetrizer of the (sigma, u, theta)-form system
// ---------------------------------------------------------------------------

struct SymmetrizerReport {
    double min_eig_A0 = 0.0;
    double max_asymmetry = 0.0;
    bool A0_spd = false;
    bool flux_symmetric = false;
};

/// Assemble A0 = diag(T/rho, rho I, 3 rho / (2T)) and the three flux
/// symmetrizers A_i nodewise, verifying symmetry and definiteness from the
/// assembled entries rather than assuming them.
inline SymmetrizerReport check_symmetrizer(const FluidState& s) {
    SymmetrizerReport rep;
    rep.min_eig_A0 = std::numeric_limits<double>::infinity();
    rep.max_asymmetry = 0.0;
    const int total = s.grid.total();
    for (int i = 0; i < total; ++i) {
        const double rho = s.rho[i], T = s.T[i];
        if (!(rho > 0.0) || !(T > 0.0))
            throw std::invalid_argument("check_symmetrizer: requires positive rho and T");
        Eigen::Matrix<double, 5, 5> A0 = Eigen::Matrix<double, 5, 5>::Zero();
        A0(0, 0) = T / rho;
        for (int c = 0; c < 3; ++c) A0(1 + c, 1 + c) = rho;
        A0(4, 4) = 1.5 * rho / T;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(A0);
        rep.min_eig_A0 = std::min(rep.min_eig_A0, es.eigenvalues().minCoeff());

        for (int axis = 0; axis < 3; ++axis) {
            const double ui = s.u[axis][i];
            Eigen::Matrix<double, 5, 5> A = Eigen::Matrix<double, 5, 5>::Zero();
            A(0, 0) = (T / rho) * ui;
            A(4, 4) = (1.5 * rho / T) * ui;
            for (int c = 0; c < 3; ++c) A(1 + c, 1 + c) = rho * ui;
            A(0, 1 + axis) = T;
            A(1 + axis, 0) = T;
            A(4, 1 + axis) = rho;
            A(1 + axis, 4) = rho;
            rep.max_asymmetry = std::max(rep.max_asymmetry, (A - A.transpose()).cwiseAbs().maxCoeff());
        }
    }
    rep.A0_spd = rep.min_eig_A0 > 0.0;
    rep.flux_symmetric = rep.max_asymmetry == 0.0;
    return rep;
}

}  // namespace kinlab
