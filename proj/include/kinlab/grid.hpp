#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinlab/fft.hpp"

namespace kinlab {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Periodic spatial torus [0, 2pi)^dim with n uniform nodes per axis.
/// Fields live on the nodes x_j = j * 2pi/n, stored row-major with the
/// last axis fastest.
struct SpatialGrid {
    int dim = 1;
    int n = 64;

    int total() const {
        int t = 1;
        for (int d = 0; d < dim; ++d) t *= n;
        return t;
    }
    double h() const { return kTwoPi / n; }
    double cell_volume() const {
        double v = 1.0;
        for (int d = 0; d < dim; ++d) v *= h();
        return v;
    }
    double node(int j) const { return j * h(); }

    bool operator==(const SpatialGrid& o) const { return dim == o.dim && n == o.n; }
    bool operator!=(const SpatialGrid& o) const { return !(*this == o); }
};

inline SpatialGrid make_spatial_grid(int dim, int n) {
    if (dim < 1 || dim > 3)
        throw std::invalid_argument("spatial grid: dim must be 1, 2, or 3, got " + std::to_string(dim));
    if (n < 4 || n % 2 != 0)
        throw std::invalid_argument("spatial grid: n must be even and >= 4, got " + std::to_string(n));
    return SpatialGrid{dim, n};
}

/// Velocity cube [-v_max, v_max]^3 with n midpoint nodes per axis.
/// Midpoint placement keeps the node set sign-symmetric with no node at 0,
/// so odd moments of symmetric functions vanish exactly.
struct VelocityGrid {
    int n = 24;
    double v_max = 6.0;

    double h() const { return 2.0 * v_max / n; }
    double node(int i) const { return -v_max + (i + 0.5) * h(); }
    int total() const { return n * n * n; }
    double weight() const { return h() * h() * h(); }

    int index(int i0, int i1, int i2) const { return (i0 * n + i1) * n + i2; }

    bool operator==(const VelocityGrid& o) const { return n == o.n && v_max == o.v_max; }
    bool operator!=(const VelocityGrid& o) const { return !(*this == o); }
};

inline VelocityGrid make_velocity_grid(int n, double v_max) {
    if (n < 4 || n % 2 != 0)
        throw std::invalid_argument("velocity grid: n must be even and >= 4, got " + std::to_string(n));
    if (!(v_max > 0.0))
        throw std::invalid_argument("velocity grid: v_max must be positive");
    return VelocityGrid{n, v_max};
}

enum class NormKind { L2, Linf, NuWeightedL2, WeightedLinf, SobolevHs };

inline std::string norm_name(NormKind k, int s = 0) {
    switch (k) {
        case NormKind::L2: return "L2";
        case NormKind::Linf: return "Linf";
        case NormKind::NuWeightedL2: return "nu_L2";
        case NormKind::WeightedLinf: return "w_Linf";
        case NormKind::SobolevHs: return "H" + std::to_string(s);
    }
    return "?";
}

namespace detail {

/// Integer frequency of DFT bin k on an n-point axis (n even).
inline int freq_of_bin(int k, int n) { return (k <= n / 2) ? k : k - n; }

/// In-place dim-D complex DFT of a row-major array, last axis fastest.
inline void dft_nd(const SpatialGrid& g, std::vector<std::complex<double>>& a) {
    fft::Plan plan(g.n);
    const int n = g.n;
    std::vector<std::complex<double>> line(n);
    int stride = 1;
    for (int axis = g.dim - 1; axis >= 0; --axis) {
        const int nlines = g.total() / n;
        // iterate over all 1-D lines along this axis
        for (int l = 0; l < nlines; ++l) {
            // decompose l into (outer, inner) around the axis
            const int inner = l % stride;
            const int outer = l / stride;
            const std::size_t base = static_cast<std::size_t>(outer) * stride * n + inner;
            for (int j = 0; j < n; ++j) line[j] = a[base + static_cast<std::size_t>(j) * stride];
            plan.forward(line.data());
            for (int j = 0; j < n; ++j) a[base + static_cast<std::size_t>(j) * stride] = line[j];
        }
        stride *= n;
    }
    const double scale = 1.0 / g.total();
    for (auto& z : a) z *= scale;
}

}  // namespace detail

inline void check_field_size(const SpatialGrid& g, std::size_t sz, const char* who) {
    if (sz != static_cast<std::size_t>(g.total()))
        throw std::invalid_argument(std::string(who) + ": field has " + std::to_string(sz) +
                                    " values but grid has " + std::to_string(g.total()) + " nodes");
}

inline double norm_linf(const std::vector<double>& f) {
    double m = 0.0;
    for (double x : f) m = std::max(m, std::abs(x));
    return m;
}

inline double norm_l2(const SpatialGrid& g, const std::vector<double>& f) {
    check_field_size(g, f.size(), "norm_l2");
    double s = 0.0;
    for (double x : f) s += x * x;
    return std::sqrt(s * g.cell_volume());
}

/// H^s norm via the Fourier multiplier (1 + |k|^2)^s, integer 0 <= s <= 3.
inline double norm_hs(const SpatialGrid& g, const std::vector<double>& f, int s) {
    if (s < 0 || s > 3)
        throw std::invalid_argument("norm_hs: s must be an integer in [0, 3], got " + std::to_string(s));
    check_field_size(g, f.size(), "norm_hs");
    std::vector<std::complex<double>> a(f.begin(), f.end());
    detail::dft_nd(g, a);
    const int n = g.n;
    double acc = 0.0;
    for (int idx = 0; idx < g.total(); ++idx) {
        int rem = idx;
        double k2 = 0.0;
        for (int d = g.dim - 1; d >= 0; --d) {
            const int kd = detail::freq_of_bin(rem % n, n);
            rem /= n;
            k2 += static_cast<double>(kd) * kd;
        }
        double mult = 1.0;
        for (int j = 0; j < s; ++j) mult *= (1.0 + k2);
        acc += mult * std::norm(a[idx]);
    }
    double vol = 1.0;
    for (int d = 0; d < g.dim; ++d) vol *= kTwoPi;
    return std::sqrt(vol * acc);
}

inline double norm_spatial(const SpatialGrid& g, const std::vector<double>& f, NormKind kind, int s = 0) {
    switch (kind) {
        case NormKind::L2: return norm_l2(g, f);
        case NormKind::Linf: return norm_linf(f);
        case NormKind::SobolevHs: return norm_hs(g, f, s);
        default:
            throw std::invalid_argument("norm_spatial: kind requires velocity-space data");
    }
}

}  // namespace kinlab
