#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

namespace kinlab::fft {

using cplx = std::complex<double>;

/// Precomputed tables for a fixed-size complex DFT.
///
/// Power-of-two sizes run the iterative radix-2 path; any other size is
/// handled by Bluestein's algorithm on top of an internal power-of-two plan.
/// All tables are deterministic functions of n, so transforms are bit-stable
/// across runs.
class Plan {
public:
    explicit Plan(int n) : n_(n) {
        if (n < 1) throw std::invalid_argument("fft: transform size must be >= 1");
        pow2_ = (n & (n - 1)) == 0;
        if (pow2_) {
            init_pow2_tables(n);
        } else {
            m_ = 1;
            while (m_ < 2 * n - 1) m_ <<= 1;
            init_pow2_tables(m_);
            chirp_.resize(n);
            for (int j = 0; j < n; ++j) {
                // j^2 mod 2n keeps the chirp argument small and exact
                const long long q = (static_cast<long long>(j) * j) % (2LL * n);
                const double ang = -pi() * static_cast<double>(q) / n;
                chirp_[j] = cplx(std::cos(ang), std::sin(ang));
            }
            bhat_.assign(m_, cplx(0.0, 0.0));
            bhat_[0] = std::conj(chirp_[0]);
            for (int j = 1; j < n; ++j) {
                bhat_[j] = std::conj(chirp_[j]);
                bhat_[m_ - j] = std::conj(chirp_[j]);
            }
            pow2_transform(bhat_.data(), m_, false);
            scratch_.resize(m_);
        }
    }

    int size() const { return n_; }

    /// In-place forward DFT: X_k = sum_j x_j exp(-2*pi*i*j*k/n).
    void forward(cplx* x) { dispatch(x, false); }

    /// In-place inverse DFT, normalized by 1/n.
    void inverse(cplx* x) {
        dispatch(x, true);
        const double s = 1.0 / n_;
        for (int j = 0; j < n_; ++j) x[j] *= s;
    }

private:
    static double pi() { return 3.14159265358979323846; }

    void init_pow2_tables(int m) {
        rev_.resize(m);
        rev_[0] = 0;
        int lg = 0;
        while ((1 << lg) < m) ++lg;
        for (int i = 1; i < m; ++i) rev_[i] = (rev_[i >> 1] >> 1) | ((i & 1) << (lg - 1));
        tw_.resize(m / 2);
        for (int j = 0; j < m / 2; ++j) {
            const double ang = -2.0 * pi() * j / m;
            tw_[j] = cplx(std::cos(ang), std::sin(ang));
        }
    }

    void pow2_transform(cplx* x, int m, bool inv) const {
        for (int i = 0; i < m; ++i) {
            const int r = rev_[i];
            if (i < r) std::swap(x[i], x[r]);
        }
        for (int len = 2; len <= m; len <<= 1) {
            const int half = len >> 1;
            const int stride = m / len;
            for (int base = 0; base < m; base += len) {
                for (int j = 0; j < half; ++j) {
                    cplx w = tw_[j * stride];
                    if (inv) w = std::conj(w);
                    const cplx t = x[base + j + half] * w;
                    x[base + j + half] = x[base + j] - t;
                    x[base + j] = x[base + j] + t;
                }
            }
        }
    }

    void dispatch(cplx* x, bool inv) {
        if (pow2_) {
            pow2_transform(x, n_, inv);
            return;
        }
        // Bluestein: re-express the DFT as a circular convolution
        for (int j = 0; j < n_; ++j) {
            const cplx c = inv ? std::conj(chirp_[j]) : chirp_[j];
            scratch_[j] = x[j] * c;
        }
        std::fill(scratch_.begin() + n_, scratch_.end(), cplx(0.0, 0.0));
        pow2_transform(scratch_.data(), m_, false);
        if (inv) {
            // conj(bhat) is the spectrum of the conjugated chirp sequence
            for (int j = 0; j < m_; ++j) {
                const cplx b = std::conj(bhat_[(m_ - j) % m_]);
                scratch_[j] *= b;
            }
        } else {
            for (int j = 0; j < m_; ++j) scratch_[j] *= bhat_[j];
        }
        pow2_transform(scratch_.data(), m_, true);
        const double s = 1.0 / m_;
        for (int j = 0; j < n_; ++j) {
            const cplx c = inv ? std::conj(chirp_[j]) : chirp_[j];
            x[j] = scratch_[j] * s * c;
        }
    }

    int n_ = 0;
    bool pow2_ = false;
    int m_ = 0;
    std::vector<int> rev_;
    std::vector<cplx> tw_;
    std::vector<cplx> chirp_;
    std::vector<cplx> bhat_;
    mutable std::vector<cplx> scratch_;
};

}  // namespace kinlab::fft
