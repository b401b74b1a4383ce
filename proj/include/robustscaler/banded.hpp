#pragma once

// Symmetric positive-definite banded matrices and their Cholesky solve.
// Storage keeps the lower band row by row: entry (i, j) with
// i - bandwidth <= j <= i lives at data[i * (bandwidth + 1) + (j - i + bandwidth)].
// Factorisation costs O(n * bandwidth^2), the solve O(n * bandwidth).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "robustscaler/errors.hpp"

namespace robustscaler {

template <class Real = double>
class BandedSpdMatrix {
public:
    BandedSpdMatrix(std::size_t n, std::size_t bandwidth)
        : n_(n), p_(std::min(bandwidth, n > 0 ? n - 1 : 0)), data_(n * (p_ + 1), Real{0}) {}

    std::size_t size() const { return n_; }
    std::size_t bandwidth() const { return p_; }

    /// Lower-triangle access; requires j <= i and i - j <= bandwidth.
    Real& at(std::size_t i, std::size_t j) { return data_[i * (p_ + 1) + (j + p_ - i)]; }
    Real at(std::size_t i, std::size_t j) const { return data_[i * (p_ + 1) + (j + p_ - i)]; }

    /// Symmetric read of any entry (zero outside the band).
    Real operator()(std::size_t i, std::size_t j) const {
        if (j > i) std::swap(i, j);
        return i - j > p_ ? Real{0} : at(i, j);
    }

    void add(std::size_t i, std::size_t j, Real v) {
        if (j > i) std::swap(i, j);
        at(i, j) += v;
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

private:
    std::size_t n_;
    std::size_t p_;
    std::vector<Real> data_;
};

/// In-place banded Cholesky A = L L^T (L overwrites the lower band).
template <class Real>
void banded_cholesky(BandedSpdMatrix<Real>& a) {
    const std::size_t n = a.size();
    const std::size_t p = a.bandwidth();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j0 = i > p ? i - p : 0;
        for (std::size_t j = j0; j <= i; ++j) {
            Real sum = a.at(i, j);
            const std::size_t k0 = std::max(j0, j > p ? j - p : std::size_t{0});
            for (std::size_t k = k0; k < j; ++k) sum -= a.at(i, k) * a.at(j, k);
            if (i == j) {
                if (!(sum > Real{0})) {
                    throw RuntimeFault("banded Cholesky: matrix not positive definite at row " + std::to_string(i));
                }
                a.at(i, i) = std::sqrt(sum);
            } else {
                a.at(i, j) = sum / a.at(j, j);
            }
        }
    }
}

/// Solves L L^T x = b in place given the factor from banded_cholesky.
template <class Real>
void banded_cholesky_solve(const BandedSpdMatrix<Real>& l, std::span<Real> b) {
    const std::size_t n = l.size();
    const std::size_t p = l.bandwidth();
    for (std::size_t i = 0; i < n; ++i) {
        Real s = b[i];
        for (std::size_t k = i > p ? i - p : 0; k < i; ++k) s -= l.at(i, k) * b[k];
        b[i] = s / l.at(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        Real s = b[ii];
        for (std::size_t k = ii + 1; k <= std::min(n - 1, ii + p); ++k) s -= l.at(k, ii) * b[k];
        b[ii] = s / l.at(ii, ii);
    }
}

}  // namespace robustscaler
