#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fedfoa/matrix.hpp"

namespace fedfoa {

/// Thin QR factors: q is m x n with orthonormal columns, r is n x n upper
/// triangular with non-negative diagonal.
struct QrFactors {
    DenseMatrix q;
    DenseMatrix r;
};

/// Thin QR of a tall matrix via Householder reflections, then a sign pass so
/// every diagonal entry of R is >= 0. The positive-diagonal convention makes
/// the factorization unique for full-rank input, so repeated calls on the
/// same data are bit-identical and the trace of R is a non-negative score.
///
/// Rank deficiency is allowed: an exactly-zero subcolumn leaves R(k,k) = 0
/// and skips the reflection.
inline QrFactors qr_decompose(const DenseMatrix& z) {
    const std::size_t m = z.rows(), n = z.cols();
    if (m < n) {
        throw std::invalid_argument(
            "qr_decompose: requires rows >= cols, got " + std::to_string(m) +
            "x" + std::to_string(n));
    }
    if (n == 0) {
        throw std::invalid_argument("qr_decompose: empty matrix");
    }
    if (!z.is_finite()) {
        throw std::invalid_argument("qr_decompose: non-finite input");
    }

    DenseMatrix a = z;
    // Householder vectors, one per column; v[k] has length m - k.
    std::vector<std::vector<double>> vs(n);
    std::vector<double> betas(n, 0.0);

    for (std::size_t k = 0; k < n; ++k) {
        double norm2 = 0.0;
        for (std::size_t i = k; i < m; ++i) norm2 += a(i, k) * a(i, k);
        const double norm = std::sqrt(norm2);
        if (norm == 0.0) {
            continue;  // zero subcolumn, R(k,k) stays 0
        }
        const double alpha = a(k, k) >= 0.0 ? -norm : norm;
        std::vector<double> v(m - k);
        v[0] = a(k, k) - alpha;
        for (std::size_t i = k + 1; i < m; ++i) v[i - k] = a(i, k);
        double beta = 0.0;
        for (double vi : v) beta += vi * vi;
        if (beta == 0.0) {
            continue;  // column already reduced
        }
        // Apply H = I - 2 v v^T / beta to the trailing block of a.
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * a(i, j);
            s *= 2.0 / beta;
            for (std::size_t i = k; i < m; ++i) a(i, j) -= s * v[i - k];
        }
        vs[k] = std::move(v);
        betas[k] = beta;
    }

    DenseMatrix r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) r(i, j) = a(i, j);

    // Accumulate the thin Q by applying the reflections to [I; 0].
    DenseMatrix q(m, n);
    for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
    for (std::size_t k = n; k-- > 0;) {
        if (vs[k].empty()) continue;
        const std::vector<double>& v = vs[k];
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * q(i, j);
            s *= 2.0 / betas[k];
            for (std::size_t i = k; i < m; ++i) q(i, j) -= s * v[i - k];
        }
    }

    // Sign convention: diag(R) >= 0.
    for (std::size_t k = 0; k < n; ++k) {
        if (r(k, k) < 0.0) {
            for (std::size_t j = k; j < n; ++j) r(k, j) = -r(k, j);
            for (std::size_t i = 0; i < m; ++i) q(i, k) = -q(i, k);
        }
    }

    return {std::move(q), std::move(r)};
}

}  // namespace fedfoa
