#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedfoa/matrix.hpp"

namespace fedfoa {

/// Thin SVD a = u * diag(sigma) * v^T with sigma sorted descending.
/// For a p x q input and k = min(p, q): u is p x k, v is q x k, both with
/// orthonormal columns even when a is rank deficient.
struct SvdResult {
    DenseMatrix u;
    std::vector<double> sigma;
    DenseMatrix v;
};

namespace detail {

// Rotation threshold and sweep cap for the one-sided Jacobi iteration.
inline constexpr double kJacobiTol = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;

// Columns of m with index in `fill` are overwritten with unit vectors
// orthogonal to every other column. Candidates are standard basis vectors;
// each is orthogonalized twice against the current columns and the one with
// the largest remaining norm wins.
inline void fill_orthonormal_columns(DenseMatrix& m,
                                     const std::vector<std::size_t>& fill) {
    const std::size_t rows = m.rows(), cols = m.cols();
    std::vector<bool> filled(cols, true);
    for (std::size_t j : fill) filled[j] = false;

    for (std::size_t j : fill) {
        std::vector<double> best;
        double best_norm = -1.0;
        for (std::size_t cand = 0; cand < rows; ++cand) {
            std::vector<double> w(rows, 0.0);
            w[cand] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < cols; ++c) {
                    if (!filled[c]) continue;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < rows; ++i) dot += w[i] * m(i, c);
                    for (std::size_t i = 0; i < rows; ++i) w[i] -= dot * m(i, c);
                }
            }
            double norm = 0.0;
            for (double wi : w) norm += wi * wi;
            norm = std::sqrt(norm);
            if (norm > best_norm) {
                best_norm = norm;
                best = std::move(w);
            }
            if (best_norm > 0.5) break;  // good enough, basis vectors are cheap
        }
        for (std::size_t i = 0; i < rows; ++i) m(i, j) = best[i] / best_norm;
        filled[j] = true;
    }
}

// One-sided Jacobi on a tall matrix (rows >= cols): right rotations
// orthogonalize the columns, accumulated into v.
inline SvdResult jacobi_svd_tall(const DenseMatrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    DenseMatrix w = a;
    DenseMatrix v = DenseMatrix::identity(n);

    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t r = 0; r < m; ++r) {
                    alpha += w(r, i) * w(r, i);
                    beta += w(r, j) * w(r, j);
                    gamma += w(r, i) * w(r, j);
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) {
                    continue;
                }
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) /
                    (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < m; ++r) {
                    const double wi = w(r, i), wj = w(r, j);
                    w(r, i) = c * wi - s * wj;
                    w(r, j) = s * wi + c * wj;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double vi = v(r, i), vj = v(r, j);
                    v(r, i) = c * vi - s * vj;
                    v(r, j) = s * vi + c * vj;
                }
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double norm2 = 0.0;
        for (std::size_t r = 0; r < m; ++r) norm2 += w(r, j) * w(r, j);
        sigma[j] = std::sqrt(norm2);
    }

    // Sort singular values descending, permuting the columns of w and v.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return sigma[x] > sigma[y];
    });

    SvdResult out;
    out.u = DenseMatrix(m, n);
    out.v = DenseMatrix(n, n);
    out.sigma.resize(n);
    const double sigma_max = sigma.empty() ? 0.0 : sigma[order[0]];
    const double zero_tol = sigma_max * static_cast<double>(n) * 1e-15;
    std::vector<std::size_t> degenerate;
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t src = order[jj];
        out.sigma[jj] = sigma[src];
        for (std::size_t r = 0; r < n; ++r) out.v(r, jj) = v(r, src);
        if (sigma[src] <= zero_tol) {
            degenerate.push_back(jj);
            continue;
        }
        for (std::size_t r = 0; r < m; ++r) out.u(r, jj) = w(r, src) / sigma[src];
    }
    if (!degenerate.empty()) {
        fill_orthonormal_columns(out.u, degenerate);
    }
    return out;
}

}  // namespace detail

inline SvdResult thin_svd(const DenseMatrix& a) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw std::invalid_argument("thin_svd: empty matrix");
    }
    if (!a.is_finite()) {
        throw std::invalid_argument("thin_svd: non-finite input");
    }
    if (a.rows() >= a.cols()) {
        return detail::jacobi_svd_tall(a);
    }
    // Wide input: a^T = u' s v'^T implies a = v' s u'^T.
    SvdResult t = detail::jacobi_svd_tall(transpose(a));
    return {std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

}  // namespace fedfoa
