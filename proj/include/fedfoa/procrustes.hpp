#pragma once

#include <stdexcept>
#include <string>

#include "fedfoa/matrix.hpp"
#include "fedfoa/svd.hpp"

namespace fedfoa {

struct ProcrustesResult {
    DenseMatrix q_star;  // m x n, orthonormal columns
    double residual;     // ||z - q_star * r||_F
};

/// Closed-form solution of min ||z - q r||_F over matrices q with
/// orthonormal columns: q* = v u^T where (u, s, v) = thin_svd(r z^T).
/// When r z^T is rank deficient the SVD's completion columns are kept as
/// emitted; any completion attains the same residual.
inline ProcrustesResult procrustes_align(const DenseMatrix& z,
                                         const DenseMatrix& r) {
    if (z.rows() < z.cols()) {
        throw std::invalid_argument("procrustes_align: z needs rows >= cols");
    }
    if (r.rows() != r.cols() || r.rows() != z.cols()) {
        throw std::invalid_argument(
            "procrustes_align: r must be square with side " +
            std::to_string(z.cols()));
    }
    const SvdResult svd = thin_svd(r * transpose(z));  // n x m, so u is n x n
    DenseMatrix q_star = svd.v * transpose(svd.u);     // m x n
    const double residual = frobenius_distance(z, q_star * r);
    return {std::move(q_star), residual};
}

}  // namespace fedfoa
