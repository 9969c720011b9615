#include <gtest/gtest.h>

#include <random>

#include "fedfoa/matrix.hpp"
#include "fedfoa/procrustes.hpp"
#include "fedfoa/qr.hpp"
#include "oracle_utils.hpp"

using fedfoa::DenseMatrix;
using fedfoa::procrustes_align;

namespace {

// Haar-ish random matrix with orthonormal columns: QR of a Gaussian.
DenseMatrix random_orthonormal(std::size_t m, std::size_t n,
                               std::mt19937_64& rng) {
    return fedfoa::qr_decompose(oracle::random_matrix(m, n, rng)).q;
}

}  // namespace

TEST(ProcrustesAlign, ExactRecreation) {
    std::mt19937_64 rng(31);
    DenseMatrix q0 = random_orthonormal(10, 3, rng);
    DenseMatrix r = oracle::random_matrix(3, 3, rng);
    r(1, 0) = r(2, 0) = r(2, 1) = 0.0;  // full-rank upper triangular target
    r(0, 0) = 2.0;
    r(1, 1) = 1.5;
    r(2, 2) = 0.7;
    DenseMatrix z = q0 * r;
    auto res = procrustes_align(z, r);
    EXPECT_NEAR(res.residual, 0.0, 1e-10);
    EXPECT_LE(frobenius_distance(res.q_star * r, z), 1e-10);
    EXPECT_LE(fedfoa::orthogonality_error(res.q_star), 1e-8);
}

TEST(ProcrustesAlign, ZeroTargetGivesInputNorm) {
    std::mt19937_64 rng(32);
    DenseMatrix z = oracle::random_matrix(8, 3, rng);
    DenseMatrix r(3, 3);
    auto res = procrustes_align(z, r);
    EXPECT_NEAR(res.residual, frobenius_norm(z), 1e-12);
    EXPECT_LE(fedfoa::orthogonality_error(res.q_star), 1e-8);
}

TEST(ProcrustesAlign, DimensionMismatchThrows) {
    EXPECT_THROW(procrustes_align(DenseMatrix(4, 2), DenseMatrix(3, 3)),
                 std::invalid_argument);
    EXPECT_THROW(procrustes_align(DenseMatrix(2, 4), DenseMatrix(4, 4)),
                 std::invalid_argument);
}

// Random-search oracle: the closed form must beat every random
// orthonormal-column candidate (scaled-down version of the acceptance run).
TEST(ProcrustesAlign, BeatsRandomSearchOracle) {
    std::mt19937_64 rng(33);
    for (int inst = 0; inst < 10; ++inst) {
        DenseMatrix z = oracle::random_matrix(16, 4, rng);
        DenseMatrix r = oracle::random_matrix(4, 4, rng);
        auto res = procrustes_align(z, r);
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < 500; ++c) {
            DenseMatrix q = random_orthonormal(16, 4, rng);
            best = std::min(best, frobenius_distance(z, q * r));
        }
        EXPECT_LE(res.residual, best + 1e-9);
    }
}

// Equivalent trace form of the objective: q* maximizes Tr(r z^T q).
TEST(ProcrustesAlign, TraceObjectiveAttainsMaximum) {
    std::mt19937_64 rng(34);
    DenseMatrix z = oracle::random_matrix(16, 4, rng);
    DenseMatrix r = oracle::random_matrix(4, 4, rng);
    auto res = procrustes_align(z, r);
    const DenseMatrix rzt = r * transpose(z);
    const double best_trace = fedfoa::trace(rzt * res.q_star);
    for (int c = 0; c < 500; ++c) {
        DenseMatrix q = random_orthonormal(16, 4, rng);
        EXPECT_GE(best_trace + 1e-9, fedfoa::trace(rzt * q));
    }
}

TEST(ProcrustesAlign, RankDeficientTargetStillOrthonormal) {
    std::mt19937_64 rng(35);
    DenseMatrix z = oracle::random_matrix(12, 4, rng);
    DenseMatrix r(4, 4);
    r(0, 0) = 1.0;  // rank 1
    auto res = procrustes_align(z, r);
    EXPECT_LE(fedfoa::orthogonality_error(res.q_star), 1e-8);
    // Optimality still holds against random candidates.
    for (int c = 0; c < 200; ++c) {
        DenseMatrix q = random_orthonormal(12, 4, rng);
        EXPECT_LE(res.residual, frobenius_distance(z, q * r) + 1e-9);
    }
}
