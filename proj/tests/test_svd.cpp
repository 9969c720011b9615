#include <gtest/gtest.h>

#include <random>

#include "fedfoa/matrix.hpp"
#include "fedfoa/svd.hpp"
#include "oracle_utils.hpp"

using fedfoa::DenseMatrix;
using fedfoa::thin_svd;

namespace {

DenseMatrix reconstruct(const fedfoa::SvdResult& s) {
    DenseMatrix us = s.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= s.sigma[j];
    return us * transpose(s.v);
}

void expect_svd_invariants(const DenseMatrix& a, const fedfoa::SvdResult& s,
                           double tol = 1e-7) {
    ASSERT_EQ(s.sigma.size(), std::min(a.rows(), a.cols()));
    for (std::size_t i = 0; i + 1 < s.sigma.size(); ++i) {
        EXPECT_GE(s.sigma[i], s.sigma[i + 1]);
    }
    for (double sv : s.sigma) EXPECT_GE(sv, 0.0);
    EXPECT_LE(fedfoa::orthogonality_error(s.u), tol);
    EXPECT_LE(fedfoa::orthogonality_error(s.v), tol);
    const double denom = std::max(1e-300, frobenius_norm(a));
    EXPECT_LE(frobenius_distance(reconstruct(s), a) / denom, tol);
}

}  // namespace

TEST(ThinSvd, DiagonalCase) {
    DenseMatrix a{{3, 0}, {0, 1}};
    auto s = thin_svd(a);
    EXPECT_NEAR(s.sigma[0], 3.0, 1e-12);
    EXPECT_NEAR(s.sigma[1], 1.0, 1e-12);
    // u and v equal identity up to column signs.
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_NEAR(std::abs(s.u(j, j)), 1.0, 1e-12);
        EXPECT_NEAR(std::abs(s.v(j, j)), 1.0, 1e-12);
        EXPECT_NEAR(s.u(j, j) * s.v(j, j), 1.0, 1e-12);  // consistent signs
    }
    expect_svd_invariants(a, s);
}

TEST(ThinSvd, ZeroMatrixWide) {
    DenseMatrix a(2, 3);
    auto s = thin_svd(a);
    ASSERT_EQ(s.sigma.size(), 2u);
    EXPECT_EQ(s.sigma[0], 0.0);
    EXPECT_EQ(s.sigma[1], 0.0);
    EXPECT_LE(fedfoa::orthogonality_error(s.u), 1e-12);
    EXPECT_LE(fedfoa::orthogonality_error(s.v), 1e-12);
    EXPECT_EQ(s.u.rows(), 2u);
    EXPECT_EQ(s.u.cols(), 2u);
    EXPECT_EQ(s.v.rows(), 3u);
    EXPECT_EQ(s.v.cols(), 2u);
}

TEST(ThinSvd, RandomFourBySix) {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        DenseMatrix a = oracle::random_matrix(4, 6, rng);
        expect_svd_invariants(a, thin_svd(a));
    }
}

TEST(ThinSvd, RandomShapes) {
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<std::size_t> dim(1, 32);
    for (int rep = 0; rep < 40; ++rep) {
        DenseMatrix a = oracle::random_matrix(dim(rng), dim(rng), rng);
        expect_svd_invariants(a, thin_svd(a));
    }
}

TEST(ThinSvd, RankDeficient) {
    std::mt19937_64 rng(23);
    // Outer product: rank 1, so trailing singular values vanish and u, v
    // still need orthonormal completions.
    DenseMatrix col = oracle::random_matrix(6, 1, rng);
    DenseMatrix row = oracle::random_matrix(1, 4, rng);
    DenseMatrix a = col * row;
    auto s = thin_svd(a);
    EXPECT_NEAR(s.sigma[1] / s.sigma[0], 0.0, 1e-12);
    expect_svd_invariants(a, s);
}

TEST(ThinSvd, SingularValuesMatchKnownTwoByTwo) {
    // [[1, 1], [0, 1]] has singular values sqrt((3 +- sqrt(5)) / 2).
    DenseMatrix a{{1, 1}, {0, 1}};
    auto s = thin_svd(a);
    EXPECT_NEAR(s.sigma[0], std::sqrt((3.0 + std::sqrt(5.0)) / 2.0), 1e-12);
    EXPECT_NEAR(s.sigma[1], std::sqrt((3.0 - std::sqrt(5.0)) / 2.0), 1e-12);
}

TEST(ThinSvd, NonFiniteThrows) {
    DenseMatrix a(2, 2);
    a(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(thin_svd(a), std::invalid_argument);
}
