#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fedfoa/matrix.hpp"
#include "oracle_utils.hpp"

using fedfoa::DenseMatrix;

TEST(DenseMatrix, ConstructionValidatesLength) {
    EXPECT_THROW(DenseMatrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST(DenseMatrix, ConstructionRejectsNonFinite) {
    EXPECT_THROW(DenseMatrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}),
                 std::invalid_argument);
    EXPECT_THROW(DenseMatrix(1, 2, {1.0, std::numeric_limits<double>::infinity()}),
                 std::invalid_argument);
}

TEST(DenseMatrix, MatmulAgainstHandValues) {
    DenseMatrix a{{1, 2}, {3, 4}};
    DenseMatrix b{{5, 6}, {7, 8}};
    DenseMatrix c = a * b;
    EXPECT_DOUBLE_EQ(c(0, 0), 19);
    EXPECT_DOUBLE_EQ(c(0, 1), 22);
    EXPECT_DOUBLE_EQ(c(1, 0), 43);
    EXPECT_DOUBLE_EQ(c(1, 1), 50);
}

TEST(DenseMatrix, MatmulShapeMismatchThrows) {
    DenseMatrix a(2, 3), b(2, 3);
    EXPECT_THROW(a * b, std::invalid_argument);
}

TEST(DenseMatrix, TransposeRoundTrip) {
    std::mt19937_64 rng(7);
    DenseMatrix a = oracle::random_matrix(4, 6, rng);
    EXPECT_EQ(transpose(transpose(a)), a);
}

TEST(FrobeniusDistance, IdenticalIsZero) {
    DenseMatrix a{{1, 2}, {3, 4}};
    EXPECT_DOUBLE_EQ(frobenius_distance(a, a), 0.0);
}

TEST(FrobeniusDistance, IdentityVsZeroIsSqrtTwo) {
    DenseMatrix eye = DenseMatrix::identity(2);
    DenseMatrix zero(2, 2);
    EXPECT_DOUBLE_EQ(frobenius_distance(eye, zero), std::sqrt(2.0));
}

TEST(FrobeniusDistance, MatchesSumOfSquaresOracle) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        DenseMatrix a = oracle::random_matrix(5, 7, rng);
        DenseMatrix b = oracle::random_matrix(5, 7, rng);
        EXPECT_NEAR(frobenius_distance(a, b),
                    oracle::sum_of_squares_distance(a, b), 1e-12);
        EXPECT_DOUBLE_EQ(frobenius_distance(a, b), frobenius_distance(b, a));
    }
}

TEST(FrobeniusDistance, ShapeMismatchThrows) {
    EXPECT_THROW(frobenius_distance(DenseMatrix(2, 2), DenseMatrix(2, 3)),
                 std::invalid_argument);
}
