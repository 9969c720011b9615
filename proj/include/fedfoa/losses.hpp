#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedfoa/matrix.hpp"
#include "fedfoa/procrustes.hpp"

namespace fedfoa {

struct LossValueGrad {
    double loss = 0.0;
    DenseMatrix grad;  // same shape as the input features
};

/// Per-step loss decomposition. total is always contrastive plus
/// lambda times regularizer; regularizer stays zero while warming up or
/// when every peer is gated off.
struct LossBreakdown {
    double contrastive = 0.0;
    double regularizer = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

inline LossBreakdown make_breakdown(double contrastive, double regularizer,
                                    double lambda) {
    return {contrastive, regularizer, lambda,
            contrastive + lambda * regularizer};
}

/// NT-Xent contrastive loss over a two-view batch. Rows 2k and 2k+1 are the
/// two views of sample k and act as each other's positives. Cosine
/// similarities, temperature tau, mean over the 2m anchors; the denominator
/// ranges over every other row including the positive.
inline LossValueGrad contrastive_loss(const DenseMatrix& z, double tau) {
    if (tau <= 0.0) {
        throw std::invalid_argument("contrastive_loss: tau must be positive");
    }
    const std::size_t n = z.rows();
    const std::size_t d = z.cols();
    if (n < 2 || n % 2 != 0) {
        throw std::invalid_argument(
            "contrastive_loss: needs an even number of rows >= 2, got " +
            std::to_string(n));
    }

    // Row norms and unit rows.
    std::vector<double> norm(n);
    DenseMatrix zh(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += z(i, j) * z(i, j);
        norm[i] = std::sqrt(s);
        if (norm[i] == 0.0) {
            throw std::invalid_argument("contrastive_loss: row " +
                                        std::to_string(i) + " has zero norm");
        }
        for (std::size_t j = 0; j < d; ++j) zh(i, j) = z(i, j) / norm[i];
    }

    // Cosine similarity matrix.
    DenseMatrix sim = zh * transpose(zh);

    // Softmax over k != a of sim(a, k) / tau, stabilised by the row max.
    DenseMatrix w(n, n);
    double loss = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t p = a ^ 1;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            if (k != a) m = std::max(m, sim(a, k) / tau);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == a) continue;
            const double e = std::exp(sim(a, k) / tau - m);
            w(a, k) = e;
            denom += e;
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (k != a) w(a, k) /= denom;
        }
        // -log softmax at the positive.
        loss += -(sim(a, p) / tau - m - std::log(denom));
    }
    loss /= static_cast<double>(n);

    // dLoss/dsim(a, k) = (w(a, k) - [k == positive(a)]) / (tau * n).
    DenseMatrix c(n, n);
    const double scale = 1.0 / (tau * static_cast<double>(n));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t k = 0; k < n; ++k) {
            if (k == a) continue;
            c(a, k) = (w(a, k) - (k == (a ^ 1) ? 1.0 : 0.0)) * scale;
        }
    }

    // sim is symmetric in the unit rows: fold both usages, then push the
    // gradient through the normalisation.
    DenseMatrix b(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t k = 0; k < n; ++k) b(a, k) = c(a, k) + c(k, a);

    DenseMatrix ghat = b * zh;  // dLoss/dzh
    DenseMatrix grad(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += ghat(i, j) * zh(i, j);
        for (std::size_t j = 0; j < d; ++j) {
            grad(i, j) = (ghat(i, j) - dot * zh(i, j)) / norm[i];
        }
    }
    return {loss, std::move(grad)};
}

namespace detail {

/// Each row scaled to unit L2 norm; zero rows pass through unchanged.
inline DenseMatrix rows_normalized(const DenseMatrix& z) {
    DenseMatrix out = z;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < out.cols(); ++j)
            norm += out(i, j) * out(i, j);
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) /= norm;
        }
    }
    return out;
}

/// Chain rule through rows_normalized: maps a gradient taken with respect to
/// the normalized rows back to the raw rows. For a zero row the forward pass
/// is the identity, so the gradient passes through unchanged.
inline DenseMatrix rows_normalized_backward(const DenseMatrix& z,
                                            const DenseMatrix& g) {
    DenseMatrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j)
            norm += z(i, j) * z(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            for (std::size_t j = 0; j < z.cols(); ++j) out(i, j) = g(i, j);
            continue;
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j)
            dot += g(i, j) * z(i, j) / norm;
        for (std::size_t j = 0; j < z.cols(); ++j)
            out(i, j) = (g(i, j) - dot * z(i, j) / norm) / norm;
    }
    return out;
}

}  // namespace detail

/// Alignment penalty against one peer correlation matrix. The features are
/// aligned to the peer factor by the closed-form orthogonal map q*, and the
/// penalty is the (squared) alignment residual. q* is treated as a constant
/// in the gradient: it is the argmin of the residual, so first-order changes
/// of q* do not move the loss.
inline LossValueGrad foa_regularizer(const DenseMatrix& z,
                                     const DenseMatrix& r_bar,
                                     bool squared_residual = true) {
    const ProcrustesResult p = procrustes_align(z, r_bar);
    DenseMatrix diff = z;
    diff -= p.q_star * r_bar;
    LossValueGrad out;
    if (squared_residual) {
        out.loss = p.residual * p.residual;
        diff *= 2.0;
        out.grad = std::move(diff);
    } else {
        out.loss = p.residual;
        if (p.residual > 0.0) {
            diff *= 1.0 / p.residual;
            out.grad = std::move(diff);
        } else {
            out.grad = DenseMatrix(z.rows(), z.cols());
        }
    }
    return out;
}

}  // namespace fedfoa
