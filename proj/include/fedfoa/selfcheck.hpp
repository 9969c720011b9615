#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fedfoa/gradient_check.hpp"
#include "fedfoa/losses.hpp"
#include "fedfoa/matrix.hpp"
#include "fedfoa/procrustes.hpp"
#include "fedfoa/qr.hpp"
#include "fedfoa/rng.hpp"
#include "fedfoa/svd.hpp"

namespace fedfoa {

struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    double worst = 0.0;  // worst observed value of the suite's metric
    double limit = 0.0;  // metric threshold a passing suite stays under
    double seconds = 0.0;

    bool passed() const { return failures == 0; }
};

namespace detail {

class SuiteTimer {
  public:
    explicit SuiteTimer(SuiteResult& result)
        : result_(result), start_(std::chrono::steady_clock::now()) {}
    ~SuiteTimer() {
        result_.seconds = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - start_)
                              .count();
    }

  private:
    SuiteResult& result_;
    std::chrono::steady_clock::time_point start_;
};

inline double relative_residual(const DenseMatrix& approx,
                                const DenseMatrix& exact) {
    const double base = frobenius_norm(exact);
    return frobenius_distance(approx, exact) / (base > 0.0 ? base : 1.0);
}

}  // namespace detail

/// Random rectangular factorizations: reconstruction, orthonormal columns,
/// exact upper-triangularity, non-negative diagonal.
inline SuiteResult run_qr_suite(std::size_t count = 200,
                                std::uint64_t seed = 7001) {
    SuiteResult res{.name = "qr", .limit = 1e-8};
    detail::SuiteTimer timer(res);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> mdist(8, 128), ndist(2, 32);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t m = mdist(rng), n = ndist(rng);
        if (m < n) std::swap(m, n);
        const DenseMatrix z = gaussian_matrix(m, n, rng);
        const QrFactors f = qr_decompose(z);
        ++res.cases;

        double metric = detail::relative_residual(f.q * f.r, z);
        metric = std::max(metric, orthogonality_error(f.q));
        bool ok = metric <= res.limit;
        for (std::size_t r = 0; r < n && ok; ++r) {
            if (f.r(r, r) < 0.0) ok = false;
            for (std::size_t c = 0; c < r; ++c)
                if (f.r(r, c) != 0.0) ok = false;
        }
        res.worst = std::max(res.worst, metric);
        if (!ok) ++res.failures;
    }
    return res;
}

/// Random matrices up to 64x64: reconstruction, orthonormality of both
/// factor bases, non-increasing non-negative singular values.
inline SuiteResult run_svd_suite(std::size_t count = 100,
                                 std::uint64_t seed = 7002) {
    SuiteResult res{.name = "svd", .limit = 1e-7};
    detail::SuiteTimer timer(res);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(2, 64);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t m = dim(rng), n = dim(rng);
        const DenseMatrix a = gaussian_matrix(m, n, rng);
        const SvdResult svd = thin_svd(a);
        ++res.cases;

        DenseMatrix us = svd.u;
        for (std::size_t r = 0; r < us.rows(); ++r)
            for (std::size_t c = 0; c < us.cols(); ++c)
                us(r, c) *= svd.sigma[c];
        double metric = detail::relative_residual(us * transpose(svd.v), a);
        metric = std::max(metric, orthogonality_error(svd.u));
        metric = std::max(metric, orthogonality_error(svd.v));
        bool ok = metric <= res.limit;
        for (std::size_t k = 0; k < svd.sigma.size(); ++k) {
            if (svd.sigma[k] < 0.0) ok = false;
            if (k > 0 && svd.sigma[k] > svd.sigma[k - 1]) ok = false;
        }
        res.worst = std::max(res.worst, metric);
        if (!ok) ++res.failures;
    }
    return res;
}

/// Alignment optimality oracle: the closed-form solution must match or beat
/// the best of many random orthonormal-column candidates on every instance.
inline SuiteResult run_procrustes_suite(std::size_t instances = 50,
                                        std::size_t candidates = 10000,
                                        std::uint64_t seed = 7003) {
    SuiteResult res{.name = "procrustes", .limit = 1e-9};
    detail::SuiteTimer timer(res);
    std::mt19937_64 rng(seed);
    const std::size_t m = 16, n = 4;
    // The metric is signed (residual minus best candidate), usually negative.
    res.worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < instances; ++i) {
        const DenseMatrix z = gaussian_matrix(m, n, rng);
        const DenseMatrix r = qr_decompose(gaussian_matrix(m, n, rng)).r;
        const ProcrustesResult closed = procrustes_align(z, r);
        ++res.cases;

        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < candidates; ++c) {
            const DenseMatrix q = qr_decompose(gaussian_matrix(m, n, rng)).q;
            best = std::min(best, frobenius_distance(z, q * r));
        }
        const double metric = closed.residual - best;
        res.worst = std::max(res.worst, metric);
        if (metric > res.limit) ++res.failures;
    }
    return res;
}

namespace detail {

/// A small random ReLU stack (well under the 1e4-parameter bound that keeps
/// central differences tractable).
inline EncoderModel random_small_model(std::mt19937_64& rng,
                                       std::size_t input_dim, std::size_t d) {
    std::uniform_int_distribution<int> depth_dist(1, 3);
    std::uniform_int_distribution<int> width_pick(0, 2);
    const std::size_t widths[3] = {8, 16, 32};
    EncoderModel m;
    m.arch_id = "check-mlp";
    std::size_t dim = input_dim;
    const int depth = depth_dist(rng);
    for (int l = 0; l < depth; ++l) {
        const std::size_t w = widths[width_pick(rng)];
        DenseLayer layer;
        layer.w = gaussian_matrix(dim, w, rng,
                                  std::sqrt(2.0 / static_cast<double>(dim)));
        layer.b.assign(w, 0.0);
        layer.act = Activation::relu;
        m.layers.push_back(std::move(layer));
        dim = w;
    }
    m.calibration.w =
        gaussian_matrix(dim, d, rng, std::sqrt(1.0 / static_cast<double>(dim)));
    // Small nonzero biases keep feature rows away from exactly zero even when
    // every hidden unit of a sample is dead, and exercise the bias gradients.
    std::normal_distribution<double> bias(0.0, 0.1);
    m.calibration.b.resize(d);
    for (double& v : m.calibration.b) v = bias(rng);
    m.calibration.act = Activation::none;
    return m;
}

}  // namespace detail

/// Composite-loss gradients (contrastive plus gated alignment term) against
/// central finite differences on small random models.
inline SuiteResult run_gradient_suite(std::size_t count = 20,
                                      std::uint64_t seed = 7004) {
    SuiteResult res{.name = "gradients", .limit = 1e-4};
    detail::SuiteTimer timer(res);
    std::mt19937_64 rng(seed);
    const double tau = 0.5, lambda = 0.01;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t input_dim = 6 + i % 5;
        const std::size_t d = 4;
        const std::size_t batch_m = 6;  // paired rows: contrastive needs 2m
        EncoderModel model = detail::random_small_model(rng, input_dim, d);
        const DenseMatrix batch = gaussian_matrix(batch_m, input_dim, rng);

        // Alternate between the raw and the row-normalized correlation
        // paths so both alignment gradients get checked.
        const bool normalized = i % 2 == 1;

        // A peer factor with clearly higher trace keeps the gate open in a
        // whole neighborhood, so the composite loss stays differentiable.
        const DenseMatrix z0 = forward_features(model, batch);
        DenseMatrix r_peer =
            qr_decompose(normalized ? detail::rows_normalized(z0) : z0).r;
        r_peer *= 1.5;
        const double peer_trace = trace(r_peer);

        auto loss = [&r_peer, peer_trace, tau, lambda,
                     normalized](const DenseMatrix& z) {
            LossValueGrad total = contrastive_loss(z, tau);
            const DenseMatrix z_corr =
                normalized ? detail::rows_normalized(z) : z;
            if (peer_trace > trace(qr_decompose(z_corr).r)) {
                LossValueGrad reg = foa_regularizer(z_corr, r_peer);
                total.loss += lambda * reg.loss;
                reg.grad *= lambda;
                total.grad += normalized
                                  ? detail::rows_normalized_backward(z, reg.grad)
                                  : reg.grad;
            }
            return total;
        };
        const double err = gradient_check(model, batch, loss);
        ++res.cases;
        res.worst = std::max(res.worst, err);
        if (err > res.limit) ++res.failures;
    }
    return res;
}

inline std::vector<SuiteResult> run_all_suites() {
    return {run_qr_suite(), run_svd_suite(), run_procrustes_suite(),
            run_gradient_suite()};
}

}  // namespace fedfoa
