#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedfoa/data.hpp"
#include "fedfoa/encoder.hpp"
#include "fedfoa/federation.hpp"
#include "fedfoa/matrix.hpp"

namespace fedfoa {

/// Linear evaluation protocol: a softmax classifier on frozen encoder
/// outputs, trained from zeros by full-batch gradient descent. Returns
/// top-1 accuracy on the test set. Fully deterministic.
inline double linear_probe(const EncoderModel& encoder, const Dataset& train,
                           const Dataset& test, std::size_t epochs, double lr) {
    if (!train.has_labels() || !test.has_labels()) {
        throw std::invalid_argument("linear_probe: datasets must be labeled");
    }
    if (epochs == 0 || lr <= 0.0) {
        throw std::invalid_argument("linear_probe: epochs and lr must be positive");
    }
    std::uint32_t num_classes = 0;
    for (std::uint32_t l : train.labels) num_classes = std::max(num_classes, l + 1);
    for (std::uint32_t l : test.labels) {
        if (l >= num_classes) {
            throw std::invalid_argument(
                "linear_probe: test label " + std::to_string(l) +
                " out of range [0," + std::to_string(num_classes) + ")");
        }
    }

    const DenseMatrix e_train = forward_features(encoder, train.samples);
    const DenseMatrix e_test = forward_features(encoder, test.samples);
    const std::size_t n = e_train.rows();
    const std::size_t d = e_train.cols();
    const std::size_t c = num_classes;

    DenseMatrix w(d, c);
    std::vector<double> bias(c, 0.0);

    DenseMatrix probs(n, c);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        probs = e_train * w;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < c; ++k) {
                probs(i, k) += bias[k];
                mx = std::max(mx, probs(i, k));
            }
            double denom = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                probs(i, k) = std::exp(probs(i, k) - mx);
                denom += probs(i, k);
            }
            for (std::size_t k = 0; k < c; ++k) probs(i, k) /= denom;
            probs(i, train.labels[i]) -= 1.0;  // softmax - one-hot
        }
        probs *= 1.0 / static_cast<double>(n);
        const DenseMatrix dw = transpose(e_train) * probs;
        for (std::size_t i = 0; i < w.size(); ++i)
            w.data()[i] -= lr * dw.data()[i];
        for (std::size_t k = 0; k < c; ++k) {
            double db = 0.0;
            for (std::size_t i = 0; i < n; ++i) db += probs(i, k);
            bias[k] -= lr * db;
        }
    }

    const DenseMatrix logits = e_test * w;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < e_test.rows(); ++i) {
        std::size_t best = 0;
        double best_v = logits(i, 0) + bias[0];
        for (std::size_t k = 1; k < c; ++k) {
            const double v = logits(i, k) + bias[k];
            if (v > best_v) {
                best_v = v;
                best = k;
            }
        }
        if (best == test.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(e_test.rows());
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw std::invalid_argument(
            "correlation undefined: a sequence has fewer than 2 distinct values");
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Spearman rank correlation with average ranks on ties.
inline double spearman(const std::vector<double>& x,
                       const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("spearman: need two equal-length sequences");
    }
    return detail::pearson(detail::ranks_with_ties(x),
                           detail::ranks_with_ties(y));
}

// ---------------------------------------------------------------------------
// Probe checkpoints over a training run
// ---------------------------------------------------------------------------

struct ProbePoint {
    std::uint32_t round = 0;
    std::vector<double> client_accuracy;
    double mean_accuracy = 0.0;
    double mean_trace = 0.0;  // mean over clients of trace(R̄) that round
};

/// Rank correlation between correlation-knowledge quality (mean trace) and
/// probe accuracy across checkpoints; the directional independence claim.
inline double trace_accuracy_correlation(const std::vector<ProbePoint>& points) {
    if (points.size() < 5) {
        throw std::invalid_argument(
            "trace_accuracy_correlation: need at least 5 checkpoints, got " +
            std::to_string(points.size()));
    }
    std::vector<double> traces, accs;
    for (const auto& p : points) {
        traces.push_back(p.mean_trace);
        accs.push_back(p.mean_accuracy);
    }
    return spearman(traces, accs);
}

/// Probes every client on the shared held-out test set, training the probe
/// on that client's own labeled partition.
inline ProbePoint probe_federation(const Federation& f,
                                   const RoundReport& report) {
    ProbePoint point;
    point.round = report.round;
    double acc_sum = 0.0, trace_sum = 0.0;
    for (std::size_t i = 0; i < f.clients.size(); ++i) {
        const double acc =
            linear_probe(f.clients[i].model, f.partitions[i], f.test_set,
                         f.cfg.probe_epochs, f.cfg.probe_lr);
        point.client_accuracy.push_back(acc);
        acc_sum += acc;
    }
    for (const auto& row : report.clients) trace_sum += row.trace_rbar;
    point.mean_accuracy = acc_sum / static_cast<double>(f.clients.size());
    point.mean_trace = trace_sum / static_cast<double>(report.clients.size());
    return point;
}

struct ProbedRun {
    Federation federation;
    std::vector<ProbePoint> probes;
};

/// Full training with a probe checkpoint every cfg.probe_every rounds
/// (counted so the final round is always a checkpoint when probe_every
/// divides the round count).
inline ProbedRun run_probed_training(const RunConfig& cfg) {
    ProbedRun out;
    out.federation = setup_federation(cfg);
    while (out.federation.history.size() < cfg.rounds) {
        const RoundReport report = run_round(out.federation);
        if ((report.round + 1) % cfg.probe_every == 0) {
            out.probes.push_back(probe_federation(out.federation, report));
        }
    }
    return out;
}

}  // namespace fedfoa
