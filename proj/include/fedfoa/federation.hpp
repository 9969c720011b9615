#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedfoa/config.hpp"
#include "fedfoa/correlation.hpp"
#include "fedfoa/data.hpp"
#include "fedfoa/encoder.hpp"
#include "fedfoa/losses.hpp"
#include "fedfoa/matrix.hpp"
#include "fedfoa/rng.hpp"

namespace fedfoa {

/// Latest correlation record per client, plus an append-only log so the
/// per-round distance history can be exported after the run.
class MemoryBank {
  public:
    void commit(const CorrelationRecord& rec) {
        auto it = latest_.find(rec.client_id);
        if (it != latest_.end() && rec.round <= it->second.round) {
            throw std::invalid_argument(
                "MemoryBank: client " + std::to_string(rec.client_id) +
                " round " + std::to_string(rec.round) +
                " does not advance past round " +
                std::to_string(it->second.round));
        }
        latest_.insert_or_assign(rec.client_id, rec);
        log_.push_back(rec);
    }

    const std::map<std::uint32_t, CorrelationRecord>& latest() const {
        return latest_;
    }
    const std::vector<CorrelationRecord>& log() const { return log_; }

  private:
    std::map<std::uint32_t, CorrelationRecord> latest_;
    std::vector<CorrelationRecord> log_;
};

struct ClientState {
    std::uint32_t client_id = 0;
    EncoderModel model;
    std::uint64_t data_seed = 0;        // per-client stream for batches/views
    std::vector<DenseMatrix> round_rs;  // per-batch R of the current round
};

struct ClientRow {
    std::uint32_t client_id = 0;
    std::string arch_id;
    LossBreakdown losses;  // round averages
    double trace_rbar = 0.0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
};

struct RoundReport {
    std::uint32_t round = 0;
    std::vector<ClientRow> clients;
    double wall_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// FoA loss terms
// ---------------------------------------------------------------------------

struct FoaTerms {
    double reg_sum = 0.0;        // sum of per-peer alignment losses
    DenseMatrix grad;            // lambda-scaled gradient, ready to add
    std::size_t peers_used = 0;  // peers that passed the trace gate
};

/// Alignment terms from every peer whose stored correlation knowledge beats
/// this batch's own independence score (the trace gate). Peer records from
/// the current or a future round are invisible (staleness-one reads).
inline FoaTerms fedfoa_loss_terms(const DenseMatrix& z, const DenseMatrix& r_own,
                                  const MemoryBank& bank, std::uint32_t self_id,
                                  double lambda, std::uint32_t round,
                                  bool squared_residual = true,
                                  std::size_t peers_per_batch = 0) {
    FoaTerms terms;
    terms.grad = DenseMatrix(z.rows(), z.cols());
    const double own_trace = independence_trace(r_own);
    for (const auto& [peer_id, rec] : bank.latest()) {
        if (peer_id == self_id || rec.round >= round) continue;
        if (rec.r_bar.rows() != z.cols()) {
            throw std::invalid_argument(
                "fedfoa_loss_terms: peer " + std::to_string(peer_id) +
                " has projection dim " + std::to_string(rec.r_bar.rows()) +
                ", features have " + std::to_string(z.cols()));
        }
        if (!(rec.trace > own_trace)) continue;
        LossValueGrad lv = foa_regularizer(z, rec.r_bar, squared_residual);
        terms.reg_sum += lv.loss;
        lv.grad *= lambda;
        terms.grad += lv.grad;
        ++terms.peers_used;
        if (peers_per_batch > 0 && terms.peers_used == peers_per_batch) break;
    }
    return terms;
}

// ---------------------------------------------------------------------------
// One client, one round
// ---------------------------------------------------------------------------

struct ClientRoundResult {
    ClientState state;
    CorrelationRecord record;
    LossBreakdown round_mean;
    std::uint64_t bytes_down = 0;
};

/// Algorithm: per batch, compute the two-view features, extract R, take the
/// contrastive loss, and past warm-up add the trace-gated alignment terms;
/// one SGD step per batch. Publishes the round-averaged R at the end.
/// The data parameter is label-free by type: training cannot see labels.
inline ClientRoundResult client_local_round(ClientState state,
                                            const UnlabeledView& data,
                                            const MemoryBank& bank,
                                            const RunConfig& cfg,
                                            std::uint32_t round) {
    if (data.size() == 0) {
        throw std::invalid_argument("client_local_round: empty partition");
    }
    const bool foa_active = cfg.mode == Mode::fedfoa && cfg.lambda > 0.0 &&
                            round > cfg.t_warm;

    const std::uint64_t round_seed = derive_seed(state.data_seed, round);
    const std::vector<std::size_t> order =
        shuffled_indices(data.size(), derive_seed(round_seed, 1));
    std::mt19937_64 aug_rng(derive_seed(round_seed, 2));

    AugmentConfig aug;
    aug.noise_sigma = cfg.aug_noise;
    aug.dropout_rate = cfg.aug_dropout;
    aug.horizontal_flip = cfg.aug_flip;
    aug.image = data.image();

    ClientRoundResult out;
    out.round_mean.lambda = cfg.lambda;
    state.round_rs.clear();

    // Peer knowledge is fetched once per round when the protocol is active.
    if (foa_active) {
        for (const auto& [peer_id, rec] : bank.latest()) {
            if (peer_id != state.client_id && rec.round < round) {
                out.bytes_down += serialized_record_size(rec.r_bar.rows());
            }
        }
    }

    const std::size_t m = cfg.batch_size;
    DenseMatrix batch(m, data.input_dim());
    for (std::size_t b = 0; b < cfg.batches_per_round; ++b) {
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t src = order[(b * m + i) % data.size()];
            for (std::size_t j = 0; j < data.input_dim(); ++j)
                batch(i, j) = data.samples()(src, j);
        }
        DenseMatrix views = two_view_augment(batch, aug, aug_rng);
        auto [z, cache] = forward(state.model, views);

        // The correlation pipeline (extraction, trace gate, alignment
        // residual) sees one feature matrix: normalized rows when the flag
        // is set, the raw projection otherwise.
        DenseMatrix z_normalized;
        if (cfg.normalize_before_qr) z_normalized = detail::rows_normalized(z);
        const DenseMatrix& z_corr = cfg.normalize_before_qr ? z_normalized : z;

        DenseMatrix r = extract_correlation(z_corr);

        LossValueGrad contrastive = contrastive_loss(z, cfg.tau);
        double reg_sum = 0.0;
        if (foa_active) {
            FoaTerms terms = fedfoa_loss_terms(
                z_corr, r, bank, state.client_id, cfg.lambda, round,
                cfg.squared_residual, cfg.peers_per_batch);
            if (terms.peers_used > 0) {
                reg_sum = terms.reg_sum;
                contrastive.grad +=
                    cfg.normalize_before_qr
                        ? detail::rows_normalized_backward(z, terms.grad)
                        : terms.grad;
            }
        }
        state.round_rs.push_back(std::move(r));

        LossBreakdown step = make_breakdown(contrastive.loss, reg_sum, cfg.lambda);
        out.round_mean.contrastive += step.contrastive;
        out.round_mean.regularizer += step.regularizer;
        out.round_mean.total += step.total;

        state.model = backward_and_step(state.model, cache, contrastive.grad,
                                        cfg.lr);
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batches_per_round);
    out.round_mean.contrastive *= inv_b;
    out.round_mean.regularizer *= inv_b;
    out.round_mean.total *= inv_b;

    out.record = make_record(state.client_id, round, state.round_rs);
    out.state = std::move(state);
    return out;
}

// ---------------------------------------------------------------------------
// FedAvg baseline
// ---------------------------------------------------------------------------

/// Elementwise weighted parameter mean; only defined when every client runs
/// the same architecture, which is exactly the restriction the correlation
/// exchange removes.
inline EncoderModel fedavg_aggregate(const std::vector<EncoderModel>& models,
                                     const std::vector<double>& weights) {
    if (models.empty() || models.size() != weights.size()) {
        throw std::invalid_argument("fedavg_aggregate: need one weight per model");
    }
    double weight_sum = 0.0;
    for (double w : weights) weight_sum += w;
    if (std::abs(weight_sum - 1.0) > 1e-9) {
        throw std::invalid_argument("fedavg_aggregate: weights must sum to 1");
    }
    const EncoderModel& first = models.front();
    for (const auto& m : models) {
        if (m.arch_id != first.arch_id ||
            m.parameter_count() != first.parameter_count()) {
            throw std::invalid_argument(
                "fedavg_aggregate: heterogeneous architectures (" + m.arch_id +
                " vs " + first.arch_id + "); parameter averaging is infeasible");
        }
    }

    EncoderModel out = first;
    auto scale_layer = [](DenseLayer& l, double w) {
        for (double& v : l.w.data()) v *= w;
        for (double& v : l.b) v *= w;
    };
    auto add_layer = [](DenseLayer& into, const DenseLayer& from, double w) {
        for (std::size_t i = 0; i < into.w.size(); ++i)
            into.w.data()[i] += w * from.w.data()[i];
        for (std::size_t i = 0; i < into.b.size(); ++i)
            into.b[i] += w * from.b[i];
    };
    for (auto& l : out.layers) scale_layer(l, weights[0]);
    scale_layer(out.calibration, weights[0]);
    for (std::size_t k = 1; k < models.size(); ++k) {
        for (std::size_t li = 0; li < out.layers.size(); ++li)
            add_layer(out.layers[li], models[k].layers[li], weights[k]);
        add_layer(out.calibration, models[k].calibration, weights[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct Federation {
    RunConfig cfg;
    std::vector<Dataset> partitions;  // labeled; trainer sees UnlabeledView
    Dataset test_set;                 // held-out, probe-only
    std::vector<ClientState> clients;
    MemoryBank bank;
    std::vector<RoundReport> history;
};

/// Data generation, IID partitioning, and per-client model initialization.
/// Every random stream is derived from cfg.seed, so two setups with the same
/// config are identical.
inline Federation setup_federation(const RunConfig& cfg) {
    validate_config(cfg);
    Federation f;
    f.cfg = cfg;

    Dataset global_train;
    if (cfg.dataset.source == DataSource::synthetic) {
        SyntheticSplit split = gen_synthetic_split(
            cfg.dataset.num_classes, cfg.dataset.input_dim,
            cfg.dataset.samples_per_class * cfg.num_clients,
            cfg.dataset.test_per_class, cfg.dataset.noise_scale,
            derive_seed(cfg.seed, stream_dataset));
        global_train = std::move(split.train);
        f.test_set = std::move(split.test);
    } else {
        Cifar10 cifar = load_cifar10(cfg.dataset.data_path);
        global_train = std::move(cifar.train);
        f.test_set = std::move(cifar.test);
    }

    f.partitions = partition_iid(global_train, cfg.num_clients,
                                 derive_seed(cfg.seed, stream_partition));

    const std::size_t input_dim = f.partitions.front().input_dim();
    for (std::size_t i = 0; i < cfg.num_clients; ++i) {
        ClientState state;
        state.client_id = static_cast<std::uint32_t>(i);
        state.model =
            make_encoder(arch_for_client(cfg, i), input_dim, cfg.projection_dim,
                         derive_seed(cfg.seed, stream_client_model + i));
        state.data_seed = derive_seed(cfg.seed, stream_client_data + i);
        f.clients.push_back(std::move(state));
    }
    return f;
}

/// One synchronous round: every client trains against the same bank
/// snapshot (concurrently; results do not depend on scheduling), then the
/// published records are committed in client order.
inline RoundReport run_round(Federation& f) {
    const std::uint32_t t = static_cast<std::uint32_t>(f.history.size());
    const auto start = std::chrono::steady_clock::now();
    const MemoryBank snapshot = f.bank;

    std::vector<std::future<ClientRoundResult>> jobs;
    jobs.reserve(f.clients.size());
    for (std::size_t i = 0; i < f.clients.size(); ++i) {
        jobs.push_back(std::async(
            std::launch::async,
            [&f, &snapshot, t, i, state = std::move(f.clients[i])]() mutable {
                return client_local_round(std::move(state),
                                          UnlabeledView(f.partitions[i]),
                                          snapshot, f.cfg, t);
            }));
    }

    RoundReport report;
    report.round = t;
    std::vector<ClientRoundResult> results;
    results.reserve(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        try {
            results.push_back(jobs[i].get());
        } catch (const std::exception& e) {
            // Drain the remaining workers before failing the round.
            for (std::size_t k = i + 1; k < jobs.size(); ++k) {
                try {
                    jobs[k].get();
                } catch (...) {
                }
            }
            throw std::runtime_error("round " + std::to_string(t) + ", client " +
                                     std::to_string(i) + ": " + e.what());
        }
    }

    for (std::size_t i = 0; i < results.size(); ++i) {
        ClientRoundResult& res = results[i];
        ClientRow row;
        row.client_id = res.state.client_id;
        row.arch_id = res.state.model.arch_id;
        row.losses = res.round_mean;
        row.trace_rbar = res.record.trace;
        row.bytes_down = res.bytes_down;
        if (f.cfg.mode != Mode::fedavg) {
            row.bytes_up = serialized_record_size(res.record.r_bar.rows());
            f.bank.commit(res.record);
        }
        f.clients[i] = std::move(res.state);
        report.clients.push_back(std::move(row));
    }

    if (f.cfg.mode == Mode::fedavg) {
        std::vector<EncoderModel> models;
        std::vector<double> weights;
        double total = 0.0;
        for (const auto& p : f.partitions) total += static_cast<double>(p.size());
        for (std::size_t i = 0; i < f.clients.size(); ++i) {
            models.push_back(f.clients[i].model);
            weights.push_back(static_cast<double>(f.partitions[i].size()) / total);
        }
        EncoderModel aggregated = fedavg_aggregate(models, weights);
        const std::uint64_t down = checkpoint_bytes(aggregated);
        for (std::size_t i = 0; i < f.clients.size(); ++i) {
            report.clients[i].bytes_up = checkpoint_bytes(f.clients[i].model);
            report.clients[i].bytes_down = down;
            f.clients[i].model = aggregated;
        }
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    f.history.push_back(report);
    return report;
}

using RoundObserver =
    std::function<void(const Federation&, const RoundReport&)>;

/// Runs cfg.rounds rounds on an already-set-up federation. The observer, if
/// any, fires after each committed round (probe checkpoints hook in here).
inline const std::vector<RoundReport>& run_training(
    Federation& f, const RoundObserver& observer = {}) {
    while (f.history.size() < f.cfg.rounds) {
        RoundReport done = run_round(f);
        if (observer) observer(f, done);
    }
    return f.history;
}

struct TrainResult {
    std::vector<RoundReport> history;
    Federation federation;
};

/// Convenience wrapper: setup plus full training from one config.
inline TrainResult run_training(const RunConfig& cfg,
                                const RoundObserver& observer = {}) {
    TrainResult out;
    out.federation = setup_federation(cfg);
    run_training(out.federation, observer);
    out.history = out.federation.history;
    return out;
}

// ---------------------------------------------------------------------------
// Communication accounting
// ---------------------------------------------------------------------------

enum class CommMode { round_wise, batch_wise };

/// Bytes per client per round for publishing correlation knowledge.
/// Batch-wise publication (one record per batch) costs exactly B times the
/// round-wise scheme the protocol uses.
inline std::uint64_t comm_cost(const RunConfig& cfg, CommMode mode) {
    const std::uint64_t per_record = serialized_record_size(cfg.projection_dim);
    return mode == CommMode::round_wise
               ? per_record
               : per_record * static_cast<std::uint64_t>(cfg.batches_per_round);
}

}  // namespace fedfoa
