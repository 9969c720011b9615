#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedfoa/correlation.hpp"
#include "fedfoa/data.hpp"
#include "fedfoa/encoder.hpp"
#include "fedfoa/federation.hpp"
#include "fedfoa/format.hpp"
#include "fedfoa/probe.hpp"

namespace fedfoa {

inline constexpr const char* kMetricsHeader =
    "round,client_id,arch_id,loss_contrastive,loss_reg,trace_rbar,bytes_up,"
    "bytes_down";

/// One row per client per round; doubles in shortest round-trip form, so
/// equal histories always serialize to byte-equal files.
inline std::string metrics_csv(const std::vector<RoundReport>& history) {
    std::ostringstream os;
    os << kMetricsHeader << "\n";
    for (const auto& report : history) {
        for (const auto& row : report.clients) {
            os << report.round << "," << row.client_id << "," << row.arch_id
               << "," << format_double(row.losses.contrastive) << ","
               << format_double(row.losses.regularizer) << ","
               << format_double(row.trace_rbar) << "," << row.bytes_up << ","
               << row.bytes_down << "\n";
        }
    }
    return os.str();
}

/// The same rows as newline-delimited JSON objects.
inline std::string metrics_ndjson(const std::vector<RoundReport>& history) {
    std::ostringstream os;
    for (const auto& report : history) {
        for (const auto& row : report.clients) {
            nlohmann::json j{{"round", report.round},
                             {"client_id", row.client_id},
                             {"arch_id", row.arch_id},
                             {"loss_contrastive", row.losses.contrastive},
                             {"loss_reg", row.losses.regularizer},
                             {"trace_rbar", row.trace_rbar},
                             {"bytes_up", row.bytes_up},
                             {"bytes_down", row.bytes_down}};
            os << j.dump() << "\n";
        }
    }
    return os.str();
}

inline constexpr const char* kHeatmapHeader = "round,client_i,client_j,distance";

/// Long-format pairwise R̄ distances for the requested rounds; each
/// unordered pair appears once (client_i < client_j).
inline std::string heatmap_csv(const std::vector<CorrelationRecord>& log,
                               const std::vector<std::uint32_t>& rounds) {
    std::map<std::uint32_t, std::vector<CorrelationRecord>> by_round;
    for (const auto& rec : log) by_round[rec.round].push_back(rec);

    std::ostringstream os;
    os << kHeatmapHeader << "\n";
    for (std::uint32_t round : rounds) {
        auto it = by_round.find(round);
        if (it == by_round.end()) {
            throw std::invalid_argument("heatmap: round " +
                                        std::to_string(round) +
                                        " is not in the correlation history");
        }
        std::vector<CorrelationRecord>& recs = it->second;
        std::sort(recs.begin(), recs.end(),
                  [](const CorrelationRecord& a, const CorrelationRecord& b) {
                      return a.client_id < b.client_id;
                  });
        for (std::size_t i = 0; i < recs.size(); ++i) {
            for (std::size_t j = i + 1; j < recs.size(); ++j) {
                os << round << "," << recs[i].client_id << ","
                   << recs[j].client_id << ","
                   << format_double(
                          frobenius_distance(recs[i].r_bar, recs[j].r_bar))
                   << "\n";
            }
        }
    }
    return os.str();
}

/// Projection-space embeddings of a deterministic subsample, one labeled
/// row per sample, for external 2-D projection tools.
inline std::string embeddings_csv(const EncoderModel& encoder,
                                  const Dataset& ds, std::size_t sample_count,
                                  std::uint64_t seed) {
    if (!ds.has_labels()) {
        throw std::invalid_argument("embeddings_csv: dataset must be labeled");
    }
    if (sample_count > ds.size()) {
        throw std::invalid_argument("embeddings_csv: sample_count " +
                                    std::to_string(sample_count) +
                                    " exceeds dataset size " +
                                    std::to_string(ds.size()));
    }
    std::ostringstream os;
    os << "label";
    for (std::size_t j = 0; j < encoder.output_dim(); ++j) os << ",e" << j;
    os << "\n";

    const std::vector<std::size_t> order = shuffled_indices(ds.size(), seed);
    DenseMatrix rows(sample_count, ds.input_dim());
    for (std::size_t r = 0; r < sample_count; ++r)
        for (std::size_t j = 0; j < ds.input_dim(); ++j)
            rows(r, j) = ds.samples(order[r], j);
    if (sample_count == 0) return os.str();

    const DenseMatrix z = forward_features(encoder, rows);
    for (std::size_t r = 0; r < sample_count; ++r) {
        os << ds.labels[order[r]];
        for (std::size_t j = 0; j < z.cols(); ++j)
            os << "," << format_double(z(r, j));
        os << "\n";
    }
    return os.str();
}

inline constexpr const char* kProbesHeader =
    "round,client_id,accuracy,round_mean_accuracy,round_mean_trace";

inline std::string probes_csv(const std::vector<ProbePoint>& points) {
    std::ostringstream os;
    os << kProbesHeader << "\n";
    for (const auto& p : points) {
        for (std::size_t i = 0; i < p.client_accuracy.size(); ++i) {
            os << p.round << "," << i << ","
               << format_double(p.client_accuracy[i]) << ","
               << format_double(p.mean_accuracy) << ","
               << format_double(p.mean_trace) << "\n";
        }
    }
    return os.str();
}

/// Correlation history as newline-delimited JSON; the `heatmap` tool reads
/// this back after a run.
inline std::string correlation_log_ndjson(
    const std::vector<CorrelationRecord>& log) {
    std::ostringstream os;
    for (const auto& rec : log) os << record_to_json(rec).dump() << "\n";
    return os.str();
}

inline std::vector<CorrelationRecord> load_correlation_log_ndjson(
    std::istream& is) {
    std::vector<CorrelationRecord> log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            log.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("correlation log line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
    }
    return log;
}

inline std::vector<CorrelationRecord> load_correlation_log_file(
    const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load_correlation_log_ndjson(is);
}

inline void save_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << text;
}

}  // namespace fedfoa
