#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "fedfoa/matrix.hpp"
#include "fedfoa/qr.hpp"

namespace fedfoa {

/// The only object that crosses the client boundary: a round-averaged
/// correlation matrix with its trace and provenance.
struct CorrelationRecord {
    std::uint32_t client_id = 0;
    std::uint32_t round = 0;
    DenseMatrix r_bar;  // n x n upper triangular, non-negative diagonal
    double trace = 0.0;
    std::uint32_t batches_averaged = 0;
};

/// R factor of the thin QR of a feature batch; the cross-feature relation
/// matrix shared between clients.
inline DenseMatrix extract_correlation(const DenseMatrix& z) {
    return qr_decompose(z).r;
}

/// Elementwise mean of the per-batch correlation matrices.
inline DenseMatrix round_average(const std::vector<DenseMatrix>& rs) {
    if (rs.empty()) {
        throw std::invalid_argument("round_average: empty batch list");
    }
    DenseMatrix mean = rs.front();
    for (std::size_t b = 1; b < rs.size(); ++b) {
        mean += rs[b];  // throws on shape mismatch
    }
    mean *= 1.0 / static_cast<double>(rs.size());
    return mean;
}

/// Sum of the diagonal; the feature-independence score used by the gate.
inline double independence_trace(const DenseMatrix& r) {
    return trace(r);  // throws on non-square
}

inline CorrelationRecord make_record(std::uint32_t client_id,
                                     std::uint32_t round,
                                     const std::vector<DenseMatrix>& batch_rs) {
    CorrelationRecord rec;
    rec.client_id = client_id;
    rec.round = round;
    rec.r_bar = round_average(batch_rs);
    rec.trace = independence_trace(rec.r_bar);
    rec.batches_averaged = static_cast<std::uint32_t>(batch_rs.size());
    return rec;
}

/// Symmetric matrix of pairwise Frobenius distances between records' r_bar.
inline DenseMatrix pairwise_distance_map(
    const std::vector<CorrelationRecord>& records) {
    const std::size_t n = records.size();
    DenseMatrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist =
                frobenius_distance(records[i].r_bar, records[j].r_bar);
            d(i, j) = dist;
            d(j, i) = dist;
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Wire format. Little-endian binary: u32 client_id, u32 round, u32 n,
// u32 batches_averaged, f64 trace, then the n(n+1)/2 upper-triangular
// entries of r_bar row by row as f64. The byte count drives all
// communication accounting.
// ---------------------------------------------------------------------------

inline constexpr std::size_t record_header_bytes = 4 * sizeof(std::uint32_t) +
                                                   sizeof(double);

inline constexpr std::size_t serialized_record_size(std::size_t n) {
    return record_header_bytes + sizeof(double) * (n * (n + 1) / 2);
}

namespace detail {

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T read_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) {
        throw std::runtime_error("CorrelationRecord: truncated at byte " +
                                 std::to_string(pos));
    }
    T value;
    std::memcpy(&value, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

}  // namespace detail

inline std::vector<std::uint8_t> to_bytes(const CorrelationRecord& rec) {
    const std::size_t n = rec.r_bar.rows();
    std::vector<std::uint8_t> out;
    out.reserve(serialized_record_size(n));
    detail::append_le(out, rec.client_id);
    detail::append_le(out, rec.round);
    detail::append_le(out, static_cast<std::uint32_t>(n));
    detail::append_le(out, rec.batches_averaged);
    detail::append_le(out, rec.trace);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) detail::append_le(out, rec.r_bar(i, j));
    return out;
}

inline CorrelationRecord record_from_bytes(const std::vector<std::uint8_t>& in) {
    std::size_t pos = 0;
    CorrelationRecord rec;
    rec.client_id = detail::read_le<std::uint32_t>(in, pos);
    rec.round = detail::read_le<std::uint32_t>(in, pos);
    const auto n = detail::read_le<std::uint32_t>(in, pos);
    rec.batches_averaged = detail::read_le<std::uint32_t>(in, pos);
    rec.trace = detail::read_le<double>(in, pos);
    rec.r_bar = DenseMatrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j)
            rec.r_bar(i, j) = detail::read_le<double>(in, pos);
    if (pos != in.size()) {
        throw std::runtime_error("CorrelationRecord: trailing bytes after " +
                                 std::to_string(pos));
    }
    return rec;
}

inline nlohmann::json record_to_json(const CorrelationRecord& rec) {
    const std::size_t n = rec.r_bar.rows();
    std::vector<double> upper;
    upper.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) upper.push_back(rec.r_bar(i, j));
    return nlohmann::json{{"client_id", rec.client_id},
                          {"round", rec.round},
                          {"n", n},
                          {"batches_averaged", rec.batches_averaged},
                          {"trace", rec.trace},
                          {"r_upper", upper}};
}

inline CorrelationRecord record_from_json(const nlohmann::json& j) {
    CorrelationRecord rec;
    rec.client_id = j.at("client_id").get<std::uint32_t>();
    rec.round = j.at("round").get<std::uint32_t>();
    const auto n = j.at("n").get<std::size_t>();
    rec.batches_averaged = j.at("batches_averaged").get<std::uint32_t>();
    rec.trace = j.at("trace").get<double>();
    const auto upper = j.at("r_upper").get<std::vector<double>>();
    if (upper.size() != n * (n + 1) / 2) {
        throw std::runtime_error("CorrelationRecord: r_upper length mismatch");
    }
    rec.r_bar = DenseMatrix(n, n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j2 = i; j2 < n; ++j2) rec.r_bar(i, j2) = upper[k++];
    return rec;
}

}  // namespace fedfoa
