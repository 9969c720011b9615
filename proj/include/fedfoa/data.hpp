#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedfoa/format.hpp"
#include "fedfoa/matrix.hpp"
#include "fedfoa/rng.hpp"

namespace fedfoa {

enum class DataSource : std::uint8_t { synthetic = 0, cifar10 = 1 };

struct ImageShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
};

/// A dataset with optional class labels. Labels exist only for the linear
/// probe; the training path receives an UnlabeledView and cannot touch them.
struct Dataset {
    DenseMatrix samples;                // count x input_dim
    std::vector<std::uint32_t> labels;  // empty when unlabeled
    DataSource source = DataSource::synthetic;
    std::optional<ImageShape> image;

    std::size_t size() const { return samples.rows(); }
    std::size_t input_dim() const { return samples.cols(); }
    bool has_labels() const { return !labels.empty(); }

    void validate() const {
        if (has_labels() && labels.size() != samples.rows()) {
            throw std::invalid_argument("Dataset: label count mismatch");
        }
        if (image && image->channels * image->height * image->width !=
                         samples.cols()) {
            throw std::invalid_argument("Dataset: image shape mismatch");
        }
    }
};

/// Label-free window onto a dataset; the only thing the trainer sees.
class UnlabeledView {
  public:
    explicit UnlabeledView(const Dataset& ds)
        : samples_(&ds.samples), image_(ds.image) {}

    const DenseMatrix& samples() const { return *samples_; }
    std::size_t size() const { return samples_->rows(); }
    std::size_t input_dim() const { return samples_->cols(); }
    const std::optional<ImageShape>& image() const { return image_; }

  private:
    const DenseMatrix* samples_;
    std::optional<ImageShape> image_;
};

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SyntheticSplit {
    Dataset train;
    Dataset test;
};

/// Gaussian clusters around unit-norm random centers. The train and test
/// halves share the centers and differ only in noise draws, so held-out
/// probe accuracy measures the same class structure the clients saw.
inline SyntheticSplit gen_synthetic_split(std::size_t num_classes,
                                          std::size_t input_dim,
                                          std::size_t train_per_class,
                                          std::size_t test_per_class,
                                          double noise_scale,
                                          std::uint64_t seed) {
    if (num_classes == 0 || input_dim == 0 || train_per_class == 0) {
        throw std::invalid_argument("gen_synthetic_split: counts must be positive");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    DenseMatrix centers(num_classes, input_dim);
    for (std::size_t c = 0; c < num_classes; ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < input_dim; ++j) {
            centers(c, j) = unit(rng);
            norm += centers(c, j) * centers(c, j);
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < input_dim; ++j) centers(c, j) /= norm;
    }

    auto draw = [&](std::size_t per_class) {
        Dataset ds;
        ds.source = DataSource::synthetic;
        ds.samples = DenseMatrix(num_classes * per_class, input_dim);
        ds.labels.resize(num_classes * per_class);
        std::size_t row = 0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            for (std::size_t s = 0; s < per_class; ++s, ++row) {
                ds.labels[row] = static_cast<std::uint32_t>(c);
                for (std::size_t j = 0; j < input_dim; ++j) {
                    ds.samples(row, j) = centers(c, j) + noise_scale * unit(rng);
                }
            }
        }
        return ds;
    };

    SyntheticSplit split;
    split.train = draw(train_per_class);
    split.test = test_per_class > 0 ? draw(test_per_class) : Dataset{};
    return split;
}

inline Dataset gen_synthetic(std::size_t num_classes, std::size_t input_dim,
                             std::size_t samples_per_class, double noise_scale,
                             std::uint64_t seed) {
    return gen_synthetic_split(num_classes, input_dim, samples_per_class, 0,
                               noise_scale, seed)
        .train;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches
// ---------------------------------------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label + 3072 pixels
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr ImageShape kCifarShape{3, 32, 32};

/// One standard CIFAR-10 binary batch file: 3073-byte records, label byte
/// followed by the RGB planes. Pixels are scaled into [0, 1].
inline Dataset load_cifar10_file(const std::string& path,
                                 std::size_t expected_records = 0) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cifar10: cannot open " + path);
    }
    is.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(is.tellg());
    is.seekg(0);
    if (file_size == 0 || file_size % kCifarRecordBytes != 0) {
        const std::uint64_t tail = file_size - file_size % kCifarRecordBytes;
        throw std::runtime_error(
            "cifar10: " + path + " has a truncated record starting at byte " +
            std::to_string(tail));
    }
    const std::size_t records = file_size / kCifarRecordBytes;
    if (expected_records != 0 && records != expected_records) {
        throw std::runtime_error("cifar10: " + path + " holds " +
                                 std::to_string(records) + " records, expected " +
                                 std::to_string(expected_records));
    }

    Dataset ds;
    ds.source = DataSource::cifar10;
    ds.image = kCifarShape;
    ds.samples = DenseMatrix(records, kCifarPixels);
    ds.labels.resize(records);
    std::vector<unsigned char> buf(kCifarRecordBytes);
    for (std::size_t r = 0; r < records; ++r) {
        if (!is.read(reinterpret_cast<char*>(buf.data()), kCifarRecordBytes)) {
            throw std::runtime_error(
                "cifar10: " + path + " read failed at byte " +
                std::to_string(r * kCifarRecordBytes));
        }
        if (buf[0] > 9) {
            throw std::runtime_error("cifar10: " + path + " bad label " +
                                     std::to_string(buf[0]) + " in record " +
                                     std::to_string(r));
        }
        ds.labels[r] = buf[0];
        for (std::size_t j = 0; j < kCifarPixels; ++j) {
            ds.samples(r, j) = static_cast<double>(buf[j + 1]) / 255.0;
        }
    }
    return ds;
}

struct Cifar10 {
    Dataset train;
    Dataset test;
};

/// The published layout: data_batch_1..5.bin (train) and test_batch.bin.
inline Cifar10 load_cifar10(const std::string& dir) {
    namespace fs = std::filesystem;
    Cifar10 out;
    std::vector<Dataset> parts;
    for (int b = 1; b <= 5; ++b) {
        parts.push_back(load_cifar10_file(
            (fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin"))
                .string(),
            10000));
    }
    out.train.source = DataSource::cifar10;
    out.train.image = kCifarShape;
    out.train.samples = DenseMatrix(50000, kCifarPixels);
    out.train.labels.resize(50000);
    std::size_t row = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < p.size(); ++r, ++row) {
            out.train.labels[row] = p.labels[r];
            for (std::size_t j = 0; j < kCifarPixels; ++j)
                out.train.samples(row, j) = p.samples(r, j);
        }
    }
    out.test =
        load_cifar10_file((fs::path(dir) / "test_batch.bin").string(), 10000);
    return out;
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// Fisher-Yates permutation driven by splitmix64; stable across platforms
/// and standard libraries, unlike std::shuffle.
inline std::vector<std::size_t> shuffled_indices(std::size_t n,
                                                 std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::uint64_t state = seed;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(splitmix64(state) % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

/// Shuffle, then split evenly with the remainder going to earlier clients.
inline std::vector<Dataset> partition_iid(const Dataset& ds,
                                          std::size_t num_clients,
                                          std::uint64_t seed) {
    if (num_clients == 0) {
        throw std::invalid_argument("partition_iid: need at least one client");
    }
    if (num_clients > ds.size()) {
        throw std::invalid_argument("partition_iid: more clients (" +
                                    std::to_string(num_clients) +
                                    ") than samples (" +
                                    std::to_string(ds.size()) + ")");
    }
    const std::vector<std::size_t> idx = shuffled_indices(ds.size(), seed);
    const std::size_t base = ds.size() / num_clients;
    const std::size_t rem = ds.size() % num_clients;

    std::vector<Dataset> parts(num_clients);
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < num_clients; ++c) {
        const std::size_t count = base + (c < rem ? 1 : 0);
        Dataset& part = parts[c];
        part.source = ds.source;
        part.image = ds.image;
        part.samples = DenseMatrix(count, ds.input_dim());
        if (ds.has_labels()) part.labels.resize(count);
        for (std::size_t r = 0; r < count; ++r, ++cursor) {
            const std::size_t src = idx[cursor];
            for (std::size_t j = 0; j < ds.input_dim(); ++j)
                part.samples(r, j) = ds.samples(src, j);
            if (ds.has_labels()) part.labels[r] = ds.labels[src];
        }
    }
    return parts;
}

// ---------------------------------------------------------------------------
// Two-view augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
    double noise_sigma = 0.1;
    double dropout_rate = 0.1;
    bool horizontal_flip = false;  // only meaningful with an image shape
    std::optional<ImageShape> image;
};

namespace detail {

inline void flip_horizontal(double* row, const ImageShape& shape) {
    for (std::size_t c = 0; c < shape.channels; ++c) {
        for (std::size_t y = 0; y < shape.height; ++y) {
            double* line = row + (c * shape.height + y) * shape.width;
            for (std::size_t x = 0; x < shape.width / 2; ++x) {
                std::swap(line[x], line[shape.width - 1 - x]);
            }
        }
    }
}

}  // namespace detail

/// Two stochastic views per sample; rows 2k and 2k+1 hold the views of
/// sample k, matching the pairing convention of the contrastive loss.
inline DenseMatrix two_view_augment(const DenseMatrix& batch,
                                    const AugmentConfig& cfg,
                                    std::mt19937_64& rng) {
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate > 1.0) {
        throw std::invalid_argument("two_view_augment: dropout must be in [0,1]");
    }
    if (cfg.noise_sigma < 0.0) {
        throw std::invalid_argument("two_view_augment: noise sigma must be >= 0");
    }
    const std::size_t m = batch.rows();
    const std::size_t d = batch.cols();
    const bool flip = cfg.horizontal_flip && cfg.image.has_value();
    DenseMatrix out(2 * m, d);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::bernoulli_distribution drop(cfg.dropout_rate);
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t v = 0; v < 2; ++v) {
            const std::size_t row = 2 * k + v;
            for (std::size_t j = 0; j < d; ++j) out(row, j) = batch(k, j);
            if (flip && coin(rng)) {
                detail::flip_horizontal(&out(row, 0), *cfg.image);
            }
            if (cfg.noise_sigma > 0.0) {
                for (std::size_t j = 0; j < d; ++j)
                    out(row, j) += cfg.noise_sigma * noise(rng);
            }
            if (cfg.dropout_rate > 0.0) {
                for (std::size_t j = 0; j < d; ++j)
                    if (drop(rng)) out(row, j) = 0.0;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV export/import (synthetic datasets)
// ---------------------------------------------------------------------------

inline void save_dataset_csv(const Dataset& ds, std::ostream& os) {
    if (!ds.has_labels()) {
        throw std::invalid_argument("save_dataset_csv: dataset has no labels");
    }
    os << "label";
    for (std::size_t j = 0; j < ds.input_dim(); ++j) os << ",f" << j;
    os << "\n";
    for (std::size_t r = 0; r < ds.size(); ++r) {
        os << ds.labels[r];
        for (std::size_t j = 0; j < ds.input_dim(); ++j)
            os << "," << format_double(ds.samples(r, j));
        os << "\n";
    }
}

inline void save_dataset_csv_file(const Dataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    save_dataset_csv(ds, os);
}

inline Dataset load_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("dataset csv: missing header");
    }
    std::size_t dim = 0;
    {
        std::stringstream header(line);
        std::string col;
        if (!std::getline(header, col, ',') || col != "label") {
            throw std::runtime_error("dataset csv: header must start with label");
        }
        while (std::getline(header, col, ',')) ++dim;
    }
    if (dim == 0) throw std::runtime_error("dataset csv: no feature columns");

    std::vector<double> values;
    std::vector<std::uint32_t> labels;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) {
            throw std::runtime_error("dataset csv: bad row at line " +
                                     std::to_string(line_no));
        }
        labels.push_back(static_cast<std::uint32_t>(parse_u64(cell)));
        std::size_t got = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(parse_double(cell));
            ++got;
        }
        if (got != dim) {
            throw std::runtime_error("dataset csv: line " +
                                     std::to_string(line_no) + " has " +
                                     std::to_string(got) + " features, expected " +
                                     std::to_string(dim));
        }
    }
    Dataset ds;
    ds.source = DataSource::synthetic;
    ds.samples = DenseMatrix(labels.size(), dim, std::move(values));
    ds.labels = std::move(labels);
    return ds;
}

inline Dataset load_dataset_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load_dataset_csv(is);
}

}  // namespace fedfoa
