#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedfoa/matrix.hpp"
#include "fedfoa/rng.hpp"

namespace fedfoa {

enum class Activation : std::uint8_t { none = 0, relu = 1 };

struct DenseLayer {
    DenseMatrix w;          // in x out
    std::vector<double> b;  // out
    Activation act = Activation::none;
};

/// Small MLP encoder plus the linear calibration layer that maps the
/// encoder output into the shared projection dimension. Architectures vary
/// per client; the calibration output dimension is the same everywhere.
struct EncoderModel {
    std::string arch_id;
    std::vector<DenseLayer> layers;  // hidden layers
    DenseLayer calibration;          // final linear layer, act == none

    std::size_t input_dim() const {
        return layers.empty() ? calibration.w.rows() : layers.front().w.rows();
    }
    std::size_t output_dim() const { return calibration.w.cols(); }

    std::size_t parameter_count() const {
        std::size_t n = calibration.w.size() + calibration.b.size();
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }

    bool is_finite() const {
        auto layer_finite = [](const DenseLayer& l) {
            if (!l.w.is_finite()) return false;
            for (double v : l.b) {
                if (!std::isfinite(v)) return false;
            }
            return true;
        };
        for (const auto& l : layers) {
            if (!layer_finite(l)) return false;
        }
        return layer_finite(calibration);
    }

    /// Dims must chain layer to layer and end at the calibration input.
    void validate_chain() const {
        std::size_t dim = input_dim();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].w.rows() != dim || layers[i].b.size() != layers[i].w.cols()) {
                throw std::invalid_argument("EncoderModel: layer " +
                                            std::to_string(i) + " dims broken");
            }
            dim = layers[i].w.cols();
        }
        if (calibration.w.rows() != dim ||
            calibration.b.size() != calibration.w.cols()) {
            throw std::invalid_argument("EncoderModel: calibration dims broken");
        }
    }
};

/// Known architectures; hidden widths differ per arch, every one ends in a
/// calibration layer onto the shared projection dimension.
inline std::vector<std::string> encoder_zoo() {
    return {"mlp-64", "mlp-128-64", "mlp-96", "mlp-128-96-64"};
}

inline std::vector<std::size_t> hidden_widths_for(const std::string& arch_id) {
    if (arch_id == "mlp-64") return {64};
    if (arch_id == "mlp-128-64") return {128, 64};
    if (arch_id == "mlp-96") return {96};
    if (arch_id == "mlp-128-96-64") return {128, 96, 64};
    throw std::invalid_argument("unknown arch_id: " + arch_id);
}

/// Build and initialize an encoder. He-scaled normal init for the ReLU
/// hidden layers, 1/sqrt(fan_in) for the calibration layer, zero biases.
inline EncoderModel make_encoder(const std::string& arch_id,
                                 std::size_t input_dim,
                                 std::size_t projection_dim,
                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    EncoderModel model;
    model.arch_id = arch_id;
    std::size_t dim = input_dim;
    for (std::size_t width : hidden_widths_for(arch_id)) {
        DenseLayer layer;
        layer.w = gaussian_matrix(dim, width, rng,
                                  std::sqrt(2.0 / static_cast<double>(dim)));
        layer.b.assign(width, 0.0);
        layer.act = Activation::relu;
        model.layers.push_back(std::move(layer));
        dim = width;
    }
    model.calibration.w = gaussian_matrix(
        dim, projection_dim, rng, std::sqrt(1.0 / static_cast<double>(dim)));
    model.calibration.b.assign(projection_dim, 0.0);
    model.calibration.act = Activation::none;
    model.validate_chain();
    return model;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Per-layer inputs and pre-activations; enough for an exact backward pass.
struct ForwardCache {
    std::vector<DenseMatrix> inputs;   // input to each hidden layer + calibration
    std::vector<DenseMatrix> preacts;  // pre-activation of each hidden layer
};

namespace detail {

inline DenseMatrix affine(const DenseMatrix& x, const DenseLayer& l) {
    DenseMatrix y = x * l.w;
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += l.b[j];
    return y;
}

}  // namespace detail

inline std::pair<DenseMatrix, ForwardCache> forward(const EncoderModel& model,
                                                    const DenseMatrix& batch) {
    if (batch.cols() != model.input_dim()) {
        throw std::invalid_argument(
            "forward: batch width " + std::to_string(batch.cols()) +
            " does not match model input " + std::to_string(model.input_dim()));
    }
    if (!model.is_finite()) {
        throw std::invalid_argument("forward: model has non-finite parameters");
    }
    ForwardCache cache;
    DenseMatrix h = batch;
    for (const auto& layer : model.layers) {
        cache.inputs.push_back(h);
        DenseMatrix pre = detail::affine(h, layer);
        if (layer.act == Activation::relu) {
            cache.preacts.push_back(pre);
            for (double& v : pre.data()) v = v > 0.0 ? v : 0.0;
        } else {
            cache.preacts.push_back(DenseMatrix());
        }
        h = std::move(pre);
    }
    cache.inputs.push_back(h);
    DenseMatrix z = detail::affine(h, model.calibration);
    return {std::move(z), std::move(cache)};
}

/// Convenience wrapper when no backward pass is needed.
inline DenseMatrix forward_features(const EncoderModel& model,
                                    const DenseMatrix& batch) {
    return forward(model, batch).first;
}

struct LayerGrads {
    DenseMatrix dw;
    std::vector<double> db;
};

struct ModelGrads {
    std::vector<LayerGrads> layers;
    LayerGrads calibration;
};

namespace detail {

inline LayerGrads affine_grads(const DenseMatrix& input, const DenseMatrix& g) {
    LayerGrads out;
    out.dw = transpose(input) * g;
    out.db.assign(g.cols(), 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) out.db[j] += g(i, j);
    return out;
}

}  // namespace detail

/// Exact gradients of every parameter for an upstream dLoss/dz.
inline ModelGrads backward_gradients(const EncoderModel& model,
                                     const ForwardCache& cache,
                                     const DenseMatrix& upstream) {
    if (cache.inputs.size() != model.layers.size() + 1) {
        throw std::invalid_argument("backward_gradients: cache does not match model");
    }
    ModelGrads grads;
    grads.layers.resize(model.layers.size());

    DenseMatrix g = upstream;
    grads.calibration = detail::affine_grads(cache.inputs.back(), g);
    g = g * transpose(model.calibration.w);

    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const DenseLayer& layer = model.layers[li];
        if (layer.act == Activation::relu) {
            const DenseMatrix& pre = cache.preacts[li];
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    if (pre(i, j) <= 0.0) g(i, j) = 0.0;
        }
        grads.layers[li] = detail::affine_grads(cache.inputs[li], g);
        if (li > 0) g = g * transpose(layer.w);
    }
    return grads;
}

/// One plain SGD step. Throws if any gradient is non-finite (divergence).
inline EncoderModel backward_and_step(EncoderModel model,
                                      const ForwardCache& cache,
                                      const DenseMatrix& upstream, double lr) {
    if (lr <= 0.0) {
        throw std::invalid_argument("backward_and_step: lr must be positive");
    }
    const ModelGrads grads = backward_gradients(model, cache, upstream);
    auto apply = [lr](DenseLayer& layer, const LayerGrads& g) {
        if (!g.dw.is_finite()) {
            throw std::runtime_error("backward_and_step: non-finite gradient");
        }
        for (double v : g.db) {
            if (!std::isfinite(v)) {
                throw std::runtime_error("backward_and_step: non-finite gradient");
            }
        }
        for (std::size_t i = 0; i < layer.w.size(); ++i)
            layer.w.data()[i] -= lr * g.dw.data()[i];
        for (std::size_t j = 0; j < layer.b.size(); ++j)
            layer.b[j] -= lr * g.db[j];
    };
    for (std::size_t li = 0; li < model.layers.size(); ++li)
        apply(model.layers[li], grads.layers[li]);
    apply(model.calibration, grads.calibration);
    return model;
}

// ---------------------------------------------------------------------------
// Checkpoint format: self-describing little-endian binary.
//   magic "FFOA", u32 version,
//   u32 arch_id length + bytes,
//   u32 layer count (hidden + calibration), per layer: u32 in, u32 out,
//   u8 activation; then per layer all weights row-major and the bias, f64.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw std::runtime_error("checkpoint: truncated");
    return v;
}
inline double get_f64(std::istream& is) {
    double v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw std::runtime_error("checkpoint: truncated");
    return v;
}

}  // namespace detail

inline void save_checkpoint(const EncoderModel& model, std::ostream& os) {
    os.write("FFOA", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<std::uint32_t>(model.arch_id.size()));
    os.write(model.arch_id.data(),
             static_cast<std::streamsize>(model.arch_id.size()));
    const std::size_t total = model.layers.size() + 1;
    detail::put_u32(os, static_cast<std::uint32_t>(total));
    auto put_header = [&os](const DenseLayer& l) {
        detail::put_u32(os, static_cast<std::uint32_t>(l.w.rows()));
        detail::put_u32(os, static_cast<std::uint32_t>(l.w.cols()));
        const std::uint8_t a = static_cast<std::uint8_t>(l.act);
        os.write(reinterpret_cast<const char*>(&a), 1);
    };
    for (const auto& l : model.layers) put_header(l);
    put_header(model.calibration);
    auto put_params = [&os](const DenseLayer& l) {
        for (double v : l.w.data()) detail::put_f64(os, v);
        for (double v : l.b) detail::put_f64(os, v);
    };
    for (const auto& l : model.layers) put_params(l);
    put_params(model.calibration);
}

inline EncoderModel load_checkpoint(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FFOA", 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    const std::uint32_t version = detail::get_u32(is);
    if (version != 1) {
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version));
    }
    const std::uint32_t id_len = detail::get_u32(is);
    std::string arch_id(id_len, '\0');
    if (!is.read(arch_id.data(), id_len))
        throw std::runtime_error("checkpoint: truncated");
    const std::uint32_t total = detail::get_u32(is);
    if (total == 0) throw std::runtime_error("checkpoint: no layers");

    struct Header {
        std::uint32_t in, out;
        std::uint8_t act;
    };
    std::vector<Header> headers(total);
    for (auto& h : headers) {
        h.in = detail::get_u32(is);
        h.out = detail::get_u32(is);
        if (!is.read(reinterpret_cast<char*>(&h.act), 1))
            throw std::runtime_error("checkpoint: truncated");
    }

    EncoderModel model;
    model.arch_id = arch_id;
    auto read_layer = [&is](const Header& h) {
        DenseLayer l;
        std::vector<double> w(static_cast<std::size_t>(h.in) * h.out);
        for (double& v : w) v = detail::get_f64(is);
        l.w = DenseMatrix(h.in, h.out, std::move(w));
        l.b.resize(h.out);
        for (double& v : l.b) v = detail::get_f64(is);
        l.act = static_cast<Activation>(h.act);
        return l;
    };
    for (std::uint32_t i = 0; i + 1 < total; ++i)
        model.layers.push_back(read_layer(headers[i]));
    model.calibration = read_layer(headers[total - 1]);
    model.validate_chain();
    return model;
}

inline void save_checkpoint_file(const EncoderModel& model,
                                 const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint file " + path);
    save_checkpoint(model, os);
}

inline EncoderModel load_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint file " + path);
    return load_checkpoint(is);
}

/// Serialized size in bytes; the traffic cost of sharing this model.
inline std::size_t checkpoint_bytes(const EncoderModel& model) {
    std::size_t n = 4 + 4 + 4 + model.arch_id.size() + 4;
    n += (model.layers.size() + 1) * (4 + 4 + 1);
    n += model.parameter_count() * sizeof(double);
    return n;
}

}  // namespace fedfoa
