#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fedfoa/encoder.hpp"
#include "fedfoa/losses.hpp"
#include "fedfoa/matrix.hpp"

namespace fedfoa {

inline constexpr double kGradCheckStep = 1e-5;

/// Relative error with an absolute floor so tiny gradients do not blow up
/// the ratio.
inline double gradient_rel_error(double analytic, double numeric) {
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

/// Mutable views of every parameter, hidden layers first, then calibration,
/// weights row-major before biases. flatten_grads emits the same order.
inline std::vector<double*> collect_params(EncoderModel& model) {
    std::vector<double*> out;
    auto add = [&out](DenseLayer& l) {
        for (double& v : l.w.data()) out.push_back(&v);
        for (double& v : l.b) out.push_back(&v);
    };
    for (auto& l : model.layers) add(l);
    add(model.calibration);
    return out;
}

inline std::vector<double> flatten_grads(const ModelGrads& grads) {
    std::vector<double> out;
    auto add = [&out](const LayerGrads& g) {
        out.insert(out.end(), g.dw.data().begin(), g.dw.data().end());
        out.insert(out.end(), g.db.begin(), g.db.end());
    };
    for (const auto& g : grads.layers) add(g);
    add(grads.calibration);
    return out;
}

/// Central-difference check of model-parameter gradients. loss_fn must be a
/// pure function of the model. Returns the worst relative error.
inline double check_model_gradients(
    EncoderModel model, const std::function<double(const EncoderModel&)>& loss_fn,
    const std::vector<double>& analytic, double step = kGradCheckStep) {
    std::vector<double*> params = collect_params(model);
    if (params.size() != analytic.size()) {
        throw std::invalid_argument(
            "check_model_gradients: gradient size mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = *params[i];
        *params[i] = saved + step;
        const double up = loss_fn(model);
        *params[i] = saved - step;
        const double down = loss_fn(model);
        *params[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        worst = std::max(worst, gradient_rel_error(analytic[i], numeric));
    }
    return worst;
}

/// End-to-end check for a loss defined on the projection output: runs the
/// model's own backward pass for the analytic gradients and compares every
/// parameter against central differences of loss_fn composed with forward.
inline double gradient_check(
    const EncoderModel& model, const DenseMatrix& batch,
    const std::function<LossValueGrad(const DenseMatrix&)>& loss_fn,
    double step = kGradCheckStep) {
    auto [z, cache] = forward(model, batch);
    const LossValueGrad at_z = loss_fn(z);
    const std::vector<double> analytic =
        flatten_grads(backward_gradients(model, cache, at_z.grad));
    auto scalar = [&batch, &loss_fn](const EncoderModel& m) {
        return loss_fn(forward_features(m, batch)).loss;
    };
    return check_model_gradients(model, scalar, analytic, step);
}

/// Central-difference check of input-space gradients (dLoss/dz).
inline double check_input_gradients(
    DenseMatrix z, const std::function<double(const DenseMatrix&)>& loss_fn,
    const DenseMatrix& analytic, double step = kGradCheckStep) {
    if (analytic.rows() != z.rows() || analytic.cols() != z.cols()) {
        throw std::invalid_argument(
            "check_input_gradients: gradient shape mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double saved = z.data()[i];
        z.data()[i] = saved + step;
        const double up = loss_fn(z);
        z.data()[i] = saved - step;
        const double down = loss_fn(z);
        z.data()[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        worst = std::max(worst, gradient_rel_error(analytic.data()[i], numeric));
    }
    return worst;
}

}  // namespace fedfoa
