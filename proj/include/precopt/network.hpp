// Bias-free fully connected feedforward networks, parameterized on the
// working scalar type: forward pass, mean square error, reverse-mode
// gradient, and a central-difference oracle for testing the latter.
//
// All reductions run in a fixed sequential left-to-right order in the
// working precision; given identical inputs the results are bit-identical.

#pragma once

#include "precopt/precision.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace precopt {

enum class ActivationType { SymmetricSigmoid, LeakySigmoid };

/// Hidden-layer nonlinearity. SymmetricSigmoid is 2/(1+e^{-2x}) - 1 (unity
/// derivative at 0); LeakySigmoid adds a linear term with coefficient
/// `leak` so the derivative never falls below it.
struct Activation {
    ActivationType type = ActivationType::SymmetricSigmoid;
    double leak = 0.05;
};

template <typename S>
S activation_value(const Activation& act, S x) {
    const S s = std::tanh(x);  // stable form of 2/(1+e^{-2x}) - 1
    if (act.type == ActivationType::SymmetricSigmoid) return s;
    const S h = static_cast<S>(act.leak);
    return (S(1) - h) * s + h * x;
}

template <typename S>
S activation_derivative(const Activation& act, S x) {
    const S s = std::tanh(x);
    const S d = S(1) - s * s;
    if (act.type == ActivationType::SymmetricSigmoid) return d;
    const S h = static_cast<S>(act.leak);
    return (S(1) - h) * d + h;
}

/// Architecture of a bias-free fully connected network. Hidden layers all
/// use `activation`; the output layer is linear.
struct NetworkConfig {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<std::size_t> hidden_sizes;
    Activation activation;

    void validate() const {
        if (input_dim < 1 || output_dim < 1)
            throw std::invalid_argument("NetworkConfig: dimensions must be >= 1");
        if (hidden_sizes.empty())
            throw std::invalid_argument("NetworkConfig: at least one hidden layer required");
        for (const std::size_t h : hidden_sizes)
            if (h < 1) throw std::invalid_argument("NetworkConfig: hidden sizes must be >= 1");
        if (activation.type == ActivationType::LeakySigmoid &&
            (activation.leak <= 0.0 || activation.leak >= 1.0))
            throw std::invalid_argument("NetworkConfig: leak coefficient must be in (0,1)");
    }

    /// [input_dim, hidden..., output_dim]
    std::vector<std::size_t> layer_dims() const {
        std::vector<std::size_t> dims;
        dims.reserve(hidden_sizes.size() + 2);
        dims.push_back(input_dim);
        dims.insert(dims.end(), hidden_sizes.begin(), hidden_sizes.end());
        dims.push_back(output_dim);
        return dims;
    }
};

inline std::size_t param_count(const NetworkConfig& config) {
    const auto dims = config.layer_dims();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) total += dims[l] * dims[l + 1];
    return total;
}

/// One weight matrix inside the flat parameter vector: row-major,
/// rows = fan_out, cols = fan_in; layers concatenated input to output.
struct LayerSpan {
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
};

inline std::vector<LayerSpan> layer_layout(const NetworkConfig& config) {
    const auto dims = config.layer_dims();
    std::vector<LayerSpan> layout;
    layout.reserve(dims.size() - 1);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        layout.push_back({offset, dims[l + 1], dims[l]});
        offset += dims[l] * dims[l + 1];
    }
    return layout;
}

/// Dense row-major matrix of working-precision scalars. Patterns are rows.
template <typename S>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<S> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, S(0)) {}

    S& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const S& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<S> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const S> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Result of evaluating a batch: forward-only costs 1 epoch equivalent,
/// forward+backward costs 2 and carries the gradient.
template <typename S>
struct EvaluatedBatch {
    S mse = S(0);
    std::optional<std::vector<S>> gradient;
    int epoch_equivalents_charged = 0;
};

inline constexpr int forward_epoch_cost = 1;
inline constexpr int gradient_epoch_cost = 2;

namespace detail {

/// Per-layer caches reused across evaluations of the same network.
template <typename S>
struct Workspace {
    std::vector<Matrix<S>> preacts;   // z_l for each weighted layer l
    std::vector<Matrix<S>> outputs;   // a_l = act(z_l), a_last linear
    std::vector<S> delta;             // backprop scratch, one pattern wide
    std::vector<S> delta_prev;
};

template <typename S>
void check_shapes(const NetworkConfig& config, std::span<const S> params,
                  const Matrix<S>& inputs) {
    config.validate();
    if (params.size() != param_count(config))
        throw std::invalid_argument("parameter vector length " + std::to_string(params.size()) +
                                    " does not match param_count " +
                                    std::to_string(param_count(config)));
    if (inputs.cols != config.input_dim)
        throw std::invalid_argument("input width does not match config.input_dim");
}

// z(p,j) = sum_i W(j,i) * a(p,i), accumulated left-to-right over i.
// Output-unit chains are independent; four run in parallel to hide FMA
// latency without touching any single chain's summation order.
template <typename S>
void apply_layer(const LayerSpan& layer, std::span<const S> params, const Matrix<S>& in,
                 Matrix<S>& out) {
    const S* weights = params.data() + layer.offset;
    const std::size_t fan_in = layer.cols;
    const std::size_t fan_out = layer.rows;
    for (std::size_t p = 0; p < in.rows; ++p) {
        const S* a = in.data.data() + p * fan_in;
        S* z = out.data.data() + p * fan_out;
        std::size_t j = 0;
        for (; j + 4 <= fan_out; j += 4) {
            const S* w0 = weights + (j + 0) * fan_in;
            const S* w1 = weights + (j + 1) * fan_in;
            const S* w2 = weights + (j + 2) * fan_in;
            const S* w3 = weights + (j + 3) * fan_in;
            S acc0 = S(0), acc1 = S(0), acc2 = S(0), acc3 = S(0);
            for (std::size_t i = 0; i < fan_in; ++i) {
                acc0 += w0[i] * a[i];
                acc1 += w1[i] * a[i];
                acc2 += w2[i] * a[i];
                acc3 += w3[i] * a[i];
            }
            z[j + 0] = acc0;
            z[j + 1] = acc1;
            z[j + 2] = acc2;
            z[j + 3] = acc3;
        }
        for (; j < fan_out; ++j) {
            const S* w = weights + j * fan_in;
            S acc = S(0);
            for (std::size_t i = 0; i < fan_in; ++i) acc += w[i] * a[i];
            z[j] = acc;
        }
    }
}

template <typename S>
const Matrix<S>& forward_cached(const NetworkConfig& config, std::span<const S> params,
                                const Matrix<S>& inputs, Workspace<S>& ws) {
    check_shapes(config, params, inputs);
    const auto layout = layer_layout(config);
    const std::size_t num_layers = layout.size();
    ws.preacts.resize(num_layers);
    ws.outputs.resize(num_layers);

    const Matrix<S>* current = &inputs;
    for (std::size_t l = 0; l < num_layers; ++l) {
        Matrix<S>& z = ws.preacts[l];
        if (z.rows != inputs.rows || z.cols != layout[l].rows)
            z = Matrix<S>(inputs.rows, layout[l].rows);
        apply_layer(layout[l], params, *current, z);

        Matrix<S>& a = ws.outputs[l];
        const bool is_output_layer = (l + 1 == num_layers);
        if (is_output_layer) {
            a = z;  // linear output layer
        } else {
            if (a.rows != z.rows || a.cols != z.cols) a = Matrix<S>(z.rows, z.cols);
            for (std::size_t k = 0; k < z.data.size(); ++k)
                a.data[k] = activation_value(config.activation, z.data[k]);
        }
        current = &a;
    }
    return ws.outputs.back();
}

template <typename S>
S mse_from_outputs(const Matrix<S>& outputs, const Matrix<S>& targets) {
    if (outputs.rows != targets.rows || outputs.cols != targets.cols)
        throw std::invalid_argument("target shape does not match network output shape");
    if (targets.rows == 0) throw std::invalid_argument("dataset must be nonempty");
    S acc = S(0);
    for (std::size_t p = 0; p < outputs.rows; ++p)
        for (std::size_t m = 0; m < outputs.cols; ++m) {
            const S r = outputs(p, m) - targets(p, m);
            acc += r * r;
        }
    return acc / (static_cast<S>(outputs.rows) * static_cast<S>(outputs.cols));
}

template <typename S>
S mse_value(const NetworkConfig& config, std::span<const S> params, const Matrix<S>& inputs,
            const Matrix<S>& targets, Workspace<S>& ws) {
    const Matrix<S>& outputs = forward_cached(config, params, inputs, ws);
    return mse_from_outputs(outputs, targets);
}

// Reverse-mode accumulation over the cached forward pass. Gradients are
// summed pattern by pattern (p outer), so every grad element is a strictly
// sequential reduction over patterns.
template <typename S>
S gradient_into(const NetworkConfig& config, std::span<const S> params, const Matrix<S>& inputs,
                const Matrix<S>& targets, std::span<S> grad, Workspace<S>& ws) {
    const Matrix<S>& outputs = forward_cached(config, params, inputs, ws);
    const S loss = mse_from_outputs(outputs, targets);
    if (grad.size() != params.size())
        throw std::invalid_argument("gradient span length does not match parameter count");

    const auto layout = layer_layout(config);
    const std::size_t num_layers = layout.size();
    const std::size_t patterns = inputs.rows;
    const S scale = S(2) / (static_cast<S>(patterns) * static_cast<S>(config.output_dim));

    for (auto& g : grad) g = S(0);

    std::vector<S>& delta = ws.delta;
    std::vector<S>& delta_prev = ws.delta_prev;
    for (std::size_t p = 0; p < patterns; ++p) {
        // dE/dz at the linear output layer
        delta.assign(config.output_dim, S(0));
        for (std::size_t m = 0; m < config.output_dim; ++m)
            delta[m] = scale * (outputs(p, m) - targets(p, m));

        for (std::size_t l = num_layers; l-- > 0;) {
            const LayerSpan& layer = layout[l];
            const std::span<const S> below =
                (l == 0) ? inputs.row(p) : std::span<const S>(ws.outputs[l - 1].row(p));
            S* dw = grad.data() + layer.offset;
            for (std::size_t j = 0; j < layer.rows; ++j) {
                const S dj = delta[j];
                S* dwj = dw + j * layer.cols;
                for (std::size_t i = 0; i < layer.cols; ++i) dwj[i] += dj * below[i];
            }
            if (l == 0) break;

            // propagate: delta_prev(i) = sum_j W(j,i) delta(j), then chain
            // through the hidden activation derivative at the cached preact
            delta_prev.assign(layer.cols, S(0));
            const S* weights = params.data() + layer.offset;
            for (std::size_t j = 0; j < layer.rows; ++j) {
                const S dj = delta[j];
                const S* wj = weights + j * layer.cols;
                for (std::size_t i = 0; i < layer.cols; ++i) delta_prev[i] += wj[i] * dj;
            }
            const Matrix<S>& z_below = ws.preacts[l - 1];
            for (std::size_t i = 0; i < layer.cols; ++i)
                delta_prev[i] *= activation_derivative(config.activation, z_below(p, i));
            std::swap(delta, delta_prev);
        }
    }
    return loss;
}

}  // namespace detail

template <typename S>
Matrix<S> forward(const NetworkConfig& config, std::span<const S> params,
                  const Matrix<S>& inputs) {
    detail::Workspace<S> ws;
    return detail::forward_cached(config, params, inputs, ws);
}

template <typename S>
EvaluatedBatch<S> mse(const NetworkConfig& config, std::span<const S> params,
                      const Matrix<S>& inputs, const Matrix<S>& targets) {
    detail::Workspace<S> ws;
    EvaluatedBatch<S> result;
    result.mse = detail::mse_value(config, params, inputs, targets, ws);
    result.epoch_equivalents_charged = forward_epoch_cost;
    return result;
}

template <typename S>
EvaluatedBatch<S> gradient(const NetworkConfig& config, std::span<const S> params,
                           const Matrix<S>& inputs, const Matrix<S>& targets) {
    detail::Workspace<S> ws;
    EvaluatedBatch<S> result;
    std::vector<S> grad(params.size(), S(0));
    result.mse = detail::gradient_into(config, params, inputs, targets, std::span<S>(grad), ws);
    result.gradient = std::move(grad);
    result.epoch_equivalents_charged = gradient_epoch_cost;
    return result;
}

/// Central-difference gradient, always evaluated in double. Test oracle for
/// the reverse-mode gradient; deliberately independent of it.
inline std::vector<double> fd_gradient(const NetworkConfig& config,
                                       std::span<const double> params,
                                       const Matrix<double>& inputs,
                                       const Matrix<double>& targets, double step) {
    if (step <= 0.0) throw std::invalid_argument("fd_gradient: step must be > 0");
    detail::Workspace<double> ws;
    std::vector<double> perturbed(params.begin(), params.end());
    std::vector<double> grad(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double original = perturbed[i];
        perturbed[i] = original + step;
        const double f_plus = detail::mse_value(config, std::span<const double>(perturbed),
                                                inputs, targets, ws);
        perturbed[i] = original - step;
        const double f_minus = detail::mse_value(config, std::span<const double>(perturbed),
                                                 inputs, targets, ws);
        perturbed[i] = original;
        grad[i] = (f_plus - f_minus) / (2.0 * step);
    }
    return grad;
}

}  // namespace precopt
