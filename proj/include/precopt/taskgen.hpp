// Teacher-network task generation. A task is a training set whose targets
// were produced by a randomly weighted network, so the global MSE minimum
// is exactly zero and the minimizer (the teacher) is known. The spread of
// hidden-layer pre-activations, and with it the effective nonlinearity of
// the task, is set by a degree factor: layer weights are drawn uniform on
// [-c, c] with c = degree / sqrt(fan_in), which makes the first hidden
// layer's pre-activation standard deviation degree/3 for uniform [-1,1]
// inputs.
//
// Generation always runs in double; single-precision runs consume demoted
// copies so both precision arms train on the same task.

#pragma once

#include "precopt/network.hpp"
#include "precopt/precision.hpp"
#include "precopt/rng.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <type_traits>
#include <vector>

namespace precopt {

enum class TaskProfile { Moderate, Strong };

constexpr std::string_view to_string(TaskProfile profile) {
    return profile == TaskProfile::Moderate ? "moderate" : "strong";
}

inline TaskProfile profile_from_string(std::string_view name) {
    if (name == "moderate") return TaskProfile::Moderate;
    if (name == "strong") return TaskProfile::Strong;
    throw std::invalid_argument("unknown task profile: " + std::string(name));
}

constexpr double default_nonlinearity(TaskProfile profile) {
    return profile == TaskProfile::Moderate ? 2.0 : 4.0;
}

constexpr Activation default_activation(TaskProfile profile) {
    return profile == TaskProfile::Moderate
               ? Activation{ActivationType::SymmetricSigmoid, 0.05}
               : Activation{ActivationType::LeakySigmoid, 0.05};
}

struct TaskSpec {
    NetworkConfig config;
    double nonlinearity = 2.0;
    std::size_t pattern_count = 200;
    std::uint64_t seed = 0;
    TaskProfile profile = TaskProfile::Moderate;

    void validate() const {
        config.validate();
        if (nonlinearity <= 0.0)
            throw std::invalid_argument("TaskSpec: nonlinearity degree must be > 0");
        if (pattern_count < 1)
            throw std::invalid_argument("TaskSpec: pattern_count must be >= 1");
    }
};

/// Fills the profile-dependent defaults; network dimensions are up to the
/// caller (and may override nonlinearity/activation afterwards).
inline TaskSpec default_task_spec(TaskProfile profile) {
    TaskSpec spec;
    spec.profile = profile;
    spec.nonlinearity = default_nonlinearity(profile);
    spec.config.activation = default_activation(profile);
    return spec;
}

/// Generated training set. Targets are the teacher's forward pass over the
/// inputs, bit-exact in generation precision (always double here).
struct Dataset {
    Matrix<double> inputs;
    Matrix<double> targets;
    double var_y = 0.0;
    std::uint64_t teacher_seed = 0;
    PrecisionMode generation_precision = PrecisionMode::Double;
};

/// Half-range of the uniform weight distribution for one layer.
inline double weight_range(std::size_t fan_in, double nonlinearity) {
    return nonlinearity / std::sqrt(static_cast<double>(fan_in));
}

inline Matrix<double> sample_inputs(std::size_t pattern_count, std::size_t input_dim,
                                    std::uint64_t seed) {
    if (pattern_count < 1 || input_dim < 1)
        throw std::invalid_argument("sample_inputs: pattern_count and input_dim must be >= 1");
    Rng rng(seed, RngStream::Inputs);
    Matrix<double> inputs(pattern_count, input_dim);
    for (auto& x : inputs.data) x = rng.uniform_symmetric();
    return inputs;
}

namespace detail {

inline std::vector<double> sample_weights(const NetworkConfig& config, double nonlinearity,
                                          Rng& rng) {
    std::vector<double> params(param_count(config));
    for (const LayerSpan& layer : layer_layout(config)) {
        const double c = weight_range(layer.cols, nonlinearity);
        for (std::size_t k = 0; k < layer.rows * layer.cols; ++k)
            params[layer.offset + k] = rng.uniform_range(-c, c);
    }
    return params;
}

}  // namespace detail

inline std::vector<double> sample_teacher_weights(const NetworkConfig& config,
                                                  double nonlinearity, std::uint64_t seed) {
    config.validate();
    if (nonlinearity <= 0.0)
        throw std::invalid_argument("sample_teacher_weights: nonlinearity must be > 0");
    Rng rng(seed, RngStream::Teacher);
    return detail::sample_weights(config, nonlinearity, rng);
}

/// Starting point for the optimizer: same distribution as the teacher but
/// an independent stream. Starting from the teacher seed would place the
/// run at the global minimum, so it is rejected.
inline std::vector<double> initial_params(const NetworkConfig& config, double nonlinearity,
                                          std::uint64_t seed, std::uint64_t teacher_seed) {
    if (seed == teacher_seed)
        throw std::invalid_argument("initial_params: seed must differ from the teacher seed");
    config.validate();
    Rng rng(seed, RngStream::Init);
    return detail::sample_weights(config, nonlinearity, rng);
}

/// Per-component-averaged output variance, Var(y) = mean over components of
/// the population variance of that component across patterns.
inline double output_variance(const Matrix<double>& targets) {
    if (targets.rows < 2)
        throw std::invalid_argument("output_variance: need at least two patterns");
    const std::size_t patterns = targets.rows;
    const std::size_t components = targets.cols;
    double total = 0.0;
    for (std::size_t m = 0; m < components; ++m) {
        double mean = 0.0;
        for (std::size_t p = 0; p < patterns; ++p) mean += targets(p, m);
        mean /= static_cast<double>(patterns);
        for (std::size_t p = 0; p < patterns; ++p) {
            const double d = targets(p, m) - mean;
            total += d * d;
        }
    }
    return total / (static_cast<double>(patterns) * static_cast<double>(components));
}

struct GeneratedTask {
    Dataset dataset;
    std::vector<double> teacher;
};

/// Steps: draw teacher weights, draw inputs, run the teacher's forward pass
/// in double, assemble the set. The teacher is returned so the zero-minimum
/// certificate can be re-checked at any time.
inline GeneratedTask generate_task(const TaskSpec& spec) {
    spec.validate();
    GeneratedTask task;
    task.teacher = sample_teacher_weights(spec.config, spec.nonlinearity, spec.seed);
    task.dataset.inputs = sample_inputs(spec.pattern_count, spec.config.input_dim, spec.seed);
    task.dataset.targets =
        forward(spec.config, std::span<const double>(task.teacher), task.dataset.inputs);
    task.dataset.var_y =
        spec.pattern_count >= 2 ? output_variance(task.dataset.targets) : 0.0;
    task.dataset.teacher_seed = spec.seed;
    task.dataset.generation_precision = PrecisionMode::Double;
    return task;
}

inline Matrix<float> demote(const Matrix<double>& m) {
    Matrix<float> out(m.rows, m.cols);
    for (std::size_t k = 0; k < m.data.size(); ++k)
        out.data[k] = static_cast<float>(demote(m.data[k], PrecisionMode::Single));
    return out;
}

inline std::vector<float> demote(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
        out[k] = static_cast<float>(demote(v[k], PrecisionMode::Single));
    return out;
}

/// Generation-precision data as the run's working scalar type.
template <typename S>
Matrix<S> to_scalar(const Matrix<double>& m) {
    if constexpr (std::is_same_v<S, double>)
        return m;
    else
        return demote(m);
}

template <typename S>
std::vector<S> to_scalar(const std::vector<double>& v) {
    if constexpr (std::is_same_v<S, double>)
        return v;
    else
        return demote(v);
}

}  // namespace precopt
