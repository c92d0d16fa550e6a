// The two optimizers under study: nonlinear Conjugate Gradient driven by the
// bracketing/Brent line search, and full-batch RMSprop. Both run entirely in
// the working precision, charge every objective call to an epoch-equivalent
// budget (forward pass = 1, forward+backward = 2), and report a single
// termination reason. Loss/Q bookkeeping in the trace is kept in double so
// measurement does not share the rounding noise under study.

#pragma once

#include "precopt/linesearch.hpp"
#include "precopt/network.hpp"
#include "precopt/precision.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace precopt {

/// Epoch-equivalent accounting. A run stops at the first iteration boundary
/// at or past the limit, so `spent` may overshoot by the cost of the final
/// in-flight iteration.
struct Budget {
    long limit = 3000;
    long spent = 0;

    bool exhausted() const { return spent >= limit; }
};

enum class BetaRule { PolakRibierePlus, FletcherReeves };

enum class TerminationReason { GradientConverged, LineSearchNoImprovement, BudgetExhausted };

constexpr std::string_view to_string(TerminationReason reason) {
    switch (reason) {
        case TerminationReason::GradientConverged: return "gradient_converged";
        case TerminationReason::LineSearchNoImprovement: return "line_search_no_improvement";
        default: return "budget_exhausted";
    }
}

inline TerminationReason termination_from_string(std::string_view name) {
    if (name == "gradient_converged") return TerminationReason::GradientConverged;
    if (name == "line_search_no_improvement") return TerminationReason::LineSearchNoImprovement;
    if (name == "budget_exhausted") return TerminationReason::BudgetExhausted;
    throw std::invalid_argument("unknown termination reason: " + std::string(name));
}

struct CgConfig {
    std::optional<double> gradient_threshold;  // default: per precision mode
    double ls_tolerance = 1e-1;
    Budget budget;
    BetaRule beta_rule = BetaRule::PolakRibierePlus;
    std::size_t restart_interval = 0;  // 0: restart every dimension() iterations
    int bracket_expansions = default_bracket_budget;

    void validate() const {
        if (gradient_threshold && *gradient_threshold <= 0.0)
            throw std::invalid_argument("CgConfig: gradient_threshold must be > 0");
        if (ls_tolerance <= 0.0)
            throw std::invalid_argument("CgConfig: ls_tolerance must be > 0");
    }
};

struct RmsPropConfig {
    double learning_rate = 1e-3;
    double decay = 0.9;
    double denominator_guard = 1e-7;
    Budget budget;
    std::optional<double> gradient_threshold;  // default: per precision mode

    void validate() const {
        if (learning_rate <= 0.0)
            throw std::invalid_argument("RmsPropConfig: learning_rate must be > 0");
        if (decay <= 0.0 || decay >= 1.0)
            throw std::invalid_argument("RmsPropConfig: decay must be in (0,1)");
        if (denominator_guard < 0.0)
            throw std::invalid_argument("RmsPropConfig: denominator_guard must be >= 0");
    }
};

/// One row of the optimization trace; written verbatim to the trace CSV.
struct TraceRecord {
    long iteration = 0;
    long epoch_equivalents = 0;
    double q = 0.0;  // mse / output variance
    double mse = 0.0;
    double gradient_norm = 0.0;
    long ls_evals = 0;
    double accepted_step = 0.0;
};

template <typename S>
struct OptimizationResult {
    std::vector<S> params;
    std::vector<TraceRecord> trace;
    TerminationReason reason = TerminationReason::BudgetExhausted;
    long iterations = 0;
    long epoch_equivalents = 0;
};

/// Raised when the objective or gradient turns non-finite; deliberately not
/// a TerminationReason, this is a run failure.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename F, typename S>
concept ObjectiveFunction = requires(F f, std::span<const S> w, std::span<S> g) {
    { f.dimension() } -> std::convertible_to<std::size_t>;
    { f.value(w) } -> std::convertible_to<S>;           // epoch cost 1
    { f.value_and_gradient(w, g) } -> std::convertible_to<S>;  // epoch cost 2
};

/// MSE of a fully connected network over a fixed batch, as an optimizable
/// objective. Keeps its forward workspace across calls.
template <typename S>
class NetworkObjective {
public:
    NetworkObjective(NetworkConfig config, Matrix<S> inputs, Matrix<S> targets)
        : config_(std::move(config)),
          inputs_(std::move(inputs)),
          targets_(std::move(targets)) {
        config_.validate();
    }

    std::size_t dimension() const { return param_count(config_); }

    S value(std::span<const S> params) {
        return detail::mse_value(config_, params, inputs_, targets_, workspace_);
    }

    S value_and_gradient(std::span<const S> params, std::span<S> grad) {
        return detail::gradient_into(config_, params, inputs_, targets_, grad, workspace_);
    }

    const NetworkConfig& config() const { return config_; }

private:
    NetworkConfig config_;
    Matrix<S> inputs_;
    Matrix<S> targets_;
    detail::Workspace<S> workspace_;
};

namespace detail {

template <typename S>
S dot(std::span<const S> a, std::span<const S> b) {
    S acc = S(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

template <typename S>
S norm(std::span<const S> v) {
    return std::sqrt(dot<S>(v, v));
}

template <typename S>
void check_finite(S value, std::span<const S> grad) {
    if (!std::isfinite(value))
        throw NumericalError("objective value is not finite");
    for (const S g : grad)
        if (!std::isfinite(g)) throw NumericalError("gradient is not finite");
}

}  // namespace detail

/// One RMSprop update, in place: accum tracks the decayed mean of squared
/// gradients, the step is the gradient scaled by 1/(sqrt(accum)+guard).
template <typename S>
void rmsprop_step(std::span<S> params, std::span<const S> grad, std::span<S> accum,
                  const RmsPropConfig& cfg) {
    if (grad.size() != params.size() || accum.size() != params.size())
        throw std::invalid_argument("rmsprop_step: span sizes must match");
    const S decay = static_cast<S>(cfg.decay);
    const S one_minus = S(1) - decay;
    const S rate = static_cast<S>(cfg.learning_rate);
    const S guard = static_cast<S>(cfg.denominator_guard);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const S g = grad[i];
        accum[i] = decay * accum[i] + one_minus * g * g;
        if (g != S(0)) params[i] -= (rate / (std::sqrt(accum[i]) + guard)) * g;
    }
}

/// Nonlinear CG: steepest-descent start, line search along the direction,
/// Polak-Ribiere(+) or Fletcher-Reeves conjugation, periodic restart.
/// Stops on gradient convergence, on a line search that cannot improve the
/// objective in working precision, or on budget exhaustion at an iteration
/// boundary.
template <typename S, ObjectiveFunction<S> F>
OptimizationResult<S> cg_minimize(F& objective, std::vector<S> initial, const CgConfig& cfg,
                                  double output_variance = 1.0) {
    cfg.validate();
    const std::size_t n = objective.dimension();
    if (initial.size() != n)
        throw std::invalid_argument("cg_minimize: initial point has wrong dimension");
    const double threshold =
        cfg.gradient_threshold.value_or(default_gradient_threshold(precision_of<S>));
    const std::size_t restart_every = cfg.restart_interval == 0 ? n : cfg.restart_interval;
    const S ls_tol = static_cast<S>(clamp_tolerance(cfg.ls_tolerance, precision_of<S>));

    OptimizationResult<S> result;
    result.params = std::move(initial);
    Budget budget = cfg.budget;

    std::vector<S> grad(n, S(0));
    std::vector<S> grad_next(n, S(0));
    std::vector<S> direction(n, S(0));
    std::vector<S> trial(n, S(0));

    S f = objective.value_and_gradient(result.params, grad);
    budget.spent += gradient_epoch_cost;
    detail::check_finite<S>(f, grad);
    S grad_sq = detail::dot<S>(grad, grad);
    double grad_norm = std::sqrt(static_cast<double>(grad_sq));

    const auto record = [&](long iteration, long ls_evals, double step) {
        result.trace.push_back({iteration, budget.spent,
                                static_cast<double>(f) / output_variance,
                                static_cast<double>(f), grad_norm, ls_evals, step});
    };
    record(0, 0, 0.0);
    if (grad_norm < threshold) {
        result.reason = TerminationReason::GradientConverged;
        result.epoch_equivalents = budget.spent;
        return result;
    }

    for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i];
    S prev_alpha = S(0);

    while (true) {
        if (budget.exhausted()) {
            result.reason = TerminationReason::BudgetExhausted;
            break;
        }

        // keep the search direction downhill; fall back to steepest descent
        S dir_deriv = detail::dot<S>(std::span<const S>(grad), std::span<const S>(direction));
        if (!(dir_deriv < S(0))) {
            for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i];
            dir_deriv = -grad_sq;
        }

        auto phi = [&](S alpha) {
            for (std::size_t i = 0; i < n; ++i)
                trial[i] = result.params[i] + alpha * direction[i];
            budget.spent += forward_epoch_cost;
            return objective.value(std::span<const S>(trial));
        };
        const S dir_norm = detail::norm<S>(std::span<const S>(direction));
        const S alpha_init = prev_alpha > S(0) ? prev_alpha : S(1) / dir_norm;
        const auto outcome = line_search(phi, f, ls_tol, alpha_init, cfg.bracket_expansions);

        if (!(outcome.f_alpha < f)) {
            // no improving step exists at this scalar width: the premature
            // stop. The failed search's evaluations stay charged and traced.
            record(result.iterations + 1, outcome.function_evals, 0.0);
            result.reason = TerminationReason::LineSearchNoImprovement;
            break;
        }

        for (std::size_t i = 0; i < n; ++i)
            result.params[i] += outcome.alpha * direction[i];
        f = objective.value_and_gradient(result.params, grad_next);
        budget.spent += gradient_epoch_cost;
        detail::check_finite<S>(f, grad_next);

        const S grad_sq_next = detail::dot<S>(std::span<const S>(grad_next),
                                              std::span<const S>(grad_next));
        S beta = S(0);
        if (cfg.beta_rule == BetaRule::PolakRibierePlus) {
            S num = S(0);
            for (std::size_t i = 0; i < n; ++i)
                num += grad_next[i] * (grad_next[i] - grad[i]);
            beta = std::max(S(0), num / grad_sq);
        } else {
            beta = grad_sq_next / grad_sq;
        }
        ++result.iterations;
        if (restart_every > 0 &&
            static_cast<std::size_t>(result.iterations) % restart_every == 0)
            beta = S(0);
        for (std::size_t i = 0; i < n; ++i)
            direction[i] = -grad_next[i] + beta * direction[i];

        grad.swap(grad_next);
        grad_sq = grad_sq_next;
        grad_norm = std::sqrt(static_cast<double>(grad_sq));
        prev_alpha = outcome.alpha;
        record(result.iterations, outcome.function_evals,
               static_cast<double>(outcome.alpha));

        if (grad_norm < threshold) {
            result.reason = TerminationReason::GradientConverged;
            break;
        }
    }
    result.epoch_equivalents = budget.spent;
    return result;
}

/// Full-batch RMSprop: one gradient evaluation (2 epoch equivalents) and one
/// parameter update per epoch. Each trace record reports the loss measured
/// at the pre-update point; the returned parameters are post-update.
template <typename S, ObjectiveFunction<S> F>
OptimizationResult<S> rmsprop_minimize(F& objective, std::vector<S> initial,
                                       const RmsPropConfig& cfg,
                                       double output_variance = 1.0) {
    cfg.validate();
    const std::size_t n = objective.dimension();
    if (initial.size() != n)
        throw std::invalid_argument("rmsprop_minimize: initial point has wrong dimension");
    const double threshold =
        cfg.gradient_threshold.value_or(default_gradient_threshold(precision_of<S>));

    OptimizationResult<S> result;
    result.params = std::move(initial);
    Budget budget = cfg.budget;

    std::vector<S> grad(n, S(0));
    std::vector<S> accum(n, S(0));

    while (true) {
        if (budget.exhausted()) {
            result.reason = TerminationReason::BudgetExhausted;
            break;
        }
        const S f = objective.value_and_gradient(result.params, grad);
        budget.spent += gradient_epoch_cost;
        detail::check_finite<S>(f, std::span<const S>(grad));
        const double grad_norm =
            static_cast<double>(detail::norm<S>(std::span<const S>(grad)));

        ++result.iterations;
        const bool converged = grad_norm < threshold;
        if (!converged)
            rmsprop_step(std::span<S>(result.params), std::span<const S>(grad),
                         std::span<S>(accum), cfg);
        result.trace.push_back({result.iterations, budget.spent,
                                static_cast<double>(f) / output_variance,
                                static_cast<double>(f), grad_norm, 0, 0.0});
        if (converged) {
            result.reason = TerminationReason::GradientConverged;
            break;
        }
    }
    result.epoch_equivalents = budget.spent;
    return result;
}

}  // namespace precopt
