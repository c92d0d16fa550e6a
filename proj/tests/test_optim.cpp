#include "precopt/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "precopt/rng.hpp"
#include "precopt/taskgen.hpp"

using namespace precopt;

namespace {

// f(w) = 0.5 (w-x*)'A(w-x*) with dense SPD A: the quadratic 0.5 w'Aw - b'w
// for b = A x*, written with its additive constant chosen so the minimum
// value is exactly zero. A nonzero floor would cap the attainable gradient
// norm near sqrt(eps*|f*|*lambda), the same resolution effect the zero-
// minimum training tasks are designed to avoid.
struct QuadraticObjective {
    std::size_t n = 0;
    std::vector<double> A;  // row-major n*n
    std::vector<double> minimizer;

    std::size_t dimension() const { return n; }

    std::vector<double> rhs() const {  // b = A x*
        std::vector<double> b(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) b[i] += A[i * n + j] * minimizer[j];
        return b;
    }

    double value(std::span<const double> w) const {
        double quad = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += A[i * n + j] * (w[j] - minimizer[j]);
            quad += (w[i] - minimizer[i]) * row;
        }
        return 0.5 * quad;
    }

    double value_and_gradient(std::span<const double> w, std::span<double> g) const {
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += A[i * n + j] * (w[j] - minimizer[j]);
            g[i] = row;
        }
        return value(w);
    }
};

// SPD matrix with log-spaced eigenvalues in [1, condition], via a random
// orthogonal basis (Gram-Schmidt on a random square matrix).
QuadraticObjective random_spd_quadratic(std::size_t n, double condition, std::uint64_t seed) {
    Rng rng(seed, RngStream::Inputs);
    std::vector<double> q(n * n);
    for (auto& x : q) x = rng.uniform_symmetric();
    for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t prev = 0; prev < col; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < n; ++i) proj += q[i * n + col] * q[i * n + prev];
            for (std::size_t i = 0; i < n; ++i) q[i * n + col] -= proj * q[i * n + prev];
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += q[i * n + col] * q[i * n + col];
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < n; ++i) q[i * n + col] /= norm;
    }
    QuadraticObjective obj;
    obj.n = n;
    obj.A.assign(n * n, 0.0);
    obj.minimizer.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double lambda =
            std::pow(10.0, std::log10(condition) * static_cast<double>(k) /
                              static_cast<double>(n - 1));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                obj.A[i * n + j] += lambda * q[i * n + k] * q[j * n + k];
    }
    for (auto& x : obj.minimizer) x = rng.uniform_symmetric();
    return obj;
}

// Direct solve of Ax = b by Gaussian elimination with partial pivoting: the
// oracle for the quadratic's unique minimizer.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> rhs,
                                 std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[pivot * n + j]);
            std::swap(rhs[col], rhs[pivot]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[r * n + col] / a[col * n + col];
            for (std::size_t j = col; j < n; ++j) a[r * n + j] -= factor * a[col * n + j];
            rhs[r] -= factor * rhs[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = rhs[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= a[i * n + j] * x[j];
        x[i] = acc / a[i * n + i];
    }
    return x;
}

template <typename S>
NetworkObjective<S> objective_from_task(const TaskSpec& spec, const GeneratedTask& task);

template <>
NetworkObjective<double> objective_from_task(const TaskSpec& spec, const GeneratedTask& task) {
    return {spec.config, task.dataset.inputs, task.dataset.targets};
}

template <>
NetworkObjective<float> objective_from_task(const TaskSpec& spec, const GeneratedTask& task) {
    return {spec.config, demote(task.dataset.inputs), demote(task.dataset.targets)};
}

long derive_spent_from_trace(const OptimizationResult<double>& r) {
    long evals = 0;
    for (const auto& rec : r.trace) evals += rec.ls_evals;
    long gradient_records = static_cast<long>(r.trace.size());
    if (r.reason == TerminationReason::LineSearchNoImprovement) --gradient_records;
    return evals + 2 * gradient_records;
}

}  // namespace

TEST(RmsPropStep, MatchesHandArithmetic) {
    RmsPropConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.decay = 0.9;
    cfg.denominator_guard = 0.0;

    // w=1, grad=1, accum=0: accum'=0.1, w' = 1 - 1e-3/sqrt(0.1)
    std::vector<double> w{1.0}, g{1.0}, a{0.0};
    rmsprop_step(std::span<double>(w), std::span<const double>(g), std::span<double>(a), cfg);
    EXPECT_NEAR(a[0], 0.1, 1e-13);
    EXPECT_NEAR(w[0], 0.99683772233983162, 1e-12 * w[0]);

    // zero gradient: parameters unchanged, accumulator decays
    w = {1.0};
    g = {0.0};
    a = {0.5};
    rmsprop_step(std::span<double>(w), std::span<const double>(g), std::span<double>(a), cfg);
    EXPECT_DOUBLE_EQ(w[0], 1.0);
    EXPECT_DOUBLE_EQ(a[0], 0.45);

    // w=1, grad=2, accum=0.1: accum'=0.49, w' = 1 - 1e-3*2/0.7
    w = {1.0};
    g = {2.0};
    a = {0.1};
    rmsprop_step(std::span<double>(w), std::span<const double>(g), std::span<double>(a), cfg);
    EXPECT_NEAR(a[0], 0.49, 1e-13);
    EXPECT_NEAR(w[0], 0.99714285714285714, 1e-12 * w[0]);
}

TEST(RmsPropStep, RejectsMismatchedSpans) {
    RmsPropConfig cfg;
    std::vector<double> w{1.0, 2.0}, g{1.0}, a{0.0, 0.0};
    EXPECT_THROW(rmsprop_step(std::span<double>(w), std::span<const double>(g),
                              std::span<double>(a), cfg),
                 std::invalid_argument);
}

namespace {

struct Scalar1DQuadratic {
    std::size_t dimension() const { return 1; }
    double value(std::span<const double> w) const { return 0.5 * w[0] * w[0]; }
    double value_and_gradient(std::span<const double> w, std::span<double> g) const {
        g[0] = w[0];
        return 0.5 * w[0] * w[0];
    }
};

}  // namespace

TEST(RmsProp, DescendsOnScalarQuadratic) {
    Scalar1DQuadratic obj;
    RmsPropConfig cfg;
    cfg.budget.limit = 400;
    cfg.gradient_threshold = 1e-300;  // keep running to the budget
    const auto result = rmsprop_minimize<double>(obj, {1.0}, cfg);
    ASSERT_GE(result.trace.size(), 100u);
    for (std::size_t i = 1; i < 100; ++i)
        ASSERT_LT(result.trace[i].mse, result.trace[i - 1].mse) << "epoch " << i;
}

TEST(RmsProp, BudgetYieldsExactStepCount) {
    Scalar1DQuadratic obj;
    RmsPropConfig cfg;
    cfg.budget.limit = 3000;
    cfg.gradient_threshold = 1e-300;
    const auto result = rmsprop_minimize<double>(obj, {1.0}, cfg);
    EXPECT_EQ(result.trace.size(), 1500u);
    EXPECT_EQ(result.epoch_equivalents, 3000);
    EXPECT_EQ(result.reason, TerminationReason::BudgetExhausted);
    EXPECT_EQ(derive_spent_from_trace(result), 3000);
}

TEST(RmsProp, TracesAreBitReproducible) {
    TaskSpec spec = default_task_spec(TaskProfile::Moderate);
    spec.config.input_dim = 10;
    spec.config.output_dim = 4;
    spec.config.hidden_sizes = {8};
    spec.pattern_count = 30;
    spec.seed = 5;
    const auto task = generate_task(spec);
    const auto init = initial_params(spec.config, spec.nonlinearity, 6, 5);

    RmsPropConfig cfg;
    cfg.budget.limit = 200;
    auto run = [&]() {
        auto obj = objective_from_task<double>(spec, task);
        return rmsprop_minimize<double>(obj, init, cfg, task.dataset.var_y);
    };
    const auto a = run();
    const auto b = run();
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        ASSERT_EQ(a.trace[i].mse, b.trace[i].mse);
        ASSERT_EQ(a.trace[i].gradient_norm, b.trace[i].gradient_norm);
        ASSERT_EQ(a.trace[i].q, b.trace[i].q);
    }
}

TEST(Cg, SolvesSpdQuadraticsWithinDimensionPlusSlack) {
    // finite-termination property: n + 5 iterations, gradient norm <= 1e-8,
    // minimizer checked against a direct linear solve. Moderate condition
    // numbers: with a value-only line search (resolution sqrt(eps)) the
    // n + 5 bound stops holding past condition ~30, and even analytically
    // exact line minima need ~2n iterations at condition 1e4.
    const std::size_t n = 20;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const double condition = 4.0 * static_cast<double>(seed);  // 4..20
        const auto obj = random_spd_quadratic(n, condition, seed);
        const auto expected = solve_linear(obj.A, obj.rhs(), n);

        CgConfig cfg;
        cfg.gradient_threshold = 1e-8;
        cfg.ls_tolerance = 1e-15;  // clamped up to sqrt(eps)
        cfg.budget.limit = 100000;
        cfg.restart_interval = 100;  // keep the n-interval default out of the endgame
        const auto result = cg_minimize<double>(obj, std::vector<double>(n, 0.0), cfg);

        EXPECT_EQ(result.reason, TerminationReason::GradientConverged) << "seed " << seed;
        EXPECT_LE(result.iterations, static_cast<long>(n + 5)) << "seed " << seed;
        double err = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            err += (result.params[i] - expected[i]) * (result.params[i] - expected[i]);
            ref += expected[i] * expected[i];
        }
        EXPECT_LE(std::sqrt(err), 1e-6 * (1.0 + std::sqrt(ref))) << "seed " << seed;
    }
}

TEST(Cg, ConvergesOnHarderConditionNumbers) {
    // at condition 1e2 and 1e4 the finite-termination bound no longer holds,
    // but the gradient threshold is still reached well within the budget
    for (const double condition : {1e2, 1e4}) {
        const auto obj = random_spd_quadratic(20, condition, 31);
        CgConfig cfg;
        cfg.gradient_threshold = 1e-8;
        cfg.ls_tolerance = 1e-15;
        cfg.budget.limit = 100000;
        cfg.restart_interval = 1000;
        const auto result = cg_minimize<double>(obj, std::vector<double>(20, 0.0), cfg);
        EXPECT_EQ(result.reason, TerminationReason::GradientConverged) << condition;
        EXPECT_LE(result.iterations, 250) << condition;
    }
}

TEST(Cg, StartingAtTeacherConvergesImmediately) {
    TaskSpec spec = default_task_spec(TaskProfile::Moderate);
    spec.config.input_dim = 8;
    spec.config.output_dim = 3;
    spec.config.hidden_sizes = {6};
    spec.pattern_count = 20;
    spec.seed = 77;
    const auto task = generate_task(spec);
    auto obj = objective_from_task<double>(spec, task);

    CgConfig cfg;
    const auto result =
        cg_minimize<double>(obj, task.teacher, cfg, task.dataset.var_y);
    EXPECT_EQ(result.reason, TerminationReason::GradientConverged);
    EXPECT_EQ(result.iterations, 0);
    ASSERT_EQ(result.trace.size(), 1u);
    EXPECT_EQ(result.trace[0].mse, 0.0);
    EXPECT_EQ(result.epoch_equivalents, 2);
}

TEST(Cg, TraceIsNonIncreasingAndBudgetExact) {
    TaskSpec spec = default_task_spec(TaskProfile::Moderate);
    spec.config.input_dim = 12;
    spec.config.output_dim = 5;
    spec.config.hidden_sizes = {10};
    spec.pattern_count = 40;
    spec.seed = 303;
    const auto task = generate_task(spec);
    const auto init = initial_params(spec.config, spec.nonlinearity, 304, 303);
    auto obj = objective_from_task<double>(spec, task);

    CgConfig cfg;
    cfg.budget.limit = 300;
    const auto result = cg_minimize<double>(obj, init, cfg, task.dataset.var_y);
    ASSERT_GE(result.trace.size(), 2u);
    for (std::size_t i = 1; i < result.trace.size(); ++i) {
        ASSERT_LE(result.trace[i].mse, result.trace[i - 1].mse);
        ASSERT_GE(result.trace[i].epoch_equivalents, result.trace[i - 1].epoch_equivalents);
    }
    EXPECT_LT(result.trace.back().mse, result.trace.front().mse);
    EXPECT_EQ(derive_spent_from_trace(result), result.epoch_equivalents);
    // stopped at the first iteration boundary past the limit
    EXPECT_GE(result.epoch_equivalents, 300);
}

TEST(Cg, TinyBudgetStopsAtIterationBoundary) {
    TaskSpec spec = default_task_spec(TaskProfile::Moderate);
    spec.config.input_dim = 6;
    spec.config.output_dim = 2;
    spec.config.hidden_sizes = {5};
    spec.pattern_count = 15;
    spec.seed = 11;
    const auto task = generate_task(spec);
    const auto init = initial_params(spec.config, spec.nonlinearity, 12, 11);
    auto obj = objective_from_task<double>(spec, task);

    CgConfig cfg;
    cfg.budget.limit = 4;
    const auto result = cg_minimize<double>(obj, init, cfg, task.dataset.var_y);
    EXPECT_EQ(result.reason, TerminationReason::BudgetExhausted);
    EXPECT_EQ(result.iterations, 1);  // one complete iteration past limit 4
}

TEST(Cg, FlatToSinglePrecisionStopsWhereDoubleProceeds) {
    // Two patterns with identical input but conflicting targets put an
    // irreducible floor of 1.0 under the mse; the fittable part starts ~1e-10
    // above it, resolvable in double but below round-off in single.
    NetworkConfig config;
    config.input_dim = 1;
    config.output_dim = 1;
    config.hidden_sizes = {1};
    config.activation.type = ActivationType::SymmetricSigmoid;

    Matrix<double> inputs(2, 1);
    inputs(0, 0) = 1.0;
    inputs(1, 0) = 1.0;
    Matrix<double> targets(2, 1);
    targets(0, 0) = 2.0;
    targets(1, 0) = 0.0;

    const double w1 = 0.5;
    const double y0 = 1.0 + 1e-5;
    std::vector<double> start{w1, y0 / std::tanh(w1)};

    CgConfig cfg;
    cfg.budget.limit = 3000;

    Matrix<float> inputs_f(2, 1), targets_f(2, 1);
    for (std::size_t k = 0; k < 2; ++k) {
        inputs_f.data[k] = static_cast<float>(inputs.data[k]);
        targets_f.data[k] = static_cast<float>(targets.data[k]);
    }
    NetworkObjective<float> obj_f(config, inputs_f, targets_f);
    std::vector<float> start_f(start.begin(), start.end());
    const auto single = cg_minimize<float>(obj_f, start_f, cfg);

    NetworkObjective<double> obj_d(config, inputs, targets);
    const auto dbl = cg_minimize<double>(obj_d, start, cfg);

    EXPECT_EQ(single.reason, TerminationReason::LineSearchNoImprovement);
    EXPECT_LE(single.iterations, 5);
    EXPECT_NE(dbl.reason, TerminationReason::LineSearchNoImprovement);
    EXPECT_GT(dbl.iterations, single.iterations);

    // re-evaluate both final points in double: the single run is still stuck
    // ~1e-9 above the irreducible floor of 1.0, the double run removed the
    // fittable excess entirely
    std::vector<double> single_promoted(single.params.begin(), single.params.end());
    const double excess_single =
        mse(config, std::span<const double>(single_promoted), inputs, targets).mse - 1.0;
    const double excess_double =
        mse(config, std::span<const double>(dbl.params), inputs, targets).mse - 1.0;
    EXPECT_GT(excess_single, 1e-10);
    EXPECT_LT(std::abs(excess_double), 1e-12);
}

TEST(Cg, FletcherReevesAlsoSolvesQuadratics) {
    const auto obj = random_spd_quadratic(12, 10.0, 9);
    CgConfig cfg;
    cfg.beta_rule = BetaRule::FletcherReeves;
    cfg.gradient_threshold = 1e-8;
    cfg.ls_tolerance = 1e-15;
    cfg.budget.limit = 100000;
    cfg.restart_interval = 100;
    const auto result = cg_minimize<double>(obj, std::vector<double>(12, 0.0), cfg);
    EXPECT_EQ(result.reason, TerminationReason::GradientConverged);
    EXPECT_LE(result.iterations, 17);
}

namespace {

struct PoisonedObjective {
    std::size_t dimension() const { return 2; }
    double value(std::span<const double>) const { return std::nan(""); }
    double value_and_gradient(std::span<const double>, std::span<double> g) const {
        g[0] = g[1] = std::nan("");
        return std::nan("");
    }
};

}  // namespace

TEST(Optim, NonFiniteObjectiveAbortsWithDiagnostic) {
    PoisonedObjective obj;
    CgConfig cg_cfg;
    EXPECT_THROW(cg_minimize<double>(obj, {1.0, 1.0}, cg_cfg), NumericalError);
    RmsPropConfig rp_cfg;
    EXPECT_THROW(rmsprop_minimize<double>(obj, {1.0, 1.0}, rp_cfg), NumericalError);
}

TEST(Optim, ConfigValidation) {
    CgConfig cg_cfg;
    cg_cfg.ls_tolerance = 0.0;
    Scalar1DQuadratic obj;
    EXPECT_THROW(cg_minimize<double>(obj, {1.0}, cg_cfg), std::invalid_argument);
    RmsPropConfig rp_cfg;
    rp_cfg.decay = 1.5;
    EXPECT_THROW(rmsprop_minimize<double>(obj, {1.0}, rp_cfg), std::invalid_argument);
    EXPECT_THROW(cg_minimize<double>(obj, {1.0, 2.0}, CgConfig{}), std::invalid_argument);
}

TEST(Optim, RmsPropPrecisionIndifferenceOnSmallTask) {
    TaskSpec spec = default_task_spec(TaskProfile::Moderate);
    spec.config.input_dim = 20;
    spec.config.output_dim = 8;
    spec.config.hidden_sizes = {15};
    spec.pattern_count = 60;
    spec.seed = 909;
    const auto task = generate_task(spec);
    const auto init = initial_params(spec.config, spec.nonlinearity, 910, 909);

    RmsPropConfig cfg;
    cfg.budget.limit = 1000;

    auto obj_d = objective_from_task<double>(spec, task);
    const auto dbl = rmsprop_minimize<double>(obj_d, init, cfg, task.dataset.var_y);

    auto obj_f = objective_from_task<float>(spec, task);
    std::vector<float> init_f = demote(init);
    const auto single = rmsprop_minimize<float>(obj_f, init_f, cfg, task.dataset.var_y);

    const double ratio = dbl.trace.back().q / single.trace.back().q;
    EXPECT_GT(ratio, 0.1);
    EXPECT_LT(ratio, 10.0);
}

TEST(Optim, TerminationReasonStrings) {
    EXPECT_EQ(to_string(TerminationReason::GradientConverged), "gradient_converged");
    EXPECT_EQ(termination_from_string("budget_exhausted"),
              TerminationReason::BudgetExhausted);
    EXPECT_THROW(termination_from_string("gave_up"), std::invalid_argument);
}
