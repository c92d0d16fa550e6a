// Experiment driver: resolves run configurations into optimizer runs,
// writes trace CSV and metadata JSON per run, executes run matrices with
// optional parallelism, and computes the summary diagnostics (Q metric,
// log-loss slope fits, significance verdicts).
//
// All bookkeeping here is double precision regardless of the run's working
// precision; only the optimization arithmetic honors the run's mode.

#pragma once

#include "precopt/io.hpp"
#include "precopt/network.hpp"
#include "precopt/optim.hpp"
#include "precopt/precision.hpp"
#include "precopt/taskgen.hpp"
#include "precopt/version.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace precopt {

enum class OptimizerKind { Cg, RmsProp };

constexpr std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Cg ? "cg" : "rmsprop";
}

inline OptimizerKind optimizer_from_string(std::string_view name) {
    if (name == "cg") return OptimizerKind::Cg;
    if (name == "rmsprop") return OptimizerKind::RmsProp;
    throw std::invalid_argument("unknown optimizer: " + std::string(name));
}

/// Q = MSE / Var(y): the fraction of output variance left unexplained
/// (equals 1 - R^2).
inline double q_metric(double mse_value, double var_y) {
    if (!(var_y > 0.0))
        throw std::invalid_argument("q_metric: output variance must be > 0");
    return mse_value / var_y;
}

struct RunConfig {
    std::string run_id;
    TaskSpec task;
    OptimizerKind optimizer = OptimizerKind::Cg;
    CgConfig cg;
    RmsPropConfig rmsprop;
    PrecisionMode precision = PrecisionMode::Double;
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> init_seed;            // default: task seed + 1
    std::optional<std::filesystem::path> task_file;    // load instead of generating
};

struct RunResult {
    std::string run_id;
    std::string task_label;
    OptimizerKind optimizer = OptimizerKind::Cg;
    PrecisionMode precision = PrecisionMode::Double;
    bool success = false;
    std::string error;
    double initial_q = 0.0;
    double final_q = 0.0;
    double final_mse = 0.0;
    TerminationReason reason = TerminationReason::BudgetExhausted;
    long iterations = 0;
    long epoch_equivalents = 0;
    std::filesystem::path trace_path;
    double wall_seconds = 0.0;
};

/// One task identity per (profile, architecture, degree, patterns, seed):
/// runs sharing a label trained on bit-identical data.
inline std::string task_label(const TaskSpec& spec) {
    std::ostringstream label;
    label << to_string(spec.profile) << '-' << spec.config.hidden_sizes.size() << "h-"
          << param_count(spec.config) << "p-d" << spec.nonlinearity << "-P"
          << spec.pattern_count << "-s" << spec.seed;
    return label.str();
}

/// Hidden width giving the closest parameter count <= target for the given
/// depth (all hidden layers share the width); rounded down, at least 1.
inline std::size_t solve_hidden_width(std::size_t input_dim, std::size_t output_dim,
                                      std::size_t depth, std::size_t params_target) {
    if (depth < 1) throw std::invalid_argument("solve_hidden_width: depth must be >= 1");
    const double io = static_cast<double>(input_dim + output_dim);
    double width;
    if (depth == 1) {
        width = static_cast<double>(params_target) / io;
    } else {
        const double k = static_cast<double>(depth - 1);
        width = (-io + std::sqrt(io * io + 4.0 * k * static_cast<double>(params_target))) /
                (2.0 * k);
    }
    return std::max<std::size_t>(1, static_cast<std::size_t>(width));
}

inline NetworkConfig sized_config(std::size_t input_dim, std::size_t output_dim,
                                  std::size_t depth, std::size_t params_target,
                                  Activation activation) {
    NetworkConfig config;
    config.input_dim = input_dim;
    config.output_dim = output_dim;
    config.hidden_sizes.assign(depth,
                               solve_hidden_width(input_dim, output_dim, depth, params_target));
    config.activation = activation;
    config.validate();
    return config;
}

namespace detail {

template <typename S>
OptimizationResult<S> run_typed(const RunConfig& rc, const TaskSpec& spec,
                                const Dataset& dataset, const std::vector<double>& initial) {
    NetworkObjective<S> objective(spec.config, to_scalar<S>(dataset.inputs),
                                  to_scalar<S>(dataset.targets));
    std::vector<S> start = to_scalar<S>(initial);
    if (rc.optimizer == OptimizerKind::Cg)
        return cg_minimize<S>(objective, std::move(start), rc.cg, dataset.var_y);
    return rmsprop_minimize<S>(objective, std::move(start), rc.rmsprop, dataset.var_y);
}

struct RunOutcome {
    std::vector<TraceRecord> trace;
    TerminationReason reason;
    long iterations;
    long epoch_equivalents;
};

inline RunOutcome dispatch_run(const RunConfig& rc, const TaskSpec& spec,
                               const Dataset& dataset, const std::vector<double>& initial) {
    if (rc.precision == PrecisionMode::Single) {
        auto r = run_typed<float>(rc, spec, dataset, initial);
        return {std::move(r.trace), r.reason, r.iterations, r.epoch_equivalents};
    }
    auto r = run_typed<double>(rc, spec, dataset, initial);
    return {std::move(r.trace), r.reason, r.iterations, r.epoch_equivalents};
}

inline nlohmann::json config_json(const NetworkConfig& config) {
    return {{"input_dim", config.input_dim},
            {"output_dim", config.output_dim},
            {"hidden_sizes", config.hidden_sizes},
            {"activation", config.activation.type == ActivationType::SymmetricSigmoid
                               ? "symmetric_sigmoid"
                               : "leaky_sigmoid"},
            {"leak", config.activation.leak}};
}

}  // namespace detail

/// Generates (or loads) the task, runs the configured optimizer in the
/// configured precision, writes `<run_id>.trace.csv` and `<run_id>.meta.json`
/// into the output directory, and returns the summary.
inline RunResult run_experiment(const RunConfig& rc) {
    if (rc.run_id.empty()) throw std::invalid_argument("run_experiment: empty run id");

    TaskSpec spec = rc.task;
    Dataset dataset;
    if (rc.task_file) {
        auto loaded = io::read_dataset(*rc.task_file);
        spec = loaded.spec;
        dataset = std::move(loaded.dataset);
    } else {
        spec.validate();
        auto generated = generate_task(spec);
        dataset = std::move(generated.dataset);
    }
    if (dataset.var_y <= 0.0)
        throw std::runtime_error("run_experiment: task has no output variance");

    const std::uint64_t init_seed = rc.init_seed.value_or(spec.seed + 1);
    const auto initial = initial_params(spec.config, spec.nonlinearity, init_seed, spec.seed);

    std::filesystem::create_directories(rc.out_dir);

    const auto started = std::chrono::steady_clock::now();
    const auto outcome = detail::dispatch_run(rc, spec, dataset, initial);
    const auto finished = std::chrono::steady_clock::now();

    RunResult result;
    result.run_id = rc.run_id;
    result.task_label = task_label(spec);
    result.optimizer = rc.optimizer;
    result.precision = rc.precision;
    result.reason = outcome.reason;
    result.iterations = outcome.iterations;
    result.epoch_equivalents = outcome.epoch_equivalents;
    result.initial_q = outcome.trace.front().q;
    result.final_q = outcome.trace.back().q;
    result.final_mse = outcome.trace.back().mse;
    result.wall_seconds = std::chrono::duration<double>(finished - started).count();
    result.trace_path = rc.out_dir / (rc.run_id + ".trace.csv");

    io::write_trace_csv(result.trace_path, rc.run_id, outcome.trace);
    const auto reread = io::read_trace_csv(result.trace_path);
    if (reread.records.size() != outcome.trace.size())
        throw std::runtime_error("trace verification failed: " + result.trace_path.string());

    nlohmann::json meta;
    meta["run_id"] = rc.run_id;
    meta["task_label"] = result.task_label;
    meta["task"] = {{"profile", to_string(spec.profile)},
                    {"nonlinearity", spec.nonlinearity},
                    {"pattern_count", spec.pattern_count},
                    {"seed", spec.seed},
                    {"teacher_seed", dataset.teacher_seed},
                    {"config", detail::config_json(spec.config)},
                    {"param_count", param_count(spec.config)},
                    {"var_y", dataset.var_y},
                    {"generation_precision", to_string(dataset.generation_precision)}};
    if (rc.task_file) meta["task"]["task_file"] = rc.task_file->string();
    meta["init_seed"] = init_seed;
    meta["optimizer"] = to_string(rc.optimizer);
    meta["precision"] = to_string(rc.precision);
    if (rc.optimizer == OptimizerKind::Cg) {
        meta["cg"] = {{"gradient_threshold",
                       rc.cg.gradient_threshold.value_or(
                           default_gradient_threshold(rc.precision))},
                      {"ls_tolerance", rc.cg.ls_tolerance},
                      {"effective_ls_tolerance",
                       clamp_tolerance(rc.cg.ls_tolerance, rc.precision)},
                      {"budget", rc.cg.budget.limit},
                      {"beta_rule", rc.cg.beta_rule == BetaRule::PolakRibierePlus
                                        ? "polak_ribiere_plus"
                                        : "fletcher_reeves"},
                      {"restart_interval", rc.cg.restart_interval},
                      {"bracket_expansions", rc.cg.bracket_expansions}};
    } else {
        meta["rmsprop"] = {{"learning_rate", rc.rmsprop.learning_rate},
                           {"decay", rc.rmsprop.decay},
                           {"denominator_guard", rc.rmsprop.denominator_guard},
                           {"budget", rc.rmsprop.budget.limit},
                           {"gradient_threshold",
                            rc.rmsprop.gradient_threshold.value_or(
                                default_gradient_threshold(rc.precision))}};
    }
    meta["rng"] = rng_identity;
    meta["software_version"] = version_string;
    meta["termination_reason"] = to_string(result.reason);
    meta["iterations"] = result.iterations;
    meta["epoch_equivalents"] = result.epoch_equivalents;
    meta["initial_q"] = result.initial_q;
    meta["final_q"] = result.final_q;
    meta["final_mse"] = result.final_mse;
    meta["trace"] = result.trace_path.filename().string();
    meta["wall_seconds"] = result.wall_seconds;

    std::ofstream meta_out(rc.out_dir / (rc.run_id + ".meta.json"));
    if (!meta_out) throw std::runtime_error("cannot write metadata for " + rc.run_id);
    meta_out << meta.dump(2) << '\n';

    result.success = true;
    return result;
}

namespace detail {

inline std::tuple<std::string, std::string, std::string> sort_key(const RunResult& r) {
    return {r.task_label, std::string(to_string(r.optimizer)),
            std::string(to_string(r.precision))};
}

}  // namespace detail

/// Runs every config (worker pool of `parallelism` threads); one run's
/// failure is recorded in its result, not propagated. Results come back
/// sorted by (task, optimizer, precision).
inline std::vector<RunResult> run_matrix(const std::vector<RunConfig>& configs,
                                         unsigned parallelism = 1) {
    std::set<std::string> ids;
    for (const auto& rc : configs)
        if (!ids.insert(rc.run_id).second)
            throw std::invalid_argument("run_matrix: duplicate run id " + rc.run_id);

    std::vector<RunResult> results(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= configs.size()) break;
            try {
                results[i] = run_experiment(configs[i]);
            } catch (const std::exception& e) {
                results[i] = RunResult{};
                results[i].run_id = configs[i].run_id;
                results[i].task_label = task_label(configs[i].task);
                results[i].optimizer = configs[i].optimizer;
                results[i].precision = configs[i].precision;
                results[i].success = false;
                results[i].error = e.what();
            }
        }
    };

    const unsigned workers =
        std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(configs.size())));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::sort(results.begin(), results.end(), [](const RunResult& a, const RunResult& b) {
        return detail::sort_key(a) < detail::sort_key(b);
    });
    return results;
}

/// Least-squares line through (epoch_equivalents, log10 Q) over the records
/// inside [epoch_begin, epoch_end]. A straight line here means a fixed
/// multiplicative precision gain per unit of work, the operational sense of
/// superlinear convergence used throughout.
struct SegmentFit {
    long epoch_begin = 0;
    long epoch_end = 0;
    double slope_per_1000 = 0.0;  // decades of Q per 1000 epoch equivalents
    double r_squared = 1.0;
    std::size_t points_used = 0;
    std::size_t points_excluded = 0;  // Q <= 0 records inside the range
};

inline SegmentFit superlinearity_diagnostic(const std::vector<TraceRecord>& trace,
                                            long epoch_begin, long epoch_end) {
    SegmentFit fit;
    fit.epoch_begin = epoch_begin;
    fit.epoch_end = epoch_end;
    std::vector<double> xs, ys;
    for (const TraceRecord& r : trace) {
        if (r.epoch_equivalents < epoch_begin || r.epoch_equivalents > epoch_end) continue;
        if (!(r.q > 0.0)) {
            ++fit.points_excluded;
            continue;
        }
        xs.push_back(static_cast<double>(r.epoch_equivalents));
        ys.push_back(std::log10(r.q));
    }
    if (xs.size() < 3)
        throw std::invalid_argument(
            "superlinearity_diagnostic: need at least 3 records with Q > 0 in range");
    fit.points_used = xs.size();

    const double n = static_cast<double>(xs.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mean_x += xs[i];
        mean_y += ys[i];
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mean_x;
        const double dy = ys[i] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0)
        throw std::invalid_argument("superlinearity_diagnostic: degenerate epoch range");
    const double slope = sxy / sxx;
    fit.slope_per_1000 = slope * 1000.0;
    if (syy == 0.0) {
        fit.r_squared = 1.0;  // constant trace, fit is exact
    } else {
        double ss_res = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double resid = ys[i] - (mean_y + slope * (xs[i] - mean_x));
            ss_res += resid * resid;
        }
        fit.r_squared = 1.0 - ss_res / syy;
    }
    return fit;
}

/// One pairwise Q comparison. A difference counts as significant only from
/// a factor of ten upward; factors of two or three are within run-to-run
/// wobble for these tasks.
struct Comparison {
    std::string task;
    std::string kind;     // e.g. "cg_vs_rmsprop[single]", "single_vs_double[cg]"
    std::string run_low;  // run with the lower (better) final Q
    std::string run_high;
    double q_low = 0.0;
    double q_high = 0.0;
    double ratio = 0.0;  // q_high / q_low, >= 1
    bool significant = false;
    bool available = false;
};

inline constexpr double significance_ratio = 10.0;

struct Report {
    std::vector<Comparison> comparisons;
    std::string table;
};

namespace detail {

inline Comparison compare_pair(const std::string& task, const std::string& kind,
                               const RunResult* a, const RunResult* b) {
    Comparison c;
    c.task = task;
    c.kind = kind;
    if (!a || !b || !a->success || !b->success) return c;  // unavailable
    const RunResult* low = a->final_q <= b->final_q ? a : b;
    const RunResult* high = a->final_q <= b->final_q ? b : a;
    c.run_low = low->run_id;
    c.run_high = high->run_id;
    c.q_low = low->final_q;
    c.q_high = high->final_q;
    c.ratio = c.q_low > 0.0 ? c.q_high / c.q_low
                            : std::numeric_limits<double>::infinity();
    c.significant = c.ratio >= significance_ratio;
    c.available = true;
    return c;
}

}  // namespace detail

inline Report report(const std::vector<RunResult>& results) {
    if (results.empty()) throw std::invalid_argument("report: no results");

    std::map<std::string, std::map<std::pair<std::string, std::string>, const RunResult*>>
        by_task;
    for (const RunResult& r : results)
        by_task[r.task_label][{std::string(to_string(r.optimizer)),
                               std::string(to_string(r.precision))}] = &r;

    Report rep;
    std::ostringstream table;
    table << "run_id | task | optimizer | precision | status | reason | iters | epochs | "
             "final_q\n";
    for (const RunResult& r : results) {
        table << r.run_id << " | " << r.task_label << " | " << to_string(r.optimizer)
              << " | " << to_string(r.precision) << " | "
              << (r.success ? "ok" : ("FAILED: " + r.error)) << " | "
              << (r.success ? to_string(r.reason) : "-") << " | " << r.iterations << " | "
              << r.epoch_equivalents << " | ";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3e", r.final_q);
        table << (r.success ? buf : "-") << '\n';
    }

    table << '\n';
    for (const auto& [task, arms] : by_task) {
        const auto arm = [&](const char* opt, const char* prec) -> const RunResult* {
            const auto it = arms.find({opt, prec});
            return it == arms.end() ? nullptr : it->second;
        };
        for (const char* prec : {"single", "double"}) {
            if (!arm("cg", prec) && !arm("rmsprop", prec)) continue;
            rep.comparisons.push_back(detail::compare_pair(
                task, std::string("cg_vs_rmsprop[") + prec + "]", arm("cg", prec),
                arm("rmsprop", prec)));
        }
        for (const char* opt : {"cg", "rmsprop"}) {
            if (!arm(opt, "single") && !arm(opt, "double")) continue;
            rep.comparisons.push_back(detail::compare_pair(
                task, std::string("single_vs_double[") + opt + "]", arm(opt, "single"),
                arm(opt, "double")));
        }
        // the headline pairing: second-order/double against first-order/single
        if (arm("cg", "double") || arm("rmsprop", "single"))
            rep.comparisons.push_back(detail::compare_pair(
                task, "cg_double_vs_rmsprop_single", arm("cg", "double"),
                arm("rmsprop", "single")));
    }

    for (const Comparison& c : rep.comparisons) {
        table << c.task << " " << c.kind << ": ";
        if (!c.available) {
            table << "n/a (missing arm)\n";
            continue;
        }
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s better by %.2gx (%.3e vs %.3e) -> %s",
                      c.run_low.c_str(), c.ratio, c.q_low, c.q_high,
                      c.significant ? "significant" : "not significant");
        table << buf << '\n';
    }
    rep.table = table.str();
    return rep;
}

/// Summary CSV for a finished matrix.
inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<RunResult>& results) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write summary: " + path.string());
    out << "run_id,task,optimizer,precision,status,reason,iterations,epoch_equivalents,"
           "initial_q,final_q,wall_seconds\n";
    for (const RunResult& r : results) {
        char q0[32], q1[32], wall[32];
        std::snprintf(q0, sizeof(q0), "%.17g", r.initial_q);
        std::snprintf(q1, sizeof(q1), "%.17g", r.final_q);
        std::snprintf(wall, sizeof(wall), "%.3f", r.wall_seconds);
        out << r.run_id << ',' << r.task_label << ',' << to_string(r.optimizer) << ','
            << to_string(r.precision) << ',' << (r.success ? "ok" : "failed") << ','
            << (r.success ? to_string(r.reason) : std::string_view("-")) << ','
            << r.iterations << ',' << r.epoch_equivalents << ',' << (r.success ? q0 : "-")
            << ',' << (r.success ? q1 : "-") << ',' << wall << '\n';
    }
}

/// Reads every `*.meta.json` under `dir` back into RunResult summaries, for
/// reporting over previously executed runs.
inline std::vector<RunResult> load_results(const std::filesystem::path& dir) {
    std::vector<RunResult> results;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto& p = entry.path();
        if (p.extension() == ".json" && p.stem().extension() == ".meta")
            files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        std::ifstream in(p);
        nlohmann::json meta;
        in >> meta;
        RunResult r;
        r.run_id = meta.at("run_id").get<std::string>();
        r.task_label = meta.at("task_label").get<std::string>();
        r.optimizer = optimizer_from_string(meta.at("optimizer").get<std::string>());
        r.precision = precision_from_string(meta.at("precision").get<std::string>());
        r.success = true;
        r.initial_q = meta.at("initial_q").get<double>();
        r.final_q = meta.at("final_q").get<double>();
        r.final_mse = meta.at("final_mse").get<double>();
        r.reason = termination_from_string(meta.at("termination_reason").get<std::string>());
        r.iterations = meta.at("iterations").get<long>();
        r.epoch_equivalents = meta.at("epoch_equivalents").get<long>();
        r.trace_path = p.parent_path() / meta.at("trace").get<std::string>();
        r.wall_seconds = meta.at("wall_seconds").get<double>();
        results.push_back(std::move(r));
    }
    return results;
}

/// The desk-scale default grid: depths 1 and 5, both nonlinearity profiles,
/// CG in both precisions plus RMSprop in single, all at ~30k parameters.
inline std::vector<RunConfig> default_matrix(const std::filesystem::path& out_dir,
                                             std::uint64_t seed, long budget = 3000,
                                             std::size_t input_dim = 100,
                                             std::size_t output_dim = 50,
                                             std::size_t params_target = 30000,
                                             std::size_t patterns = 200) {
    std::vector<RunConfig> configs;
    for (const TaskProfile profile : {TaskProfile::Moderate, TaskProfile::Strong}) {
        for (const std::size_t depth : {std::size_t{1}, std::size_t{5}}) {
            TaskSpec spec = default_task_spec(profile);
            spec.config = sized_config(input_dim, output_dim, depth, params_target,
                                       default_activation(profile));
            spec.pattern_count = patterns;
            spec.seed = seed;

            struct Arm {
                OptimizerKind optimizer;
                PrecisionMode precision;
            };
            for (const Arm arm : {Arm{OptimizerKind::Cg, PrecisionMode::Single},
                                  Arm{OptimizerKind::Cg, PrecisionMode::Double},
                                  Arm{OptimizerKind::RmsProp, PrecisionMode::Single}}) {
                RunConfig rc;
                std::ostringstream id;
                id << to_string(profile) << '-' << depth << "h-" << to_string(arm.optimizer)
                   << '-' << to_string(arm.precision);
                rc.run_id = id.str();
                rc.task = spec;
                rc.optimizer = arm.optimizer;
                rc.precision = arm.precision;
                rc.cg.budget.limit = budget;
                rc.rmsprop.budget.limit = budget;
                rc.out_dir = out_dir;
                configs.push_back(std::move(rc));
            }
        }
    }
    return configs;
}

}  // namespace precopt
