// Command-line driver: generate tasks, train single runs, execute run
// matrices, and summarize existing results.
//
// Exit codes: 0 success, 1 usage/config error, 2 run failure.

#include "precopt/harness.hpp"
#include "precopt/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TaskFlags {
    std::string profile = "moderate";
    std::size_t depth = 1;
    std::size_t params_target = 30000;
    std::size_t patterns = 200;
    std::size_t input_dim = 100;
    std::size_t output_dim = 50;
    std::uint64_t seed = 1;
};

void add_task_flags(CLI::App* cmd, TaskFlags& flags) {
    cmd->add_option("--profile", flags.profile, "task profile: moderate|strong")
        ->check(CLI::IsMember({"moderate", "strong"}));
    cmd->add_option("--depth", flags.depth, "number of hidden layers")->check(CLI::Range(1, 64));
    cmd->add_option("--params-target", flags.params_target,
                    "approximate total parameter count");
    cmd->add_option("--patterns", flags.patterns, "training patterns P");
    cmd->add_option("--inputs", flags.input_dim, "input dimension");
    cmd->add_option("--outputs", flags.output_dim, "output dimension");
    cmd->add_option("--seed", flags.seed, "task seed (teacher + inputs)");
}

precopt::TaskSpec build_spec(const TaskFlags& flags) {
    const auto profile = precopt::profile_from_string(flags.profile);
    precopt::TaskSpec spec = precopt::default_task_spec(profile);
    spec.config = precopt::sized_config(flags.input_dim, flags.output_dim, flags.depth,
                                        flags.params_target,
                                        precopt::default_activation(profile));
    spec.pattern_count = flags.patterns;
    spec.seed = flags.seed;
    return spec;
}

std::string default_run_id(const TaskFlags& flags, const std::string& optimizer,
                           const std::string& precision) {
    return flags.profile + "-" + std::to_string(flags.depth) + "h-" + optimizer + "-" +
           precision + "-s" + std::to_string(flags.seed);
}

void print_result_line(const precopt::RunResult& r) {
    std::printf("%-28s %-8s %-7s reason=%-26s iters=%-5ld epochs=%-6ld Q0=%.3e Q=%.3e (%.1fs)\n",
                r.run_id.c_str(), std::string(precopt::to_string(r.optimizer)).c_str(),
                std::string(precopt::to_string(r.precision)).c_str(),
                std::string(precopt::to_string(r.reason)).c_str(), r.iterations,
                r.epoch_equivalents, r.initial_q, r.final_q, r.wall_seconds);
}

json matrix_config_json(const std::vector<precopt::RunConfig>& configs) {
    json runs = json::array();
    for (const auto& rc : configs) {
        json run;
        run["id"] = rc.run_id;
        run["profile"] = precopt::to_string(rc.task.profile);
        run["depth"] = rc.task.config.hidden_sizes.size();
        run["input_dim"] = rc.task.config.input_dim;
        run["output_dim"] = rc.task.config.output_dim;
        run["hidden_width"] = rc.task.config.hidden_sizes.front();
        run["patterns"] = rc.task.pattern_count;
        run["seed"] = rc.task.seed;
        run["optimizer"] = precopt::to_string(rc.optimizer);
        run["precision"] = precopt::to_string(rc.precision);
        run["budget"] = rc.optimizer == precopt::OptimizerKind::Cg ? rc.cg.budget.limit
                                                                   : rc.rmsprop.budget.limit;
        runs.push_back(run);
    }
    return {{"runs", runs}};
}

std::vector<precopt::RunConfig> parse_matrix_config(const json& doc, const fs::path& out_dir) {
    std::vector<precopt::RunConfig> configs;
    const json defaults = doc.value("defaults", json::object());
    const auto pick = [&](const json& run, const char* key, const json& fallback) -> json {
        if (run.contains(key)) return run.at(key);
        if (defaults.contains(key)) return defaults.at(key);
        return fallback;
    };
    for (const json& run : doc.at("runs")) {
        TaskFlags flags;
        flags.profile = pick(run, "profile", "moderate").get<std::string>();
        flags.depth = pick(run, "depth", 1).get<std::size_t>();
        flags.params_target = pick(run, "params_target", 30000).get<std::size_t>();
        flags.patterns = pick(run, "patterns", 200).get<std::size_t>();
        flags.input_dim = pick(run, "input_dim", 100).get<std::size_t>();
        flags.output_dim = pick(run, "output_dim", 50).get<std::size_t>();
        flags.seed = pick(run, "seed", 1).get<std::uint64_t>();

        precopt::RunConfig rc;
        rc.task = build_spec(flags);
        if (run.contains("hidden_width"))
            rc.task.config.hidden_sizes.assign(flags.depth,
                                               run.at("hidden_width").get<std::size_t>());
        rc.optimizer =
            precopt::optimizer_from_string(pick(run, "optimizer", "cg").get<std::string>());
        rc.precision =
            precopt::precision_from_string(pick(run, "precision", "double").get<std::string>());
        const long budget = pick(run, "budget", 3000).get<long>();
        rc.cg.budget.limit = budget;
        rc.rmsprop.budget.limit = budget;
        rc.cg.ls_tolerance = pick(run, "ls_tolerance", rc.cg.ls_tolerance).get<double>();
        rc.rmsprop.learning_rate =
            pick(run, "learning_rate", rc.rmsprop.learning_rate).get<double>();
        rc.rmsprop.decay = pick(run, "decay", rc.rmsprop.decay).get<double>();
        if (run.contains("gradient_threshold"))
            rc.cg.gradient_threshold = run.at("gradient_threshold").get<double>();
        if (run.contains("task_file")) rc.task_file = run.at("task_file").get<std::string>();
        if (run.contains("init_seed")) rc.init_seed = run.at("init_seed").get<std::uint64_t>();
        rc.run_id = run.contains("id")
                        ? run.at("id").get<std::string>()
                        : default_run_id(flags, std::string(precopt::to_string(rc.optimizer)),
                                         std::string(precopt::to_string(rc.precision)));
        rc.out_dir = out_dir;
        configs.push_back(std::move(rc));
    }
    return configs;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"precision-parameterized optimization workbench"};
    app.require_subcommand(1);

    // generate
    auto* generate = app.add_subcommand("generate", "generate a task file with a known zero minimum");
    TaskFlags gen_flags;
    add_task_flags(generate, gen_flags);
    std::string gen_out = "tasks";
    std::string gen_id;
    bool gen_csv = false;
    generate->add_option("--out", gen_out, "output directory");
    generate->add_option("--id", gen_id, "file stem (default derived from flags)");
    generate->add_flag("--csv", gen_csv, "also export the dataset as CSV");

    // train
    auto* train = app.add_subcommand("train", "run one optimizer on one task");
    TaskFlags train_flags;
    add_task_flags(train, train_flags);
    std::string train_out = "runs";
    std::string train_id;
    std::string optimizer = "cg";
    std::string precision = "double";
    std::string beta_rule = "pr+";
    std::string task_file;
    long budget = 3000;
    double ls_tol = 1e-1;
    double learning_rate = 1e-3;
    double decay = 0.9;
    double grad_threshold = 0.0;
    std::uint64_t init_seed = 0;
    bool has_init_seed = false;
    train->add_option("--optimizer", optimizer, "cg|rmsprop")
        ->check(CLI::IsMember({"cg", "rmsprop"}));
    train->add_option("--precision", precision, "single|double")
        ->check(CLI::IsMember({"single", "double"}));
    train->add_option("--budget", budget, "epoch-equivalent budget");
    train->add_option("--ls-tol", ls_tol, "line search tolerance (cg)");
    train->add_option("--beta-rule", beta_rule, "pr+|fr (cg)")
        ->check(CLI::IsMember({"pr+", "fr"}));
    train->add_option("--lr", learning_rate, "learning rate (rmsprop)");
    train->add_option("--decay", decay, "squared-gradient decay (rmsprop)");
    train->add_option("--grad-threshold", grad_threshold,
                      "gradient norm stop threshold (default per precision)");
    train->add_option("--task", task_file, "train on a previously generated task file");
    train->add_option("--init-seed", init_seed, "initializer seed (default task seed + 1)");
    train->add_option("--out", train_out, "output directory");
    train->add_option("--id", train_id, "run id (default derived from flags)");

    // matrix
    auto* matrix = app.add_subcommand("matrix", "run a grid of experiments");
    std::string matrix_config;
    std::string matrix_out = "runs";
    std::string write_default;
    unsigned parallelism = 1;
    std::uint64_t matrix_seed = 1;
    long matrix_budget = 3000;
    matrix->add_option("--config", matrix_config, "declarative run grid (JSON)");
    matrix->add_option("--out", matrix_out, "output directory");
    matrix->add_option("--parallelism", parallelism, "concurrent runs");
    matrix->add_option("--seed", matrix_seed, "task seed for the default grid");
    matrix->add_option("--budget", matrix_budget, "budget for the default grid");
    matrix->add_option("--write-default", write_default,
                       "write the default desk-scale grid to FILE and exit");

    // report
    auto* rep = app.add_subcommand("report", "summarize existing run results");
    std::string report_in = "runs";
    rep->add_option("--in", report_in, "directory containing *.meta.json files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (generate->parsed()) {
            const auto spec = build_spec(gen_flags);
            const auto task = precopt::generate_task(spec);
            const std::string stem = gen_id.empty()
                                         ? gen_flags.profile + "-" +
                                               std::to_string(gen_flags.depth) + "h-s" +
                                               std::to_string(gen_flags.seed)
                                         : gen_id;
            fs::create_directories(gen_out);
            const auto task_path = fs::path(gen_out) / (stem + ".task.bin");
            const auto teacher_path = fs::path(gen_out) / (stem + ".teacher.bin");
            precopt::io::write_dataset(task_path, spec, task.dataset);
            precopt::io::write_params<double>(teacher_path, spec.config, spec.seed,
                                              task.teacher);
            if (gen_csv)
                precopt::io::export_dataset_csv(fs::path(gen_out) / (stem + ".task.csv"),
                                                task.dataset);
            std::printf("wrote %s (%zu params, %zu patterns, var_y=%.6g)\n",
                        task_path.string().c_str(), precopt::param_count(spec.config),
                        spec.pattern_count, task.dataset.var_y);
            return 0;
        }

        if (train->parsed()) {
            precopt::RunConfig rc;
            rc.task = build_spec(train_flags);
            rc.optimizer = precopt::optimizer_from_string(optimizer);
            rc.precision = precopt::precision_from_string(precision);
            rc.cg.budget.limit = budget;
            rc.cg.ls_tolerance = ls_tol;
            rc.cg.beta_rule = beta_rule == "fr" ? precopt::BetaRule::FletcherReeves
                                                : precopt::BetaRule::PolakRibierePlus;
            rc.rmsprop.budget.limit = budget;
            rc.rmsprop.learning_rate = learning_rate;
            rc.rmsprop.decay = decay;
            if (grad_threshold > 0.0) {
                rc.cg.gradient_threshold = grad_threshold;
                rc.rmsprop.gradient_threshold = grad_threshold;
            }
            has_init_seed = train->count("--init-seed") > 0;
            if (has_init_seed) rc.init_seed = init_seed;
            if (!task_file.empty()) rc.task_file = task_file;
            rc.out_dir = train_out;
            rc.run_id = train_id.empty() ? default_run_id(train_flags, optimizer, precision)
                                         : train_id;
            const auto result = precopt::run_experiment(rc);
            print_result_line(result);
            return 0;
        }

        if (matrix->parsed()) {
            if (!write_default.empty()) {
                const auto configs =
                    precopt::default_matrix(matrix_out, matrix_seed, matrix_budget);
                std::ofstream out(write_default);
                if (!out) throw std::runtime_error("cannot write " + write_default);
                out << matrix_config_json(configs).dump(2) << '\n';
                std::printf("wrote default grid (%zu runs) to %s\n", configs.size(),
                            write_default.c_str());
                return 0;
            }
            std::vector<precopt::RunConfig> configs;
            if (matrix_config.empty()) {
                configs = precopt::default_matrix(matrix_out, matrix_seed, matrix_budget);
            } else {
                std::ifstream in(matrix_config);
                if (!in) throw std::runtime_error("cannot read " + matrix_config);
                json doc;
                in >> doc;
                configs = parse_matrix_config(doc, matrix_out);
            }
            const auto results = precopt::run_matrix(configs, parallelism);
            fs::create_directories(matrix_out);
            precopt::write_summary_csv(fs::path(matrix_out) / "summary.csv", results);
            int failures = 0;
            for (const auto& r : results) {
                if (r.success)
                    print_result_line(r);
                else {
                    std::printf("%-28s FAILED: %s\n", r.run_id.c_str(), r.error.c_str());
                    ++failures;
                }
            }
            if (!results.empty()) {
                std::vector<precopt::RunResult> ok;
                for (const auto& r : results)
                    if (r.success) ok.push_back(r);
                if (!ok.empty()) std::printf("\n%s", precopt::report(ok).table.c_str());
            }
            return failures == 0 ? 0 : 2;
        }

        if (rep->parsed()) {
            if (!fs::is_directory(report_in)) {
                std::fprintf(stderr, "not a directory: %s\n", report_in.c_str());
                return 1;
            }
            const auto results = precopt::load_results(report_in);
            if (results.empty()) {
                std::fprintf(stderr, "no *.meta.json results under %s\n", report_in.c_str());
                return 1;
            }
            std::printf("%s", precopt::report(results).table.c_str());
            return 0;
        }
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "run failed: %s\n", e.what());
        return 2;
    }
    return 0;
}
