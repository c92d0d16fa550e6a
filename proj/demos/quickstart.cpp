// Minimal end-to-end walkthrough: generate a teacher task, train it with
// conjugate gradient in both precisions and with RMSprop, then print the
// loss trajectory tail and the pairwise verdicts.

#include "precopt/harness.hpp"

#include <cstdio>
#include <filesystem>

using namespace precopt;

int main() {
    const auto out = std::filesystem::temp_directory_path() / "precopt_quickstart";

    RunConfig rc;
    rc.task = default_task_spec(TaskProfile::Moderate);
    rc.task.config = sized_config(40, 20, 1, 6000, default_activation(TaskProfile::Moderate));
    rc.task.pattern_count = 100;
    rc.task.seed = 7;
    rc.cg.budget.limit = 1000;
    rc.rmsprop.budget.limit = 1000;
    rc.out_dir = out;

    std::vector<RunConfig> grid;
    for (const auto& [id, opt, prec] :
         {std::tuple{"cg-double", OptimizerKind::Cg, PrecisionMode::Double},
          std::tuple{"cg-single", OptimizerKind::Cg, PrecisionMode::Single},
          std::tuple{"rmsprop-single", OptimizerKind::RmsProp, PrecisionMode::Single}}) {
        rc.run_id = id;
        rc.optimizer = opt;
        rc.precision = prec;
        grid.push_back(rc);
    }

    const auto results = run_matrix(grid, 3);
    for (const auto& r : results) {
        if (!r.success) {
            std::printf("%s failed: %s\n", r.run_id.c_str(), r.error.c_str());
            continue;
        }
        std::printf("%-16s final Q = %.3e after %ld epoch equivalents (%s)\n",
                    r.run_id.c_str(), r.final_q, r.epoch_equivalents,
                    std::string(to_string(r.reason)).c_str());
        const auto trace = io::read_trace_csv(r.trace_path);
        const auto& records = trace.records;
        for (std::size_t i = records.size() >= 3 ? records.size() - 3 : 0;
             i < records.size(); ++i)
            std::printf("    it=%-5ld epochs=%-5ld Q=%.3e\n", records[i].iteration,
                        records[i].epoch_equivalents, records[i].q);
    }

    std::printf("\n%s", report(results).table.c_str());
    return 0;
}
