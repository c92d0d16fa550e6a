// Shows the premature-stop mechanism in isolation: a two-pattern task whose
// fittable loss component sits below single-precision round-off. The single
// run ends because its line search cannot find any improving step; the
// double run removes the excess entirely.

#include "precopt/optim.hpp"
#include "precopt/taskgen.hpp"

#include <cmath>
#include <cstdio>

using namespace precopt;

int main() {
    NetworkConfig config;
    config.input_dim = 1;
    config.output_dim = 1;
    config.hidden_sizes = {1};

    // identical inputs, conflicting targets: mse(y) = (y-1)^2 + 1
    Matrix<double> inputs(2, 1), targets(2, 1);
    inputs(0, 0) = inputs(1, 0) = 1.0;
    targets(0, 0) = 2.0;
    targets(1, 0) = 0.0;
    const std::vector<double> start{0.5, (1.0 + 1e-5) / std::tanh(0.5)};

    CgConfig cfg;
    cfg.budget.limit = 3000;

    NetworkObjective<double> obj_d(config, inputs, targets);
    const auto dbl = cg_minimize<double>(obj_d, start, cfg);

    NetworkObjective<float> obj_f(config, demote(inputs), demote(targets));
    const auto single = cg_minimize<float>(obj_f, demote(start), cfg);

    const auto excess = [&](const std::vector<double>& w) {
        return mse(config, std::span<const double>(w), inputs, targets).mse - 1.0;
    };
    std::printf("single: %-28s after %ld iterations, loss excess %.3e\n",
                std::string(to_string(single.reason)).c_str(), single.iterations,
                excess({single.params.begin(), single.params.end()}));
    std::printf("double: %-28s after %ld iterations, loss excess %.3e\n",
                std::string(to_string(dbl.reason)).c_str(), dbl.iterations,
                excess(dbl.params));
    return 0;
}
