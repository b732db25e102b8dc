#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "unravel/acceptance.hpp"
#include "unravel/scenario.hpp"

using namespace unravel;

namespace {

int run_command(const std::string& cmd, const std::string& config_path, std::optional<std::uint64_t> seed,
                const std::string& out_dir)
{
    if (config_path.empty())
        throw ConfigError(cmd + " needs --config <path>");
    ScenarioConfig cfg = load_config(config_path);
    if (seed)
        cfg.ensemble.seed = *seed;
    if (!out_dir.empty())
        cfg.outputs.dir = out_dir;
    const RunContext ctx{cfg.outputs.dir, &std::cout};
    if (cmd == "correlations")
        return run_correlations(cfg, ctx);
    if (cmd == "sample")
        return run_sample(cfg, ctx);
    if (cmd == "unravel")
        return run_unraveling(cfg, ctx);
    if (cmd == "oracle")
        return run_oracle(cfg, ctx);
    return run_optimize(cfg, ctx);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Squeezed-state unravelings of pure-dephasing open systems"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    app.add_option("--config", config_path, "scenario file (TOML, or a resolved_config.json)");
    app.add_option("--seed", seed, "master seed; overrides ensemble.seed");
    app.add_option("--threads", threads, "worker threads (default: available parallelism)")->check(CLI::NonNegativeNumber);
    app.add_option("--out", out_dir, "output directory; overrides outputs.dir");

    const std::vector<std::pair<std::string, std::string>> cmds{
        {"correlations", "write the alpha/eta kernels and integrated rates"},
        {"sample", "draw noise trajectories and their empirical correlations"},
        {"unravel", "run the trajectory ensemble, averaged state and entanglement bound"},
        {"oracle", "composite-system evolution, quadrature and residual checks"},
        {"optimize", "search per-mode squeezing phases against the analytic rule"},
    };
    for (const auto& [name, help] : cmds)
        app.add_subcommand(name, help);
    auto* acc = app.add_subcommand("acceptance", "run the acceptance suite");
    std::vector<int> only;
    acc->add_option("--only", only, "criterion ids to run (default: all)");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    if (threads > 0)
        omp_set_num_threads(threads);

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        if (cmd == "acceptance") {
            AcceptanceOptions opts;
            if (seed)
                opts.seed = *seed;
            opts.only.insert(only.begin(), only.end());
            const auto results = run_acceptance(opts, std::cout);
            std::size_t passed = 0;
            for (const auto& r : results)
                passed += r.passed ? 1 : 0;
            std::cout << passed << "/" << results.size() << " criteria passed\n";
            return acceptance_exit_code(results);
        }
        return run_command(cmd, config_path, seed, out_dir);
    }
    catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    }
    catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}
