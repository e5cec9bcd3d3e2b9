#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ecgi/config.hpp"
#include "ecgi/errors.hpp"
#include "ecgi/pipeline.hpp"

namespace {

void print_metrics_grid(const nlohmann::json& metrics) {
    if (metrics.empty()) return;
    std::printf("%-12s %10s %10s %10s %10s\n", "method", "L2", "CC", "SC", "excluded");
    for (const std::string& name : ecgi::Pipeline::method_names()) {
        if (!metrics.contains(name)) continue;
        const auto& m = metrics[name];
        std::printf("%-12s %10.4f %10.4f %10.4f %10.4f\n", name.c_str(),
                    m["l2"].get<double>(), m["cc"].get<double>(), m["sc"].get<double>(),
                    m["excluded_fraction"].get<double>());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale electrocardiographic imaging laboratory: 2D cardiac "
                 "activation simulation, body-surface forward solves, Tikhonov "
                 "inverse reconstruction and activation-map post-processing"};
    app.require_subcommand(1);

    std::string config_path;
    ecgi::RunOptions opt;
    std::uint64_t seed = 0;
    double epsilon = 0.0;
    bool have_seed = false, have_epsilon = false, skip_simulate = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "scenario config file (.toml or .json)")
            ->required();
        cmd->add_option("--seed", seed, "override scenario.rng_seed")
            ->each([&](const std::string&) { have_seed = true; });
        cmd->add_option("--workers", opt.workers,
                        "worker threads for parallel kernels (0 = all hardware "
                        "threads, 1 = serial reference path)");
        cmd->add_option("--out-dir", opt.out_dir, "artifact root directory");
        cmd->add_option("--epsilon", epsilon, "override inverse.epsilon")
            ->each([&](const std::string&) { have_epsilon = true; });
        return cmd;
    };

    CLI::App* cmd_simulate =
        add_common(app.add_subcommand("simulate", "run the forward model only"));
    CLI::App* cmd_reconstruct = add_common(app.add_subcommand(
        "reconstruct", "forward model (unless skipped) plus inverse reconstruction"));
    cmd_reconstruct->add_flag("--skip-simulate", skip_simulate,
                              "reuse forward artifacts already on disk");
    CLI::App* cmd_postprocess = add_common(app.add_subcommand(
        "postprocess", "activation maps from reconstructions on disk"));
    CLI::App* cmd_evaluate = add_common(
        app.add_subcommand("evaluate", "metrics from maps and reference on disk"));
    CLI::App* cmd_pipeline =
        add_common(app.add_subcommand("pipeline", "all stages end to end"));
    cmd_pipeline->add_flag("--skip-simulate", skip_simulate,
                           "reuse forward artifacts already on disk");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        ecgi::RunConfig config = ecgi::load_run_config(config_path);
        if (have_seed) opt.seed = seed;
        if (have_epsilon) opt.epsilon = epsilon;
        opt.skip_simulate = skip_simulate;
        ecgi::Pipeline pipeline(std::move(config), opt);

        if (cmd_simulate->parsed()) {
            pipeline.simulate();
        } else if (cmd_reconstruct->parsed()) {
            if (!skip_simulate) pipeline.simulate();
            pipeline.reconstruct();
        } else if (cmd_postprocess->parsed()) {
            pipeline.postprocess();
        } else if (cmd_evaluate->parsed()) {
            pipeline.evaluate();
            print_metrics_grid(pipeline.metrics());
        } else if (cmd_pipeline->parsed()) {
            if (!skip_simulate) pipeline.simulate();
            pipeline.reconstruct();
            pipeline.postprocess();
            pipeline.evaluate();
            print_metrics_grid(pipeline.metrics());
        }
        pipeline.write_manifest();
        std::cout << "artifacts in " << pipeline.scenario_dir() << "\n";
        return 0;
    } catch (const ecgi::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const ecgi::NumericsError& e) {
        std::cerr << "numerics error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
