#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "npmc/errors.hpp"
#include "npmc/experiment.hpp"

namespace npmc {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Loads a config file. A run manifest is accepted too, in which case its
/// embedded config (seed included) is used, so reruns reproduce the run.
inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    const json j = read_json(path);
    if (j.is_object() && j.contains("manifest_version")) {
        return config_from_json(j.at("config"));
    }
    return config_from_json(j);
}

inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Repressilator parameter inference with nonlinear population Monte Carlo"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kLibraryVersion);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    std::string out_dir;
    bool overwrite = false;
    std::string data_dir;
    std::string method;
    std::string input_dir;
    bool render = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config or run manifest")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory");
        sub->add_flag("--overwrite", overwrite, "allow writing into a non-empty output directory");
    };
    auto* simulate = app.add_subcommand("simulate", "generate a trajectory and observations");
    common(simulate);
    auto* infer = app.add_subcommand("infer", "run npmc, pmh or abc on a dataset");
    common(infer);
    infer->add_option("--data", data_dir, "dataset directory written by simulate")->required();
    infer->add_option("--method", method, "npmc, pmh or abc (overrides the config)");
    auto* study = app.add_subcommand("likelihood-study", "cumulative log-likelihood curves for several parameters");
    common(study);
    study->add_option("--data", data_dir, "dataset directory written by simulate")->required();
    auto* bench = app.add_subcommand("benchmark", "NMSE table over independent replications");
    common(bench);
    auto* plot = app.add_subcommand("plot-data", "gnuplot scripts for a run directory");
    common(plot);
    plot->add_option("--input", input_dir, "run directory")->required()->check(CLI::ExistingDirectory);
    plot->add_flag("--render", render, "invoke gnuplot on the generated script");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (seed) cfg.seeds.master = *seed;
        if (!method.empty()) cfg.method.name = method;
        cfg.validate();

        RunOptions opts;
        opts.out = out_dir;
        opts.workers = workers;
        opts.overwrite = overwrite;
        opts.render = render;
        if (!data_dir.empty()) opts.data = data_dir;
        if (!input_dir.empty()) opts.input = input_dir;

        std::filesystem::path written;
        if (simulate->parsed()) {
            written = cmd_simulate(cfg, opts);
        } else if (infer->parsed()) {
            written = cmd_infer(cfg, opts);
        } else if (study->parsed()) {
            written = cmd_likelihood_study(cfg, opts);
        } else if (bench->parsed()) {
            written = cmd_benchmark(cfg, opts).dir;
        } else {
            written = cmd_plot_data(cfg, opts);
        }
        out << written.string() << '\n';
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace npmc
