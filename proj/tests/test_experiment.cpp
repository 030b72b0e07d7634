#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "npmc/cli.hpp"
#include "npmc/experiment.hpp"

using namespace npmc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("npmc_test_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig small_config()
{
    ExperimentConfig c;
    c.model.horizon = 1.0; // 50 observations
    c.method.npmc.M = 16;
    c.method.npmc.K = 2;
    c.method.npmc.N = 20;
    c.method.pmh.L = 30;
    c.method.pmh.N = 20;
    c.method.abc.target_accepted = 20;
    c.method.abc.max_draws = 20000;
    c.likelihood_study.N = 40;
    c.seeds.runs = 2;
    c.benchmark.npmc_sizes = {16};
    c.kde.grid_points = 21;
    return c;
}

RunOptions opts_for(const fs::path& out, std::size_t workers = 1)
{
    RunOptions o;
    o.out = out;
    o.workers = workers;
    return o;
}

int run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "npmc_cli");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace

TEST(Config, RoundTripIsFixedPoint)
{
    ExperimentConfig c = small_config();
    c.method.name = "pmh";
    c.model.noise.sigma_B = 0.07;
    const json once = json(c);
    const json twice = json(config_from_json(once));
    EXPECT_EQ(once, twice);
    EXPECT_EQ(config_hash(c), config_hash(config_from_json(once)));
    EXPECT_EQ(json(config_from_json(json::object())), json(ExperimentConfig{}));
}

TEST(Config, RejectsUnknownKeysAtEveryLevel)
{
    for (const char* text : {R"({"extra": 1})", R"({"model": {"hh": 1}})", R"({"model": {"params": {"q": 1}}})",
                             R"({"method": {"npmc": {"MM": 3}}})", R"({"seeds": {"seed": 3}})",
                             R"({"model": {"noise": {"sigma": 0.1}}})"}) {
        EXPECT_THROW(config_from_json(json::parse(text)), ValidationError) << text;
    }
}

TEST(Config, ValidatesModuleInvariants)
{
    for (const char* text :
         {R"({"model": {"params": {"alpha": -1}}})", R"({"model": {"sigma_y": 0}})",
          R"({"method": {"name": "mcmc"}})", R"({"method": {"npmc": {"M": 16, "M_c": 5}}})",
          R"({"method": {"abc": {"tolerances": [2, 3]}}})", R"({"method": {"pmh": {"L": 10, "burn_in": 10}}})",
          R"({"model": {"horizon": 0.03}})", R"({"output": {"formats": ["xml"]}})",
          R"({"model": {"m_o": "twenty"}})"}) {
        EXPECT_THROW(config_from_json(json::parse(text)), ValidationError) << text;
    }
}

TEST(Config, ObservationCountFromHorizon)
{
    ExperimentConfig c;
    EXPECT_EQ(c.model.observation_count(), 4000u);
    c.model.horizon = 20.0;
    EXPECT_EQ(c.model.observation_count(), 1000u);
}

TEST(Simulate, WritesArtifactsAndManifest)
{
    const fs::path out = fresh_dir("sim");
    cmd_simulate(small_config(), opts_for(out));
    for (const char* f : {"trajectory.csv", "phase.csv", "observations.csv", "dataset.json", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    const json m = read_json(out / "manifest.json");
    EXPECT_EQ(m.at("config_hash").get<std::string>(), config_hash(small_config()));
    EXPECT_EQ(m.at("library_version").get<std::string>(), kLibraryVersion);
    for (const auto& entry : fs::directory_iterator(out)) {
        const std::string name = entry.path().filename().string();
        if (name == "manifest.json") continue;
        const auto files = m.at("files").get<std::vector<std::string>>();
        EXPECT_NE(std::find(files.begin(), files.end(), name), files.end()) << name;
    }
    const auto obs = read_observations_csv(out / "observations.csv");
    EXPECT_EQ(obs.size(), 50u);
    const auto phase = read_csv(out / "phase.csv");
    EXPECT_EQ(phase.header, (std::vector<std::string>{"t", "a1", "b1", "a2"}));
    EXPECT_EQ(phase.rows.size(), 1001u);
}

TEST(Simulate, StochasticModeDiffersAndIsReproducible)
{
    ExperimentConfig c = small_config();
    const fs::path det = fresh_dir("det"), s1 = fresh_dir("sto1"), s2 = fresh_dir("sto2");
    cmd_simulate(c, opts_for(det));
    c.simulate.mode = "stochastic";
    cmd_simulate(c, opts_for(s1));
    cmd_simulate(c, opts_for(s2));
    EXPECT_NE(read_file(det / "trajectory.csv"), read_file(s1 / "trajectory.csv"));
    EXPECT_EQ(read_file(s1 / "trajectory.csv"), read_file(s2 / "trajectory.csv"));
}

TEST(Output, RefusesNonEmptyDirectoryWithoutOverwrite)
{
    const fs::path out = fresh_dir("overwrite");
    cmd_simulate(small_config(), opts_for(out));
    EXPECT_THROW(cmd_simulate(small_config(), opts_for(out)), ValidationError);
    RunOptions o = opts_for(out);
    o.overwrite = true;
    EXPECT_NO_THROW(cmd_simulate(small_config(), o));
}

TEST(Output, RelativePathsHonourOutputRoot)
{
    const fs::path root = fresh_dir("root");
    fs::create_directories(root);
    ::setenv(kOutputRootEnv, root.c_str(), 1);
    const fs::path written = cmd_simulate(small_config(), opts_for("relative_run"));
    ::unsetenv(kOutputRootEnv);
    EXPECT_EQ(written, root / "relative_run");
    EXPECT_TRUE(fs::exists(root / "relative_run" / "manifest.json"));
}

TEST(Infer, NpmcOutputsIndependentOfWorkers)
{
    const fs::path data = fresh_dir("infer_data"), a = fresh_dir("infer_a"), b = fresh_dir("infer_b");
    const ExperimentConfig c = small_config();
    cmd_simulate(c, opts_for(data));
    RunOptions oa = opts_for(a, 1), ob = opts_for(b, 3);
    oa.data = ob.data = data;
    cmd_infer(c, oa);
    cmd_infer(c, ob);
    for (const char* f : {"estimates.csv", "samples_iter_02.csv", "kde_alpha.csv", "estimate.csv"}) {
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    }
    const auto kde = read_csv(a / "kde_Q.csv");
    EXPECT_EQ(kde.header, (std::vector<std::string>{"x", "prior", "iteration_0", "iteration_1", "iteration_2"}));
    EXPECT_EQ(kde.rows.size(), 21u);
    const json r = read_json(a / "npmc_result.json");
    EXPECT_EQ(r.at("iterations").size(), 3u);
    EXPECT_TRUE(r.at("iterations")[1].contains("proposal_cov"));
}

TEST(Infer, PmhAndAbcProduceTheirArtifacts)
{
    const fs::path data = fresh_dir("infer2_data");
    ExperimentConfig c = small_config();
    cmd_simulate(c, opts_for(data));
    c.method.name = "pmh";
    RunOptions o = opts_for(fresh_dir("infer_pmh"));
    o.data = data;
    cmd_infer(c, o);
    EXPECT_EQ(read_csv(o.out / "chain.csv").rows.size(), 31u);
    c.method.name = "abc";
    c.method.abc.tolerances = {3.0, 2.5};
    o.out = fresh_dir("infer_abc");
    cmd_infer(c, o);
    EXPECT_EQ(read_csv(o.out / "population_stage_2.csv").rows.size(), 20u);
    EXPECT_EQ(read_csv(o.out / "abc_stages.csv").rows.size(), 2u);
    o.data.reset();
    EXPECT_THROW(cmd_infer(c, o), ValidationError);
}

TEST(LikelihoodStudy, IdenticalThetasGiveIdenticalCurves)
{
    const fs::path data = fresh_dir("ls_data"), out = fresh_dir("ls_out");
    ExperimentConfig c = small_config();
    cmd_simulate(c, opts_for(data));
    c.likelihood_study.thetas = {{0.85, 2.6, 216.0, 0.85}, {0.85, 2.6, 216.0, 0.85}, {0.85, 2.6, 206.0, 0.85}};
    RunOptions o = opts_for(out, 2);
    o.data = data;
    cmd_likelihood_study(c, o);
    const auto t = read_csv(out / "loglik_curves.csv");
    ASSERT_EQ(t.rows.size(), 50u);
    EXPECT_EQ(t.numeric_column("loglik_0"), t.numeric_column("loglik_1"));
    for (double v : t.numeric_column("log_ratio_0_1")) EXPECT_EQ(v, 0.0);
    const auto l0 = t.numeric_column("loglik_0"), l2 = t.numeric_column("loglik_2");
    const auto r02 = t.numeric_column("log_ratio_0_2");
    for (std::size_t n = 0; n < l0.size(); ++n) {
        EXPECT_TRUE(std::isfinite(l0[n]) && std::isfinite(l2[n]));
        EXPECT_NEAR(r02[n], l0[n] - l2[n], 1e-9 * std::max(1.0, std::abs(l0[n])));
    }
}

TEST(LikelihoodStudy, SingleTickCurveIsFirstIncrement)
{
    const fs::path data = fresh_dir("ls1_data"), out = fresh_dir("ls1_out");
    ExperimentConfig c = small_config();
    c.model.horizon = 0.02; // one observation
    cmd_simulate(c, opts_for(data));
    c.likelihood_study.thetas = {{0.85, 2.6, 216.0, 0.85}};
    RunOptions o = opts_for(out);
    o.data = data;
    cmd_likelihood_study(c, o);
    const auto curves = read_csv(out / "loglik_curves.csv");
    const auto diag = read_csv(out / "filter_diagnostics.csv");
    ASSERT_EQ(curves.rows.size(), 1u);
    EXPECT_EQ(curves.numeric_column("loglik_0")[0], diag.numeric_column("log_increment")[0]);
}

TEST(Benchmark, ForcedTruthGivesZeroNmse)
{
    ExperimentConfig c = small_config();
    c.seeds.runs = 1;
    const Eigen::VectorXd truth = c.truth().to_vector();
    const auto outcome = cmd_benchmark(c, opts_for(fresh_dir("bench_truth")),
                                       [&](const std::string&, std::size_t) { return std::optional(truth); });
    ASSERT_EQ(outcome.reports.size(), 3u);
    for (const auto& r : outcome.reports) {
        for (double v : r.mean) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(r.runs, 1u);
    }
}

TEST(Benchmark, FailedRunsAreCountedAndExcluded)
{
    ExperimentConfig c = small_config();
    c.benchmark.methods = {"npmc"};
    c.seeds.runs = 3;
    const Eigen::VectorXd truth = c.truth().to_vector();
    const auto outcome = cmd_benchmark(c, opts_for(fresh_dir("bench_fail")),
                                       [&](const std::string&, std::size_t run) -> std::optional<Eigen::VectorXd> {
                                           if (run == 1) throw std::runtime_error("boom");
                                           return truth * 1.1;
                                       });
    ASSERT_EQ(outcome.reports.size(), 1u);
    EXPECT_EQ(outcome.reports[0].runs, 2u);
    EXPECT_EQ(outcome.reports[0].failed_runs, 1u);
    EXPECT_NEAR(outcome.reports[0].mean[0], 0.01, 1e-12);
    const auto table = read_csv(outcome.dir / "nmse.csv");
    EXPECT_EQ(table.rows.size(), 4u);
}

TEST(Benchmark, RealRunsCompleteTable)
{
    ExperimentConfig c = small_config();
    c.method.abc.tolerances = {3.0};
    const auto outcome = cmd_benchmark(c, opts_for(fresh_dir("bench_real"), 2));
    EXPECT_EQ(outcome.methods, (std::vector<std::string>{"npmc_M16", "pmh", "abc"}));
    for (const auto& r : outcome.reports) {
        EXPECT_EQ(r.runs + r.failed_runs, 2u);
        for (double v : r.mean) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_EQ(read_csv(outcome.dir / "benchmark_estimates.csv").rows.size(), 6u);
}

TEST(Cli, ExitCodesAndManifestRerun)
{
    const fs::path cfg_path = fresh_dir("cli_cfg.json");
    write_json(cfg_path, json(small_config()));
    const fs::path out1 = fresh_dir("cli_1"), out2 = fresh_dir("cli_2");
    EXPECT_EQ(run_cli({"simulate", "--config", cfg_path.string(), "--out", out1.string(), "--seed", "5"}), 0);
    EXPECT_EQ(run_cli({"simulate", "--config", (out1 / "manifest.json").string(), "--out", out2.string()}), 0);
    EXPECT_EQ(read_file(out1 / "observations.csv"), read_file(out2 / "observations.csv"));
    EXPECT_EQ(read_json(out2 / "manifest.json").at("seed").get<std::uint64_t>(), 5u);

    EXPECT_EQ(run_cli({"simulate", "--config", cfg_path.string(), "--out", out1.string()}), 1);
    EXPECT_EQ(run_cli({"simulate", "--bogus"}), 1);
    EXPECT_EQ(run_cli({}), 1);

    const fs::path bad = fresh_dir("cli_bad.json");
    write_json(bad, json{{"method", {{"name", "xyz"}}}});
    EXPECT_EQ(run_cli({"simulate", "--config", bad.string(), "--out", fresh_dir("cli_3").string()}), 1);

    // A dataset whose observations file is corrupt is a runtime failure.
    const fs::path broken = fresh_dir("cli_broken");
    fs::create_directories(broken);
    write_json(broken / "dataset.json", json{{"initial_state", json::array()}});
    EXPECT_NE(run_cli({"infer", "--data", broken.string(), "--out", fresh_dir("cli_4").string()}), 0);

    const fs::path plot = fresh_dir("cli_plot");
    EXPECT_EQ(run_cli({"plot-data", "--input", out1.string(), "--out", plot.string()}), 0);
    EXPECT_TRUE(fs::exists(plot / "plots.gp"));
}
